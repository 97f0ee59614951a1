// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "myq/file_util.hpp"
#include "myq/tensor.hpp"

namespace myq {

/// MYQT: "MYQT", u32 version, u32 ndim, ndim x u64 dims, u8 dtype
/// (0 = f32, 1 = f64), raw little-endian values. One tensor per file.
inline constexpr std::uint32_t kTensorVersion = 1;

Bytes serialize_tensor(const Tensor& t);
Tensor deserialize_tensor(std::span<const std::uint8_t> bytes);
void save_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor load_tensor(const std::filesystem::path& path);

/// A sample set is a directory holding MYQT files and manifest.json
/// ({"version": 1, "files": [...]}) listing them in order.
void save_sample_set(const std::filesystem::path& dir, std::span<const Tensor> samples);
std::vector<Tensor> load_sample_set(const std::filesystem::path& dir);

}  // namespace myq
