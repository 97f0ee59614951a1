// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>
#include "myq/file_util.hpp"
#include "myq/model.hpp"

namespace myq {

inline constexpr char kModelMagic[4] = {'M', 'Y', 'Q', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

/// MYQM layout: magic "MYQM" | u32 version | u64 metadata length | UTF-8 JSON
/// metadata | blobs in graph order (per layer: weight, bias; then layernorm
/// gamma, beta), each raw little-endian IEEE-754 of the model dtype.
Bytes serialize_model(const ModelGraph& model);
ModelGraph deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path);

/// FNV-1a of the serialized model; identifies the source of a quantized model.
std::string model_fingerprint(const ModelGraph& model);

nlohmann::json config_to_json(const ToyConfig& c);
ToyConfig config_from_json(const nlohmann::json& j);
std::string dtype_name(DType dt);
DType dtype_from_name(const std::string& s);
std::size_t dtype_size(DType dt);

void write_tensor_values(ByteWriter& w, const Tensor& t);
Tensor read_tensor_values(ByteReader& r, Shape shape, DType dt);

}  // namespace myq
