// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>
#include "myq/file_util.hpp"
#include "myq/quantized_model.hpp"

namespace myq::quant {

inline constexpr char kQModelMagic[4] = {'M', 'Y', 'Q', 'Z'};
inline constexpr std::uint32_t kQModelVersion = 1;

/// Packs b-bit two's-complement codes LSB-first into bytes; the final byte is
/// zero-padded.
Bytes pack_codes(std::span<const std::int32_t> codes, int bits);
std::vector<std::int32_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count, int bits);
std::size_t packed_size(std::size_t count, int bits);

nlohmann::json act_params_to_json(const ActParams& p);
ActParams act_params_from_json(const nlohmann::json& j);

/// MYQZ layout: magic "MYQZ" | u32 version | u64 header length | UTF-8 JSON
/// header | per layer: weight blob, bias blob | layernorm gamma, beta.
/// Quantized layers store packed b_l-bit codes; 32-bit layers store raw
/// little-endian IEEE-754 values of the model dtype.
Bytes serialize_quantized(const QuantizedModel& qm);
QuantizedModel deserialize_quantized(std::span<const std::uint8_t> bytes);

void save_quantized(const QuantizedModel& qm, const std::filesystem::path& path);
QuantizedModel load_quantized(const std::filesystem::path& path);

}  // namespace myq::quant
