// SPDX-License-Identifier: Apache-2.0
#include "myq/qmodel_io.hpp"

#include "myq/error.hpp"
#include "myq/model_io.hpp"

namespace myq::quant {

using nlohmann::json;

std::size_t packed_size(std::size_t count, int bits) {
  return (count * static_cast<std::size_t>(bits) + 7) / 8;
}

Bytes pack_codes(std::span<const std::int32_t> codes, int bits) {
  Bytes out(packed_size(codes.size(), bits), 0);
  const std::uint64_t mask = bits == 64 ? ~0ULL : ((std::uint64_t{1} << bits) - 1);
  std::size_t bitpos = 0;
  for (auto c : codes) {
    const std::uint64_t v = static_cast<std::uint64_t>(static_cast<std::int64_t>(c)) & mask;
    for (int b = 0; b < bits; ++b, ++bitpos)
      if ((v >> b) & 1U) out[bitpos / 8] |= static_cast<std::uint8_t>(1U << (bitpos % 8));
  }
  return out;
}

std::vector<std::int32_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count, int bits) {
  if (bytes.size() < packed_size(count, bits)) throw FormatError("packed code blob too short", 0);
  std::vector<std::int32_t> out(count);
  std::size_t bitpos = 0;
  for (auto& c : out) {
    std::uint64_t v = 0;
    for (int b = 0; b < bits; ++b, ++bitpos)
      if ((bytes[bitpos / 8] >> (bitpos % 8)) & 1U) v |= std::uint64_t{1} << b;
    // Sign-extend from `bits`.
    if (bits < 64 && (v >> (bits - 1)) & 1U) v |= ~((std::uint64_t{1} << bits) - 1);
    c = static_cast<std::int32_t>(static_cast<std::int64_t>(v));
  }
  return out;
}

json act_params_to_json(const ActParams& p) {
  if (const auto* a = std::get_if<AffineParams>(&p))
    return {{"kind", "affine"}, {"scale", decimal_string(a->scale)}, {"zero_point", a->zero_point}, {"bits", a->bits}};
  if (const auto* t = std::get_if<TwoRangeParams>(&p))
    return {{"kind", "two_range"},
            {"scale_neg", decimal_string(t->scale_neg)},
            {"scale_pos", decimal_string(t->scale_pos)},
            {"bits", t->bits}};
  return {{"kind", "float"}};
}

ActParams act_params_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "affine")
    return AffineParams{parse_decimal(j.at("scale").get<std::string>()), j.at("zero_point").get<std::int64_t>(),
                        j.at("bits").get<int>()};
  if (kind == "two_range")
    return TwoRangeParams{parse_decimal(j.at("scale_neg").get<std::string>()),
                          parse_decimal(j.at("scale_pos").get<std::string>()), j.at("bits").get<int>()};
  if (kind == "float") return FloatPassthrough{};
  throw ConfigError("unknown activation parameter kind '" + kind + "'");
}

namespace {

Bytes float_blob(const Tensor& t) {
  ByteWriter w;
  write_tensor_values(w, t);
  return w.take();
}

}  // namespace

Bytes serialize_quantized(const QuantizedModel& qm) {
  const ModelGraph& g = qm.graph;
  const DType dt = g.config.dtype;
  std::vector<Bytes> blobs;
  json layers = json::array();
  for (const auto& ql : qm.layers) {
    const LayerSpec& spec = g.layers.at(ql.index);
    json lj = {{"index", ql.index},
               {"kind", to_string(spec.kind)},
               {"activation", to_string(spec.activation)},
               {"quantizable", spec.quantizable},
               {"stride", spec.stride},
               {"bits", ql.bits},
               {"weight_shape", spec.weight.shape()},
               {"has_bias", spec.bias.has_value()},
               {"act", act_params_to_json(ql.act)}};
    if (ql.bits == kFloatBits) {
      blobs.push_back(float_blob(spec.weight));
      lj["weight_bytes"] = blobs.back().size();
      if (spec.bias) {
        blobs.push_back(float_blob(*spec.bias));
        lj["bias_bytes"] = blobs.back().size();
      }
    } else {
      lj["weight_scale"] = decimal_string(ql.codes.weight_params.scale);
      lj["weight_zero_point"] = ql.codes.weight_params.zero_point;
      blobs.push_back(pack_codes(ql.codes.weight.data, ql.bits));
      lj["weight_bytes"] = blobs.back().size();
      if (spec.bias) {
        lj["bias_scale"] = decimal_string(ql.codes.bias_params.scale);
        blobs.push_back(pack_codes(ql.codes.bias->data, ql.bits));
        lj["bias_bytes"] = blobs.back().size();
      }
    }
    layers.push_back(std::move(lj));
  }
  json norms = json::array();
  for (const auto& n : g.norms) {
    blobs.push_back(float_blob(n.gamma));
    blobs.push_back(float_blob(n.beta));
    norms.push_back({{"name", n.name}, {"size", n.gamma.numel()}});
  }
  std::size_t payload = 0;
  for (const auto& b : blobs) payload += b.size();

  json header = {{"name", g.name},
                 {"seed", g.seed},
                 {"dtype", dtype_name(dt)},
                 {"config", config_to_json(g.config)},
                 {"source_fingerprint", qm.source_fingerprint},
                 {"plan",
                  {{"bits", qm.plan.bits},
                   {"size_mb", decimal_string(qm.plan.size_mb)},
                   {"last_decremented", qm.plan.last_decremented}}},
                 {"weight_payload_bits", qm.weight_payload_bits()},
                 {"layers", layers},
                 {"norms", norms},
                 {"payload_bytes", payload}};
  const std::string text = header.dump();
  ByteWriter w;
  w.str(std::string_view(kQModelMagic, 4));
  w.u32(kQModelVersion);
  w.u64(text.size());
  w.str(text);
  for (const auto& b : blobs) w.bytes(b);
  return w.take();
}

QuantizedModel deserialize_quantized(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string_view(kQModelMagic, 4)) throw FormatError("bad magic, expected MYQZ", 0);
  const auto version = r.u32();
  if (version != kQModelVersion) throw FormatError("unsupported MYQZ version " + std::to_string(version), 4);
  const auto len = r.u64();
  const std::size_t header_off = r.offset();
  if (len > r.remaining()) throw FormatError("header length exceeds file size", 8);
  json h;
  try {
    h = json::parse(r.str(len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid JSON header: ") + e.what(), header_off);
  }

  QuantizedModel qm;
  try {
    const std::size_t payload = h.at("payload_bytes").get<std::size_t>();
    if (payload != r.remaining())
      throw FormatError("declared payload of " + std::to_string(payload) + " bytes but file has " +
                            std::to_string(r.remaining()),
                        r.offset());
    ModelGraph& g = qm.graph;
    g.name = h.at("name").get<std::string>();
    g.seed = h.at("seed").get<std::uint64_t>();
    g.config = config_from_json(h.at("config"));
    const DType dt = g.config.dtype;
    qm.source_fingerprint = h.at("source_fingerprint").get<std::string>();
    qm.plan.bits = h.at("plan").at("bits").get<std::vector<int>>();
    qm.plan.size_mb = parse_decimal(h.at("plan").at("size_mb").get<std::string>());
    qm.plan.last_decremented = h.at("plan").at("last_decremented").get<int>();

    for (const auto& lj : h.at("layers")) {
      LayerSpec spec;
      spec.index = lj.at("index").get<int>();
      spec.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      spec.activation = activation_from_string(lj.at("activation").get<std::string>());
      spec.quantizable = lj.at("quantizable").get<bool>();
      spec.stride = lj.at("stride").get<std::size_t>();
      const auto wshape = lj.at("weight_shape").get<Shape>();
      const bool has_bias = lj.at("has_bias").get<bool>();
      QuantizedLayer ql;
      ql.index = spec.index;
      ql.bits = lj.at("bits").get<int>();
      ql.act = act_params_from_json(lj.at("act"));
      const std::size_t wn = shape_numel(wshape);
      const std::size_t out = wshape.at(0);
      const std::size_t wbytes = lj.at("weight_bytes").get<std::size_t>();
      if (ql.bits == kFloatBits) {
        if (wbytes != wn * dtype_size(dt)) throw FormatError("weight blob length mismatch", r.offset());
        spec.weight = read_tensor_values(r, wshape, dt);
        if (has_bias) spec.bias = read_tensor_values(r, {out}, dt);
      } else {
        if (ql.bits < 1 || ql.bits > kFloatBits) throw FormatError("layer bit depth out of range", r.offset());
        if (wbytes != packed_size(wn, ql.bits)) throw FormatError("weight blob length mismatch", r.offset());
        ql.codes.bits = ql.bits;
        ql.codes.weight_params = {parse_decimal(lj.at("weight_scale").get<std::string>()),
                                  lj.at("weight_zero_point").get<std::int64_t>(), ql.bits};
        ql.codes.weight = {{out, wn / out}, unpack_codes(r.bytes(wbytes), wn, ql.bits)};
        spec.weight = Tensor(wshape, dt);
        if (has_bias) {
          const std::size_t bbytes = lj.at("bias_bytes").get<std::size_t>();
          if (bbytes != packed_size(out, ql.bits)) throw FormatError("bias blob length mismatch", r.offset());
          ql.codes.bias_params = {parse_decimal(lj.at("bias_scale").get<std::string>()), 0, ql.bits};
          ql.codes.bias = IntTensor{{out}, unpack_codes(r.bytes(bbytes), out, ql.bits)};
          spec.bias = Tensor({out}, dt);
        }
      }
      g.layers.push_back(std::move(spec));
      qm.layers.push_back(std::move(ql));
    }
    for (const auto& nj : h.at("norms")) {
      NormParams n;
      n.name = nj.at("name").get<std::string>();
      const std::size_t size = nj.at("size").get<std::size_t>();
      n.gamma = read_tensor_values(r, {size}, dt);
      n.beta = read_tensor_values(r, {size}, dt);
      g.norms.push_back(std::move(n));
    }
    if (qm.plan.bits.size() != qm.layers.size()) throw FormatError("plan length disagrees with layers", header_off);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what(), header_off);
  }
  finalize_quantized_model(qm);
  return qm;
}

void save_quantized(const QuantizedModel& qm, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_quantized(qm));
}

QuantizedModel load_quantized(const std::filesystem::path& path) {
  return deserialize_quantized(read_file(path));
}

}  // namespace myq::quant
