// SPDX-License-Identifier: Apache-2.0
#include "myq/model_io.hpp"

#include <cstring>

#include "myq/error.hpp"

namespace myq {

using nlohmann::json;

std::string dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }

DType dtype_from_name(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw ConfigError("unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }

json config_to_json(const ToyConfig& c) {
  return {{"in_channels", c.in_channels}, {"hidden", c.hidden},       {"heads", c.heads},
          {"layers", c.layers},           {"ffn_dim", c.ffn_dim},     {"vocab", c.vocab},
          {"frames", c.frames},           {"conv_stem", c.conv_stem}, {"conv_kernel", c.conv_kernel},
          {"conv_stride", c.conv_stride}, {"dtype", dtype_name(c.dtype)}};
}

ToyConfig config_from_json(const json& j) {
  ToyConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.frames = j.at("frames").get<std::size_t>();
  c.conv_stem = j.at("conv_stem").get<bool>();
  c.conv_kernel = j.at("conv_kernel").get<std::size_t>();
  c.conv_stride = j.at("conv_stride").get<std::size_t>();
  c.dtype = dtype_from_name(j.at("dtype").get<std::string>());
  return c;
}

void write_tensor_values(ByteWriter& w, const Tensor& t) {
  for (double v : t.data()) {
    if (t.dtype() == DType::f32) w.f32(static_cast<float>(v));
    else w.f64(v);
  }
}

Tensor read_tensor_values(ByteReader& r, Shape shape, DType dt) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dt == DType::f32 ? static_cast<double>(r.f32()) : r.f64();
  return Tensor(std::move(shape), std::move(v), dt);
}

namespace {

struct BlobRef {
  std::string name;
  const Tensor* tensor;
};

std::vector<BlobRef> blob_list(const ModelGraph& m) {
  std::vector<BlobRef> blobs;
  for (const auto& l : m.layers) {
    blobs.push_back({"layer" + std::to_string(l.index) + ".weight", &l.weight});
    if (l.bias) blobs.push_back({"layer" + std::to_string(l.index) + ".bias", &*l.bias});
  }
  for (const auto& n : m.norms) {
    blobs.push_back({n.name + ".gamma", &n.gamma});
    blobs.push_back({n.name + ".beta", &n.beta});
  }
  return blobs;
}

}  // namespace

Bytes serialize_model(const ModelGraph& m) {
  const DType dt = m.config.dtype;
  json meta;
  meta["name"] = m.name;
  meta["seed"] = m.seed;
  meta["dtype"] = dtype_name(dt);
  meta["config"] = config_to_json(m.config);
  meta["input_shape"] = m.input_shape();
  json layers = json::array();
  for (const auto& l : m.layers) {
    if (l.weight.dtype() != dt || (l.bias && l.bias->dtype() != dt))
      throw AssemblyError("layer " + std::to_string(l.index) + " dtype differs from model dtype");
    layers.push_back({{"index", l.index},
                      {"kind", to_string(l.kind)},
                      {"activation", to_string(l.activation)},
                      {"quantizable", l.quantizable},
                      {"stride", l.stride},
                      {"weight_shape", l.weight.shape()},
                      {"has_bias", l.bias.has_value()}});
  }
  meta["layers"] = layers;
  json norms = json::array();
  for (const auto& n : m.norms) norms.push_back({{"name", n.name}, {"size", n.gamma.numel()}});
  meta["norms"] = norms;
  json blobs = json::array();
  for (const auto& b : blob_list(m))
    blobs.push_back({{"name", b.name},
                     {"shape", b.tensor->shape()},
                     {"bytes", b.tensor->numel() * dtype_size(dt)}});
  meta["blobs"] = blobs;

  const std::string text = meta.dump();
  ByteWriter w;
  w.str(std::string_view(kModelMagic, 4));
  w.u32(kModelVersion);
  w.u64(text.size());
  w.str(text);
  for (const auto& b : blob_list(m)) write_tensor_values(w, b.tensor->as(dt));
  return w.take();
}

ModelGraph deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string_view(kModelMagic, 4)) throw FormatError("bad magic, expected MYQM", 0);
  const auto version = r.u32();
  if (version != kModelVersion)
    throw FormatError("unsupported MYQM version " + std::to_string(version), 4);
  const auto meta_len = r.u64();
  const std::size_t meta_off = r.offset();
  if (meta_len > r.remaining()) throw FormatError("metadata length exceeds file size", 8);
  json meta;
  try {
    meta = json::parse(r.str(meta_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid JSON metadata: ") + e.what(), meta_off);
  }

  ModelGraph m;
  try {
    m.name = meta.at("name").get<std::string>();
    m.seed = meta.at("seed").get<std::uint64_t>();
    m.config = config_from_json(meta.at("config"));
    const DType dt = dtype_from_name(meta.at("dtype").get<std::string>());
    if (dt != m.config.dtype) throw FormatError("dtype disagrees with config", meta_off);

    // Validate declared blob lengths against their shapes and the file size.
    const auto& blobs = meta.at("blobs");
    std::size_t declared = 0;
    for (const auto& b : blobs) {
      const auto shape = b.at("shape").get<Shape>();
      const auto n = b.at("bytes").get<std::uint64_t>();
      if (n != shape_numel(shape) * dtype_size(dt))
        throw FormatError("blob '" + b.at("name").get<std::string>() + "' declares " + std::to_string(n) +
                              " bytes but its shape needs " + std::to_string(shape_numel(shape) * dtype_size(dt)),
                          r.offset() + declared);
      declared += n;
    }
    if (declared != r.remaining())
      throw FormatError("declared blob payload of " + std::to_string(declared) + " bytes but file has " +
                            std::to_string(r.remaining()),
                        r.offset() + std::min(declared, r.remaining()));

    std::size_t bi = 0;
    auto next_blob = [&]() {
      const auto& b = blobs.at(bi++);
      return read_tensor_values(r, b.at("shape").get<Shape>(), dt);
    };
    for (const auto& lj : meta.at("layers")) {
      LayerSpec l;
      l.index = lj.at("index").get<int>();
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.activation = activation_from_string(lj.at("activation").get<std::string>());
      l.quantizable = lj.at("quantizable").get<bool>();
      l.stride = lj.at("stride").get<std::size_t>();
      l.weight = next_blob();
      if (l.weight.shape() != lj.at("weight_shape").get<Shape>())
        throw FormatError("weight shape disagrees with layer table", r.offset());
      if (lj.at("has_bias").get<bool>()) l.bias = next_blob();
      m.layers.push_back(std::move(l));
    }
    for (const auto& nj : meta.at("norms")) {
      NormParams n;
      n.name = nj.at("name").get<std::string>();
      n.gamma = next_blob();
      n.beta = next_blob();
      m.norms.push_back(std::move(n));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed metadata: ") + e.what(), meta_off);
  }
  validate_graph(m);
  return m;
}

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

ModelGraph load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

std::string model_fingerprint(const ModelGraph& model) { return hex64(fnv1a64(serialize_model(model))); }

}  // namespace myq
