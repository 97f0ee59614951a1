// SPDX-License-Identifier: Apache-2.0
#include "myq/tensor_io.hpp"

#include <cstdio>
#include <nlohmann/json.hpp>

#include "myq/error.hpp"
#include "myq/model_io.hpp"

namespace myq {

namespace {
constexpr char kMagic[4] = {'M', 'Y', 'Q', 'T'};
constexpr std::uint32_t kMaxRank = 8;
}  // namespace

Bytes serialize_tensor(const Tensor& t) {
  ByteWriter w;
  w.str(std::string_view(kMagic, 4));
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(t.shape().size()));
  for (auto d : t.shape()) w.u64(d);
  w.u8(static_cast<std::uint8_t>(t.dtype()));
  write_tensor_values(w, t);
  return w.take();
}

Tensor deserialize_tensor(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4) != std::string_view(kMagic, 4)) throw FormatError("bad magic, expected MYQT", 0);
  const auto version = r.u32();
  if (version != kTensorVersion) throw FormatError("unsupported MYQT version " + std::to_string(version), 4);
  const auto ndim = r.u32();
  if (ndim > kMaxRank) throw FormatError("tensor rank " + std::to_string(ndim) + " exceeds " + std::to_string(kMaxRank), 8);
  Shape shape(ndim);
  std::size_t numel = 1;
  for (auto& d : shape) {
    const std::size_t off = r.offset();
    d = r.u64();
    if (d != 0 && numel > r.remaining() / d) throw FormatError("dimension too large for file", off);
    numel *= d;
  }
  const std::size_t dt_off = r.offset();
  const auto code = r.u8();
  if (code > 1) throw FormatError("unknown dtype code " + std::to_string(code), dt_off);
  const DType dt = static_cast<DType>(code);
  const std::size_t need = numel * dtype_size(dt);
  if (need != r.remaining())
    throw FormatError("payload is " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(need),
                      r.offset());
  return read_tensor_values(r, std::move(shape), dt);
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) { write_file_atomic(path, serialize_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) { return deserialize_tensor(read_file(path)); }

void save_sample_set(const std::filesystem::path& dir, std::span<const Tensor> samples) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof name, "sample_%05zu.myqt", i);
    save_tensor(samples[i], dir / name);
    files.push_back(name);
  }
  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  manifest["files"] = files;
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<Tensor> load_sample_set(const std::filesystem::path& dir) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw UsageError("no manifest.json in " + dir.string());
  const auto raw = read_file(mpath);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what(), 0);
  }
  if (!manifest.contains("files") || !manifest["files"].is_array())
    throw FormatError("manifest.json has no 'files' array", 0);
  std::vector<Tensor> out;
  for (const auto& f : manifest["files"]) {
    const auto name = f.get<std::string>();
    if (name.empty() || std::filesystem::path(name).is_absolute() || name.find("..") != std::string::npos)
      throw FormatError("manifest entry '" + name + "' must be a plain relative file name", 0);
    out.push_back(load_tensor(dir / name));
  }
  if (out.empty()) throw UsageError("sample set " + dir.string() + " is empty");
  return out;
}

}  // namespace myq
