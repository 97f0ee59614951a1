// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <numeric>

#include "myq/error.hpp"
#include "myq/file_util.hpp"
#include "myq/model.hpp"
#include "myq/model_io.hpp"

using namespace myq;

namespace {

std::size_t total(const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); }

bool models_bit_equal(const ModelGraph& a, const ModelGraph& b) {
  if (a.name != b.name || a.seed != b.seed || !(a.config == b.config)) return false;
  if (a.layers.size() != b.layers.size() || a.norms.size() != b.norms.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    const auto &x = a.layers[i], &y = b.layers[i];
    if (x.index != y.index || x.kind != y.kind || x.activation != y.activation || x.stride != y.stride ||
        x.quantizable != y.quantizable || !x.weight.bit_equal(y.weight) || x.bias.has_value() != y.bias.has_value())
      return false;
    if (x.bias && !x.bias->bit_equal(*y.bias)) return false;
  }
  for (std::size_t i = 0; i < a.norms.size(); ++i)
    if (a.norms[i].name != b.norms[i].name || !a.norms[i].gamma.bit_equal(b.norms[i].gamma) ||
        !a.norms[i].beta.bit_equal(b.norms[i].beta))
      return false;
  return true;
}

std::uint64_t read_u64(const Bytes& b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[off + i];
  return v;
}

}  // namespace

TEST(ParamCount, LayerExamples) {
  LayerSpec lin;
  lin.kind = LayerKind::Linear;
  lin.weight = Tensor::zeros({4, 4});
  lin.bias = Tensor::zeros({4});
  EXPECT_EQ(lin.param_count(), 20u);
  LayerSpec conv;
  conv.kind = LayerKind::Conv1d;
  conv.weight = Tensor::zeros({2, 3, 5});
  EXPECT_EQ(conv.param_count(), 30u);
  EXPECT_EQ(conv.fan_in(), 15u);
}

TEST(ParamCount, ToyEncoderMatchesClosedForm) {
  const ToyConfig def;
  const auto m = build_toy_encoder(def, 0);
  EXPECT_EQ(m.num_layers(), 15u);
  EXPECT_EQ(total(param_count(m)), toy_param_count(def));
  EXPECT_EQ(toy_param_count(def), 117024u);
  // Hand evaluation of the closed form for the default config.
  const std::size_t stem = 16 * 64 * 3 + 64 + 64 * 64 * 3 + 64;
  const std::size_t block = 4 * (64 * 64 + 64) + (64 * 256 + 256) + (256 * 64 + 64);
  const std::size_t head = 64 * 32 + 32;
  EXPECT_EQ(toy_param_count(def), stem + 2 * block + head);

  ToyConfig lin = def;
  lin.conv_stem = false;
  lin.layers = 3;
  lin.hidden = 48;
  lin.heads = 6;
  EXPECT_EQ(total(param_count(build_toy_encoder(lin, 1))), toy_param_count(lin));
}

TEST(ToyEncoder, InvalidConfig) {
  ToyConfig c;
  c.hidden = 30;
  c.heads = 4;
  EXPECT_THROW(build_toy_encoder(c, 0), ConfigError);
}

TEST(ToyEncoder, SeedDeterminism) {
  const auto a = build_toy_encoder({}, 5), b = build_toy_encoder({}, 5), c = build_toy_encoder({}, 6);
  EXPECT_TRUE(models_bit_equal(a, b));
  EXPECT_FALSE(models_bit_equal(a, c));
}

TEST(ToyEncoder, LayerOrderAndTags) {
  const auto m = build_toy_encoder({}, 0);
  const std::vector<LayerKind> want{LayerKind::Conv1d, LayerKind::Conv1d, LayerKind::AttnQ, LayerKind::AttnK,
                                    LayerKind::AttnV,  LayerKind::AttnOut, LayerKind::FFN1, LayerKind::FFN2,
                                    LayerKind::AttnQ,  LayerKind::AttnK,  LayerKind::AttnV, LayerKind::AttnOut,
                                    LayerKind::FFN1,   LayerKind::FFN2,   LayerKind::Linear};
  ASSERT_EQ(m.num_layers(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(m.layers[i].kind, want[i]) << i;
    EXPECT_EQ(m.layers[i].index, static_cast<int>(i));
  }
  EXPECT_EQ(m.layers[6].activation, Activation::gelu);
}

TEST(ModelIo, RoundTripIsBitExactForBothDtypes) {
  for (DType dt : {DType::f32, DType::f64}) {
    ToyConfig c;
    c.dtype = dt;
    const auto m = build_toy_encoder(c, 9);
    const auto back = deserialize_model(serialize_model(m));
    EXPECT_TRUE(models_bit_equal(m, back));
    EXPECT_EQ(param_count(back), param_count(m));
    EXPECT_EQ(serialize_model(back), serialize_model(m));
  }
}

TEST(ModelIo, SaveLoadFile) {
  const auto m = build_toy_encoder({}, 2);
  const auto path = std::filesystem::temp_directory_path() / "myq_test_model.myqm";
  save_model(m, path);
  EXPECT_TRUE(models_bit_equal(load_model(path), m));
  std::filesystem::remove(path);
}

TEST(ModelIo, HeaderLayout) {
  const auto bytes = serialize_model(build_toy_encoder({}, 0));
  EXPECT_EQ(std::memcmp(bytes.data(), "MYQM", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  const auto meta_len = read_u64(bytes, 8);
  const std::size_t payload = bytes.size() - 16 - meta_len;
  EXPECT_EQ(payload, (toy_param_count({}) + norm_param_count(build_toy_encoder({}, 0))) * 4);
  EXPECT_EQ(bytes[16], '{');
}

TEST(ModelIo, CorruptMagic) {
  auto bytes = serialize_model(build_toy_encoder({}, 0));
  bytes[0] = 'X';
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 0"), std::string::npos);
  }
}

TEST(ModelIo, VersionMismatch) {
  auto bytes = serialize_model(build_toy_encoder({}, 0));
  bytes[4] = 2;
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}

TEST(ModelIo, TruncatedBlob) {
  auto bytes = serialize_model(build_toy_encoder({}, 0));
  bytes.resize(bytes.size() - 3);
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(ModelIo, DeclaredBlobLengthDisagrees) {
  const auto m = build_toy_encoder({}, 0);
  auto bytes = serialize_model(m);
  const auto meta_len = read_u64(bytes, 8);
  std::string meta(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(meta_len));
  // Change the first blob's byte count to a different value of equal width.
  const auto pos = meta.find("\"bytes\":12288");
  ASSERT_NE(pos, std::string::npos) << meta.substr(0, 400);
  meta.replace(pos, 14, "\"bytes\":12292");
  std::copy(meta.begin(), meta.end(), bytes.begin() + 16);
  try {
    deserialize_model(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(ModelIo, MetadataLengthBeyondFile) {
  auto bytes = serialize_model(build_toy_encoder({}, 0));
  bytes[15] = 0x7f;
  EXPECT_THROW(deserialize_model(bytes), FormatError);
}
