// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "sbss/model.hpp"
#include "sbss/model_store.hpp"

namespace sbss {
namespace {

ModelConfig tiny(bool s4d) {
  ModelConfig c;
  c.name = "tiny";
  c.n_filters = 16;
  c.window = 8;
  c.bottleneck = 8;
  c.conv_channels = 12;
  c.repeats = 2;
  c.convs_per_repeat = 2;
  c.s4d_per_repeat = s4d ? 1 : 0;
  c.state_pairs = 2;
  c.s4d_ffn_width = 8;
  c.speaker_blocks = 1;
  c.lookahead_frames = {1};
  return c;
}

using Bytes = std::vector<unsigned char>;

void put32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_bitwise(const Bytes& b) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char byte : b) {
    crc ^= byte;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

// Appends a valid CRC so only structural checks can reject the container.
Bytes with_crc(Bytes body) {
  put32(body, crc32_bitwise(body));
  return body;
}

TEST(Store, CrcOracle) {
  const Bytes check = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
  EXPECT_EQ(crc32_bitwise(check), 0xCBF43926u);
}

Bytes header(const std::string& json) {
  Bytes b = {'S', 'B', 'S', 'S'};
  put32(b, 1);
  put32(b, static_cast<std::uint32_t>(json.size()));
  b.insert(b.end(), json.begin(), json.end());
  return b;
}

template <class E>
std::string expect_error(const Bytes& bytes) {
  try {
    deserialize_model(bytes);
  } catch (const E& e) {
    return e.what();
  } catch (const std::exception& e) {
    ADD_FAILURE() << "wrong error class: " << e.what();
    return {};
  }
  ADD_FAILURE() << "no error raised";
  return {};
}

TEST(Store, RoundTripIsBitwiseStable) {
  for (bool s4d : {false, true}) {
    const auto c = tiny(s4d);
    auto w = random_weights(c, 3);
    // Values that a lossy path would disturb.
    w["encoder.bias"].data[0] = -0.0f;
    w["encoder.bias"].data[1] = std::numeric_limits<float>::denorm_min();
    w["encoder.bias"].data[2] = std::numeric_limits<float>::max();
    const auto bytes = serialize_model(c, w);
    const auto back = deserialize_model(bytes);
    EXPECT_EQ(back.config, c);
    ASSERT_EQ(back.weights.size(), w.size());
    for (const auto& [name, t] : w) {
      const auto& u = back.weights.at(name);
      EXPECT_EQ(u.dims, t.dims) << name;
      EXPECT_EQ(std::memcmp(u.data.data(), t.data.data(), t.data.size() * 4), 0) << name;
    }
    EXPECT_EQ(serialize_model(back.config, back.weights), bytes);
  }
}

TEST(Store, LayoutMatchesFormat) {
  const auto c = tiny(false);
  const auto w = random_weights(c, 1);
  const auto bytes = serialize_model(c, w);
  ASSERT_GE(bytes.size(), 16u);
  const Bytes body(bytes.begin(), bytes.end() - 4);
  EXPECT_EQ(with_crc(body), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SBSS");
  EXPECT_EQ(bytes[4], 1);
  const std::uint32_t json_len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | bytes[11] << 24;
  const std::string json(bytes.begin() + 12, bytes.begin() + 12 + json_len);
  EXPECT_EQ(ModelConfig::from_json(nlohmann::json::parse(json)), c);
  // Header + JSON + count + per tensor (name, dtype, rank, dims, payload) + CRC.
  std::size_t expect = 12 + json_len + 4 + 4;
  for (const auto& [name, t] : w) expect += 4 + name.size() + 1 + 4 + 8 * t.dims.size() + 4 * t.data.size();
  EXPECT_EQ(bytes.size(), expect);
}

TEST(Store, FileSaveAndLoad) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = (dir / "sbss_store_test.sbss").string();
  const auto c = tiny(true);
  const auto w = random_weights(c, 5);
  save_model(path, c, w);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  const auto back = load_model(path);
  EXPECT_EQ(back.config, c);
  EXPECT_EQ(back.weights, w);
  std::remove(path.c_str());
  EXPECT_THROW(load_model(path), DataError);
}

TEST(Store, LoadedModelMatchesOriginal) {
  const auto c = tiny(true);
  const auto w = random_weights(c, 6);
  const auto back = deserialize_model(serialize_model(c, w));
  const Model<float> a(c, w), b(back.config, back.weights);
  std::vector<float> y(300);
  const std::vector<float> e(8, 1.0f);
  std::mt19937 rng(1);
  std::normal_distribution<float> g(0, 0.1f);
  for (auto& v : y) v = g(rng);
  EXPECT_EQ(a.extract(std::span<const float>(y), std::span<const float>(e)),
            b.extract(std::span<const float>(y), std::span<const float>(e)));
}

TEST(Store, BadMagic) {
  auto bytes = serialize_model(tiny(false), random_weights(tiny(false), 1));
  bytes[0] = 'X';
  expect_error<BadMagicError>(bytes);
  expect_error<BadMagicError>(Bytes{'R', 'I', 'F', 'F', 0, 0});
}

TEST(Store, Version) {
  auto bytes = serialize_model(tiny(false), random_weights(tiny(false), 1));
  bytes[4] = 2;
  const auto msg = expect_error<VersionError>(bytes);
  EXPECT_NE(msg.find("version 2"), std::string::npos);
}

TEST(Store, ChecksumOnFlippedPayload) {
  const auto good = serialize_model(tiny(false), random_weights(tiny(false), 1));
  // Config text, last tensor payload, and the CRC itself.
  for (std::size_t pos : {std::size_t{20}, good.size() - 9, good.size() - 5, good.size() - 1}) {
    auto bytes = good;
    bytes[pos] ^= 0x10;
    expect_error<ChecksumError>(bytes);
  }
}

TEST(Store, TruncationAtAnyPoint) {
  const auto good = serialize_model(tiny(false), random_weights(tiny(false), 1));
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{8}, std::size_t{15},
                           std::size_t{40}, good.size() / 3, good.size() - 4,
                           good.size() - 1}) {
    const Bytes cut(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(keep));
    SCOPED_TRACE(keep);
    expect_error<TruncatedError>(cut);
  }
}

TEST(Store, MalformedStructure) {
  const std::string json = tiny(false).to_json().dump();
  {  // count promises a tensor that is not there
    auto b = header(json);
    put32(b, 1);
    expect_error<MalformedContainerError>(with_crc(b));
  }
  {  // unknown dtype
    auto b = header(json);
    put32(b, 1);
    put32(b, 1);
    b.push_back('x');
    b.push_back(7);
    put32(b, 0);
    expect_error<MalformedContainerError>(with_crc(b));
  }
  {  // trailing bytes
    auto b = header(json);
    put32(b, 0);
    b.push_back(0);
    expect_error<MalformedContainerError>(with_crc(b));
  }
  {  // duplicate tensor name
    auto b = header(json);
    put32(b, 2);
    for (int i = 0; i < 2; ++i) {
      put32(b, 1);
      b.push_back('x');
      b.push_back(0);
      put32(b, 0);
      for (int k = 0; k < 4; ++k) b.push_back(0);
    }
    expect_error<MalformedContainerError>(with_crc(b));
  }
  {  // config that is not JSON
    auto b = header("{not json");
    put32(b, 0);
    expect_error<MalformedContainerError>(with_crc(b));
  }
}

TEST(Store, MissingS4DTensorNamesTheFirstOne) {
  const auto c = tiny(true);
  auto w = random_weights(c, 1);
  for (auto it = w.begin(); it != w.end();) {
    it = it->first.find(".s4d") != std::string::npos ? w.erase(it) : std::next(it);
  }
  const auto msg = expect_error<InconsistentModelError>(store_detail::encode(c, w));
  // First in architecture order: the first repeat's S4D block, first tensor.
  EXPECT_NE(msg.find("missing tensor sep.rep0.s4d0.norm1.gain"), std::string::npos) << msg;
  EXPECT_NE(msg.find("more"), std::string::npos) << msg;
}

TEST(Store, InconsistentValues) {
  const auto c = tiny(true);
  {
    auto w = random_weights(c, 1);
    w["sep.rep1.conv0.dw.weight"].data[3] = std::nanf("");
    const auto msg = expect_error<InconsistentModelError>(store_detail::encode(c, w));
    EXPECT_NE(msg.find("sep.rep1.conv0.dw.weight"), std::string::npos);
  }
  {
    auto w = random_weights(c, 1);
    w["sep.rep0.s4d0.ssm.a_re"].data[3] = 0.0f;
    const auto msg = expect_error<InconsistentModelError>(store_detail::encode(c, w));
    EXPECT_NE(msg.find("channel 1, pair 1"), std::string::npos) << msg;
  }
  {
    auto bad = c;
    bad.window = 7;
    expect_error<InconsistentModelError>(store_detail::encode(bad, random_weights(c, 1)));
  }
  EXPECT_THROW(serialize_model(c, random_weights(tiny(false), 1)), InconsistentModelError);
}

TEST(Store, ManifestListsEveryTensor) {
  const auto c = preset("d1");
  const auto text = tensor_manifest(c);
  std::istringstream in(text);
  std::string line;
  std::int64_t total = 0;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    total += std::stoll(line.substr(line.rfind(' ') + 1));
  }
  EXPECT_EQ(lines, expected_tensors(c).size());
  EXPECT_EQ(total, param_count(c));
  EXPECT_NE(text.find("encoder.weight [2048,1,320] 655360\n"), std::string::npos);
  EXPECT_NE(text.find("sep.rep2.s4d0.ssm.a_re [256,16] 4096\n"), std::string::npos);
}

}  // namespace
}  // namespace sbss
