// Copyright 2026 The sbss Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// The .sbss weight container. All integers little-endian:
//
//   "SBSS" | u32 version | u32 n | n bytes canonical config JSON
//   | u32 tensor count | per tensor: u32 name length, name, u8 dtype (0 = f32),
//     u32 rank, rank x u64 dims, f32 payload
//   | u32 CRC32 of every preceding byte

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "sbss/config.hpp"
#include "sbss/error.hpp"
#include "sbss/weights.hpp"

namespace sbss {

inline constexpr char kStoreMagic[4] = {'S', 'B', 'S', 'S'};
inline constexpr std::uint32_t kStoreVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

struct StoredModel {
  ModelConfig config;
  WeightSet weights;
};

namespace store_detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<unsigned char>& data() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

/// Bounds-checked reader; running past the end means the file was cut short.
class Reader {
 public:
  explicit Reader(std::span<const unsigned char> b) : b_(b) {}
  struct OutOfData {};

  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const unsigned char> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) throw OutOfData{};
  }
  std::span<const unsigned char> b_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::span<const unsigned char> b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < b.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(b.size() - off, 1u << 30));
    crc = crc32(crc, b.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

struct Parsed {
  std::string config_json;
  WeightSet weights;
  std::size_t end = 0;  // offset just past the tensor table
};

/// Parses the body (everything before the CRC). Throws Reader::OutOfData
/// when the body ends early and MalformedContainerError for structural
/// problems. With `allow_trailing`, bytes after the table are left unread.
inline Parsed parse_body(std::span<const unsigned char> body, bool allow_trailing = false) {
  Reader r(body);
  r.take(4);
  r.le<std::uint32_t>();
  Parsed p;
  const auto json_len = r.le<std::uint32_t>();
  p.config_json = r.str(json_len);
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.le<std::uint32_t>();
    std::string name = r.str(name_len);
    const auto dtype = r.le<std::uint8_t>();
    if (dtype != kDtypeF32) {
      throw MalformedContainerError("tensor '" + name + "' has unsupported dtype tag " +
                                    std::to_string(dtype));
    }
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) {
      throw MalformedContainerError("tensor '" + name + "' has rank " +
                                    std::to_string(rank));
    }
    Tensor t;
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.le<std::uint64_t>();
      if (dim > (std::uint64_t{1} << 40) || (dim != 0 && numel > (std::uint64_t{1} << 40) / dim)) {
        throw MalformedContainerError("tensor '" + name + "' has implausible dims");
      }
      numel *= dim;
      t.dims.push_back(static_cast<std::int64_t>(dim));
    }
    const auto payload = r.take(static_cast<std::size_t>(numel) * 4);
    t.data.resize(static_cast<std::size_t>(numel));
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const unsigned char* q = payload.data() + 4 * i;
      const std::uint32_t u = static_cast<std::uint32_t>(q[0]) |
                              (static_cast<std::uint32_t>(q[1]) << 8) |
                              (static_cast<std::uint32_t>(q[2]) << 16) |
                              (static_cast<std::uint32_t>(q[3]) << 24);
      t.data[i] = std::bit_cast<float>(u);
    }
    if (!p.weights.emplace(name, std::move(t)).second) {
      throw MalformedContainerError("duplicate tensor name '" + name + "'");
    }
  }
  p.end = r.pos();
  if (!allow_trailing && r.remaining() != 0) {
    throw MalformedContainerError(std::to_string(r.remaining()) +
                                  " trailing bytes after the tensor table");
  }
  return p;
}

}  // namespace store_detail

/// Checks that `weights` can build a model of `config`: exact tensor set and
/// shapes, finite values, and stable S4D layers. Throws InconsistentModelError
/// naming the first problem.
inline void check_consistency(const ModelConfig& config, const WeightSet& weights) {
  const auto problems = weight_mismatches(config, weights);
  if (!problems.empty()) {
    std::string msg = "container inconsistent with config '" + config.name +
                      "': " + problems.front();
    if (problems.size() > 1) {
      msg += " (and " + std::to_string(problems.size() - 1) + " more)";
    }
    throw InconsistentModelError(msg);
  }
  for (const auto& [name, t] : weights) {
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      if (!std::isfinite(t.data[i])) {
        throw InconsistentModelError("tensor " + name + " has a non-finite value at index " +
                                     std::to_string(i));
      }
    }
    if (name.size() > 9 && name.ends_with(".ssm.a_re")) {
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!(t.data[i] < 0)) {
          const auto pairs = static_cast<std::size_t>(t.dims.back());
          throw InconsistentModelError(
              "unstable S4D layer " + name + " at (channel " + std::to_string(i / pairs) +
              ", pair " + std::to_string(i % pairs) + "): Re(A) must be negative");
        }
      }
    }
  }
}

namespace store_detail {

/// Encodes without consistency checks (also used to build invalid fixtures).
inline std::vector<unsigned char> encode(const ModelConfig& config,
                                         const WeightSet& weights) {
  Writer w;
  w.bytes(kStoreMagic, 4);
  w.le<std::uint32_t>(kStoreVersion);
  const std::string json = config.to_json().dump();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
  w.bytes(json.data(), json.size());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(weights.size()));
  for (const auto& [name, t] : weights) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(kDtypeF32);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint64_t>(static_cast<std::uint64_t>(d));
    for (float v : t.data) w.f32(v);
  }
  const std::uint32_t crc = crc32_of(w.data());
  w.le<std::uint32_t>(crc);
  return std::move(w.data());
}

}  // namespace store_detail

inline std::vector<unsigned char> serialize_model(const ModelConfig& config,
                                                  const WeightSet& weights) {
  config.validate();
  check_consistency(config, weights);
  return store_detail::encode(config, weights);
}

/// Decodes a container. Error classes: BadMagicError, VersionError,
/// TruncatedError (file ends early), ChecksumError (CRC mismatch on a file of
/// plausible length), MalformedContainerError (CRC-valid but structurally
/// invalid), InconsistentModelError (tensors do not fit the config).
inline StoredModel deserialize_model(std::span<const unsigned char> bytes) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kStoreMagic, 4) != 0) {
    throw BadMagicError("not an .sbss container (bad magic)");
  }
  if (bytes.size() < 16) {
    throw TruncatedError("container truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  const std::uint32_t version = static_cast<std::uint32_t>(bytes[4]) |
                                (static_cast<std::uint32_t>(bytes[5]) << 8) |
                                (static_cast<std::uint32_t>(bytes[6]) << 16) |
                                (static_cast<std::uint32_t>(bytes[7]) << 24);
  if (version != kStoreVersion) {
    throw VersionError("unsupported container version " + std::to_string(version) +
                       " (expected " + std::to_string(kStoreVersion) + ")");
  }
  const auto body = bytes.first(bytes.size() - 4);
  const auto tail = bytes.last(4);
  const std::uint32_t stored = static_cast<std::uint32_t>(tail[0]) |
                               (static_cast<std::uint32_t>(tail[1]) << 8) |
                               (static_cast<std::uint32_t>(tail[2]) << 16) |
                               (static_cast<std::uint32_t>(tail[3]) << 24);
  if (store_detail::crc32_of(body) != stored) {
    // Distinguish a short file from in-place corruption by checking whether
    // the declared structure plus its CRC extends past the end of the file.
    bool short_file = false;
    try {
      short_file = store_detail::parse_body(bytes, true).end + 4 > bytes.size();
    } catch (const store_detail::Reader::OutOfData&) {
      short_file = true;
    } catch (const StoreError&) {
    }
    if (short_file) {
      throw TruncatedError("container truncated: declared contents exceed " +
                           std::to_string(bytes.size()) + " bytes");
    }
    throw ChecksumError("container CRC mismatch (corrupted data)");
  }
  store_detail::Parsed parsed;
  try {
    parsed = store_detail::parse_body(body);
  } catch (const store_detail::Reader::OutOfData&) {
    throw MalformedContainerError("container structure exceeds its CRC-covered body");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(parsed.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedContainerError(std::string("config JSON does not parse: ") + e.what());
  }
  StoredModel out;
  try {
    out.config = ModelConfig::from_json(j);
  } catch (const ConfigError& e) {
    throw InconsistentModelError(std::string("invalid stored config: ") + e.what());
  }
  check_consistency(out.config, parsed.weights);
  out.weights = std::move(parsed.weights);
  return out;
}

/// Writes atomically (temporary file + rename).
inline void save_model(const std::string& path, const ModelConfig& config,
                       const WeightSet& weights) {
  const auto bytes = serialize_model(config, weights);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

inline StoredModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

/// One line per expected tensor: "<name> [d0,d1,...] <numel>".
inline std::string tensor_manifest(const ModelConfig& config) {
  std::ostringstream os;
  for (const auto& s : expected_tensors(config)) {
    os << s.name << " [";
    for (std::size_t i = 0; i < s.dims.size(); ++i) os << (i ? "," : "") << s.dims[i];
    os << "] " << s.numel() << "\n";
  }
  return os.str();
}

}  // namespace sbss
