#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "uietl/config.hpp"
#include "uietl/digest.hpp"
#include "uietl/error.hpp"
#include "uietl/net/config.hpp"
#include "uietl/optim.hpp"
#include "uietl/params.hpp"

namespace uietl {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'U', 'I', 'E', 'T', 'L', 'C', 'K', 'P'};

/// Network weights plus everything needed to resume the stage that wrote them.
template <class T>
struct Checkpoint {
  ParameterStore<T> params;
  NetworkConfig network;
  std::string stage;        // "init", "pretrain" or "finetune"
  std::string config_echo;  // resolved stage config, key = value text
  long step = 0;
  long optimizer_step = 0;
  std::map<std::string, typename AdamW<T>::Moments> moments;
};

namespace ckpt_detail {

template <class T>
constexpr std::uint8_t dtype_tag() {
  if constexpr (std::is_same_v<T, float>) return 1;
  else if constexpr (std::is_same_v<T, double>) return 2;
  else static_assert(sizeof(T) == 0, "unsupported checkpoint scalar");
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i64(long v) { u64(static_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf_ += s;
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  template <class T>
  void scalar(T v) {
    if constexpr (sizeof(T) == 4) u32(std::bit_cast<std::uint32_t>(v));
    else u64(std::bit_cast<std::uint64_t>(v));
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string& bytes() { return buf_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& b, std::size_t end) : b_(b), end_(end) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  long i64() { return static_cast<long>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > end_ - pos_) throw FormatError("checkpoint: string runs past end of file");
    return std::string(take(static_cast<std::size_t>(n)), static_cast<std::size_t>(n));
  }
  template <class T>
  T scalar() {
    if constexpr (sizeof(T) == 4) return std::bit_cast<T>(u32());
    else return std::bit_cast<T>(u64());
  }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  const char* take(std::size_t n) {
    if (n > end_ - pos_) throw FormatError("checkpoint: truncated");
    const char* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t le(int n) {
    const char* p = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  const std::string& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::string raw_digest(const std::string& bytes, std::size_t n) {
  return sha256_hex(std::string_view(bytes.data(), n));
}

}  // namespace ckpt_detail

/// Serialises to the byte-stable container: magic, version, network and stage
/// config, parameter entries in name order, optimizer state, then a SHA-256 of
/// everything before it.
template <class T>
std::string serialize_checkpoint(const Checkpoint<T>& c) {
  ckpt_detail::Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  KeyValueConfig net;
  write_network(net, c.network);
  w.str(net.str());
  w.str(c.stage);
  w.str(c.config_echo);
  w.i64(c.step);
  w.u64(c.params.entries().size());
  for (const auto& [name, e] : c.params.entries()) {
    w.str(name);
    w.u8(ckpt_detail::dtype_tag<T>());
    w.u8(e.trainable ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) w.u32(static_cast<std::uint32_t>(d));
    for (T v : e.values) w.scalar(v);
  }
  w.i64(c.optimizer_step);
  w.u64(c.moments.size());
  for (const auto& [name, m] : c.moments) {
    w.str(name);
    w.u64(m.m.size());
    for (double v : m.m) w.f64(v);
    for (double v : m.v) w.f64(v);
  }
  const std::string sum = ckpt_detail::raw_digest(w.bytes(), w.bytes().size());
  w.raw(sum.data(), sum.size());
  return std::move(w.bytes());
}

template <class T>
Checkpoint<T> deserialize_checkpoint(const std::string& bytes) {
  constexpr std::size_t kSum = 64;
  if (bytes.size() < sizeof kCheckpointMagic + 4 + kSum) throw FormatError("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw FormatError("checkpoint: bad magic");
  ckpt_detail::Reader head(bytes, bytes.size());
  for (std::size_t i = 0; i < sizeof kCheckpointMagic; ++i) head.u8();
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion)
    throw VersionError("checkpoint: format version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  const std::size_t body = bytes.size() - kSum;
  if (ckpt_detail::raw_digest(bytes, body) != bytes.substr(body))
    throw FormatError("checkpoint: checksum mismatch (truncated or corrupt)");

  ckpt_detail::Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof kCheckpointMagic + 4; ++i) r.u8();
  Checkpoint<T> c;
  try {
    c.network = read_network(KeyValueConfig::parse(r.str()));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad network echo: ") + e.what());
  }
  c.stage = r.str();
  c.config_echo = r.str();
  c.step = r.i64();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    if (r.u8() != ckpt_detail::dtype_tag<T>()) throw FormatError("checkpoint: dtype mismatch for " + name);
    const bool trainable = r.u8() != 0;
    const std::uint32_t nd = r.u32();
    if (nd > 8) throw FormatError("checkpoint: bad rank for " + name);
    std::vector<int> shape(nd);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.u32());
      count *= static_cast<std::size_t>(d);
    }
    if (count * sizeof(T) > r.remaining()) throw FormatError("checkpoint: truncated entry " + name);
    std::vector<T> values(count);
    for (auto& v : values) v = r.scalar<T>();
    c.params.add(name, std::move(shape), std::move(values), trainable);
  }
  c.optimizer_step = r.i64();
  const std::uint64_t nm = r.u64();
  for (std::uint64_t i = 0; i < nm; ++i) {
    std::string name = r.str();
    const std::uint64_t k = r.u64();
    if (k * 16 > r.remaining()) throw FormatError("checkpoint: truncated moments for " + name);
    typename AdamW<T>::Moments m;
    m.m.resize(k);
    m.v.resize(k);
    for (auto& v : m.m) v = r.f64();
    for (auto& v : m.v) v = r.f64();
    c.moments.emplace(std::move(name), std::move(m));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return c;
}

template <class T>
void save_checkpoint(const Checkpoint<T>& c, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

template <class T = float>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint<T>(ss.str());
}

}  // namespace uietl
