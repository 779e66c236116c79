#pragma once

// Named-tensor container and its file layout:
//   "SDCF" | u32 version (1) | u32 count
//   per entry: u32 name length | name bytes | u32 rank | u64 extents[rank] |
//              u8 dtype (0 = f32) | f32 payload
// All integers and floats little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shadoc/ad/tensor.hpp"
#include "shadoc/error.hpp"
#include "shadoc/imaging/io.hpp"

namespace shadoc::train {

inline constexpr std::uint32_t checkpoint_version = 1;

struct checkpoint_entry {
  std::string name;
  ad::shape_t shape;
  std::vector<float> values;

  bool operator==(const checkpoint_entry&) const = default;
};

class checkpoint {
 public:
  void add(std::string name, ad::shape_t shape, std::vector<float> values) {
    if (index_.count(name)) throw format_error("checkpoint: duplicate entry '" + name + "'");
    if (ad::numel(shape) != values.size() || shape.empty())
      throw dimension_error("checkpoint: entry '" + name + "' has " + std::to_string(values.size()) +
                            " values for shape " + ad::to_string(shape));
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(shape), std::move(values)});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const checkpoint_entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw format_error("checkpoint: missing entry '" + name + "'");
    return entries_[it->second];
  }

  const std::vector<checkpoint_entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const checkpoint& o) const { return entries_ == o.entries_; }

 private:
  std::vector<checkpoint_entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

class byte_writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class byte_reader {
 public:
  explicit byte_reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n)
      throw decode_error(std::string("checkpoint truncated while reading ") + what, in_.size());
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const checkpoint& ck) {
  detail::byte_writer w;
  w.bytes("SDCF", 4);
  w.u32(checkpoint_version);
  w.u32(static_cast<std::uint32_t>(ck.size()));
  for (const auto& e : ck.entries()) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto x : e.shape) w.u64(x);
    w.u8(0);
    for (float v : e.values) w.f32(v);
  }
  return w.take();
}

inline checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::byte_reader r(bytes);
  if (r.str(4, "magic") != "SDCF") throw format_error("checkpoint: bad magic (expected SDCF)");
  const auto version = r.u32("version");
  if (version != checkpoint_version)
    throw format_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.u32("entry count");
  checkpoint ck;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32("name length");
    auto name = r.str(len, "name");
    const auto rank = r.u32("rank");
    if (rank == 0) throw format_error("checkpoint: entry '" + name + "' has rank 0");
    ad::shape_t shape(rank);
    std::uint64_t n = 1;
    for (auto& e : shape) {
      const auto x = r.u64("extent");
      if (x == 0 || x > (std::uint64_t(1) << 32)) throw format_error("checkpoint: entry '" + name + "' has a bad extent");
      e = static_cast<std::size_t>(x);
      n *= x;
      if (n > (std::uint64_t(1) << 34)) throw format_error("checkpoint: entry '" + name + "' is implausibly large");
    }
    const auto dtype = r.u8("dtype");
    if (dtype != 0) throw format_error("checkpoint: entry '" + name + "' has unknown dtype " + std::to_string(dtype));
    r.need(n * 4, "payload");
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32("payload");
    if (ck.contains(name)) throw format_error("checkpoint: duplicate entry '" + name + "'");
    ck.add(std::move(name), std::move(shape), std::move(values));
  }
  if (r.offset() != bytes.size())
    throw format_error("checkpoint: " + std::to_string(bytes.size() - r.offset()) + " trailing bytes");
  return ck;
}

inline void save_checkpoint(const checkpoint& ck, const std::filesystem::path& path) {
  imaging::write_file(path, encode_checkpoint(ck));
}

inline checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(imaging::read_file(path));
}

}  // namespace shadoc::train
