#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "diffcon/errors.hpp"
#include "diffcon/numkit/mlp.hpp"

namespace diffcon {

inline constexpr std::array<char, 4> kCheckpointMagic{'D', 'C', 'K', 'P'};
inline constexpr std::uint8_t kMlpFormatVersion = 1;

/// Little-endian byte sink.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void tag(const char (&t)[5]) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(t[i]));
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian byte source with bounds checking.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::span<double> out) {
    for (auto& v : out) v = f64();
  }
  std::string tag() {
    need(4);
    std::string t(reinterpret_cast<const char*>(data_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

/// "DCKP", version, layer count, (in, out, activation) per layer as u32,
/// then all parameters as f64 in layer order.
inline void write_mlp(ByteWriter& w, const Mlp& model) {
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u8(kMlpFormatVersion);
  w.u32(static_cast<std::uint32_t>(model.depth()));
  for (const auto& l : model.layers()) {
    w.u32(static_cast<std::uint32_t>(l.in_dim()));
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u32(static_cast<std::uint32_t>(l.act));
  }
  for (const auto& l : model.layers()) {
    w.f64s(l.weight.data);
    w.f64s(l.bias);
  }
}

inline Mlp read_mlp(ByteReader& r) {
  for (char c : kCheckpointMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw ParseError("bad checkpoint magic");
  const auto version = r.u8();
  if (version != kMlpFormatVersion) throw ParseError("unsupported Mlp block version " + std::to_string(version));
  const std::uint32_t depth = r.u32();
  if (depth == 0 || depth > 1024) throw ParseError("implausible layer count");
  std::vector<DenseLayer> layers(depth);
  for (auto& l : layers) {
    const auto in = r.u32();
    const auto out = r.u32();
    const auto act = r.u32();
    if (act > 2) throw ParseError("unknown activation tag " + std::to_string(act));
    l.weight = Matrix(out, in);
    l.bias.assign(out, 0.0);
    l.act = static_cast<Activation>(act);
  }
  for (auto& l : layers) {
    r.f64s(l.weight.data);
    r.f64s(l.bias);
  }
  return Mlp(std::move(layers));
}

inline std::vector<std::uint8_t> serialize_mlp(const Mlp& model) {
  ByteWriter w;
  write_mlp(w, model);
  return w.take();
}

inline Mlp deserialize_mlp(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  Mlp m = read_mlp(r);
  if (!r.done()) throw ParseError("trailing bytes after Mlp checkpoint");
  return m;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace diffcon
