// SPDX-License-Identifier: Apache-2.0

#include "absd/container.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace absd {

namespace {

constexpr char kMagic[4] = {'A', 'B', 'S', 'D'};

class Writer {
 public:
  void u8(uint8_t v) { out_.push_back(v); }
  void u16(uint16_t v) { le(v, 2); }
  void u32(uint32_t v) { le(v, 4); }
  void u64(uint64_t v) { le(v, 8); }
  void bytes(std::span<const uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<uint8_t> take() { return std::move(out_); }

 private:
  void le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  std::vector<uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> b) : b_(b) {}

  uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw CorruptData(fmt::format("truncated ABSD stream while reading {}", what));
    }
  }
  std::span<const uint8_t> b_;
  std::size_t pos_ = 0;
};

void check_content(const QuantizedTensor& q) {
  check_layout(q);
  const FormatSpec& spec = q.spec();
  for (std::size_t b = 0; b < q.scale_bytes.size(); ++b) {
    const uint8_t sb = q.scale_bytes[b];
    DecodedScale ds;
    try {
      ds = decode_scale(sb, spec.scale);
    } catch (const std::invalid_argument& e) {
      throw CorruptData(fmt::format("block {}: {}", b, e.what()));
    }
    if (ds.sign_bit && !spec.adaptive()) {
      throw CorruptData(fmt::format(
          "block {}: scale byte 0x{:02X} sets the sign bit in non-adaptive format {}", b, sb,
          spec.name));
    }
  }
  const std::size_t cols = q.cols();
  const std::size_t stride = q.blocks_per_row() * static_cast<std::size_t>(spec.block_size);
  if (stride != cols) {
    for (std::size_t r = 0; r < q.rows(); ++r) {
      for (std::size_t c = cols; c < stride; ++c) {
        if (q.code(r, c) != 0) {
          throw CorruptData(fmt::format("row {}: padding code at column {} is non-zero", r, c));
        }
      }
    }
  }
}

}  // namespace

std::vector<uint8_t> write_absd(const QuantizedTensor& q) {
  check_content(q);
  Writer w;
  for (char c : kMagic) w.u8(static_cast<uint8_t>(c));
  w.u16(kContainerVersion);
  w.u16(q.format_id);
  w.u16(static_cast<uint16_t>(q.shape.size()));
  for (std::size_t d : q.shape) w.u64(d);
  w.u32(std::bit_cast<uint32_t>(q.alpha));
  w.bytes(q.scale_bytes);
  w.bytes(q.packed_codes);
  return w.take();
}

QuantizedTensor read_absd(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CorruptData("bad ABSD magic");
  const auto version = static_cast<uint16_t>(r.le(2, "version"));
  if (version != kContainerVersion) {
    throw CorruptData(fmt::format("unsupported ABSD version {}", version));
  }
  QuantizedTensor q;
  q.format_id = static_cast<uint16_t>(r.le(2, "format id"));
  if (q.format_id >= builtin_format_names().size()) {
    throw CorruptData(fmt::format("unknown format id {}", q.format_id));
  }
  const auto rank = static_cast<std::size_t>(r.le(2, "rank"));
  if (rank == 0) throw CorruptData("rank 0 tensors are not representable");
  // Every element costs at least 3 bits of code section.
  const uint64_t max_elements = static_cast<uint64_t>(bytes.size()) * 8 / 3 + 1;
  uint64_t numel = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const uint64_t d = r.le(8, "dims");
    if (d == 0) throw CorruptData("zero dimension");
    if (d > max_elements / numel) throw CorruptData("dims exceed the stream length");
    numel *= d;
    q.shape.push_back(static_cast<std::size_t>(d));
  }
  q.alpha = std::bit_cast<float>(static_cast<uint32_t>(r.le(4, "alpha")));
  const auto scales = r.take(q.num_blocks(), "scale section");
  q.scale_bytes.assign(scales.begin(), scales.end());
  const auto codes = r.take(q.code_bytes(), "code section");
  q.packed_codes.assign(codes.begin(), codes.end());
  if (r.remaining() != 0) {
    throw CorruptData(fmt::format("{} trailing bytes after code section", r.remaining()));
  }
  check_content(q);
  return q;
}

Tensor read_raw_f32(std::span<const uint8_t> bytes, std::vector<std::size_t> shape) {
  const std::size_t n = checked_numel(shape);
  if (bytes.size() != 4 * n) {
    throw std::invalid_argument(fmt::format("raw f32 input has {} bytes, shape [{}] needs {}",
                                            bytes.size(), fmt::join(shape, ","), 4 * n));
  }
  Tensor t(std::move(shape), std::vector<float>(n));
  for (std::size_t i = 0; i < n; ++i) {
    uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<uint32_t>(bytes[4 * i + k]) << (8 * k);
    t.data[i] = std::bit_cast<float>(v);
  }
  return t;
}

std::vector<uint8_t> write_raw_f32(std::span<const float> values) {
  Writer w;
  for (float v : values) w.u32(std::bit_cast<uint32_t>(v));
  return w.take();
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, std::span<const uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", tmp));
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(fmt::format("write to '{}' failed", tmp));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace absd
