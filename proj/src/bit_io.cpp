#include "assr/bit_io.hpp"

#include <bit>
#include <cstring>

#include "assr/errors.hpp"

namespace assr {

void BitWriter::put_bit(bool bit) {
  if (bit_count_ % 8 == 0) bytes_.push_back(0);
  if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bit_count_ % 8));
  ++bit_count_;
}

void BitWriter::put_bits(std::uint32_t value, int count) {
  for (int i = count - 1; i >= 0; --i) put_bit((value >> i) & 1u);
}

void BitWriter::put_ue(std::uint32_t value) {
  const std::uint64_t v = static_cast<std::uint64_t>(value) + 1;
  const int m = std::bit_width(v) - 1;
  for (int i = 0; i < m; ++i) put_bit(false);
  for (int i = m; i >= 0; --i) put_bit((v >> i) & 1u);
}

void BitWriter::put_se(std::int32_t value) {
  const std::int64_t v = value;
  put_ue(static_cast<std::uint32_t>(v > 0 ? 2 * v - 1 : -2 * v));
}

std::vector<std::uint8_t> BitWriter::finish() && { return std::move(bytes_); }

bool BitReader::get_bit() {
  if (bit_pos_ >= data_.size() * 8) {
    throw TruncatedError("bitstream ended unexpectedly", base_offset_ + data_.size());
  }
  const bool bit = (data_[bit_pos_ / 8] >> (7 - bit_pos_ % 8)) & 1u;
  ++bit_pos_;
  return bit;
}

std::uint32_t BitReader::get_bits(int count) {
  std::uint32_t v = 0;
  for (int i = 0; i < count; ++i) v = (v << 1) | static_cast<std::uint32_t>(get_bit());
  return v;
}

std::uint32_t BitReader::get_ue() {
  const std::size_t start = byte_offset();
  int zeros = 0;
  while (!get_bit()) {
    if (++zeros > 31) throw FormatError("Exp-Golomb prefix too long", start);
  }
  const std::uint64_t v = (std::uint64_t{1} << zeros) | get_bits(zeros);
  if (v - 1 > 0xFFFFFFFFull) throw FormatError("Exp-Golomb value overflow", start);
  return static_cast<std::uint32_t>(v - 1);
}

std::int32_t BitReader::get_se() {
  const std::uint32_t k = get_ue();
  const std::int64_t mag = (static_cast<std::int64_t>(k) + 1) / 2;
  return static_cast<std::int32_t>((k & 1u) ? mag : -mag);
}

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32_le(std::vector<std::uint8_t>& out, float v) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32_le(std::span<const std::uint8_t> in, std::size_t offset) {
  if (offset + 4 > in.size()) throw TruncatedError("truncated 32-bit field", in.size());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

float get_f32_le(std::span<const std::uint8_t> in, std::size_t offset) {
  return std::bit_cast<float>(get_u32_le(in, offset));
}

}  // namespace assr
