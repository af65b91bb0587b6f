#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace assr {

/// MSB-first bit writer used by the toy codec's Exp-Golomb layer.
class BitWriter {
 public:
  void put_bit(bool bit);
  void put_bits(std::uint32_t value, int count);
  /// Unsigned Exp-Golomb, k = 0.
  void put_ue(std::uint32_t value);
  /// Signed Exp-Golomb: v > 0 -> 2v - 1, v <= 0 -> -2v.
  void put_se(std::int32_t value);

  std::size_t bit_count() const { return bit_count_; }
  /// Pads the final partial byte with zero bits and returns the buffer.
  std::vector<std::uint8_t> finish() &&;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_count_ = 0;
};

/// Reader matching BitWriter. Offsets reported in errors are absolute, i.e.
/// `base_offset` plus the byte index inside `data`.
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> data, std::size_t base_offset = 0)
      : data_(data), base_offset_(base_offset) {}

  bool get_bit();
  std::uint32_t get_bits(int count);
  std::uint32_t get_ue();
  std::int32_t get_se();

  std::size_t bit_position() const { return bit_pos_; }
  /// Absolute byte offset of the byte currently being read.
  std::size_t byte_offset() const { return base_offset_ + bit_pos_ / 8; }
  std::size_t bytes_consumed() const { return (bit_pos_ + 7) / 8; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t base_offset_;
  std::size_t bit_pos_ = 0;
};

/// Little-endian scalar helpers shared by the container formats.
void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_f32_le(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32_le(std::span<const std::uint8_t> in, std::size_t offset);
float get_f32_le(std::span<const std::uint8_t> in, std::size_t offset);

}  // namespace assr
