#include "assr/toy_dct.hpp"

#include <cmath>
#include <numbers>

#include "assr/errors.hpp"

namespace assr::toy_dct {
namespace {

// Levels this large can only come from a corrupted stream.
constexpr std::int32_t kMaxLevel = 1 << 20;

struct DctMatrix {
  double m[kBlock][kBlock];  // m[u][x]
  DctMatrix() {
    for (int u = 0; u < kBlock; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / kBlock) : std::sqrt(2.0 / kBlock);
      for (int x = 0; x < kBlock; ++x) {
        m[u][x] = alpha * std::cos((2 * x + 1) * u * std::numbers::pi / (2.0 * kBlock));
      }
    }
  }
};

const DctMatrix& dct_matrix() {
  static const DctMatrix matrix;
  return matrix;
}

}  // namespace

const std::array<int, kCoeffs> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

double quant_step(double native_qp) { return std::exp2(native_qp / 6.0) / 256.0; }

Block forward_dct(const Block& pixels) {
  const auto& m = dct_matrix().m;
  Block tmp{};
  Block out{};
  // Rows then columns.
  for (int y = 0; y < kBlock; ++y) {
    for (int u = 0; u < kBlock; ++u) {
      double acc = 0.0;
      for (int x = 0; x < kBlock; ++x) acc += m[u][x] * pixels[y * kBlock + x];
      tmp[y * kBlock + u] = acc;
    }
  }
  for (int v = 0; v < kBlock; ++v) {
    for (int u = 0; u < kBlock; ++u) {
      double acc = 0.0;
      for (int y = 0; y < kBlock; ++y) acc += m[v][y] * tmp[y * kBlock + u];
      out[v * kBlock + u] = acc;
    }
  }
  return out;
}

Block inverse_dct(const Block& coeffs) {
  const auto& m = dct_matrix().m;
  Block tmp{};
  Block out{};
  for (int y = 0; y < kBlock; ++y) {
    for (int u = 0; u < kBlock; ++u) {
      double acc = 0.0;
      for (int v = 0; v < kBlock; ++v) acc += m[v][y] * coeffs[v * kBlock + u];
      tmp[y * kBlock + u] = acc;
    }
  }
  for (int y = 0; y < kBlock; ++y) {
    for (int x = 0; x < kBlock; ++x) {
      double acc = 0.0;
      for (int u = 0; u < kBlock; ++u) acc += m[u][x] * tmp[y * kBlock + u];
      out[y * kBlock + x] = acc;
    }
  }
  return out;
}

void encode_levels(const Levels& levels, BitWriter& out) {
  std::uint32_t run = 0;
  for (int i = 0; i < kCoeffs; ++i) {
    const std::int32_t level = levels[kZigzag[i]];
    if (level == 0) {
      ++run;
      continue;
    }
    out.put_ue(run + 1);
    out.put_se(level);
    run = 0;
  }
  out.put_ue(0);
}

Levels decode_levels(BitReader& in) {
  Levels levels{};
  int pos = 0;
  for (;;) {
    const std::size_t offset = in.byte_offset();
    const std::uint32_t symbol = in.get_ue();
    if (symbol == 0) break;
    const std::uint32_t run = symbol - 1;
    if (run >= static_cast<std::uint32_t>(kCoeffs - pos)) {
      throw FormatError("zero run overflows the block", offset);
    }
    pos += static_cast<int>(run);
    const std::int32_t level = in.get_se();
    if (level == 0 || level > kMaxLevel || level < -kMaxLevel) {
      throw FormatError("invalid coefficient level", offset);
    }
    levels[kZigzag[pos]] = level;
    ++pos;
  }
  return levels;
}

}  // namespace assr::toy_dct
