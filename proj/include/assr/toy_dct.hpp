#pragma once

// Building blocks of the bundled block-DCT anchor codec. Exposed so the
// lossless stages can be tested in isolation.

#include <array>
#include <cstdint>
#include <span>

#include "assr/bit_io.hpp"

namespace assr::toy_dct {

inline constexpr int kBlock = 8;
inline constexpr int kCoeffs = kBlock * kBlock;
inline constexpr std::size_t kHeaderBytes = 16;

using Block = std::array<double, kCoeffs>;
using Levels = std::array<std::int32_t, kCoeffs>;

/// Zigzag scan order: kZigzag[i] is the raster index of the i-th scanned coefficient.
extern const std::array<int, kCoeffs> kZigzag;

/// Uniform quantizer step: 2^(qp / 6) / 256.
double quant_step(double native_qp);

/// Orthonormal 2-D DCT-II of one raster-order block, and its inverse.
Block forward_dct(const Block& pixels);
Block inverse_dct(const Block& coeffs);

/// Quantized levels of a raster-order block: zigzag scan, (zero-run, level)
/// pairs as ue(run + 1) se(level), then the end-of-block code ue(0).
void encode_levels(const Levels& levels, BitWriter& out);
Levels decode_levels(BitReader& in);

}  // namespace assr::toy_dct
