#pragma once

#include <array>
#include <utility>

#include "assr/image.hpp"

namespace assr::rescaler {

/// Cubic convolution parameter. a = -0.5 gives the Catmull-Rom-family kernel.
inline constexpr double kCubicA = -0.5;

/// Cubic convolution kernel W(x).
double cubic_kernel(double x, double a = kCubicA);

/// The four tap weights for a sample at fractional offset `frac` in [0, 1)
/// past the second tap, i.e. taps at distances 1+frac, frac, 1-frac, 2-frac.
std::array<double, 4> tap_weights(double frac);

/// Output dimensions for a downsample by `s`:
/// max(1, round_half_up(H / s)) x max(1, round_half_up(W / s)).
std::pair<int, int> downsampled_dims(int height, int width, double s);

/// Bicubic resample to an arbitrary grid. Pixel-center coordinate mapping,
/// clamp-to-edge taps, output clamped to [0, 1]. Equal dims return a copy.
ImageBuffer resize(const ImageBuffer& img, int target_h, int target_w);

/// Encoder-side arbitrary-scale reduction. Requires s >= 1.
ImageBuffer downsample(const ImageBuffer& img, double s);

/// Decoder-side resolution restoration to explicit target dims.
ImageBuffer upsample(const ImageBuffer& img, int target_h, int target_w);

}  // namespace assr::rescaler
