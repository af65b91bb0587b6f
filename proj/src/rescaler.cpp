#include "assr/rescaler.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "assr/errors.hpp"

namespace assr::rescaler {
namespace {

struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

// Precomputed taps for every output coordinate along one axis.
std::vector<Taps> axis_taps(int in_size, int out_size) {
  std::vector<Taps> taps(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int o = 0; o < out_size; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const auto w = tap_weights(src - base);
    const int b = static_cast<int>(base);
    for (int k = 0; k < 4; ++k) {
      taps[o].index[k] = std::clamp(b - 1 + k, 0, in_size - 1);
      taps[o].weight[k] = w[k];
    }
  }
  return taps;
}

}  // namespace

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

std::array<double, 4> tap_weights(double frac) {
  return {cubic_kernel(1.0 + frac), cubic_kernel(frac), cubic_kernel(1.0 - frac),
          cubic_kernel(2.0 - frac)};
}

std::pair<int, int> downsampled_dims(int height, int width, double s) {
  auto reduce = [s](int n) {
    return std::max(1, static_cast<int>(std::floor(n / s + 0.5)));
  };
  return {reduce(height), reduce(width)};
}

ImageBuffer resize(const ImageBuffer& img, int target_h, int target_w) {
  if (img.empty()) throw InvalidArgument("resize: empty image");
  if (target_h < 1 || target_w < 1) throw InvalidArgument("resize: target dims must be >= 1");
  if (target_h == img.height() && target_w == img.width()) return img;

  constexpr int C = ImageBuffer::kChannels;
  const int in_h = img.height();
  const int in_w = img.width();
  const auto x_taps = axis_taps(in_w, target_w);
  const auto y_taps = axis_taps(in_h, target_h);

  // Horizontal pass into a double buffer; clamping happens only on the output.
  std::vector<double> rows(static_cast<std::size_t>(in_h) * target_w * C);
  for (int y = 0; y < in_h; ++y) {
    for (int x = 0; x < target_w; ++x) {
      const Taps& t = x_taps[x];
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.weight[k] * img.at(y, t.index[k], c);
        rows[(static_cast<std::size_t>(y) * target_w + x) * C + c] = acc;
      }
    }
  }

  ImageBuffer out(target_h, target_w);
  for (int y = 0; y < target_h; ++y) {
    const Taps& t = y_taps[y];
    for (int x = 0; x < target_w; ++x) {
      for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) {
          acc += t.weight[k] * rows[(static_cast<std::size_t>(t.index[k]) * target_w + x) * C + c];
        }
        out.at(y, x, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return out;
}

ImageBuffer downsample(const ImageBuffer& img, double s) {
  if (!(s >= 1.0) || !std::isfinite(s)) throw InvalidArgument("downsample: scale factor must be >= 1");
  if (img.empty()) throw InvalidArgument("downsample: empty image");
  if (s == 1.0) return img;
  const auto [h, w] = downsampled_dims(img.height(), img.width(), s);
  return resize(img, h, w);
}

ImageBuffer upsample(const ImageBuffer& img, int target_h, int target_w) {
  return resize(img, target_h, target_w);
}

}  // namespace assr::rescaler
