#include "assr/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

namespace assr::synthetic {
namespace {

using Rgb = std::array<double, 3>;

struct Wave {
  double fx, fy, phase;
  Rgb amp;
};

struct Blob {
  double cy, cx, radius;
  Rgb color;
};

Rgb random_color(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

// Gradient + sinusoids + soft blobs, shared by both scene kinds.
void paint_smooth(ImageBuffer& img, std::mt19937_64& rng, double period) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = img.height();
  const double w = img.width();
  const Rgb c0 = random_color(rng, 0.15, 0.85);
  const Rgb c1 = random_color(rng, 0.15, 0.85);
  const double angle = u(rng) * 2.0 * std::numbers::pi;
  const double gx = std::cos(angle);
  const double gy = std::sin(angle);

  std::array<Wave, 3> waves;
  for (auto& wave : waves) {
    const double freq = (0.3 + 0.7 * u(rng)) / period;
    const double dir = u(rng) * 2.0 * std::numbers::pi;
    wave = {freq * std::cos(dir), freq * std::sin(dir), u(rng) * 2.0 * std::numbers::pi,
            random_color(rng, -0.12, 0.12)};
  }
  std::array<Blob, 3> blobs;
  for (auto& blob : blobs) {
    blob = {u(rng) * h, u(rng) * w, period * (0.6 + 1.2 * u(rng)), random_color(rng, -0.25, 0.25)};
  }

  const double diag = std::max(1.0, std::abs(gx) * w + std::abs(gy) * h);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double t = ((x - w / 2) * gx + (y - h / 2) * gy) / diag + 0.5;
      t = std::clamp(t, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) {
        double v = c0[c] * (1.0 - t) + c1[c] * t;
        for (const auto& wave : waves) {
          v += wave.amp[c] * std::sin(2.0 * std::numbers::pi * (wave.fx * x + wave.fy * y) + wave.phase);
        }
        for (const auto& blob : blobs) {
          const double d2 = (y - blob.cy) * (y - blob.cy) + (x - blob.cx) * (x - blob.cx);
          v += blob.color[c] * std::exp(-d2 / (2.0 * blob.radius * blob.radius));
        }
        img.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
}

}  // namespace

ImageBuffer smooth_scene(int height, int width, std::uint64_t seed, double period) {
  std::mt19937_64 rng(seed);
  ImageBuffer img(height, width);
  paint_smooth(img, rng, period);
  img.clamp();
  return img;
}

ImageBuffer textured_scene(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  ImageBuffer img(height, width);
  paint_smooth(img, rng, std::max(8.0, std::min(height, width) / 4.0));

  const double h = height;
  const double w = width;
  const int shapes = 4 + static_cast<int>(u(rng) * 4);
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = u(rng) < 0.5;
    const double cy = u(rng) * h;
    const double cx = u(rng) * w;
    const double ry = (0.05 + 0.2 * u(rng)) * h;
    const double rx = (0.05 + 0.2 * u(rng)) * w;
    const Rgb color = random_color(rng, 0.0, 1.0);
    const double fine = 0.15 + 0.35 * u(rng);  // texture frequency, cycles per pixel
    const double tex_amp = 0.08 * u(rng);
    for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(height, static_cast<int>(cy + ry) + 1); ++y) {
      for (int x = std::max(0, static_cast<int>(cx - rx)); x < std::min(width, static_cast<int>(cx + rx) + 1); ++x) {
        const double dy = (y - cy) / ry;
        const double dx = (x - cx) / rx;
        if (ellipse && dx * dx + dy * dy > 1.0) continue;
        const double tex = tex_amp * std::sin(2.0 * std::numbers::pi * fine * (x + y));
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(color[c] + tex);
      }
    }
  }
  for (float& v : img.data()) v = static_cast<float>(v + noise(rng));
  img.clamp();
  return img;
}

ImageBuffer noise_image(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageBuffer img(height, width);
  for (float& v : img.data()) v = u(rng);
  return img;
}

std::vector<ImageBuffer> textured_corpus(int count, int height, int width, std::uint64_t seed) {
  std::vector<ImageBuffer> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(textured_scene(height, width, seed + static_cast<std::uint64_t>(i)));
  return out;
}

std::vector<ImageBuffer> smooth_corpus(int count, int height, int width, std::uint64_t seed, double period) {
  std::vector<ImageBuffer> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(smooth_scene(height, width, seed + static_cast<std::uint64_t>(i), period));
  }
  return out;
}

}  // namespace assr::synthetic
