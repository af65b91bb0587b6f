#pragma once

#include <cstdint>
#include <vector>

#include "assr/image.hpp"

// Deterministic procedural images. They stand in for natural-image corpora in
// the calibration set, the self-test and the desk-scale training runs.
namespace assr::synthetic {

/// Low-frequency content only: color gradient, a few slow sinusoids and soft
/// blobs. Feature sizes scale with `period`, the shortest spatial period in pixels.
ImageBuffer smooth_scene(int height, int width, std::uint64_t seed, double period = 24.0);

/// Gradient background with hard-edged shapes, fine texture and mild noise.
ImageBuffer textured_scene(int height, int width, std::uint64_t seed);

/// i.i.d. uniform pixels.
ImageBuffer noise_image(int height, int width, std::uint64_t seed);

std::vector<ImageBuffer> textured_corpus(int count, int height, int width, std::uint64_t seed);
std::vector<ImageBuffer> smooth_corpus(int count, int height, int width, std::uint64_t seed,
                                       double period = 24.0);

}  // namespace assr::synthetic
