#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace assr {

/// H x W x 3 pixel grid with values in [0, 1], stored row-major and
/// channel-interleaved.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  ImageBuffer(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return height_ == 0 || width_ == 0; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Clamps every sample into [0, 1] in place.
  void clamp();

  friend bool operator==(const ImageBuffer& a, const ImageBuffer& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

}  // namespace assr
