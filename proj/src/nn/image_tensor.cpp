#include "assr/nn/image_tensor.hpp"

#include <algorithm>

#include "assr/errors.hpp"

namespace assr::nn {

Tensor image_to_tensor(const ImageBuffer& img) {
  const int H = img.height(), W = img.width();
  Tensor t({ImageBuffer::kChannels, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c) t.at(c, y, x) = img.at(y, x, c);
  return t;
}

ImageBuffer tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != ImageBuffer::kChannels) {
    throw ShapeError("expected a [3, H, W] tensor, got " + shape_string(t.shape()));
  }
  ImageBuffer img(t.dim(1), t.dim(2));
  for (int y = 0; y < t.dim(1); ++y)
    for (int x = 0; x < t.dim(2); ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c)
        img.at(y, x, c) = static_cast<float>(std::clamp(t.at(c, y, x), 0.0, 1.0));
  return img;
}

}  // namespace assr::nn
