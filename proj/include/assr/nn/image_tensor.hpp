#pragma once

#include "assr/image.hpp"
#include "assr/nn/tensor.hpp"

namespace assr::nn {

/// HWC float image -> [3, H, W] double tensor.
Tensor image_to_tensor(const ImageBuffer& img);
/// [3, H, W] tensor -> image, clamped to [0, 1].
ImageBuffer tensor_to_image(const Tensor& t);

}  // namespace assr::nn
