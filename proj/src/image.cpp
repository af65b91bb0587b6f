#include "assr/image.hpp"

#include <algorithm>

#include "assr/errors.hpp"

namespace assr {

ImageBuffer::ImageBuffer(int height, int width, float fill)
    : height_(height), width_(width) {
  if (height < 0 || width < 0) throw InvalidArgument("negative image dimensions");
  data_.assign(pixel_count() * kChannels, fill);
}

void ImageBuffer::clamp() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace assr
