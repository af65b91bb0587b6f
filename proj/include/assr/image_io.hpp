#pragma once

#include <filesystem>
#include <vector>

#include "assr/image.hpp"

namespace assr::io {

/// Reads an 8-bit RGB (or grayscale, expanded to RGB) PPM/PGM, PNG or JPEG.
/// The format is detected from the file's magic bytes.
ImageBuffer read_image(const std::filesystem::path& path);

/// Writes an 8-bit image. `.png` selects PNG, anything else binary PPM.
void write_image(const std::filesystem::path& path, const ImageBuffer& img);

/// All readable images directly inside `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Maps [0, 1] to 8-bit with round-half-up.
unsigned char to_u8(float v);

}  // namespace assr::io
