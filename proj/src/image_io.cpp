#include "assr/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "assr/errors.hpp"

namespace assr::io {
namespace {

using FilePtr = std::unique_ptr<std::FILE, int (*)(std::FILE*)>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode), &std::fclose);
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ImageBuffer from_interleaved(const unsigned char* src, int h, int w, int channels) {
  ImageBuffer img(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const unsigned char* p = src + (static_cast<std::size_t>(y) * w + x) * channels;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = p[channels >= 3 ? c : 0] / 255.0f;
    }
  }
  return img;
}

// --- PNM ---------------------------------------------------------------------

class PnmParser {
 public:
  PnmParser(const std::vector<unsigned char>& bytes, const std::string& name)
      : bytes_(bytes), name_(name) {}

  ImageBuffer parse() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') throw FormatError(name_ + ": not a PNM file", 0);
    const char kind = static_cast<char>(bytes_[1]);
    pos_ = 2;
    const bool binary = kind == '5' || kind == '6';
    const int channels = (kind == '3' || kind == '6') ? 3 : 1;
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
      throw FormatError(name_ + ": unsupported PNM variant", 1);
    }
    const int w = next_int();
    const int h = next_int();
    const int maxval = next_int();
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
      throw FormatError(name_ + ": unsupported PNM header values", pos_);
    }
    std::vector<unsigned char> px(static_cast<std::size_t>(w) * h * channels);
    if (binary) {
      ++pos_;  // single whitespace after maxval
      if (pos_ + px.size() > bytes_.size()) throw TruncatedError(name_ + ": truncated PNM", bytes_.size());
      std::copy_n(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), px.size(), px.begin());
    } else {
      for (auto& v : px) v = static_cast<unsigned char>(next_int());
    }
    if (maxval != 255) {
      for (auto& v : px) v = static_cast<unsigned char>((v * 255 + maxval / 2) / maxval);
    }
    return from_interleaved(px.data(), h, w, channels);
  }

 private:
  int next_int() {
    for (;;) {
      if (pos_ >= bytes_.size()) throw TruncatedError(name_ + ": truncated PNM header", pos_);
      const char c = static_cast<char>(bytes_[pos_]);
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
    int v = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError(name_ + ": PNM number too long", pos_);
    }
    if (digits == 0) throw FormatError(name_ + ": expected a number", pos_);
    return v;
  }

  const std::vector<unsigned char>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

void write_ppm(const std::filesystem::path& path, const ImageBuffer& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<char> px(img.pixel_count() * 3);
  const auto data = img.data();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<char>(to_u8(data[i]));
  out.write(px.data(), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// --- PNG ---------------------------------------------------------------------

ImageBuffer read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": " + image.message, 0);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg, 0);
  }
  return from_interleaved(px.data(), static_cast<int>(image.height), static_cast<int>(image.width), 3);
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> px(img.pixel_count() * 3);
  const auto data = img.data();
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_u8(data[i]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
}

// --- JPEG (read only) ----------------------------------------------------------

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

ImageBuffer read_jpeg(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = on_jpeg_error;
  std::vector<unsigned char> px;
  int h = 0;
  int w = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw FormatError(path.string() + ": corrupt JPEG", 0);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  px.resize(static_cast<std::size_t>(w) * h * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_interleaved(px.data(), h, w, 3);
}

bool has_png_magic(const std::vector<unsigned char>& b) {
  static constexpr std::array<unsigned char, 4> kMagic = {0x89, 'P', 'N', 'G'};
  return b.size() >= 4 && std::equal(kMagic.begin(), kMagic.end(), b.begin());
}

bool has_jpeg_magic(const std::vector<unsigned char>& b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

}  // namespace

unsigned char to_u8(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(clamped * 255.0f + 0.5f);
}

ImageBuffer read_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (has_png_magic(bytes)) return read_png(path);
  if (has_jpeg_magic(bytes)) return read_jpeg(path);
  return PnmParser(bytes, path.string()).parse();
}

void write_image(const std::filesystem::path& path, const ImageBuffer& img) {
  if (img.empty()) throw InvalidArgument("write_image: empty image");
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    write_png(path, img);
  } else {
    write_ppm(path, img);
  }
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  static const std::array<std::string, 7> kExts = {".png", ".ppm", ".pgm", ".pnm", ".jpg", ".jpeg", ".jpe"};
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(kExts.begin(), kExts.end(), ext) != kExts.end()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace assr::io
