#include "assr/semantics.hpp"

#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "assr/bit_io.hpp"
#include "assr/errors.hpp"
#include "assr/image_io.hpp"
#include "assr/nn/image_tensor.hpp"
#include "assr/nn/ops.hpp"
#include "detail/process.hpp"

namespace assr::semantics {
namespace {

constexpr char kFeatureMagic[4] = {'S', 'E', 'M', 'F'};

// Dictionary keyed by (prefix code, next byte).
std::uint32_t lzw_key(int prefix, unsigned char c) { return (static_cast<std::uint32_t>(prefix) << 8) | c; }

}  // namespace

std::vector<int> lzw_codes(const std::string& text) {
  std::vector<int> codes;
  std::unordered_map<std::uint32_t, int> dict;
  int next = kLzwEndCode + 1;
  int w = -1;
  for (unsigned char c : text) {
    if (w < 0) {
      w = c;
      continue;
    }
    auto it = dict.find(lzw_key(w, c));
    if (it != dict.end()) {
      w = it->second;
      continue;
    }
    codes.push_back(w);
    if (next <= kLzwMaxCode) dict.emplace(lzw_key(w, c), next++);
    w = c;
  }
  if (w >= 0) codes.push_back(w);
  codes.push_back(kLzwEndCode);
  return codes;
}

std::vector<std::uint8_t> lz_compress(const std::string& text) {
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (int code : lzw_codes(text)) {
    acc |= static_cast<std::uint32_t>(code) << bits;
    bits += kLzwCodeBits;
    while (bits >= 8) {
      out.push_back(static_cast<std::uint8_t>(acc & 0xFF));
      acc >>= 8;
      bits -= 8;
    }
  }
  if (bits > 0) out.push_back(static_cast<std::uint8_t>(acc & 0xFF));
  return out;
}

std::string lz_decompress(const std::vector<std::uint8_t>& bytes) {
  std::vector<std::string> dict;
  dict.reserve(kLzwMaxCode + 1);
  for (int i = 0; i < 256; ++i) dict.emplace_back(1, static_cast<char>(i));
  dict.emplace_back();  // end code slot

  std::string out;
  std::string prev;
  bool have_prev = false;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t code_offset = pos > 0 && bits > 0 ? pos - 1 : pos;
    while (bits < kLzwCodeBits) {
      if (pos >= bytes.size()) throw TruncatedError("caption stream ends without end code", bytes.size());
      acc |= static_cast<std::uint32_t>(bytes[pos++]) << bits;
      bits += 8;
    }
    const int code = static_cast<int>(acc & kLzwMaxCode);
    acc >>= kLzwCodeBits;
    bits -= kLzwCodeBits;
    if (code == kLzwEndCode) break;

    const int next = static_cast<int>(dict.size());
    std::string entry;
    if (code < next && code != kLzwEndCode) {
      entry = dict[static_cast<std::size_t>(code)];
    } else if (code == next && have_prev && next <= kLzwMaxCode) {
      entry = prev + prev[0];
    } else {
      throw FormatError("unknown caption code " + std::to_string(code), code_offset);
    }
    if (have_prev && next <= kLzwMaxCode) dict.push_back(prev + entry[0]);
    out += entry;
    prev = std::move(entry);
    have_prev = true;
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes after caption end code", pos);
  if (acc != 0) throw FormatError("nonzero padding after caption end code", pos - 1);
  return out;
}

std::string CommandCaptionProvider::caption(const ImageBuffer& img) const {
  static std::mutex mu;
  std::lock_guard lock(mu);
  try {
    detail::ScratchDir dir("caption");
    const auto in = dir.path() / "image.ppm";
    io::write_image(in, img);
    const auto r = detail::run_capture(detail::substitute(command_, "{in}", detail::shell_quote(in.string())));
    if (r.status != 0) {
      std::cerr << "warning: caption command exited with status " << r.status << "; using empty caption\n";
      return {};
    }
    std::string text = r.out;
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
  } catch (const Error& e) {
    std::cerr << "warning: caption command failed (" << e.what() << "); using empty caption\n";
    return {};
  }
}

CaptionTokenizer::CaptionTokenizer(nn::ParamStore& store, const std::string& name, int dim) : dim_(dim) {
  table_ = store.create(name + ".table", nn::ParamGroup::kCaptionTable, {kBuckets, dim}, nn::Init::kNormal, 1.0);
  null_token_ = store.create(name + ".null", nn::ParamGroup::kAttention, {1, dim}, nn::Init::kNormal, 1.0);
}

std::vector<std::string> CaptionTokenizer::split(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

int CaptionTokenizer::bucket(const std::string& token) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return static_cast<int>(h % kBuckets);
}

nn::Var CaptionTokenizer::tokenize(const std::string& text) const {
  auto tokens = split(text);
  if (tokens.empty()) return null_token_;
  if (tokens.size() > static_cast<std::size_t>(kMaxTokens)) tokens.resize(kMaxTokens);
  nn::Tensor out({static_cast<int>(tokens.size()), dim_});
  const nn::Tensor& table = table_.value();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t row = static_cast<std::size_t>(bucket(tokens[i])) * dim_;
    std::copy(table.data() + row, table.data() + row + dim_, out.data() + i * dim_);
  }
  return nn::constant(std::move(out));
}

int semantic_dim(int image_dim) {
  int d = image_dim;
  for (int i = 0; i < 4; ++i) d = (d + 1) / 2;
  return d;
}

ConvSemanticEncoder::ConvSemanticEncoder(nn::ParamStore& store, const std::string& name) {
  const int widths[5] = {3, 8, 16, 32, kSemanticChannels};
  for (int i = 0; i < 4; ++i) {
    stages_.emplace_back(store, name + ".conv" + std::to_string(i + 1), nn::ParamGroup::kSemanticEncoder, widths[i],
                         widths[i + 1], 3, 2);
  }
}

nn::Tensor ConvSemanticEncoder::features(const ImageBuffer& img) const {
  if (img.empty()) throw InvalidArgument("semantic features of an empty image");
  nn::NoGradGuard no_grad;
  nn::Var x = nn::constant(nn::image_to_tensor(img));
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    x = stages_[i](x);
    if (i + 1 < stages_.size()) x = nn::silu(x);
  }
  return x.value();
}

nn::Tensor FeatureFileProvider::features(const ImageBuffer& img) const {
  nn::Tensor t = read_feature_file(path_);
  const std::vector<int> expected = {kSemanticChannels, semantic_dim(img.height()), semantic_dim(img.width())};
  if (t.shape() != expected) {
    throw ShapeError("feature file " + path_.string() + " has shape " + nn::shape_string(t.shape()) + ", expected " +
                     nn::shape_string(expected));
  }
  return t;
}

void write_feature_file(const std::filesystem::path& path, const nn::Tensor& features) {
  if (features.rank() != 3) throw ShapeError("feature file needs a [C, H, W] tensor");
  std::vector<std::uint8_t> out(kFeatureMagic, kFeatureMagic + 4);
  for (int d : features.shape()) put_u32_le(out, static_cast<std::uint32_t>(d));
  for (double v : features.values()) put_f32_le(out, static_cast<float>(v));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

nn::Tensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError("not a semantic feature file", 0);
  }
  std::vector<int> shape;
  for (int i = 0; i < 3; ++i) {
    const std::uint32_t d = get_u32_le(bytes, 4 + 4 * i);
    if (d == 0 || d > (1u << 16)) throw FormatError("bad feature dimension", 4 + 4 * i);
    shape.push_back(static_cast<int>(d));
  }
  const std::size_t n = nn::element_count(shape);
  if (bytes.size() < 16 + 4 * n) throw TruncatedError("truncated feature payload", bytes.size());
  if (bytes.size() > 16 + 4 * n) throw FormatError("trailing bytes in feature file", 16 + 4 * n);
  nn::Tensor t(shape);
  for (std::size_t i = 0; i < n; ++i) t[i] = get_f32_le(bytes, 16 + 4 * i);
  return t;
}

}  // namespace assr::semantics
