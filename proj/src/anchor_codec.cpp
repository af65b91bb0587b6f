#include "assr/anchor_codec.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>

#include "assr/bit_io.hpp"
#include "assr/errors.hpp"
#include "assr/image_io.hpp"
#include "assr/synthetic.hpp"
#include "assr/toy_dct.hpp"
#include "detail/process.hpp"

namespace assr {
namespace {

constexpr std::uint8_t kToyMagic[4] = {'T', 'D', 'C', 'T'};
constexpr std::uint64_t kMaxPixels = std::uint64_t{1} << 28;

void run_command(const std::string& cmd) {
  const int rc = detail::run_status(cmd);
  if (rc != 0) throw IoError("external codec command failed (status " + std::to_string(rc) + "): " + cmd);
}

std::string format_qp(double qp) {
  std::ostringstream os;
  os << qp;
  return os.str();
}

}  // namespace

double codec_type_flag(CodecId id) { return id == CodecId::kExternalLearned ? 1.0 : 0.0; }

std::string codec_name(CodecId id) {
  switch (id) {
    case CodecId::kToyDct: return "toy";
    case CodecId::kExternalTraditional: return "external-traditional";
    case CodecId::kExternalLearned: return "external-learned";
  }
  return "unknown";
}

CodecId parse_codec_id(const std::string& name) {
  if (name == "toy" || name == "toy-dct") return CodecId::kToyDct;
  if (name == "external-traditional") return CodecId::kExternalTraditional;
  if (name == "external-learned") return CodecId::kExternalLearned;
  throw InvalidArgument("unknown codec '" + name + "'");
}

// --- ToyDctCodec ---------------------------------------------------------------

AnchorBitstream ToyDctCodec::encode(const ImageBuffer& img, const QualitySpec& q) const {
  using namespace toy_dct;
  if (img.empty()) throw InvalidArgument("anchor_encode: empty image");
  if (!std::isfinite(q.native_qp)) throw InvalidArgument("anchor_encode: non-finite qp");
  const double step = quant_step(q.native_qp);
  const int h = img.height();
  const int w = img.width();
  const int blocks_y = (h + kBlock - 1) / kBlock;
  const int blocks_x = (w + kBlock - 1) / kBlock;

  BitWriter bits;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    for (int by = 0; by < blocks_y; ++by) {
      for (int bx = 0; bx < blocks_x; ++bx) {
        Block px{};
        for (int y = 0; y < kBlock; ++y) {
          const int sy = std::min(by * kBlock + y, h - 1);
          for (int x = 0; x < kBlock; ++x) {
            const int sx = std::min(bx * kBlock + x, w - 1);
            px[y * kBlock + x] = static_cast<double>(img.at(sy, sx, c)) - 0.5;
          }
        }
        const Block coeffs = forward_dct(px);
        Levels levels{};
        for (int i = 0; i < kCoeffs; ++i) levels[i] = static_cast<std::int32_t>(std::lround(coeffs[i] / step));
        encode_levels(levels, bits);
      }
    }
  }

  AnchorBitstream bs;
  bs.encoded_h = h;
  bs.encoded_w = w;
  bs.bytes.assign(std::begin(kToyMagic), std::end(kToyMagic));
  put_u32_le(bs.bytes, static_cast<std::uint32_t>(w));
  put_u32_le(bs.bytes, static_cast<std::uint32_t>(h));
  put_f32_le(bs.bytes, static_cast<float>(q.native_qp));
  const auto payload = std::move(bits).finish();
  bs.bytes.insert(bs.bytes.end(), payload.begin(), payload.end());
  return bs;
}

std::pair<int, int> ToyDctCodec::peek_dims(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncatedError("toy stream shorter than its magic", bytes.size());
  if (!std::equal(std::begin(kToyMagic), std::end(kToyMagic), bytes.begin())) {
    throw FormatError("bad toy codec magic", 0);
  }
  if (bytes.size() < toy_dct::kHeaderBytes) throw TruncatedError("truncated toy codec header", bytes.size());
  const std::uint32_t w = get_u32_le(bytes, 4);
  const std::uint32_t h = get_u32_le(bytes, 8);
  if (w == 0) throw FormatError("zero encoded width", 4);
  if (h == 0) throw FormatError("zero encoded height", 8);
  if (static_cast<std::uint64_t>(w) * h > kMaxPixels) throw FormatError("encoded dims too large", 4);
  return {static_cast<int>(h), static_cast<int>(w)};
}

ImageBuffer ToyDctCodec::decode(const AnchorBitstream& bs) const {
  using namespace toy_dct;
  const std::span<const std::uint8_t> bytes = bs.bytes;
  const auto [h, w] = peek_dims(bytes);
  const float qp = get_f32_le(bytes, 12);
  if (!std::isfinite(qp)) throw FormatError("non-finite qp in header", 12);
  const double step = quant_step(qp);
  const int blocks_y = (h + kBlock - 1) / kBlock;
  const int blocks_x = (w + kBlock - 1) / kBlock;

  BitReader bits(bytes.subspan(kHeaderBytes), kHeaderBytes);
  ImageBuffer img(h, w);
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    for (int by = 0; by < blocks_y; ++by) {
      for (int bx = 0; bx < blocks_x; ++bx) {
        const Levels levels = decode_levels(bits);
        Block coeffs{};
        for (int i = 0; i < kCoeffs; ++i) coeffs[i] = levels[i] * step;
        const Block px = inverse_dct(coeffs);
        for (int y = 0; y < kBlock; ++y) {
          const int dy = by * kBlock + y;
          if (dy >= h) break;
          for (int x = 0; x < kBlock; ++x) {
            const int dx = bx * kBlock + x;
            if (dx >= w) break;
            img.at(dy, dx, c) = static_cast<float>(std::clamp(px[y * kBlock + x] + 0.5, 0.0, 1.0));
          }
        }
      }
    }
  }
  const std::size_t used = kHeaderBytes + bits.bytes_consumed();
  if (used != bytes.size()) throw FormatError("trailing bytes after last block", used);
  return img;
}

// --- ExternalCodec ---------------------------------------------------------------

ExternalCodec::ExternalCodec(CodecId id, std::string encode_cmd, std::string decode_cmd)
    : id_(id), encode_cmd_(std::move(encode_cmd)), decode_cmd_(std::move(decode_cmd)) {
  if (id == CodecId::kToyDct) throw InvalidArgument("ExternalCodec cannot claim the toy codec id");
}

AnchorBitstream ExternalCodec::encode(const ImageBuffer& img, const QualitySpec& q) const {
  if (img.empty()) throw InvalidArgument("anchor_encode: empty image");
  detail::ScratchDir dir("codec");
  const auto in = dir.path() / "input.ppm";
  const auto out = dir.path() / "stream.bin";
  io::write_image(in, img);
  std::string cmd = detail::substitute(encode_cmd_, "{in}", in.string());
  cmd = detail::substitute(cmd, "{out}", out.string());
  run_command(detail::substitute(cmd, "{qp}", format_qp(q.native_qp)));
  std::ifstream f(out, std::ios::binary);
  if (!f) throw IoError("external encoder produced no output: " + out.string());
  AnchorBitstream bs;
  bs.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  bs.encoded_h = img.height();
  bs.encoded_w = img.width();
  return bs;
}

ImageBuffer ExternalCodec::decode(const AnchorBitstream& bs) const {
  detail::ScratchDir dir("codec");
  const auto in = dir.path() / "stream.bin";
  const auto out = dir.path() / "decoded.ppm";
  {
    std::ofstream f(in, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bs.bytes.data()), static_cast<std::streamsize>(bs.bytes.size()));
    if (!f) throw IoError("cannot stage bitstream for external decoder");
  }
  std::string cmd = detail::substitute(decode_cmd_, "{in}", in.string());
  run_command(detail::substitute(cmd, "{out}", out.string()));
  return io::read_image(out);
}

// --- rate accounting ---------------------------------------------------------------

double measure_bpp(std::size_t byte_length, int orig_h, int orig_w) {
  if (orig_h <= 0 || orig_w <= 0) throw InvalidArgument("measure_bpp: zero-area original");
  return 8.0 * static_cast<double>(byte_length) / (static_cast<double>(orig_h) * orig_w);
}

double measure_bpp(const AnchorBitstream& bs, int orig_h, int orig_w) {
  return measure_bpp(bs.bytes.size(), orig_h, orig_w);
}

double QualityNormalizer::normalize(const AnchorCodec& codec, double native_qp,
                                    std::span<const ImageBuffer> calibration) {
  const auto key = std::make_pair(static_cast<std::uint8_t>(codec.id()), native_qp);
  {
    std::shared_lock lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  if (calibration.empty()) throw InvalidArgument("normalize_qp: empty calibration set");
  double sum = 0.0;
  for (const auto& img : calibration) {
    const auto bs = codec.encode(img, {native_qp, 0.0});
    sum += measure_bpp(bs, img.height(), img.width());
  }
  const double chi = sum / static_cast<double>(calibration.size());
  std::unique_lock lock(mutex_);
  cache_.emplace(key, chi);
  return chi;
}

void QualityNormalizer::set(CodecId codec, double native_qp, double chi_qp) {
  if (!(chi_qp > 0.0)) throw InvalidArgument("chi_qp must be positive");
  std::unique_lock lock(mutex_);
  cache_[{static_cast<std::uint8_t>(codec), native_qp}] = chi_qp;
}

bool QualityNormalizer::contains(CodecId codec, double native_qp) const {
  std::shared_lock lock(mutex_);
  return cache_.contains({static_cast<std::uint8_t>(codec), native_qp});
}

const std::vector<ImageBuffer>& calibration_set() {
  static const std::vector<ImageBuffer> set = synthetic::textured_corpus(8, 128, 128, 0xCA11B);
  return set;
}

}  // namespace assr
