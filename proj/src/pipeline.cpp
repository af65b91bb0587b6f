#include "assr/pipeline.hpp"

#include <cmath>
#include <cstring>

#include "assr/bit_io.hpp"
#include "assr/errors.hpp"
#include "assr/rescaler.hpp"

namespace assr::pipeline {

namespace {

constexpr char kMagic[4] = {'A', 'E', 'I', 'C'};
constexpr std::uint8_t kFlagCrd = 1u << 0;
constexpr std::uint8_t kFlagCaption = 1u << 1;
// Anything larger cannot be a real caption or bitstream.
constexpr std::uint32_t kMaxLength = 1u << 30;

bool known_codec(std::uint8_t id) { return id <= static_cast<std::uint8_t>(CodecId::kExternalLearned); }

std::uint32_t read_length(std::span<const std::uint8_t> in, std::size_t offset, const char* what) {
  if (offset + 4 > in.size()) throw TruncatedError(std::string("truncated ") + what + " length", in.size());
  const std::uint32_t n = get_u32_le(in, offset);
  if (n > kMaxLength) throw FormatError(std::string(what) + " length field overflows (" + std::to_string(n) + ")", offset);
  if (offset + 4 + n > in.size()) {
    throw TruncatedError(std::string(what) + " of " + std::to_string(n) + " bytes runs past the end", in.size());
  }
  return n;
}

}  // namespace

void EncodingParams::validate() const {
  if (!(s >= 1.0) || !std::isfinite(s)) throw InvalidArgument("scale factor must be finite and >= 1");
  if (!std::isfinite(quality.native_qp)) throw InvalidArgument("native qp must be finite");
  if (!std::isfinite(quality.chi_qp)) throw InvalidArgument("chi_qp must be finite");
}

double stored_scale(double s) { return static_cast<double>(static_cast<float>(s)); }

std::vector<std::uint8_t> serialize(const CompressedContainer& c) {
  if (c.version != kContainerVersion) throw InvalidArgument("unsupported container version");
  if (c.caption_present != !c.caption_bytes.empty())
    throw InvalidArgument("caption_present flag disagrees with the caption payload");
  if (c.caption_bytes.size() > kMaxLength || c.bitstream.size() > kMaxLength)
    throw InvalidArgument("container payload too large");
  std::vector<std::uint8_t> out;
  out.reserve(kContainerOverhead + c.caption_bytes.size() + c.bitstream.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(c.version);
  out.push_back(static_cast<std::uint8_t>((c.crd_enabled ? kFlagCrd : 0) | (c.caption_present ? kFlagCaption : 0)));
  out.push_back(static_cast<std::uint8_t>(c.codec));
  out.push_back(0);
  put_u32_le(out, c.orig_w);
  put_u32_le(out, c.orig_h);
  put_f32_le(out, c.s);
  put_f32_le(out, c.native_qp);
  put_f32_le(out, c.chi_qp);
  put_u32_le(out, static_cast<std::uint32_t>(c.caption_bytes.size()));
  out.insert(out.end(), c.caption_bytes.begin(), c.caption_bytes.end());
  put_u32_le(out, static_cast<std::uint32_t>(c.bitstream.size()));
  out.insert(out.end(), c.bitstream.begin(), c.bitstream.end());
  return out;
}

CompressedContainer deserialize(std::span<const std::uint8_t> in) {
  if (in.empty()) throw TruncatedError("empty container", 0);
  const std::size_t head = std::min<std::size_t>(in.size(), 4);
  if (std::memcmp(in.data(), kMagic, head) != 0) throw FormatError("bad magic, not an AEIC container", 0);
  if (in.size() < 8) throw TruncatedError("truncated container header", in.size());

  CompressedContainer c;
  c.version = in[4];
  if (c.version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(c.version), 4);
  const std::uint8_t flags = in[5];
  if (flags & ~(kFlagCrd | kFlagCaption)) throw FormatError("unknown container flags", 5);
  c.crd_enabled = flags & kFlagCrd;
  c.caption_present = flags & kFlagCaption;
  if (!known_codec(in[6])) throw FormatError("unknown codec id " + std::to_string(in[6]), 6);
  c.codec = static_cast<CodecId>(in[6]);
  if (in[7] != 0) throw FormatError("reserved byte is not zero", 7);
  if (in.size() < 28) throw TruncatedError("truncated container header", in.size());

  c.orig_w = get_u32_le(in, 8);
  c.orig_h = get_u32_le(in, 12);
  if (c.orig_w == 0 || c.orig_h == 0) throw FormatError("zero image dimension", c.orig_w == 0 ? 8 : 12);
  if (c.orig_w > 1u << 16 || c.orig_h > 1u << 16)
    throw FormatError("image dimension too large", c.orig_w > 1u << 16 ? 8 : 12);
  c.s = get_f32_le(in, 16);
  if (!(c.s >= 1.0f) || !std::isfinite(c.s)) throw FormatError("scale factor must be finite and >= 1", 16);
  c.native_qp = get_f32_le(in, 20);
  if (!std::isfinite(c.native_qp)) throw FormatError("non-finite native qp", 20);
  c.chi_qp = get_f32_le(in, 24);
  if (!std::isfinite(c.chi_qp)) throw FormatError("non-finite chi_qp", 24);

  std::size_t pos = 28;
  const std::uint32_t caption_len = read_length(in, pos, "caption");
  if ((caption_len != 0) != c.caption_present)
    throw FormatError("caption length disagrees with the caption flag", pos);
  pos += 4;
  c.caption_bytes.assign(in.begin() + static_cast<std::ptrdiff_t>(pos),
                         in.begin() + static_cast<std::ptrdiff_t>(pos + caption_len));
  pos += caption_len;
  const std::uint32_t bs_len = read_length(in, pos, "bitstream");
  pos += 4;
  c.bitstream.assign(in.begin() + static_cast<std::ptrdiff_t>(pos),
                     in.begin() + static_cast<std::ptrdiff_t>(pos + bs_len));
  pos += bs_len;
  if (pos != in.size()) throw FormatError(std::to_string(in.size() - pos) + " trailing bytes after the bitstream", pos);
  return c;
}

RateReport rate_report(const CompressedContainer& c) {
  RateReport r;
  r.container_bytes = kContainerOverhead + c.caption_bytes.size() + c.bitstream.size();
  r.caption_bytes = c.caption_bytes.size();
  const int h = static_cast<int>(c.orig_h), w = static_cast<int>(c.orig_w);
  r.anchor_bpp = measure_bpp(c.bitstream.size(), h, w);
  r.total_bpp = measure_bpp(r.container_bytes, h, w);
  return r;
}

CodecRegistry::CodecRegistry() { add(std::make_shared<ToyDctCodec>()); }

void CodecRegistry::add(std::shared_ptr<const AnchorCodec> codec) {
  if (!codec) throw InvalidArgument("null codec");
  codecs_[codec->id()] = std::move(codec);
}

const AnchorCodec& CodecRegistry::get(CodecId id) const {
  const auto it = codecs_.find(id);
  if (it == codecs_.end()) throw InvalidArgument("no adapter registered for codec " + codec_name(id));
  return *it->second;
}

Pipeline::Pipeline(const CodecRegistry& codecs, const gen::DiffusionModel* model,
                   const semantics::CaptionProvider* captions, const semantics::SemanticFeatureProvider* semantic)
    : codecs_(codecs), model_(model), captions_(captions), semantic_(semantic) {}

double Pipeline::chi_qp(CodecId codec, double native_qp) const {
  return normalizer_.normalize(codecs_.get(codec), native_qp, calibration_set());
}

CompressedContainer Pipeline::compress(const ImageBuffer& img, const EncodingParams& params) const {
  params.validate();
  if (img.empty()) throw InvalidArgument("compress: empty image");
  const AnchorCodec& codec = codecs_.get(params.codec);
  const double s = stored_scale(params.s);
  QualitySpec q = params.quality;
  if (!(q.chi_qp > 0.0)) q.chi_qp = chi_qp(params.codec, q.native_qp);

  CompressedContainer c;
  c.crd_enabled = params.crd_enabled;
  c.codec = params.codec;
  c.orig_w = static_cast<std::uint32_t>(img.width());
  c.orig_h = static_cast<std::uint32_t>(img.height());
  c.s = static_cast<float>(s);
  c.native_qp = static_cast<float>(q.native_qp);
  c.chi_qp = static_cast<float>(q.chi_qp);
  if (params.caption_enabled && captions_) {
    const std::string caption = captions_->caption(img);
    if (!caption.empty()) c.caption_bytes = semantics::lz_compress(caption);
  }
  c.caption_present = !c.caption_bytes.empty();
  c.bitstream = codec.encode(rescaler::downsample(img, s), q).bytes;
  return c;
}

ImageBuffer Pipeline::decode_anchor(const CompressedContainer& c) const {
  if (!codecs_.contains(c.codec)) throw FormatError("container codec " + codec_name(c.codec) + " has no adapter", 6);
  const auto [h, w] = rescaler::downsampled_dims(static_cast<int>(c.orig_h), static_cast<int>(c.orig_w), c.s);
  return codecs_.get(c.codec).decode(AnchorBitstream{c.bitstream, h, w});
}

ImageBuffer Pipeline::decompress(const CompressedContainer& c, int steps, std::uint64_t seed) const {
  const int H = static_cast<int>(c.orig_h), W = static_cast<int>(c.orig_w);
  const ImageBuffer x_g = decode_anchor(c);
  if (!c.crd_enabled) return (x_g.height() == H && x_g.width() == W) ? x_g : rescaler::upsample(x_g, H, W);

  if (!model_) throw InvalidArgument("container has CRD enabled but no diffusion model is loaded");
  const auto sched = gen::NoiseSchedule::linear();
  if (steps < 1 || steps > sched.steps()) throw InvalidArgument("steps must be in [1, " + std::to_string(sched.steps()) + "]");
  const ImageBuffer x_g_up = rescaler::upsample(x_g, H, W);
  const std::string caption = c.caption_present ? semantics::lz_decompress(c.caption_bytes) : std::string();
  const cond::Degradation d{codec_type_flag(c.codec), static_cast<double>(c.chi_qp), static_cast<double>(c.s)};
  nn::NoGradGuard no_grad;
  const auto bundle = model_->make_conditioning(x_g_up, d, caption, semantic_);
  return model_->sample(bundle, steps, seed, sched, H, W);
}

}  // namespace assr::pipeline
