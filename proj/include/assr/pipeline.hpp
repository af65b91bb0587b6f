#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "assr/anchor_codec.hpp"
#include "assr/generative_decoder.hpp"
#include "assr/image.hpp"
#include "assr/semantics.hpp"

namespace assr::pipeline {

struct EncodingParams {
  CodecId codec = CodecId::kToyDct;
  /// chi_qp <= 0 means "normalize native_qp on the calibration set".
  QualitySpec quality;
  double s = 1.0;
  bool crd_enabled = true;
  bool caption_enabled = true;

  void validate() const;
};

/// Rounds s to the nearest float, the precision the container stores.
double stored_scale(double s);

/// Wire format, little-endian:
///   "AEIC" | version u8 | flags u8 | codec_id u8 | reserved u8 |
///   orig_w u32 | orig_h u32 | s f32 | native_qp f32 | chi_qp f32 |
///   caption_len u32 | caption (LZW) | bitstream_len u32 | bitstream
/// flags: bit0 crd_enabled, bit1 caption_present.
struct CompressedContainer {
  std::uint8_t version = 1;
  bool crd_enabled = false;
  bool caption_present = false;
  CodecId codec = CodecId::kToyDct;
  std::uint32_t orig_w = 0;
  std::uint32_t orig_h = 0;
  float s = 1.0f;
  float native_qp = 0.0f;
  float chi_qp = 0.0f;
  std::vector<std::uint8_t> caption_bytes;
  std::vector<std::uint8_t> bitstream;

  friend bool operator==(const CompressedContainer&, const CompressedContainer&) = default;
};

inline constexpr std::uint8_t kContainerVersion = 1;
/// Header plus both length fields.
inline constexpr std::size_t kContainerOverhead = 36;

std::vector<std::uint8_t> serialize(const CompressedContainer& c);
/// Throws FormatError (bad magic, version, flags, codec id, trailing bytes,
/// length overflow) or TruncatedError.
CompressedContainer deserialize(std::span<const std::uint8_t> bytes);

struct RateReport {
  double anchor_bpp = 0.0;  // bitstream only
  double total_bpp = 0.0;   // whole serialized container
  std::size_t container_bytes = 0;
  std::size_t caption_bytes = 0;
};
RateReport rate_report(const CompressedContainer& c);

/// Codec adapters by id.
class CodecRegistry {
 public:
  /// Holds the bundled toy codec.
  CodecRegistry();
  void add(std::shared_ptr<const AnchorCodec> codec);
  bool contains(CodecId id) const { return codecs_.count(id) != 0; }
  /// Throws InvalidArgument when no adapter is registered.
  const AnchorCodec& get(CodecId id) const;

 private:
  std::map<CodecId, std::shared_ptr<const AnchorCodec>> codecs_;
};

/// Compress/decompress orchestration. The model, caption provider and
/// semantic provider are borrowed and must outlive the pipeline.
class Pipeline {
 public:
  explicit Pipeline(const CodecRegistry& codecs, const gen::DiffusionModel* model = nullptr,
                    const semantics::CaptionProvider* captions = nullptr,
                    const semantics::SemanticFeatureProvider* semantic = nullptr);

  CompressedContainer compress(const ImageBuffer& img, const EncodingParams& params) const;
  /// The anchor decode at its own resolution.
  ImageBuffer decode_anchor(const CompressedContainer& c) const;
  /// CRD off: anchor decode, upsampled only when dims differ. CRD on: DDIM
  /// restoration conditioned on the header parameters; needs a model.
  ImageBuffer decompress(const CompressedContainer& c, int steps, std::uint64_t seed) const;

  double chi_qp(CodecId codec, double native_qp) const;
  QualityNormalizer& normalizer() const { return normalizer_; }

 private:
  const CodecRegistry& codecs_;
  const gen::DiffusionModel* model_;
  const semantics::CaptionProvider* captions_;
  const semantics::SemanticFeatureProvider* semantic_;
  mutable QualityNormalizer normalizer_;
};

}  // namespace assr::pipeline
