#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "assr/image.hpp"

namespace assr {

enum class CodecId : std::uint8_t {
  kToyDct = 0,
  kExternalTraditional = 1,
  kExternalLearned = 2,
};

/// Codec-type descriptor: 0 for traditional codecs, 1 for learned ones.
double codec_type_flag(CodecId id);
std::string codec_name(CodecId id);
CodecId parse_codec_id(const std::string& name);

/// native_qp is the codec's own knob; chi_qp is the normalized quality
/// (mean bpp on the calibration set).
struct QualitySpec {
  double native_qp = 0.0;
  double chi_qp = 0.0;
};

struct AnchorBitstream {
  std::vector<std::uint8_t> bytes;
  int encoded_h = 0;
  int encoded_w = 0;
};

/// The wrapped anchor codec: analysis/synthesis transforms plus entropy coding,
/// treated as a black box by the rest of the pipeline.
class AnchorCodec {
 public:
  virtual ~AnchorCodec() = default;
  virtual CodecId id() const = 0;
  virtual AnchorBitstream encode(const ImageBuffer& img, const QualitySpec& q) const = 0;
  virtual ImageBuffer decode(const AnchorBitstream& bs) const = 0;
};

/// Bundled deterministic block-DCT codec.
///
/// Stream layout (little-endian): "TDCT" | encoded_w u32 | encoded_h u32 |
/// native_qp f32 | coded blocks of channel 0, 1, 2 in raster block order,
/// padded with zero bits to a whole byte at the end only.
class ToyDctCodec final : public AnchorCodec {
 public:
  CodecId id() const override { return CodecId::kToyDct; }
  AnchorBitstream encode(const ImageBuffer& img, const QualitySpec& q) const override;
  ImageBuffer decode(const AnchorBitstream& bs) const override;

  /// Reads encoded dims from a stream header without decoding the payload.
  static std::pair<int, int> peek_dims(std::span<const std::uint8_t> bytes);
};

/// Process-boundary adapter for external codecs (VVC, MS-ILLM, ...).
///
/// Commands are shell templates. `{in}`, `{out}` and `{qp}` are substituted
/// with file paths and the native quality. The encoder receives a binary PPM
/// and must write an opaque bitstream; the decoder receives that bitstream and
/// must write a PPM or PNG.
class ExternalCodec final : public AnchorCodec {
 public:
  ExternalCodec(CodecId id, std::string encode_cmd, std::string decode_cmd);

  CodecId id() const override { return id_; }
  AnchorBitstream encode(const ImageBuffer& img, const QualitySpec& q) const override;
  ImageBuffer decode(const AnchorBitstream& bs) const override;

 private:
  CodecId id_;
  std::string encode_cmd_;
  std::string decode_cmd_;
};

/// Bits per pixel against the original (pre-downsampling) resolution.
double measure_bpp(const AnchorBitstream& bs, int orig_h, int orig_w);
double measure_bpp(std::size_t byte_length, int orig_h, int orig_w);

/// Maps native codec quality to chi_qp, the mean bpp over a calibration set.
/// Results are cached by (codec, native_qp). Thread-safe.
class QualityNormalizer {
 public:
  double normalize(const AnchorCodec& codec, double native_qp,
                   std::span<const ImageBuffer> calibration_set);

  /// Registers a precomputed value, e.g. for an external codec whose
  /// calibration was run offline.
  void set(CodecId codec, double native_qp, double chi_qp);
  bool contains(CodecId codec, double native_qp) const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::uint8_t, double>, double> cache_;
};

/// Bundled 8-image calibration set (deterministic synthetic scenes).
const std::vector<ImageBuffer>& calibration_set();

}  // namespace assr
