#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "assr/image.hpp"
#include "assr/nn/params.hpp"

// Caption coding and the two semantic side channels: captions (text) and
// soft semantic feature maps.
namespace assr::semantics {

constexpr int kLzwCodeBits = 12;
constexpr int kLzwEndCode = 256;
constexpr int kLzwMaxCode = (1 << kLzwCodeBits) - 1;

/// LZW, 12-bit fixed-width codes packed LSB-first, terminated by code 256.
std::vector<std::uint8_t> lz_compress(const std::string& text);
/// Exact inverse. Throws FormatError on unknown codes, missing end code or trailing data.
std::string lz_decompress(const std::vector<std::uint8_t>& bytes);
/// Code sequence produced by lz_compress before packing (end code included).
std::vector<int> lzw_codes(const std::string& text);

class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string caption(const ImageBuffer& img) const = 0;
};

class EmptyCaptionProvider final : public CaptionProvider {
 public:
  std::string caption(const ImageBuffer&) const override { return {}; }
};

class FixedCaptionProvider final : public CaptionProvider {
 public:
  explicit FixedCaptionProvider(std::string text) : text_(std::move(text)) {}
  std::string caption(const ImageBuffer&) const override { return text_; }

 private:
  std::string text_;
};

/// Runs a user command with `{in}` replaced by a temporary PPM path; stdout
/// (minus trailing newlines) is the caption. Failures fall back to "" with a
/// warning on stderr. Invocations are serialized.
class CommandCaptionProvider final : public CaptionProvider {
 public:
  explicit CommandCaptionProvider(std::string command) : command_(std::move(command)) {}
  std::string caption(const ImageBuffer& img) const override;

 private:
  std::string command_;
};

/// Whitespace tokenizer with a frozen hash-bucket embedding table.
class CaptionTokenizer {
 public:
  static constexpr int kBuckets = 4096;
  static constexpr int kMaxTokens = 32;

  CaptionTokenizer() = default;
  CaptionTokenizer(nn::ParamStore& store, const std::string& name, int dim);

  static std::vector<std::string> split(const std::string& text);
  static int bucket(const std::string& token);
  /// [N, dim] token embeddings, N <= kMaxTokens; the learned null token for empty text.
  nn::Var tokenize(const std::string& text) const;

 private:
  nn::Var table_, null_token_;
  int dim_ = 0;
};

constexpr int kSemanticChannels = 32;

class SemanticFeatureProvider {
 public:
  virtual ~SemanticFeatureProvider() = default;
  /// [C_sem, ceil(H/16), ceil(W/16)].
  virtual nn::Tensor features(const ImageBuffer& img) const = 0;
};

/// Frozen random convolutional encoder: four stride-2 3x3 stages 3-8-16-32-32.
class ConvSemanticEncoder final : public SemanticFeatureProvider {
 public:
  ConvSemanticEncoder() = default;
  ConvSemanticEncoder(nn::ParamStore& store, const std::string& name);
  nn::Tensor features(const ImageBuffer& img) const override;

 private:
  std::vector<nn::Conv2d> stages_;
};

/// Reads a precomputed feature file and checks its shape against the image.
class FeatureFileProvider final : public SemanticFeatureProvider {
 public:
  explicit FeatureFileProvider(std::filesystem::path path) : path_(std::move(path)) {}
  nn::Tensor features(const ImageBuffer& img) const override;

 private:
  std::filesystem::path path_;
};

/// Spatial size of semantic features for an image dimension.
int semantic_dim(int image_dim);

/// "SEMF" | C u32 | H u32 | W u32 | float32 LE data, channel-major.
void write_feature_file(const std::filesystem::path& path, const nn::Tensor& features);
nn::Tensor read_feature_file(const std::filesystem::path& path);

}  // namespace assr::semantics
