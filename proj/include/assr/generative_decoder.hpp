#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "assr/conditioning.hpp"
#include "assr/image.hpp"
#include "assr/nn/params.hpp"
#include "assr/semantics.hpp"

// Toy latent-diffusion restoration decoder: latent autoencoder, conditioned
// U-Net denoiser, ControlNet-style fidelity module and a DDIM sampler.
namespace assr::gen {

using nn::Tensor;
using nn::Var;

struct ModelConfig {
  int latent_channels = 4;
  std::array<int, 3> channels{32, 64, 128};
  int emb_dim = cond::kEmbedDim;
  int key_dim = 32;
  int groups = 8;
  std::uint64_t seed = 0;
};

/// Linear beta schedule with cumulative alpha products.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas_cumprod() const { return alpha_bar_; }

 private:
  std::vector<double> betas_, alpha_bar_;
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor forward_noising(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);
/// Uniformly strided DDIM timesteps, descending from T-1 to 0 (just T-1 for one step).
std::vector<int> ddim_timesteps(int steps, int total);
/// Latent (and level-3 feature) size for an image dimension.
int latent_dim(int image_dim);

/// Intermediate encoder features at 1/2, 1/4, 1/8 scale.
struct EncoderFeatures {
  std::array<Var, 3> f;
};

struct EncodedImage {
  Var latent;
  EncoderFeatures features;
};

/// Three stride-2 3x3 stages (32, 64, 128) with SiLU, then a 3x3 head to C_lat.
class LatentEncoder {
 public:
  LatentEncoder() = default;
  LatentEncoder(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, const ModelConfig& cfg);
  EncodedImage operator()(const Var& image) const;

 private:
  std::array<nn::Conv2d, 3> stages_;
  nn::Conv2d head_;
};

/// 3x3 conv to 128, then three x2 transposed convs (64, 32, 3). Output bias starts at 0.5.
class LatentDecoder {
 public:
  LatentDecoder() = default;
  LatentDecoder(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, const ModelConfig& cfg);
  /// Unclamped [3, height, width] (top-left crop of the x8 output).
  Var operator()(const Var& z, int height, int width) const;

 private:
  nn::Conv2d in_;
  std::array<nn::ConvTranspose2d, 3> ups_;
};

/// 1x1 projections of the encoder features to RGB, one per level.
class ToRGB {
 public:
  ToRGB() = default;
  ToRGB(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, const ModelConfig& cfg);
  /// level in {1, 2, 3}.
  Var operator()(const Var& feature, int level) const;
  nn::Conv2d& head(int level);

 private:
  std::array<nn::Conv2d, 3> heads_;
};

/// Everything the denoiser is conditioned on besides z_t and t.
struct ConditioningBundle {
  cond::Degradation degradation;
  Var caption_tokens;  // [N, emb_dim]
  Var semantic;        // [C_sem, h/16, w/16]
  Var xg_latent;       // image-encoder latent of the upsampled anchor decode
};

using FidelityFeatures = std::array<Var, 3>;

/// Three-level U-Net with global-adaptor residual blocks, semantic attention
/// at the two deepest levels and caption attention at the deepest.
class Backbone {
 public:
  Backbone() = default;
  Backbone(nn::ParamStore& store, const std::string& name, const ModelConfig& cfg);
  /// `cond` may be null (unconditional prior); `fidelity` may be null.
  Var operator()(const Var& z_t, int t, const ConditioningBundle* cond, const FidelityFeatures* fidelity) const;

  cond::GlobalAdaptor& adaptor(int i) { return blocks_.at(static_cast<std::size_t>(i)); }

 private:
  cond::ParamEmbedder time_;
  cond::EmbedderSet ge_;
  nn::Conv2d in_conv_, down1_, down2_, up2_, up1_, out_conv_;
  std::array<cond::GlobalAdaptor, 6> blocks_;  // enc0 enc1 enc2 mid dec1 dec0
  cond::SemanticAttention sem1_, sem2_, caption_;
  nn::GroupNorm out_norm_;
  int emb_dim_ = 0;
};

/// Trainable copy of the backbone encoder path fed with z_t + latent(x_g_up);
/// emits the last feature of each level through zero-initialized 1x1 convs.
class FidelityModule {
 public:
  FidelityModule() = default;
  FidelityModule(nn::ParamStore& store, const std::string& name, const ModelConfig& cfg);
  FidelityFeatures operator()(const Var& xg_latent, const Var& z_t, int t, const cond::Degradation& d) const;

  nn::Conv2d& output(int level) { return outs_.at(static_cast<std::size_t>(level)); }

 private:
  cond::ParamEmbedder time_;
  cond::EmbedderSet ge_;
  nn::Conv2d in_conv_, down1_, down2_;
  std::array<cond::GlobalAdaptor, 3> blocks_;
  std::array<nn::Conv2d, 3> outs_;
};

/// The full decoder-side model and its parameter registry.
class DiffusionModel {
 public:
  explicit DiffusionModel(ModelConfig cfg = {});
  DiffusionModel(const DiffusionModel&) = delete;
  DiffusionModel& operator=(const DiffusionModel&) = delete;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  double latent_scale() const;
  void set_latent_scale(double s);

  /// Frozen autoencoder: scaled latent plus intermediate features.
  EncodedImage encode_latent(const Var& image) const;
  /// Trainable image encoder applied to x_g_up (same layout, scaled latent).
  EncodedImage encode_condition(const Var& image) const;
  /// Unclamped decoder output for a scaled latent.
  Var decode_latent(const Var& z, int height, int width) const;
  /// Clamped image from a scaled latent.
  ImageBuffer decode_image(const Tensor& z, int height, int width) const;
  Var to_rgb(const Var& feature, int level) const { return to_rgb_(feature, level); }
  /// Unscaled autoencoder round trip, for pretraining.
  Var reconstruct(const Var& image) const;

  const semantics::ConvSemanticEncoder& semantic_encoder() const { return sem_encoder_; }
  const semantics::CaptionTokenizer& tokenizer() const { return tokenizer_; }

  /// `sem` overrides the bundled semantic encoder when non-null. `encoded`
  /// receives the image-encoder pass (training reuses its features for L_A).
  ConditioningBundle make_conditioning(const ImageBuffer& x_g_up, const cond::Degradation& d,
                                       const std::string& caption,
                                       const semantics::SemanticFeatureProvider* sem = nullptr,
                                       EncodedImage* encoded = nullptr) const;

  /// Fidelity features after the local modulator.
  FidelityFeatures fidelity_forward(const Var& xg_latent, const Var& z_t, int t, const cond::Degradation& d) const;
  Var predict_noise(const Var& z_t, int t, const ConditioningBundle& cond) const;
  /// Backbone only, no conditioning at all.
  Var predict_noise_unconditional(const Var& z_t, int t) const;

  /// Deterministic DDIM (eta = 0) from seeded Gaussian noise.
  Tensor sample_latent(const ConditioningBundle& cond, int steps, std::uint64_t seed, const NoiseSchedule& sched,
                       int latent_h, int latent_w) const;
  ImageBuffer sample(const ConditioningBundle& cond, int steps, std::uint64_t seed, const NoiseSchedule& sched,
                     int height, int width) const;

  /// Initializes the trainable image encoder from the autoencoder encoder.
  int copy_autoencoder_to_image_encoder();
  /// Initializes the fidelity module from the backbone encoder path.
  int copy_backbone_to_fidelity();

  Backbone& backbone() { return backbone_; }
  FidelityModule& fidelity() { return fidelity_; }
  std::array<cond::LocalModulator, 3>& modulators() { return modulators_; }

  void save(const std::filesystem::path& path) const { store_.save(path); }
  void load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  nn::ParamStore store_;
  LatentEncoder vae_encoder_, image_encoder_;
  LatentDecoder vae_decoder_;
  ToRGB to_rgb_;
  Var latent_scale_;
  semantics::ConvSemanticEncoder sem_encoder_;
  semantics::CaptionTokenizer tokenizer_;
  Backbone backbone_;
  FidelityModule fidelity_;
  cond::EmbedderSet modulator_embedders_;
  std::array<cond::LocalModulator, 3> modulators_;
};

}  // namespace assr::gen
