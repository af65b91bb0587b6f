#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "assr/anchor_codec.hpp"
#include "assr/conditioning.hpp"
#include "assr/generative_decoder.hpp"
#include "assr/image.hpp"
#include "assr/losses.hpp"
#include "assr/semantics.hpp"

namespace assr::train {

/// Pretraining of the frozen parts (autoencoder, unconditional backbone).
struct PretrainConfig {
  int steps = 0;
  int crop_size = 64;
  int batch = 4;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainingConfig {
  int crop_size = 64;
  int batch = 4;
  double lr = 5e-5;
  int steps = 1000;
  double s_min = 1.0;
  double s_max = 2.0;
  std::vector<double> qp_pool{12.0, 24.0, 36.0};
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every = 0;  // 0: final checkpoint only

  PretrainConfig autoencoder{2000, 64, 4, 1e-3, 1};
  PretrainConfig backbone{2000, 64, 4, 1e-3, 2};
  std::filesystem::path init_checkpoint;  // skips pretraining when set

  /// Throws InvalidArgument on crop not divisible by 8, scale range outside
  /// [1, 2], empty qp pool, non-positive batch and the like.
  void validate() const;
};

/// Applies `key = value` settings. Unknown keys throw InvalidArgument.
void apply_setting(TrainingConfig& cfg, const std::string& key, const std::string& value);
TrainingConfig load_training_config(const std::filesystem::path& path);

/// Codecs a pair may be drawn from, with their quality normalization.
class AnchorPool {
 public:
  AnchorPool();  // the bundled toy codec
  explicit AnchorPool(std::vector<std::shared_ptr<const AnchorCodec>> codecs);

  std::size_t size() const { return codecs_.size(); }
  const AnchorCodec& at(std::size_t i) const { return *codecs_.at(i); }
  /// chi_qp over the bundled calibration set (cached).
  double chi_qp(const AnchorCodec& codec, double native_qp);

 private:
  std::vector<std::shared_ptr<const AnchorCodec>> codecs_;
  QualityNormalizer normalizer_;
};

struct TrainingPair {
  ImageBuffer x;       // ground-truth crop
  ImageBuffer x_g_up;  // anchor round trip of the downsampled crop, upsampled back
  CodecId codec = CodecId::kToyDct;
  QualitySpec quality;
  cond::Degradation degradation;
  std::string caption;
};

ImageBuffer random_crop(const ImageBuffer& img, int size, std::mt19937_64& rng);

/// Random crop, s ~ U[s_min, s_max], qp and codec uniform over the pools.
TrainingPair make_training_pair(const ImageBuffer& img, std::mt19937_64& rng, const TrainingConfig& cfg,
                                AnchorPool& anchors, const semantics::CaptionProvider* captions = nullptr);

/// Trainable during conditional training: backbone embedding MLPs and GE
/// projections, fidelity module, local modulators, attention projections,
/// image encoder with its toRGB heads. Everything else is frozen.
void apply_conditional_freezing(nn::ParamStore& store);
bool trainable_in_conditional_phase(nn::ParamGroup g);

struct StepRecord {
  int step = 0;
  double l_diff = 0.0;
  double l_a = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
};

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const StepRecord& r);

class Trainer {
 public:
  Trainer(gen::DiffusionModel& model, TrainingConfig cfg, AnchorPool& anchors,
          const semantics::CaptionProvider* captions = nullptr);

  /// Loss of one batch; applies one Adam update to the trainable groups.
  /// Throws TrainingError (parameters untouched) on a non-finite loss.
  losses::LossValue train_step(const std::vector<TrainingPair>& batch);
  /// Draws a batch from `data` and trains on it.
  StepRecord step(std::span<const ImageBuffer> data);
  /// cfg.steps steps. With a non-empty `out_dir`, writes loss.csv, periodic
  /// checkpoint_<step>.ckpt files and model.ckpt.
  std::vector<StepRecord> run(std::span<const ImageBuffer> data, const std::filesystem::path& out_dir = {},
                              const std::function<void(const StepRecord&)>& on_step = {});

  int steps_done() const { return steps_done_; }
  const TrainingConfig& config() const { return cfg_; }
  nn::Adam& optimizer() { return adam_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  gen::DiffusionModel& model_;
  TrainingConfig cfg_;
  AnchorPool& anchors_;
  const semantics::CaptionProvider* captions_;
  gen::NoiseSchedule sched_;
  nn::Adam adam_;
  std::mt19937_64 rng_;
  int steps_done_ = 0;
};

/// Reconstruction pretraining of the latent autoencoder (MSE), followed by
/// latent-scale calibration and the image-encoder copy. Returns the loss trace.
std::vector<double> pretrain_autoencoder(gen::DiffusionModel& model, std::span<const ImageBuffer> data,
                                         const PretrainConfig& cfg);
/// Sets the latent scale to 1 / std of the unscaled latents of `data`.
double calibrate_latent_scale(gen::DiffusionModel& model, std::span<const ImageBuffer> data);
/// Unconditional noise-prediction pretraining of the backbone core, then the
/// fidelity copy. Returns the loss trace.
std::vector<double> pretrain_backbone(gen::DiffusionModel& model, std::span<const ImageBuffer> data,
                                      const PretrainConfig& cfg);

/// Loads cfg.init_checkpoint when set, otherwise runs the autoencoder and
/// backbone pretraining configured in `cfg` (a phase with zero steps is
/// skipped). Progress lines go to `log` when non-null.
void prepare_model(gen::DiffusionModel& model, std::span<const ImageBuffer> data, const TrainingConfig& cfg,
                   std::ostream* log = nullptr);

}  // namespace assr::train
