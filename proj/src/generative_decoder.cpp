#include "assr/generative_decoder.hpp"

#include <cmath>
#include <random>

#include "assr/errors.hpp"
#include "assr/nn/image_tensor.hpp"
#include "assr/nn/ops.hpp"

namespace assr::gen {

using nn::Init;
using nn::ParamGroup;

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw InvalidArgument("noise schedule needs at least two steps");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start < beta_end)) {
    throw InvalidArgument("noise schedule needs 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.betas_.resize(static_cast<std::size_t>(steps));
  s.alpha_bar_.resize(static_cast<std::size_t>(steps));
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double b = beta_start + (beta_end - beta_start) * t / (steps - 1);
    prod *= 1.0 - b;
    s.betas_[static_cast<std::size_t>(t)] = b;
    s.alpha_bar_[static_cast<std::size_t>(t)] = prod;
  }
  return s;
}

Tensor forward_noising(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.steps()) throw InvalidArgument("timestep " + std::to_string(t) + " out of range");
  if (z0.shape() != eps.shape()) throw ShapeError("noise shape differs from latent shape");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double b = std::sqrt(1.0 - sched.alpha_bar(t));
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

std::vector<int> ddim_timesteps(int steps, int total) {
  if (steps < 1 || steps > total) {
    throw InvalidArgument("sampling steps must be in [1, " + std::to_string(total) + "], got " + std::to_string(steps));
  }
  if (steps == 1) return {total - 1};
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    ts[static_cast<std::size_t>(steps - 1 - i)] =
        static_cast<int>(std::lround(static_cast<double>(i) * (total - 1) / (steps - 1)));
  }
  return ts;
}

int latent_dim(int image_dim) { return (image_dim + 7) / 8; }

LatentEncoder::LatentEncoder(nn::ParamStore& store, const std::string& name, ParamGroup group,
                             const ModelConfig& cfg) {
  int in = 3;
  for (int i = 0; i < 3; ++i) {
    stages_[static_cast<std::size_t>(i)] =
        nn::Conv2d(store, name + ".conv" + std::to_string(i + 1), group, in, cfg.channels[static_cast<std::size_t>(i)], 3, 2);
    in = cfg.channels[static_cast<std::size_t>(i)];
  }
  head_ = nn::Conv2d(store, name + ".head", group, in, cfg.latent_channels, 3, 1);
}

EncodedImage LatentEncoder::operator()(const Var& image) const {
  if (image.value().rank() != 3 || image.dim(0) != 3) throw ShapeError("encoder expects a [3, H, W] image");
  if (image.dim(1) < 8 || image.dim(2) < 8) throw InvalidArgument("image must be at least 8x8 for the encoder");
  EncodedImage out;
  Var h = image;
  for (std::size_t i = 0; i < 3; ++i) {
    h = nn::silu(stages_[i](h));
    out.features.f[i] = h;
  }
  out.latent = head_(h);
  return out;
}

LatentDecoder::LatentDecoder(nn::ParamStore& store, const std::string& name, ParamGroup group,
                             const ModelConfig& cfg) {
  in_ = nn::Conv2d(store, name + ".conv_in", group, cfg.latent_channels, cfg.channels[2], 3, 1);
  const int widths[4] = {cfg.channels[2], cfg.channels[1], cfg.channels[0], 3};
  for (int i = 0; i < 3; ++i) {
    ups_[static_cast<std::size_t>(i)] =
        nn::ConvTranspose2d(store, name + ".up" + std::to_string(i + 1), group, widths[i], widths[i + 1]);
  }
  ups_[2].bias.mutable_value().fill(0.5);
}

Var LatentDecoder::operator()(const Var& z, int height, int width) const {
  if (z.value().rank() != 3 || z.dim(0) != in_.weight.dim(1)) throw ShapeError("decoder latent channel mismatch");
  if (height < 1 || width < 1 || height > 8 * z.dim(1) || width > 8 * z.dim(2)) {
    throw ShapeError("decoder target " + std::to_string(height) + "x" + std::to_string(width) +
                     " does not fit latent " + nn::shape_string(z.shape()));
  }
  Var h = nn::silu(in_(z));
  h = nn::silu(ups_[0](h));
  h = nn::silu(ups_[1](h));
  h = ups_[2](h);
  return nn::crop(h, height, width);
}

ToRGB::ToRGB(nn::ParamStore& store, const std::string& name, ParamGroup group, const ModelConfig& cfg) {
  for (int i = 0; i < 3; ++i) {
    heads_[static_cast<std::size_t>(i)] = nn::Conv2d(store, name + ".level" + std::to_string(i + 1), group,
                                                     cfg.channels[static_cast<std::size_t>(i)], 3, 1, 1);
  }
}

nn::Conv2d& ToRGB::head(int level) {
  if (level < 1 || level > 3) throw InvalidArgument("toRGB level must be 1, 2 or 3");
  return heads_[static_cast<std::size_t>(level - 1)];
}

Var ToRGB::operator()(const Var& feature, int level) const {
  if (level < 1 || level > 3) throw InvalidArgument("toRGB level must be 1, 2 or 3");
  return heads_[static_cast<std::size_t>(level - 1)](feature);
}

Backbone::Backbone(nn::ParamStore& store, const std::string& name, const ModelConfig& cfg) : emb_dim_(cfg.emb_dim) {
  const auto core = ParamGroup::kBackboneCore;
  const auto ge = ParamGroup::kGlobalEmbedding;
  const auto [c0, c1, c2] = cfg.channels;
  const cond::AdaptorOptions opt{true, true, 3, cfg.groups};
  time_ = cond::ParamEmbedder(store, name + ".time", core, cond::ParamKind::kTimestep, cfg.emb_dim);
  ge_ = cond::EmbedderSet(store, name, ge, cfg.emb_dim);
  in_conv_ = nn::Conv2d(store, name + ".in_conv", core, cfg.latent_channels, c0, 3);
  blocks_[0] = cond::GlobalAdaptor(store, name + ".enc0", core, ge, c0, cfg.emb_dim, opt);
  down1_ = nn::Conv2d(store, name + ".down1", core, c0, c1, 3, 2);
  blocks_[1] = cond::GlobalAdaptor(store, name + ".enc1", core, ge, c1, cfg.emb_dim, opt);
  down2_ = nn::Conv2d(store, name + ".down2", core, c1, c2, 3, 2);
  blocks_[2] = cond::GlobalAdaptor(store, name + ".enc2", core, ge, c2, cfg.emb_dim, opt);
  blocks_[3] = cond::GlobalAdaptor(store, name + ".mid", core, ge, c2, cfg.emb_dim, opt);
  up2_ = nn::Conv2d(store, name + ".up2", core, c2, c1, 3);
  blocks_[4] = cond::GlobalAdaptor(store, name + ".dec1", core, ge, c1, cfg.emb_dim, opt);
  up1_ = nn::Conv2d(store, name + ".up1", core, c1, c0, 3);
  blocks_[5] = cond::GlobalAdaptor(store, name + ".dec0", core, ge, c0, cfg.emb_dim, opt);
  out_norm_ = nn::GroupNorm(store, name + ".out_norm", core, c0, cfg.groups);
  out_conv_ = nn::Conv2d(store, name + ".out_conv", core, c0, cfg.latent_channels, 3);
  sem1_ = cond::SemanticAttention(store, name + ".sem_attn1", ParamGroup::kAttention, c1, semantics::kSemanticChannels,
                                  cfg.key_dim);
  sem2_ = cond::SemanticAttention(store, name + ".sem_attn2", ParamGroup::kAttention, c2, semantics::kSemanticChannels,
                                  cfg.key_dim);
  caption_ = cond::SemanticAttention(store, name + ".caption_attn", ParamGroup::kAttention, c2, cfg.emb_dim, cfg.key_dim);
}

Var Backbone::operator()(const Var& z_t, int t, const ConditioningBundle* cond, const FidelityFeatures* fidelity) const {
  const Var t_emb = time_(static_cast<double>(t));
  const Var ge = cond ? ge_.global(cond->degradation) : nn::constant(Tensor({emb_dim_}));
  auto inject = [&](Var h, int level) {
    if (!fidelity) return h;
    const Var& f = (*fidelity)[static_cast<std::size_t>(level)];
    if (!f.defined()) throw InvalidArgument("missing fidelity feature for level " + std::to_string(level));
    if (f.shape() != h.shape()) {
      throw ShapeError("fidelity feature " + nn::shape_string(f.shape()) + " does not match backbone level " +
                       nn::shape_string(h.shape()));
    }
    return nn::add(h, f);
  };

  Var h = inject(in_conv_(z_t), 0);
  h = blocks_[0](h, t_emb, ge);
  const Var skip0 = h;

  h = inject(down1_(h), 1);
  h = blocks_[1](h, t_emb, ge);
  if (cond && cond->semantic.defined()) h = sem1_.attend_map(h, cond->semantic);
  const Var skip1 = h;

  h = inject(down2_(h), 2);
  h = blocks_[2](h, t_emb, ge);
  if (cond && cond->semantic.defined()) h = sem2_.attend_map(h, cond->semantic);
  if (cond && cond->caption_tokens.defined()) h = caption_(h, cond->caption_tokens);
  h = blocks_[3](h, t_emb, ge);

  h = nn::add(up2_(nn::upsample_nearest2x(h, skip1.dim(1), skip1.dim(2))), skip1);
  h = blocks_[4](h, t_emb, ge);
  h = nn::add(up1_(nn::upsample_nearest2x(h, skip0.dim(1), skip0.dim(2))), skip0);
  h = blocks_[5](h, t_emb, ge);
  return out_conv_(nn::silu(out_norm_(h)));
}

FidelityModule::FidelityModule(nn::ParamStore& store, const std::string& name, const ModelConfig& cfg) {
  const auto g = ParamGroup::kFidelity;
  const auto [c0, c1, c2] = cfg.channels;
  const cond::AdaptorOptions opt{true, true, 3, cfg.groups};
  time_ = cond::ParamEmbedder(store, name + ".time", g, cond::ParamKind::kTimestep, cfg.emb_dim);
  ge_ = cond::EmbedderSet(store, name, g, cfg.emb_dim);
  in_conv_ = nn::Conv2d(store, name + ".in_conv", g, cfg.latent_channels, c0, 3);
  blocks_[0] = cond::GlobalAdaptor(store, name + ".enc0", g, g, c0, cfg.emb_dim, opt);
  down1_ = nn::Conv2d(store, name + ".down1", g, c0, c1, 3, 2);
  blocks_[1] = cond::GlobalAdaptor(store, name + ".enc1", g, g, c1, cfg.emb_dim, opt);
  down2_ = nn::Conv2d(store, name + ".down2", g, c1, c2, 3, 2);
  blocks_[2] = cond::GlobalAdaptor(store, name + ".enc2", g, g, c2, cfg.emb_dim, opt);
  const int widths[3] = {c0, c1, c2};
  for (int i = 0; i < 3; ++i) {
    outs_[static_cast<std::size_t>(i)] =
        nn::Conv2d(store, name + ".out" + std::to_string(i), g, widths[i], widths[i], 1, 1, Init::kZeros);
  }
}

FidelityFeatures FidelityModule::operator()(const Var& xg_latent, const Var& z_t, int t,
                                            const cond::Degradation& d) const {
  if (xg_latent.shape() != z_t.shape()) {
    throw ShapeError("fidelity input latent " + nn::shape_string(xg_latent.shape()) + " vs z_t " +
                     nn::shape_string(z_t.shape()));
  }
  const Var t_emb = time_(static_cast<double>(t));
  const Var ge = ge_.global(d);
  FidelityFeatures out;
  Var h = blocks_[0](in_conv_(nn::add(z_t, xg_latent)), t_emb, ge);
  out[0] = outs_[0](h);
  h = blocks_[1](down1_(h), t_emb, ge);
  out[1] = outs_[1](h);
  h = blocks_[2](down2_(h), t_emb, ge);
  out[2] = outs_[2](h);
  return out;
}

DiffusionModel::DiffusionModel(ModelConfig cfg) : cfg_(cfg), store_(cfg.seed) {
  vae_encoder_ = LatentEncoder(store_, "vae.enc", ParamGroup::kAutoencoder, cfg_);
  vae_decoder_ = LatentDecoder(store_, "vae.dec", ParamGroup::kAutoencoder, cfg_);
  latent_scale_ = store_.create("vae.latent_scale", ParamGroup::kAutoencoder, {1}, Init::kOnes);
  image_encoder_ = LatentEncoder(store_, "imgenc", ParamGroup::kImageEncoder, cfg_);
  to_rgb_ = ToRGB(store_, "imgenc.to_rgb", ParamGroup::kImageEncoder, cfg_);
  sem_encoder_ = semantics::ConvSemanticEncoder(store_, "sem");
  tokenizer_ = semantics::CaptionTokenizer(store_, "caption", cfg_.emb_dim);
  backbone_ = Backbone(store_, "unet", cfg_);
  fidelity_ = FidelityModule(store_, "fid", cfg_);
  modulator_embedders_ = cond::EmbedderSet(store_, "mod", ParamGroup::kLocalModulator, cfg_.emb_dim);
  for (int i = 0; i < 3; ++i) {
    modulators_[static_cast<std::size_t>(i)] =
        cond::LocalModulator(store_, "mod.level" + std::to_string(i), ParamGroup::kLocalModulator, cfg_.emb_dim,
                             cfg_.channels[static_cast<std::size_t>(i)]);
  }
  copy_autoencoder_to_image_encoder();
  copy_backbone_to_fidelity();
}

double DiffusionModel::latent_scale() const { return latent_scale_.value()[0]; }

void DiffusionModel::set_latent_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("latent scale must be positive");
  latent_scale_.mutable_value()[0] = s;
}

EncodedImage DiffusionModel::encode_latent(const Var& image) const {
  EncodedImage e = vae_encoder_(image);
  e.latent = nn::scale(e.latent, latent_scale());
  return e;
}

EncodedImage DiffusionModel::encode_condition(const Var& image) const {
  EncodedImage e = image_encoder_(image);
  e.latent = nn::scale(e.latent, latent_scale());
  return e;
}

Var DiffusionModel::decode_latent(const Var& z, int height, int width) const {
  return vae_decoder_(nn::scale(z, 1.0 / latent_scale()), height, width);
}

ImageBuffer DiffusionModel::decode_image(const Tensor& z, int height, int width) const {
  nn::NoGradGuard no_grad;
  return nn::tensor_to_image(decode_latent(nn::constant(z), height, width).value());
}

Var DiffusionModel::reconstruct(const Var& image) const {
  return vae_decoder_(vae_encoder_(image).latent, image.dim(1), image.dim(2));
}

ConditioningBundle DiffusionModel::make_conditioning(const ImageBuffer& x_g_up, const cond::Degradation& d,
                                                     const std::string& caption,
                                                     const semantics::SemanticFeatureProvider* sem,
                                                     EncodedImage* encoded) const {
  ConditioningBundle c;
  c.degradation = d;
  c.caption_tokens = tokenizer_.tokenize(caption);
  c.semantic = nn::constant(sem ? sem->features(x_g_up) : sem_encoder_.features(x_g_up));
  EncodedImage e = encode_condition(nn::constant(nn::image_to_tensor(x_g_up)));
  c.xg_latent = e.latent;
  if (encoded) *encoded = std::move(e);
  return c;
}

FidelityFeatures DiffusionModel::fidelity_forward(const Var& xg_latent, const Var& z_t, int t,
                                                  const cond::Degradation& d) const {
  FidelityFeatures raw = fidelity_(xg_latent, z_t, t, d);
  const auto emb = modulator_embedders_.embed(d);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = modulators_[i](raw[i], emb);
  return raw;
}

Var DiffusionModel::predict_noise(const Var& z_t, int t, const ConditioningBundle& cond) const {
  if (!cond.xg_latent.defined()) throw InvalidArgument("conditioning bundle lacks the x_g latent");
  const FidelityFeatures fid = fidelity_forward(cond.xg_latent, z_t, t, cond.degradation);
  return backbone_(z_t, t, &cond, &fid);
}

Var DiffusionModel::predict_noise_unconditional(const Var& z_t, int t) const {
  return backbone_(z_t, t, nullptr, nullptr);
}

Tensor DiffusionModel::sample_latent(const ConditioningBundle& cond, int steps, std::uint64_t seed,
                                     const NoiseSchedule& sched, int latent_h, int latent_w) const {
  const auto ts = ddim_timesteps(steps, sched.steps());
  nn::NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z({cfg_.latent_channels, latent_h, latent_w});
  for (double& v : z.values()) v = normal(rng);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const Tensor eps = predict_noise(nn::constant(z), t, cond).value();
    const double ab = sched.alpha_bar(t);
    Tensor z0(z.shape());
    for (std::size_t k = 0; k < z.size(); ++k) z0[k] = (z[k] - std::sqrt(1.0 - ab) * eps[k]) / std::sqrt(ab);
    if (i + 1 == ts.size()) return z0;
    const double ab_prev = sched.alpha_bar(ts[i + 1]);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = std::sqrt(ab_prev) * z0[k] + std::sqrt(1.0 - ab_prev) * eps[k];
  }
  return z;
}

ImageBuffer DiffusionModel::sample(const ConditioningBundle& cond, int steps, std::uint64_t seed,
                                   const NoiseSchedule& sched, int height, int width) const {
  const Tensor z = sample_latent(cond, steps, seed, sched, latent_dim(height), latent_dim(width));
  return decode_image(z, height, width);
}

int DiffusionModel::copy_autoencoder_to_image_encoder() { return store_.copy_prefix("vae.enc.", "imgenc."); }

int DiffusionModel::copy_backbone_to_fidelity() { return store_.copy_prefix("unet.", "fid."); }

void DiffusionModel::load(const std::filesystem::path& path) {
  const auto names = store_.load(path);
  if (names.size() != store_.entries().size()) {
    throw FormatError("checkpoint " + path.string() + " covers " + std::to_string(names.size()) + " of " +
                          std::to_string(store_.entries().size()) + " parameters",
                      0);
  }
}

}  // namespace assr::gen
