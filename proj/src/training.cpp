#include "assr/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "assr/errors.hpp"
#include "assr/nn/image_tensor.hpp"
#include "assr/nn/ops.hpp"
#include "assr/rescaler.hpp"

namespace assr::train {

using nn::ParamGroup;
using nn::Tensor;
using nn::Var;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw InvalidArgument("setting " + key + ": not a number: '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 2e9) throw InvalidArgument("setting " + key + ": not an integer: " + v);
  return static_cast<int>(d);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty() || v[0] == '-') throw InvalidArgument("setting " + key + ": bad seed '" + v + "'");
  return out;
}

Tensor gaussian(const std::vector<int>& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(shape);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

void check_finite(double loss, const std::string& what, int step, const std::string& detail) {
  if (std::isfinite(loss)) return;
  std::ostringstream os;
  os << what << ": non-finite loss " << loss << " at step " << step;
  if (!detail.empty()) os << " (" << detail << ")";
  throw TrainingError(os.str());
}

const ImageBuffer& pick(std::span<const ImageBuffer> data, std::mt19937_64& rng) {
  if (data.empty()) throw InvalidArgument("training data is empty");
  std::uniform_int_distribution<std::size_t> d(0, data.size() - 1);
  return data[d(rng)];
}

void validate_pretrain(const PretrainConfig& c, const char* what) {
  if (c.steps < 0) throw InvalidArgument(std::string(what) + ": steps must be >= 0");
  if (c.crop_size < 8 || c.crop_size % 8 != 0) throw InvalidArgument(std::string(what) + ": crop must be a multiple of 8");
  if (c.batch < 1) throw InvalidArgument(std::string(what) + ": batch must be >= 1");
  if (!(c.lr >= 0.0)) throw InvalidArgument(std::string(what) + ": lr must be >= 0");
}

}  // namespace

void TrainingConfig::validate() const {
  if (crop_size < 8 || crop_size % 8 != 0) throw InvalidArgument("crop_size must be a positive multiple of 8");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be finite and >= 0");
  if (!(s_min >= 1.0 && s_max <= 2.0 && s_min <= s_max)) throw InvalidArgument("scale range must lie within [1, 2]");
  if (qp_pool.empty()) throw InvalidArgument("qp_pool is empty");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0))
    throw InvalidArgument("bad Adam hyperparameters");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be >= 0");
  validate_pretrain(autoencoder, "autoencoder pretraining");
  validate_pretrain(backbone, "backbone pretraining");
}

void apply_setting(TrainingConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "crop_size") cfg.crop_size = to_int(key, v);
  else if (key == "batch") cfg.batch = to_int(key, v);
  else if (key == "lr") cfg.lr = to_double(key, v);
  else if (key == "steps") cfg.steps = to_int(key, v);
  else if (key == "s_min") cfg.s_min = to_double(key, v);
  else if (key == "s_max") cfg.s_max = to_double(key, v);
  else if (key == "qp_pool") {
    cfg.qp_pool.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.qp_pool.push_back(to_double(key, trim(item)));
  } else if (key == "seed") cfg.seed = to_u64(key, v);
  else if (key == "beta1") cfg.beta1 = to_double(key, v);
  else if (key == "beta2") cfg.beta2 = to_double(key, v);
  else if (key == "adam_eps") cfg.adam_eps = to_double(key, v);
  else if (key == "checkpoint_every") cfg.checkpoint_every = to_int(key, v);
  else if (key == "init_checkpoint") cfg.init_checkpoint = v;
  else if (key == "ae_steps") cfg.autoencoder.steps = to_int(key, v);
  else if (key == "ae_lr") cfg.autoencoder.lr = to_double(key, v);
  else if (key == "ae_batch") cfg.autoencoder.batch = to_int(key, v);
  else if (key == "ae_crop") cfg.autoencoder.crop_size = to_int(key, v);
  else if (key == "backbone_steps") cfg.backbone.steps = to_int(key, v);
  else if (key == "backbone_lr") cfg.backbone.lr = to_double(key, v);
  else if (key == "backbone_batch") cfg.backbone.batch = to_int(key, v);
  else if (key == "backbone_crop") cfg.backbone.crop_size = to_int(key, v);
  else throw InvalidArgument("unknown training setting '" + key + "'");
}

TrainingConfig load_training_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open training config " + path.string());
  TrainingConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

AnchorPool::AnchorPool() : AnchorPool({std::make_shared<ToyDctCodec>()}) {}

AnchorPool::AnchorPool(std::vector<std::shared_ptr<const AnchorCodec>> codecs) : codecs_(std::move(codecs)) {
  if (codecs_.empty()) throw InvalidArgument("anchor pool needs at least one codec");
  for (const auto& c : codecs_)
    if (!c) throw InvalidArgument("null codec in anchor pool");
}

double AnchorPool::chi_qp(const AnchorCodec& codec, double native_qp) {
  return normalizer_.normalize(codec, native_qp, calibration_set());
}

ImageBuffer random_crop(const ImageBuffer& img, int size, std::mt19937_64& rng) {
  if (img.height() < size || img.width() < size) {
    throw InvalidArgument("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                          " is smaller than the " + std::to_string(size) + " crop");
  }
  std::uniform_int_distribution<int> dy(0, img.height() - size), dx(0, img.width() - size);
  const int y0 = dy(rng), x0 = dx(rng);
  if (size == img.height() && size == img.width()) return img;
  ImageBuffer out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < ImageBuffer::kChannels; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

TrainingPair make_training_pair(const ImageBuffer& img, std::mt19937_64& rng, const TrainingConfig& cfg,
                                AnchorPool& anchors, const semantics::CaptionProvider* captions) {
  TrainingPair p;
  p.x = random_crop(img, cfg.crop_size, rng);
  double s = cfg.s_min;
  if (cfg.s_max > cfg.s_min) s = std::uniform_real_distribution<double>(cfg.s_min, cfg.s_max)(rng);
  const double qp = cfg.qp_pool[std::uniform_int_distribution<std::size_t>(0, cfg.qp_pool.size() - 1)(rng)];
  const AnchorCodec& codec = anchors.at(std::uniform_int_distribution<std::size_t>(0, anchors.size() - 1)(rng));

  p.codec = codec.id();
  p.quality = {qp, anchors.chi_qp(codec, qp)};
  p.degradation = {codec_type_flag(p.codec), p.quality.chi_qp, s};
  const ImageBuffer lr = rescaler::downsample(p.x, s);
  const ImageBuffer x_g = codec.decode(codec.encode(lr, p.quality));
  p.x_g_up = rescaler::upsample(x_g, cfg.crop_size, cfg.crop_size);
  if (captions) p.caption = captions->caption(p.x);
  return p;
}

bool trainable_in_conditional_phase(ParamGroup g) {
  switch (g) {
    case ParamGroup::kGlobalEmbedding:
    case ParamGroup::kFidelity:
    case ParamGroup::kLocalModulator:
    case ParamGroup::kAttention:
    case ParamGroup::kImageEncoder:
      return true;
    default:
      return false;
  }
}

void apply_conditional_freezing(nn::ParamStore& store) {
  for (int g = 0; g < nn::kParamGroupCount; ++g) {
    const auto group = static_cast<ParamGroup>(g);
    store.set_trainable(group, trainable_in_conditional_phase(group));
  }
}

void write_loss_header(std::ostream& os) { os << "step,L_diff,L_A,L_total,lr\n"; }

void write_loss_row(std::ostream& os, const StepRecord& r) {
  os << r.step << ',' << std::setprecision(17) << r.l_diff << ',' << r.l_a << ',' << r.l_total << ',' << r.lr
     << '\n';
}

namespace {
std::vector<Var> freeze_for_conditional(nn::ParamStore& store) {
  apply_conditional_freezing(store);
  return store.trainable_params();
}
}  // namespace

Trainer::Trainer(gen::DiffusionModel& model, TrainingConfig cfg, AnchorPool& anchors,
                 const semantics::CaptionProvider* captions)
    : model_(model),
      cfg_((cfg.validate(), std::move(cfg))),
      anchors_(anchors),
      captions_(captions),
      sched_(gen::NoiseSchedule::linear()),
      adam_(freeze_for_conditional(model.params()), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps),
      rng_(cfg_.seed) {}

losses::LossValue Trainer::train_step(const std::vector<TrainingPair>& batch) {
  if (batch.empty()) throw InvalidArgument("empty training batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  Var total;
  std::map<std::string, double> comps;
  std::ostringstream detail;
  std::uniform_int_distribution<int> pick_t(0, sched_.steps() - 1);

  for (const TrainingPair& p : batch) {
    Tensor z0;
    {
      nn::NoGradGuard no_grad;
      z0 = model_.encode_latent(nn::constant(nn::image_to_tensor(p.x))).latent.value();
    }
    const int t = pick_t(rng_);
    const Tensor eps = gaussian(z0.shape(), rng_);
    const Tensor z_t = gen::forward_noising(z0, t, eps, sched_);

    gen::EncodedImage enc;
    const auto bundle = model_.make_conditioning(p.x_g_up, p.degradation, p.caption, nullptr, &enc);
    const Var eps_hat = model_.predict_noise(nn::constant(z_t), t, bundle);
    const auto l_diff = losses::diffusion_loss(nn::constant(eps), eps_hat);
    const std::array<Var, 3> rgb{model_.to_rgb(enc.features.f[0], 1), model_.to_rgb(enc.features.f[1], 2),
                                 model_.to_rgb(enc.features.f[2], 3)};
    const auto l_a = losses::domain_alignment_loss(rgb, p.x);
    const auto item = losses::total_loss(l_a, l_diff);

    for (const auto& [k, v] : item.components) comps[k] += v * inv;
    detail << "t=" << t << " s=" << p.degradation.s << " qp=" << p.quality.native_qp << " L_diff=" << l_diff.value()
           << " L_A=" << l_a.value() << "; ";
    const Var scaled = nn::scale(item.var, inv);
    total = total.defined() ? nn::add(total, scaled) : scaled;
  }

  losses::LossValue out{total, comps};
  check_finite(out.value(), "conditional training", steps_done_ + 1, detail.str());
  nn::backward(total);
  adam_.step();
  ++steps_done_;
  return out;
}

StepRecord Trainer::step(std::span<const ImageBuffer> data) {
  std::vector<TrainingPair> batch;
  batch.reserve(static_cast<std::size_t>(cfg_.batch));
  for (int i = 0; i < cfg_.batch; ++i) batch.push_back(make_training_pair(pick(data, rng_), rng_, cfg_, anchors_, captions_));
  const auto loss = train_step(batch);
  return {steps_done_, loss.components.at("L_diff"), loss.components.at("L_A"), loss.value(), adam_.lr()};
}

std::vector<StepRecord> Trainer::run(std::span<const ImageBuffer> data, const std::filesystem::path& out_dir,
                                     const std::function<void(const StepRecord&)>& on_step) {
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir / "loss.csv");
    if (!log) throw IoError("cannot write " + (out_dir / "loss.csv").string());
    write_loss_header(log);
  }
  std::vector<StepRecord> trace;
  for (int i = 0; i < cfg_.steps; ++i) {
    trace.push_back(step(data));
    const StepRecord& r = trace.back();
    if (log.is_open()) {
      write_loss_row(log, r);
      log.flush();
      if (cfg_.checkpoint_every > 0 && r.step % cfg_.checkpoint_every == 0) {
        std::ostringstream name;
        name << "checkpoint_" << std::setw(6) << std::setfill('0') << r.step << ".ckpt";
        model_.save(out_dir / name.str());
      }
    }
    if (on_step) on_step(r);
  }
  if (!out_dir.empty()) model_.save(out_dir / "model.ckpt");
  return trace;
}

double calibrate_latent_scale(gen::DiffusionModel& model, std::span<const ImageBuffer> data) {
  if (data.empty()) throw InvalidArgument("latent scale calibration needs data");
  nn::NoGradGuard no_grad;
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  const double current = model.latent_scale();
  for (const auto& img : data) {
    const Tensor z = model.encode_latent(nn::constant(nn::image_to_tensor(img))).latent.value();
    for (double v : z.values()) {
      sum += v / current;
      sq += (v / current) * (v / current);
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(std::max(sq / static_cast<double>(n) - mean * mean, 0.0));
  if (!(sd > 1e-12)) throw TrainingError("latent scale calibration: latents have zero spread");
  model.set_latent_scale(1.0 / sd);
  return 1.0 / sd;
}

std::vector<double> pretrain_autoencoder(gen::DiffusionModel& model, std::span<const ImageBuffer> data,
                                         const PretrainConfig& cfg) {
  validate_pretrain(cfg, "autoencoder pretraining");
  auto& store = model.params();
  store.freeze_all();
  store.set_trainable(ParamGroup::kAutoencoder, true);
  nn::Adam adam(store.trainable_params(), cfg.lr);
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> trace;
  for (int step = 1; step <= cfg.steps; ++step) {
    Var total;
    for (int b = 0; b < cfg.batch; ++b) {
      const Var x = nn::constant(nn::image_to_tensor(random_crop(pick(data, rng), cfg.crop_size, rng)));
      const Var l = nn::scale(nn::mse(model.reconstruct(x), x), 1.0 / cfg.batch);
      total = total.defined() ? nn::add(total, l) : l;
    }
    check_finite(total.value()[0], "autoencoder pretraining", step, "");
    trace.push_back(total.value()[0]);
    nn::backward(total);
    adam.step();
  }
  store.freeze_all();

  std::vector<ImageBuffer> sample;
  for (int i = 0; i < 16; ++i) sample.push_back(random_crop(pick(data, rng), cfg.crop_size, rng));
  calibrate_latent_scale(model, sample);
  model.copy_autoencoder_to_image_encoder();
  return trace;
}

std::vector<double> pretrain_backbone(gen::DiffusionModel& model, std::span<const ImageBuffer> data,
                                      const PretrainConfig& cfg) {
  validate_pretrain(cfg, "backbone pretraining");
  auto& store = model.params();
  store.freeze_all();
  store.set_trainable(ParamGroup::kBackboneCore, true);
  nn::Adam adam(store.trainable_params(), cfg.lr);
  const auto sched = gen::NoiseSchedule::linear();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick_t(0, sched.steps() - 1);
  std::vector<double> trace;
  for (int step = 1; step <= cfg.steps; ++step) {
    Var total;
    for (int b = 0; b < cfg.batch; ++b) {
      Tensor z0;
      {
        nn::NoGradGuard no_grad;
        z0 = model.encode_latent(nn::constant(nn::image_to_tensor(random_crop(pick(data, rng), cfg.crop_size, rng))))
                 .latent.value();
      }
      const int t = pick_t(rng);
      const Tensor eps = gaussian(z0.shape(), rng);
      const Var eps_hat = model.predict_noise_unconditional(nn::constant(gen::forward_noising(z0, t, eps, sched)), t);
      const Var l = nn::scale(nn::mse(eps_hat, nn::constant(eps)), 1.0 / cfg.batch);
      total = total.defined() ? nn::add(total, l) : l;
    }
    check_finite(total.value()[0], "backbone pretraining", step, "");
    trace.push_back(total.value()[0]);
    nn::backward(total);
    adam.step();
  }
  store.freeze_all();
  model.copy_backbone_to_fidelity();
  return trace;
}

void prepare_model(gen::DiffusionModel& model, std::span<const ImageBuffer> data, const TrainingConfig& cfg,
                   std::ostream* log) {
  if (!cfg.init_checkpoint.empty()) {
    model.load(cfg.init_checkpoint);
    if (log) *log << "loaded " << cfg.init_checkpoint.string() << "\n";
    return;
  }
  if (cfg.autoencoder.steps > 0) {
    const auto trace = pretrain_autoencoder(model, data, cfg.autoencoder);
    if (log) *log << "autoencoder pretraining: " << trace.size() << " steps, final mse " << trace.back() << "\n";
  }
  if (cfg.backbone.steps > 0) {
    const auto trace = pretrain_backbone(model, data, cfg.backbone);
    if (log) *log << "backbone pretraining: " << trace.size() << " steps, final loss " << trace.back() << "\n";
  }
}

}  // namespace assr::train
