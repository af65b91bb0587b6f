#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "assr/errors.hpp"
#include "assr/nn/image_tensor.hpp"
#include "assr/rescaler.hpp"
#include "assr/synthetic.hpp"
#include "assr/training.hpp"
#include "doctest.h"

using namespace assr;
using namespace assr::train;
using nn::ParamGroup;

namespace {

// Toy codec under a second id, so pools can hold two "different" anchors.
class RelabeledCodec final : public AnchorCodec {
 public:
  CodecId id() const override { return CodecId::kExternalLearned; }
  AnchorBitstream encode(const ImageBuffer& img, const QualitySpec& q) const override { return inner_.encode(img, q); }
  ImageBuffer decode(const AnchorBitstream& bs) const override { return inner_.decode(bs); }

 private:
  ToyDctCodec inner_;
};

std::array<std::uint64_t, nn::kParamGroupCount> hashes(const nn::ParamStore& store) {
  std::array<std::uint64_t, nn::kParamGroupCount> out{};
  for (int g = 0; g < nn::kParamGroupCount; ++g) out[static_cast<std::size_t>(g)] = store.group_hash(static_cast<ParamGroup>(g));
  return out;
}

TrainingConfig small_config() {
  TrainingConfig cfg;
  cfg.crop_size = 32;
  cfg.batch = 1;
  cfg.steps = 2;
  cfg.qp_pool = {12.0, 30.0};
  cfg.seed = 17;
  return cfg;
}

std::filesystem::path scratch(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("assr-train-" + tag);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(TrainingConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainingConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  };
  bad([](TrainingConfig& c) { c.crop_size = 60; });
  bad([](TrainingConfig& c) { c.batch = 0; });
  bad([](TrainingConfig& c) { c.s_min = 0.9; });
  bad([](TrainingConfig& c) { c.s_max = 2.5; });
  bad([](TrainingConfig& c) { c.s_min = 1.8, c.s_max = 1.2; });
  bad([](TrainingConfig& c) { c.qp_pool.clear(); });
  bad([](TrainingConfig& c) { c.lr = -1.0; });
  bad([](TrainingConfig& c) { c.autoencoder.crop_size = 20; });
}

TEST_CASE("config file") {
  const auto dir = scratch("cfg");
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "train.cfg");
    f << "# desk run\ncrop_size = 32\nbatch=2\nlr = 1e-3  # faster\nqp_pool = 6, 18,30\nseed = 99\n"
         "s_min = 1.25\nbackbone_steps = 50\nae_lr = 0.002\n\n";
  }
  const auto cfg = load_training_config(dir / "train.cfg");
  CHECK(cfg.crop_size == 32);
  CHECK(cfg.batch == 2);
  CHECK(cfg.lr == 1e-3);
  CHECK(cfg.qp_pool == std::vector<double>{6, 18, 30});
  CHECK(cfg.seed == 99);
  CHECK(cfg.s_min == 1.25);
  CHECK(cfg.backbone.steps == 50);
  CHECK(cfg.autoencoder.lr == 0.002);

  TrainingConfig c;
  CHECK_THROWS_AS(apply_setting(c, "learning_rate", "1"), InvalidArgument);
  CHECK_THROWS_AS(apply_setting(c, "batch", "two"), InvalidArgument);
  CHECK_THROWS_AS(apply_setting(c, "batch", "2.5"), InvalidArgument);
  CHECK_THROWS_AS(apply_setting(c, "seed", "-1"), InvalidArgument);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "crop_size 32\n";
  }
  CHECK_THROWS_AS(load_training_config(dir / "bad.cfg"), InvalidArgument);
  CHECK_THROWS_AS(load_training_config(dir / "missing.cfg"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("random crop") {
  const ImageBuffer img = synthetic::textured_scene(40, 50, 1);
  std::mt19937_64 rng(3);
  const ImageBuffer c = random_crop(img, 16, rng);
  CHECK(c.height() == 16);
  CHECK(c.width() == 16);
  // the crop sits somewhere inside the image
  bool found = false;
  for (int y0 = 0; y0 + 16 <= 40 && !found; ++y0)
    for (int x0 = 0; x0 + 16 <= 50 && !found; ++x0) {
      bool same = true;
      for (int y = 0; y < 16 && same; ++y)
        for (int x = 0; x < 16 && same; ++x) same = c.at(y, x, 1) == img.at(y0 + y, x0 + x, 1);
      found = same;
    }
  CHECK(found);
  CHECK_THROWS_AS(random_crop(img, 48, rng), InvalidArgument);
}

TEST_CASE("training pairs") {
  AnchorPool pool;
  TrainingConfig cfg = small_config();
  const ImageBuffer img = synthetic::textured_scene(48, 48, 2);

  SUBCASE("s pinned at 1 gives a plain codec round trip") {
    cfg.s_min = cfg.s_max = 1.0;
    std::mt19937_64 rng(1);
    const auto p = make_training_pair(img, rng, cfg, pool);
    CHECK(p.degradation.s == 1.0);
    const ToyDctCodec codec;
    CHECK(p.x_g_up == codec.decode(codec.encode(p.x, p.quality)));
    CHECK(p.x_g_up.height() == 32);
  }
  SUBCASE("general pair") {
    std::mt19937_64 rng(2);
    const auto p = make_training_pair(img, rng, cfg, pool);
    CHECK(p.x.height() == 32);
    CHECK(p.x_g_up.width() == 32);
    const ToyDctCodec codec;
    const ImageBuffer expect = rescaler::upsample(
        codec.decode(codec.encode(rescaler::downsample(p.x, p.degradation.s), p.quality)), 32, 32);
    CHECK(p.x_g_up == expect);
    CHECK(p.degradation.chi_ct == 0.0);
    CHECK(p.degradation.chi_qp == p.quality.chi_qp);
    CHECK(p.quality.chi_qp == pool.chi_qp(codec, p.quality.native_qp));
    CHECK(p.caption.empty());
  }
  SUBCASE("same seed, same pair") {
    std::mt19937_64 a(9), b(9);
    const auto p = make_training_pair(img, a, cfg, pool);
    const auto q = make_training_pair(img, b, cfg, pool);
    CHECK(p.x == q.x);
    CHECK(p.x_g_up == q.x_g_up);
    CHECK(p.degradation.s == q.degradation.s);
    CHECK(p.quality.native_qp == q.quality.native_qp);
  }
  SUBCASE("captions come from the provider") {
    const semantics::FixedCaptionProvider cap("a quiet street");
    std::mt19937_64 rng(4);
    CHECK(make_training_pair(img, rng, cfg, pool, &cap).caption == "a quiet street");
  }
  SUBCASE("too small") {
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(make_training_pair(synthetic::textured_scene(24, 48, 1), rng, cfg, pool), InvalidArgument);
  }
}

TEST_CASE("scale, qp and codec draws are uniform") {
  AnchorPool pool({std::make_shared<ToyDctCodec>(), std::make_shared<RelabeledCodec>()});
  TrainingConfig cfg;
  cfg.crop_size = 8;
  cfg.qp_pool = {6.0, 18.0, 30.0, 42.0};
  const ImageBuffer img = synthetic::textured_scene(8, 8, 3);
  std::mt19937_64 rng(2024);

  constexpr int kDraws = 10000, kBins = 10;
  std::array<int, kBins> s_hist{};
  std::map<double, int> qp_hist;
  std::map<double, int> ct_hist;
  for (int i = 0; i < kDraws; ++i) {
    const auto p = make_training_pair(img, rng, cfg, pool);
    REQUIRE(p.degradation.s >= 1.0);
    REQUIRE(p.degradation.s < 2.0);
    ++s_hist[static_cast<std::size_t>(std::min(kBins - 1, static_cast<int>((p.degradation.s - 1.0) * kBins)))];
    ++qp_hist[p.quality.native_qp];
    ++ct_hist[p.degradation.chi_ct];
  }
  auto chi2 = [](const auto& counts, double expected) {
    double x = 0.0;
    for (const auto& c : counts) {
      const double n = static_cast<double>(c);
      x += (n - expected) * (n - expected) / expected;
    }
    return x;
  };
  // Upper 1% points of chi-square with 9, 3 and 1 degrees of freedom.
  CHECK(chi2(s_hist, kDraws / 10.0) < 21.666);
  std::vector<int> qp_counts, ct_counts;
  for (const auto& [k, v] : qp_hist) qp_counts.push_back(v);
  for (const auto& [k, v] : ct_hist) ct_counts.push_back(v);
  REQUIRE(qp_counts.size() == 4);
  REQUIRE(ct_counts.size() == 2);
  CHECK(chi2(qp_counts, kDraws / 4.0) < 11.345);
  CHECK(chi2(ct_counts, kDraws / 2.0) < 6.635);
  CHECK(ct_hist.count(0.0) == 1);
  CHECK(ct_hist.count(1.0) == 1);
}

TEST_CASE("freezing policy") {
  gen::DiffusionModel m;
  apply_conditional_freezing(m.params());
  for (ParamGroup g : {ParamGroup::kGlobalEmbedding, ParamGroup::kFidelity, ParamGroup::kLocalModulator,
                       ParamGroup::kAttention, ParamGroup::kImageEncoder}) {
    CHECK(m.params().trainable(g));
    CHECK(trainable_in_conditional_phase(g));
  }
  for (ParamGroup g : {ParamGroup::kBackboneCore, ParamGroup::kAutoencoder, ParamGroup::kSemanticEncoder,
                       ParamGroup::kCaptionTable}) {
    CHECK_FALSE(m.params().trainable(g));
  }
  // GE projections and the embedding MLPs of the backbone train; its convs do not.
  CHECK(m.params().get("unet.enc1.proj_ge.weight").requires_grad());
  CHECK(m.params().get("unet.s_emb.l2.weight").requires_grad());
  CHECK_FALSE(m.params().get("unet.enc1.conv1.weight").requires_grad());
  CHECK_FALSE(m.params().get("vae.dec.up3.weight").requires_grad());
}

TEST_CASE("one step moves every trainable group and nothing else") {
  gen::DiffusionModel m;
  AnchorPool pool;
  Trainer trainer(m, small_config(), pool);
  const auto before = hashes(m.params());
  const std::vector<ImageBuffer> data{synthetic::textured_scene(40, 40, 4)};
  const auto r = trainer.step(data);
  CHECK(std::isfinite(r.l_total));
  CHECK(r.l_total == doctest::Approx(r.l_diff + r.l_a).epsilon(1e-12));
  CHECK(r.step == 1);
  const auto after = hashes(m.params());
  for (int g = 0; g < nn::kParamGroupCount; ++g) {
    const auto group = static_cast<ParamGroup>(g);
    INFO(nn::group_name(group));
    if (trainable_in_conditional_phase(group))
      CHECK(before[static_cast<std::size_t>(g)] != after[static_cast<std::size_t>(g)]);
    else
      CHECK(before[static_cast<std::size_t>(g)] == after[static_cast<std::size_t>(g)]);
  }
}

TEST_CASE("zero learning rate leaves parameters alone") {
  gen::DiffusionModel m;
  AnchorPool pool;
  auto cfg = small_config();
  cfg.lr = 0.0;
  Trainer trainer(m, cfg, pool);
  const auto before = m.params().serialize();
  const std::vector<ImageBuffer> data{synthetic::textured_scene(32, 32, 5)};
  trainer.step(data);
  CHECK(m.params().serialize() == before);
}

TEST_CASE("non-finite loss aborts without an update") {
  gen::DiffusionModel m;
  AnchorPool pool;
  Trainer trainer(m, small_config(), pool);
  std::mt19937_64 rng(1);
  auto pair = make_training_pair(synthetic::textured_scene(32, 32, 6), rng, small_config(), pool);
  pair.x_g_up.at(3, 4, 0) = std::numeric_limits<float>::quiet_NaN();
  const auto before = m.params().serialize();
  try {
    trainer.train_step({pair});
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find("L_A=") != std::string::npos);
  }
  CHECK(m.params().serialize() == before);
  CHECK(trainer.steps_done() == 0);
}

TEST_CASE("fixed seed reproduces the loss trace") {
  const std::vector<ImageBuffer> data{synthetic::textured_scene(40, 40, 7), synthetic::smooth_scene(48, 40, 8)};
  auto run = [&] {
    gen::DiffusionModel m;
    AnchorPool pool;
    auto cfg = small_config();
    cfg.steps = 3;
    cfg.lr = 1e-3;
    Trainer trainer(m, cfg, pool);
    std::vector<double> trace;
    for (const auto& r : trainer.run(data)) trace.insert(trace.end(), {r.l_diff, r.l_a, r.l_total});
    return std::make_pair(trace, m.params().serialize());
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("run writes the loss log and checkpoints") {
  const auto dir = scratch("run");
  gen::DiffusionModel m;
  AnchorPool pool;
  auto cfg = small_config();
  cfg.steps = 4;
  cfg.checkpoint_every = 2;
  Trainer trainer(m, cfg, pool);
  int seen = 0;
  const std::vector<ImageBuffer> data{synthetic::textured_scene(32, 32, 9)};
  const auto trace = trainer.run(data, dir, [&](const StepRecord&) { ++seen; });
  CHECK(seen == 4);

  std::ifstream log(dir / "loss.csv");
  std::string line;
  std::getline(log, line);
  CHECK(line == "step,L_diff,L_A,L_total,lr");
  int rows = 0;
  while (std::getline(log, line)) {
    ++rows;
    double step = 0, ld = 0, la = 0, lt = 0, lr = 0;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    std::istringstream is(line);
    is >> step >> c1 >> ld >> c2 >> la >> c3 >> lt >> c4 >> lr;
    CHECK(step == rows);
    CHECK(ld == trace[static_cast<std::size_t>(rows - 1)].l_diff);
    CHECK(lt == trace[static_cast<std::size_t>(rows - 1)].l_total);
    CHECK(lr == 5e-5);
  }
  CHECK(rows == 4);
  CHECK(std::filesystem::exists(dir / "checkpoint_000002.ckpt"));
  CHECK(std::filesystem::exists(dir / "checkpoint_000004.ckpt"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint_000001.ckpt"));

  gen::DiffusionModel restored(gen::ModelConfig{.seed = 5});
  restored.load(dir / "model.ckpt");
  CHECK(hashes(restored.params()) == hashes(m.params()));
  std::filesystem::remove_all(dir);
}

TEST_CASE("autoencoder pretraining and latent scale") {
  gen::DiffusionModel m;
  const auto data = synthetic::smooth_corpus(4, 32, 32, 10);
  const auto before = hashes(m.params());
  const auto trace = pretrain_autoencoder(m, data, {12, 32, 2, 1e-3, 1});
  REQUIRE(trace.size() == 12);
  CHECK(trace.back() < trace.front());
  const auto after = hashes(m.params());
  for (int g = 0; g < nn::kParamGroupCount; ++g) {
    const auto group = static_cast<ParamGroup>(g);
    const bool moved = before[static_cast<std::size_t>(g)] != after[static_cast<std::size_t>(g)];
    CHECK(moved == (group == ParamGroup::kAutoencoder || group == ParamGroup::kImageEncoder));
  }
  CHECK(m.params().get("imgenc.head.weight").value() == m.params().get("vae.enc.head.weight").value());
  for (ParamGroup g : {ParamGroup::kAutoencoder, ParamGroup::kBackboneCore, ParamGroup::kFidelity})
    CHECK_FALSE(m.params().trainable(g));

  calibrate_latent_scale(m, data);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& img : data) {
    nn::NoGradGuard g;
    const nn::Tensor z = m.encode_latent(nn::constant(nn::image_to_tensor(img))).latent.value();
    for (double v : z.values()) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  const double mean = sum / n;
  CHECK(std::sqrt(sq / n - mean * mean) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("backbone pretraining touches only the backbone core") {
  gen::DiffusionModel m;
  const auto data = synthetic::smooth_corpus(3, 32, 32, 11);
  const auto before = hashes(m.params());
  const auto trace = pretrain_backbone(m, data, {3, 32, 2, 1e-3, 2});
  CHECK(trace.size() == 3);
  const auto after = hashes(m.params());
  CHECK(before[0] != after[0]);
  CHECK(before[static_cast<std::size_t>(ParamGroup::kFidelity)] != after[static_cast<std::size_t>(ParamGroup::kFidelity)]);
  for (ParamGroup g : {ParamGroup::kAutoencoder, ParamGroup::kAttention, ParamGroup::kLocalModulator,
                       ParamGroup::kImageEncoder, ParamGroup::kGlobalEmbedding})
    CHECK(before[static_cast<std::size_t>(g)] == after[static_cast<std::size_t>(g)]);
  CHECK(m.params().get("fid.enc2.conv2.weight").value() == m.params().get("unet.enc2.conv2.weight").value());
  // zero-initialized outputs keep the fidelity path silent after the copy
  for (double v : m.params().get("fid.out1.weight").value().values()) CHECK(v == 0.0);
}
