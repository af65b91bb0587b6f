#include "selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "assr/errors.hpp"
#include "assr/eval.hpp"
#include "assr/generative_decoder.hpp"
#include "assr/pipeline.hpp"
#include "assr/rescaler.hpp"
#include "assr/semantics.hpp"
#include "assr/synthetic.hpp"

namespace assr::tools {

namespace {

struct Check {
  const char* name;
  std::function<bool(std::string&)> fn;
};

pipeline::EncodingParams plain(double qp, double s, bool crd) {
  pipeline::EncodingParams p;
  p.quality = {qp, 1.0};
  p.s = s;
  p.crd_enabled = crd;
  p.caption_enabled = false;
  return p;
}

bool degenerate_mode(std::string& why) {
  const pipeline::CodecRegistry codecs;
  const pipeline::Pipeline pipe(codecs);
  const ToyDctCodec toy;
  for (const auto& img : synthetic::textured_corpus(8, 32, 40, 101)) {
    const auto c = pipeline::deserialize(pipeline::serialize(pipe.compress(img, plain(24, 1.0, false))));
    if (!(pipe.decompress(c, 1, 0) == toy.decode(toy.encode(img, {24, 1.0})))) {
      why = "s=1, CRD off output differs from the bare anchor";
      return false;
    }
  }
  return true;
}

bool container_round_trip(std::string& why) {
  const pipeline::CodecRegistry codecs;
  const semantics::FixedCaptionProvider cap("a lighthouse at dusk");
  const pipeline::Pipeline pipe(codecs, nullptr, &cap);
  auto p = plain(30, 1.5, true);
  p.caption_enabled = true;
  const auto c = pipe.compress(synthetic::textured_scene(48, 64, 3), p);
  const auto bytes = pipeline::serialize(c);
  if (!(pipeline::deserialize(bytes) == c) || pipeline::serialize(pipeline::deserialize(bytes)) != bytes) {
    why = "serialize/deserialize not byte-exact";
    return false;
  }
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    try {
      pipeline::deserialize(std::span(bytes.data(), n));
      why = "prefix of " + std::to_string(n) + " bytes parsed";
      return false;
    } catch (const TruncatedError&) {
    }
  }
  return true;
}

bool lzw_round_trip(std::string& why) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> len(0, 300), ch(0, 255), alpha(0, 3);
  for (int i = 0; i < 300; ++i) {
    std::string s(static_cast<std::size_t>(len(rng)), '\0');
    const bool small = i % 2 == 0;
    for (char& c : s) c = static_cast<char>(small ? "ab c"[alpha(rng)] : ch(rng));
    if (semantics::lz_decompress(semantics::lz_compress(s)) != s) {
      why = "string " + std::to_string(i) + " did not survive";
      return false;
    }
  }
  return true;
}

bool bd_rate_trivial(std::string& why) {
  const std::vector<double> r = {0.05, 0.09, 0.16, 0.3, 0.5}, q = {27, 29.5, 32, 34, 36.5};
  std::vector<double> half;
  for (double v : r) half.push_back(v / 2);
  const double same = eval::bd_rate(r, q, r, q), h = eval::bd_rate(r, q, half, q);
  if (same != 0.0 || std::fabs(h + 50.0) > 1e-9) {
    why = "identical " + std::to_string(same) + ", half rate " + std::to_string(h);
    return false;
  }
  return true;
}

bool metric_sanity(std::string& why) {
  const ImageBuffer a = synthetic::textured_scene(64, 72, 4), b = synthetic::textured_scene(64, 72, 5);
  if (eval::psnr(ImageBuffer(16, 16, 0.0f), ImageBuffer(16, 16, 1.0f)) != 0.0) {
    why = "PSNR(0, 1) != 0";
    return false;
  }
  if (eval::ms_ssim(a, a) != 1.0 || eval::ms_ssim(a, b) != eval::ms_ssim(b, a) || eval::psnr(a, b) != eval::psnr(b, a)) {
    why = "MS-SSIM identity or symmetry broken";
    return false;
  }
  return true;
}

bool rate_monotone(std::string& why) {
  const auto images = synthetic::smooth_corpus(4, 96, 96, 6);
  const ToyDctCodec toy;
  const std::vector<double> qps = {24}, scales = {1.0, 1.2, 1.5, 2.0};
  const auto t = eval::rate_table(images, toy, qps, scales);
  for (std::size_t i = 1; i < scales.size(); ++i)
    if (!(t.rows[0].bpp[i] < t.rows[0].bpp[i - 1])) {
      why = "anchor bpp does not fall at s=" + std::to_string(scales[i]);
      return false;
    }
  return true;
}

bool noop_at_init_and_determinism(std::string& why) {
  const gen::DiffusionModel model;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  nn::Tensor zt({4, 4, 4});
  for (double& v : zt.values()) v = normal(rng);
  const nn::Var z = nn::constant(zt);
  nn::NoGradGuard no_grad;
  const nn::Tensor base = model.predict_noise_unconditional(z, 500).value();
  const auto c1 = model.make_conditioning(synthetic::smooth_scene(32, 32, 1), {0.0, 0.05, 1.0}, "");
  const auto c2 = model.make_conditioning(synthetic::textured_scene(32, 32, 2), {1.0, 0.4, 2.0}, "snow on a roof");
  if (!(model.predict_noise(z, 500, c1).value() == base) || !(model.predict_noise(z, 500, c2).value() == base)) {
    why = "conditioning changed the noise prediction of a fresh model";
    return false;
  }
  const pipeline::CodecRegistry codecs;
  const pipeline::Pipeline pipe(codecs, &model);
  const auto c = pipe.compress(synthetic::smooth_scene(32, 40, 8), plain(24, 1.5, true));
  if (!(pipe.decompress(c, 4, 11) == pipe.decompress(c, 4, 11))) {
    why = "fixed-seed decompress not reproducible";
    return false;
  }
  return true;
}

}  // namespace

bool run_selftest(std::ostream& os) {
  const std::vector<Check> checks = {
      {"degenerate mode equals the anchor codec", degenerate_mode},
      {"container round trip and truncation", container_round_trip},
      {"LZW caption round trip", lzw_round_trip},
      {"BD-rate identity and half rate", bd_rate_trivial},
      {"PSNR / MS-SSIM sanity", metric_sanity},
      {"anchor rate falls with s", rate_monotone},
      {"no-op at init and sampling determinism", noop_at_init_and_determinism},
  };
  bool all = true;
  for (const auto& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string why;
    bool ok = false;
    try {
      ok = c.fn(why);
    } catch (const std::exception& e) {
      why = std::string("threw: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    os << (ok ? "PASS " : "FAIL ") << c.name << " (" << secs << " s)";
    if (!ok) os << ": " << why;
    os << '\n';
    all = all && ok;
  }
  return all;
}

}  // namespace assr::tools
