// Command-line front end: compress, decompress, rate analysis, R-D sweeps,
// BD-rate, training and a quick self-test.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "assr/errors.hpp"
#include "assr/eval.hpp"
#include "assr/image_io.hpp"
#include "assr/pipeline.hpp"
#include "assr/semantics.hpp"
#include "assr/training.hpp"
#include "selftest.hpp"

namespace fs = std::filesystem;
using namespace assr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct CodecOpts {
  std::string codec = "toy";
  std::string encode_cmd;
  std::string decode_cmd;
};

void add_codec_options(CLI::App* sub, CodecOpts& o, bool with_codec = true) {
  if (with_codec) sub->add_option("--codec", o.codec, "toy, external-traditional or external-learned")->capture_default_str();
  sub->add_option("--encode-cmd", o.encode_cmd, "external codec encoder, with {in} {out} {qp}");
  sub->add_option("--decode-cmd", o.decode_cmd, "external codec decoder, with {in} {out}");
}

pipeline::CodecRegistry make_registry(const CodecOpts& o) {
  pipeline::CodecRegistry reg;
  const CodecId id = parse_codec_id(o.codec);
  if (id != CodecId::kToyDct) {
    if (!o.encode_cmd.empty() || !o.decode_cmd.empty()) reg.add(std::make_shared<ExternalCodec>(id, o.encode_cmd, o.decode_cmd));
  } else if (!o.encode_cmd.empty() || !o.decode_cmd.empty()) {
    throw InvalidArgument("--encode-cmd/--decode-cmd apply to external codecs only");
  }
  return reg;
}

std::unique_ptr<gen::DiffusionModel> load_model(const std::string& path) {
  if (path.empty()) return nullptr;
  auto m = std::make_unique<gen::DiffusionModel>();
  m->load(path);
  return m;
}

std::vector<ImageBuffer> load_images(const fs::path& p) {
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    files = io::list_images(p);
  } else {
    files.push_back(p);
  }
  if (files.empty()) throw IoError("no images found in " + p.string());
  std::vector<ImageBuffer> out;
  for (const auto& f : files) out.push_back(io::read_image(f));
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + p.string());
}

std::pair<std::string, std::string> split_plugin(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("metric plugin must be NAME=COMMAND: " + spec);
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

std::unique_ptr<semantics::CaptionProvider> caption_provider(const std::string& text, const std::string& cmd) {
  if (!text.empty() && !cmd.empty()) throw InvalidArgument("--caption and --caption-cmd are exclusive");
  if (!text.empty()) return std::make_unique<semantics::FixedCaptionProvider>(text);
  if (!cmd.empty()) return std::make_unique<semantics::CommandCaptionProvider>(cmd);
  return nullptr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Arbitrary-scale rescaling extreme image compression toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  // Subcommands other than train pass --config up to here: an INI file with a
  // [subcommand] section per command holding `flag = value` lines.
  app.set_config("--config", "", "INI file, one [subcommand] section of flag = value lines");
  app.fallthrough();

  // compress
  struct {
    std::string input, output, caption, caption_cmd;
    double qp = 24.0, chi_qp = 0.0, scale = 1.0;
    bool no_caption = false, no_crd = false;
    CodecOpts codec;
  } co;
  auto* compress = app.add_subcommand("compress", "Downsample, anchor-encode and wrap an image");
  compress->add_option("--input", co.input, "input image")->required();
  compress->add_option("--output", co.output, "output container")->required();
  compress->add_option("--qp", co.qp, "native codec quality")->capture_default_str();
  compress->add_option("--chi-qp", co.chi_qp, "normalized quality; computed on the calibration set when omitted");
  compress->add_option("--scale", co.scale, "downsampling factor s >= 1")->capture_default_str();
  compress->add_flag("--no-caption", co.no_caption, "do not store a caption");
  compress->add_flag("--no-crd", co.no_crd, "decode with the anchor codec only");
  compress->add_option("--caption", co.caption, "caption text to store");
  compress->add_option("--caption-cmd", co.caption_cmd, "captioning command, {in} is the image path");
  add_codec_options(compress, co.codec);

  // decompress
  struct {
    std::string input, output, model, semantic;
    int steps = 50;
    std::uint64_t seed = 0;
    CodecOpts codec;
  } de;
  auto* decompress = app.add_subcommand("decompress", "Decode a container, restoring with the diffusion decoder");
  decompress->add_option("--input", de.input, "container")->required();
  decompress->add_option("--output", de.output, "output image (.png or .ppm)")->required();
  decompress->add_option("--steps", de.steps, "DDIM steps")->capture_default_str();
  decompress->add_option("--seed", de.seed, "sampling seed")->capture_default_str();
  decompress->add_option("--model", de.model, "model checkpoint (needed when CRD is on)");
  decompress->add_option("--semantic-features", de.semantic, "precomputed semantic feature file");
  add_codec_options(decompress, de.codec, false);
  decompress->add_option("--codec", de.codec.codec, "codec the external commands belong to");

  // analyze-rate
  struct {
    std::string images, out;
    std::vector<double> qps{24, 36}, scales{1.0, 1.2, 1.5, 2.0};
    CodecOpts codec;
  } ar;
  auto* analyze = app.add_subcommand("analyze-rate", "Anchor bpp and reduction ratio per (qp, s)");
  analyze->add_option("--images", ar.images, "image file or directory")->required();
  analyze->add_option("--qps", ar.qps, "native qualities")->delimiter(',')->capture_default_str();
  analyze->add_option("--scales", ar.scales, "scale factors")->delimiter(',')->capture_default_str();
  analyze->add_option("--out", ar.out, "CSV output (stdout when omitted)");
  add_codec_options(analyze, ar.codec);

  // rd-sweep
  struct {
    std::string images, out, model, caption;
    std::vector<double> qps{24, 36}, scales{1.0, 1.5, 2.0};
    std::vector<std::string> metrics{"psnr", "ms_ssim"}, metric_cmds, set_metric_cmds;
    int steps = 50;
    std::uint64_t seed = 0;
    bool no_crd = false, no_caption = false, plot = false;
    CodecOpts codec;
  } rd;
  auto* sweep = app.add_subcommand("rd-sweep", "Compress/decompress over (qp, s) and score with metrics");
  sweep->add_option("--images", rd.images, "image file or directory")->required();
  sweep->add_option("--qps", rd.qps, "native qualities")->delimiter(',')->capture_default_str();
  sweep->add_option("--scales", rd.scales, "scale factors")->delimiter(',')->capture_default_str();
  sweep->add_option("--steps", rd.steps, "DDIM steps")->capture_default_str();
  sweep->add_option("--seed", rd.seed, "sampling seed")->capture_default_str();
  sweep->add_option("--metrics", rd.metrics, "metric names")->delimiter(',')->capture_default_str();
  sweep->add_option("--metric-cmd", rd.metric_cmds, "pair metric plugin NAME=COMMAND with {ref} {test}");
  sweep->add_option("--set-metric-cmd", rd.set_metric_cmds, "set metric plugin NAME=COMMAND with {ref_dir} {test_dir}");
  sweep->add_option("--out", rd.out, "CSV output")->required();
  sweep->add_flag("--plot", rd.plot, "also write <out>_<metric>.svg");
  sweep->add_option("--model", rd.model, "model checkpoint (needed unless --no-crd)");
  sweep->add_option("--caption", rd.caption, "caption stored for every image");
  sweep->add_flag("--no-crd", rd.no_crd, "anchor-only decoding");
  sweep->add_flag("--no-caption", rd.no_caption, "do not store captions");
  add_codec_options(sweep, rd.codec);

  // bd-rate
  struct {
    std::string anchor, test, metric = "psnr";
  } bd;
  auto* bdrate = app.add_subcommand("bd-rate", "Bjontegaard delta rate between two rd-sweep CSVs");
  bdrate->add_option("--anchor-csv", bd.anchor, "reference curve")->required();
  bdrate->add_option("--test-csv", bd.test, "tested curve")->required();
  bdrate->add_option("--metric", bd.metric, "metric column to use")->capture_default_str();

  // train
  struct {
    std::string data, config, out, caption;
    std::optional<int> steps, batch, crop;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> settings;
    int log_every = 10;
  } tr;
  auto* train = app.add_subcommand("train", "Pretrain and train the restoration decoder");
  train->add_option("--data", tr.data, "training image directory")->required();
  train->add_option("--config", tr.config, "training config, key = value lines");
  train->add_option("--out", tr.out, "output directory (loss.csv, checkpoints, model.ckpt)")->required();
  train->add_option("--steps", tr.steps, "conditional training steps");
  train->add_option("--lr", tr.lr, "learning rate");
  train->add_option("--batch", tr.batch, "batch size");
  train->add_option("--crop-size", tr.crop, "crop size");
  train->add_option("--seed", tr.seed, "seed");
  train->add_option("--set", tr.settings, "any config key as KEY=VALUE");
  train->add_option("--caption", tr.caption, "caption used for every training image");
  train->add_option("--log-every", tr.log_every, "progress line interval")->capture_default_str();

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*compress) {
      const auto codecs = make_registry(co.codec);
      const auto captions = caption_provider(co.caption, co.caption_cmd);
      const pipeline::Pipeline pipe(codecs, nullptr, captions.get());
      pipeline::EncodingParams p;
      p.codec = parse_codec_id(co.codec.codec);
      p.quality = {co.qp, co.chi_qp};
      p.s = co.scale;
      p.crd_enabled = !co.no_crd;
      p.caption_enabled = !co.no_caption;
      const auto c = pipe.compress(io::read_image(co.input), p);
      const auto bytes = pipeline::serialize(c);
      write_file(co.output, bytes);
      const auto r = pipeline::rate_report(c);
      std::cout << "wrote " << co.output << ": " << bytes.size() << " bytes, " << std::setprecision(6) << r.total_bpp
                << " bpp (anchor " << r.anchor_bpp << ", caption " << r.caption_bytes << " bytes), chi_qp "
                << c.chi_qp << "\n";
    } else if (*decompress) {
      const auto codecs = make_registry(de.codec);
      const auto model = load_model(de.model);
      std::unique_ptr<semantics::SemanticFeatureProvider> sem;
      if (!de.semantic.empty()) sem = std::make_unique<semantics::FeatureFileProvider>(de.semantic);
      const pipeline::Pipeline pipe(codecs, model.get(), nullptr, sem.get());
      const auto c = pipeline::deserialize(read_file(de.input));
      const ImageBuffer img = pipe.decompress(c, de.steps, de.seed);
      io::write_image(de.output, img);
      std::cout << "wrote " << de.output << ": " << img.width() << "x" << img.height()
                << (c.crd_enabled ? " (restored)" : " (anchor only)") << "\n";
    } else if (*analyze) {
      const auto codecs = make_registry(ar.codec);
      const auto images = load_images(ar.images);
      const auto t = eval::rate_table(images, codecs.get(parse_codec_id(ar.codec.codec)), ar.qps, ar.scales);
      if (ar.out.empty()) {
        eval::write_rate_csv(std::cout, t);
      } else {
        std::ofstream os(ar.out);
        if (!os) throw IoError("cannot write " + ar.out);
        eval::write_rate_csv(os, t);
        for (const auto& row : t.rows) {
          std::cout << "qp " << row.qp << ": orig " << std::setprecision(4) << row.bpp_orig << " bpp";
          for (std::size_t i = 0; i < t.scales.size(); ++i)
            std::cout << ", s=" << t.scales[i] << " " << row.bpp[i] << " (" << row.ratio[i] << "x)";
          std::cout << "\n";
        }
      }
    } else if (*sweep) {
      const auto codecs = make_registry(rd.codec);
      const auto model = rd.no_crd ? nullptr : load_model(rd.model);
      if (!rd.no_crd && !model) throw InvalidArgument("rd-sweep with CRD needs --model (or pass --no-crd)");
      const auto captions = caption_provider(rd.caption, "");
      const pipeline::Pipeline pipe(codecs, model.get(), captions.get());
      eval::MetricRegistry metrics;
      for (const auto& spec : rd.metric_cmds) {
        auto [name, cmd] = split_plugin(spec);
        metrics.add(std::make_shared<eval::CommandMetric>(name, cmd));
      }
      for (const auto& spec : rd.set_metric_cmds) {
        auto [name, cmd] = split_plugin(spec);
        metrics.add(std::make_shared<eval::CommandSetMetric>(name, cmd));
      }
      eval::SweepOptions o;
      o.codec = parse_codec_id(rd.codec.codec);
      o.qps = rd.qps;
      o.scales = rd.scales;
      o.steps = rd.steps;
      o.seed = rd.seed;
      o.crd_enabled = !rd.no_crd;
      o.caption_enabled = !rd.no_caption;
      o.metrics = rd.metrics;
      const auto images = load_images(rd.images);
      const auto pts = eval::rd_sweep(images, pipe, o, metrics);
      {
        std::ofstream os(rd.out);
        if (!os) throw IoError("cannot write " + rd.out);
        eval::write_rd_csv(os, pts);
      }
      std::cout << "wrote " << pts.size() << " points to " << rd.out << "\n";
      if (rd.plot) {
        const fs::path out(rd.out);
        for (const auto& m : rd.metrics) {
          const fs::path svg = out.parent_path() / (out.stem().string() + "_" + m + ".svg");
          eval::write_rd_svg(svg, pts, m);
          std::cout << "wrote " << svg.string() << "\n";
        }
      }
    } else if (*bdrate) {
      auto pick = [&](const std::string& path) {
        std::vector<eval::RDPoint> out;
        for (auto& p : eval::read_rd_csv(path))
          if (p.metric == bd.metric) out.push_back(p);
        if (out.empty()) throw FormatError("no '" + bd.metric + "' rows in " + path, 0);
        return out;
      };
      const auto a = pick(bd.anchor), t = pick(bd.test);
      std::cout << "BD-rate (" << bd.metric << "): " << std::fixed << std::setprecision(4) << eval::bd_rate(a, t)
                << " %\n";
    } else if (*train) {
      train::TrainingConfig cfg = tr.config.empty() ? train::TrainingConfig{} : train::load_training_config(tr.config);
      for (const auto& kv : tr.settings) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw InvalidArgument("--set expects KEY=VALUE: " + kv);
        train::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (tr.steps) cfg.steps = *tr.steps;
      if (tr.lr) cfg.lr = *tr.lr;
      if (tr.batch) cfg.batch = *tr.batch;
      if (tr.crop) cfg.crop_size = *tr.crop;
      if (tr.seed) cfg.seed = *tr.seed;
      cfg.validate();
      const auto data = load_images(tr.data);
      const auto captions = caption_provider(tr.caption, "");
      gen::DiffusionModel model;
      train::prepare_model(model, data, cfg, &std::cout);
      fs::create_directories(tr.out);
      model.save(fs::path(tr.out) / "pretrained.ckpt");
      train::AnchorPool anchors;
      train::Trainer trainer(model, cfg, anchors, captions.get());
      trainer.run(data, tr.out, [&](const train::StepRecord& r) {
        if (tr.log_every > 0 && (r.step % tr.log_every == 0 || r.step == cfg.steps))
          std::cout << "step " << r.step << " L_diff " << r.l_diff << " L_A " << r.l_a << " total " << r.l_total
                    << "\n";
      });
      std::cout << "wrote " << (fs::path(tr.out) / "model.ckpt").string() << "\n";
    } else if (*selftest) {
      return tools::run_selftest(std::cout) ? kOk : kInternal;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
