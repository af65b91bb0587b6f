#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "assr/anchor_codec.hpp"
#include "assr/image.hpp"
#include "assr/pipeline.hpp"

namespace assr::eval {

/// +inf for identical images. Unit dynamic range.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Finite stand-in for +inf PSNR in CSV output.
inline constexpr double kPsnrCap = 99.0;
double cap_psnr(double db);

/// Number of MS-SSIM scales used for an image: the largest n <= 5 with
/// min(h, w) >= 11 * 2^(n-1). Throws InvalidArgument below 11 pixels.
int msssim_scales(int height, int width);

/// Multi-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, valid filtering and 2x2 average pooling between scales (odd
/// dims are padded by repeating the last row/column). Fewer than five scales
/// use the leading weights renormalized to sum to one. Per-channel values are
/// averaged.
double ms_ssim(const ImageBuffer& a, const ImageBuffer& b);
double ms_ssim(const ImageBuffer& a, const ImageBuffer& b, int scales);

struct RDConfig {
  CodecId codec = CodecId::kToyDct;
  double qp = 0.0;
  double s = 1.0;
};

struct RDPoint {
  double bpp = 0.0;  // whole container
  double quality = 0.0;
  std::string metric;
  RDConfig config;
  double anchor_bpp = 0.0;  // bitstream only
};

/// Bjontegaard delta rate in percent: cubic least-squares fits of log10(rate)
/// against quality, averaged over the overlapping quality interval.
/// Negative means the test curve needs less rate. Needs >= 4 points per
/// curve with at least 4 distinct qualities.
double bd_rate(std::span<const double> anchor_rate, std::span<const double> anchor_quality,
               std::span<const double> test_rate, std::span<const double> test_quality);
double bd_rate(std::span<const RDPoint> anchor, std::span<const RDPoint> test);

struct RateRow {
  CodecId codec = CodecId::kToyDct;
  double qp = 0.0;
  double bpp_orig = 0.0;
  std::vector<double> bpp;    // one per scale
  std::vector<double> ratio;  // bpp_orig / bpp
};

struct RateTable {
  std::vector<double> scales;
  std::vector<RateRow> rows;
};

/// Mean anchor-only bpp (against the original dims) per (qp, s). bpp_orig is
/// the s = 1 rate.
RateTable rate_table(std::span<const ImageBuffer> images, const AnchorCodec& codec, std::span<const double> qps,
                     std::span<const double> scales);
/// codec,qp,bpp_orig then bpp_s<s>,ratio_s<s> per scale.
void write_rate_csv(std::ostream& os, const RateTable& t);

/// Full-reference metric on one image pair.
class Metric {
 public:
  virtual ~Metric() = default;
  virtual std::string name() const = 0;
  virtual double compute(const ImageBuffer& ref, const ImageBuffer& test) const = 0;
};

/// Distribution metric over a whole set (FID and friends).
class SetMetric {
 public:
  virtual ~SetMetric() = default;
  virtual std::string name() const = 0;
  virtual double compute(std::span<const ImageBuffer> refs, std::span<const ImageBuffer> tests) const = 0;
};

class PsnrMetric final : public Metric {
 public:
  std::string name() const override { return "psnr"; }
  double compute(const ImageBuffer& ref, const ImageBuffer& test) const override { return cap_psnr(psnr(ref, test)); }
};

class MsSsimMetric final : public Metric {
 public:
  std::string name() const override { return "ms_ssim"; }
  double compute(const ImageBuffer& ref, const ImageBuffer& test) const override { return ms_ssim(ref, test); }
};

/// Shells out. `{ref}` and `{test}` become PNG paths; the last number printed
/// on stdout is the score.
class CommandMetric final : public Metric {
 public:
  CommandMetric(std::string name, std::string command);
  std::string name() const override { return name_; }
  double compute(const ImageBuffer& ref, const ImageBuffer& test) const override;

 private:
  std::string name_;
  std::string command_;
};

/// Like CommandMetric with `{ref_dir}` and `{test_dir}` holding numbered PNGs.
class CommandSetMetric final : public SetMetric {
 public:
  CommandSetMetric(std::string name, std::string command);
  std::string name() const override { return name_; }
  double compute(std::span<const ImageBuffer> refs, std::span<const ImageBuffer> tests) const override;

 private:
  std::string name_;
  std::string command_;
};

/// Last floating-point number in a command's output. Throws FormatError if none.
double parse_last_number(const std::string& text);

class MetricRegistry {
 public:
  /// psnr and ms_ssim.
  MetricRegistry();
  void add(std::shared_ptr<const Metric> m);
  void add(std::shared_ptr<const SetMetric> m);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

  const Metric* pair_metric(const std::string& name) const;
  const SetMetric* set_metric(const std::string& name) const;

 private:
  std::map<std::string, std::shared_ptr<const Metric>> pair_;
  std::map<std::string, std::shared_ptr<const SetMetric>> set_;
};

struct SweepOptions {
  CodecId codec = CodecId::kToyDct;
  std::vector<double> qps;
  std::vector<double> scales;
  int steps = 50;
  std::uint64_t seed = 0;
  bool crd_enabled = true;
  bool caption_enabled = true;
  std::vector<std::string> metrics = {"psnr", "ms_ssim"};
};

/// Compresses and decompresses every image for every (qp, s). One point per
/// (qp, s, metric): bpp and pair metrics averaged over images, set metrics
/// computed over the whole set. Rows are ordered qp, then s, then metric.
std::vector<RDPoint> rd_sweep(std::span<const ImageBuffer> images, const pipeline::Pipeline& pipe,
                              const SweepOptions& opts, const MetricRegistry& metrics = MetricRegistry());

/// codec,qp,s,metric,bpp,anchor_bpp,quality
void write_rd_csv(std::ostream& os, std::span<const RDPoint> points);
std::vector<RDPoint> read_rd_csv(const std::filesystem::path& path);

/// Quality vs bpp for one metric, one polyline per scale factor.
void write_rd_svg(const std::filesystem::path& path, std::span<const RDPoint> points, const std::string& metric);

}  // namespace assr::eval
