#include "assr/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <regex>
#include <sstream>

#include "assr/errors.hpp"
#include "assr/image_io.hpp"
#include "assr/rescaler.hpp"
#include "detail/process.hpp"

namespace assr::eval {

namespace {

void require_same_dims(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": image dims differ (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()) + ")");
  }
  if (a.empty()) throw InvalidArgument(std::string(what) + ": empty images");
}

// One channel as a dense plane.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Plane channel(const ImageBuffer& img, int c) {
  Plane p(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) p(y, x) = img.at(y, x, c);
  return p;
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

std::array<double, kWindow> gaussian() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    g[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable gaussian filter, valid region only.
Plane filter_valid(const Plane& p) {
  static const auto g = gaussian();
  const Eigen::Index h = p.rows(), w = p.cols();
  Plane rows(h, w - kWindow + 1);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x + kWindow <= w; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * p(y, x + k);
      rows(y, x) = s;
    }
  Plane out(h - kWindow + 1, rows.cols());
  for (Eigen::Index y = 0; y + kWindow <= h; ++y)
    for (Eigen::Index x = 0; x < rows.cols(); ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows(y + k, x);
      out(y, x) = s;
    }
  return out;
}

// Mean SSIM and mean contrast-structure term.
std::pair<double, double> ssim_cs(const Plane& x, const Plane& y) {
  const Plane mx = filter_valid(x), my = filter_valid(y);
  const Plane sxx = filter_valid(x * x), syy = filter_valid(y * y), sxy = filter_valid(x * y);
  const Plane num0 = 2.0 * mx * my;
  const Plane den0 = mx * mx + my * my;
  const Plane lum = (num0 + kC1) / (den0 + kC1);
  const Plane cs = (2.0 * sxy - num0 + kC2) / (sxx + syy - den0 + kC2);
  return {(lum * cs).mean(), cs.mean()};
}

Plane halve(const Plane& p) {
  const Eigen::Index h = (p.rows() + 1) / 2, w = (p.cols() + 1) / 2;
  Plane out(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const Eigen::Index y1 = std::min(2 * y + 1, p.rows() - 1), x1 = std::min(2 * x + 1, p.cols() - 1);
      out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y, x1) + p(y1, 2 * x) + p(y1, x1));
    }
  return out;
}

struct CubicFit {
  Eigen::Vector4d c;
  double center = 0.0;
  double half_range = 1.0;

  // Integral of the fitted polynomial over [lo, hi] in quality units.
  double integrate(double lo, double hi) const {
    auto prim = [&](double q) {
      const double u = (q - center) / half_range;
      return c[0] * u + c[1] * u * u / 2 + c[2] * u * u * u / 3 + c[3] * u * u * u * u / 4;
    };
    return half_range * (prim(hi) - prim(lo));
  }
};

CubicFit fit_cubic(std::span<const double> rate, std::span<const double> quality, const char* which) {
  if (rate.size() != quality.size()) throw InvalidArgument(std::string("bd_rate: ") + which + " rate/quality size mismatch");
  if (rate.size() < 4) throw InvalidArgument(std::string("bd_rate: ") + which + " curve needs at least 4 points");
  for (std::size_t i = 0; i < rate.size(); ++i) {
    if (!(rate[i] > 0.0) || !std::isfinite(rate[i]))
      throw InvalidArgument(std::string("bd_rate: ") + which + " rates must be finite and positive");
    if (!std::isfinite(quality[i])) throw InvalidArgument(std::string("bd_rate: ") + which + " quality not finite");
  }
  const auto [lo, hi] = std::minmax_element(quality.begin(), quality.end());
  CubicFit f;
  f.center = 0.5 * (*lo + *hi);
  f.half_range = 0.5 * (*hi - *lo);
  if (!(f.half_range > 0.0)) throw InvalidArgument(std::string("bd_rate: ") + which + " qualities are all equal");
  const auto n = static_cast<Eigen::Index>(rate.size());
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = (quality[i] - f.center) / f.half_range;
    A(i, 0) = 1.0;
    A(i, 1) = u;
    A(i, 2) = u * u;
    A(i, 3) = u * u * u;
    b[i] = std::log10(rate[i]);
  }
  const auto qr = A.colPivHouseholderQr();
  if (qr.rank() < 4) throw InvalidArgument(std::string("bd_rate: ") + which + " curve needs 4 distinct qualities");
  f.c = qr.solve(b);
  return f;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string short_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("bad number '" + s + "' on line " + std::to_string(line), line);
  }
}

}  // namespace

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b, "psnr");
  double sum = 0.0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    sum += d * d;
  }
  if (sum == 0.0) return std::numeric_limits<double>::infinity();
  return 0.0 - 10.0 * std::log10(sum / static_cast<double>(da.size()));
}

double cap_psnr(double db) { return std::min(db, kPsnrCap); }

int msssim_scales(int height, int width) {
  const int m = std::min(height, width);
  if (m < kWindow) throw InvalidArgument("ms_ssim: images must be at least 11 pixels on each side");
  int n = 1;
  while (n < 5 && m >= kWindow * (1 << n)) ++n;
  return n;
}

double ms_ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_dims(a, b, "ms_ssim");
  return ms_ssim(a, b, msssim_scales(a.height(), a.width()));
}

double ms_ssim(const ImageBuffer& a, const ImageBuffer& b, int scales) {
  require_same_dims(a, b, "ms_ssim");
  if (scales < 1 || scales > 5) throw InvalidArgument("ms_ssim: scale count must be in [1, 5]");
  if (scales > msssim_scales(a.height(), a.width())) throw InvalidArgument("ms_ssim: image too small for that many scales");
  double wsum = 0.0;
  for (int j = 0; j < scales; ++j) wsum += kWeights[j];

  double total = 0.0;
  for (int c = 0; c < ImageBuffer::kChannels; ++c) {
    Plane x = channel(a, c), y = channel(b, c);
    double score = 1.0;
    for (int j = 0; j < scales; ++j) {
      if (j > 0) {
        x = halve(x);
        y = halve(y);
      }
      const auto [ssim, cs] = ssim_cs(x, y);
      const double term = (j + 1 == scales) ? ssim : cs;
      score *= std::pow(std::max(term, 0.0), kWeights[j] / wsum);
    }
    total += score;
  }
  return total / ImageBuffer::kChannels;
}

double bd_rate(std::span<const double> anchor_rate, std::span<const double> anchor_quality,
               std::span<const double> test_rate, std::span<const double> test_quality) {
  const CubicFit fa = fit_cubic(anchor_rate, anchor_quality, "anchor");
  const CubicFit ft = fit_cubic(test_rate, test_quality, "test");
  const double lo = std::max(fa.center - fa.half_range, ft.center - ft.half_range);
  const double hi = std::min(fa.center + fa.half_range, ft.center + ft.half_range);
  if (!(hi > lo)) throw InvalidArgument("bd_rate: quality ranges do not overlap");
  const double avg = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

double bd_rate(std::span<const RDPoint> anchor, std::span<const RDPoint> test) {
  auto unpack = [](std::span<const RDPoint> pts, std::vector<double>& r, std::vector<double>& q) {
    for (const auto& p : pts) {
      r.push_back(p.bpp);
      q.push_back(p.quality);
    }
  };
  std::vector<double> ra, qa, rt, qt;
  unpack(anchor, ra, qa);
  unpack(test, rt, qt);
  return bd_rate(ra, qa, rt, qt);
}

RateTable rate_table(std::span<const ImageBuffer> images, const AnchorCodec& codec, std::span<const double> qps,
                     std::span<const double> scales) {
  if (images.empty() || qps.empty() || scales.empty()) throw InvalidArgument("rate_table: empty input");
  for (double s : scales)
    if (!(s >= 1.0) || !std::isfinite(s)) throw InvalidArgument("rate_table: scale factors must be >= 1");

  auto mean_bpp = [&](double qp, double s) {
    double sum = 0.0;
    for (const auto& img : images) {
      const auto bs = codec.encode(rescaler::downsample(img, s), QualitySpec{qp, 0.0});
      sum += measure_bpp(bs, img.height(), img.width());
    }
    return sum / static_cast<double>(images.size());
  };

  RateTable t;
  t.scales.assign(scales.begin(), scales.end());
  for (double qp : qps) {
    RateRow row;
    row.codec = codec.id();
    row.qp = qp;
    row.bpp_orig = mean_bpp(qp, 1.0);
    for (double s : scales) {
      const double b = s == 1.0 ? row.bpp_orig : mean_bpp(qp, s);
      row.bpp.push_back(b);
      row.ratio.push_back(row.bpp_orig / b);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_rate_csv(std::ostream& os, const RateTable& t) {
  os << "codec,qp,bpp_orig";
  for (double s : t.scales) os << ",bpp_s" << short_num(s) << ",ratio_s" << short_num(s);
  os << '\n';
  for (const auto& r : t.rows) {
    os << codec_name(r.codec) << ',' << fmt(r.qp) << ',' << fmt(r.bpp_orig);
    for (std::size_t i = 0; i < r.bpp.size(); ++i) os << ',' << fmt(r.bpp[i]) << ',' << fmt(r.ratio[i]);
    os << '\n';
  }
}

double parse_last_number(const std::string& text) {
  static const std::regex num(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?(?:inf|nan))");
  std::string last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), num); it != std::sregex_iterator(); ++it)
    last = it->str();
  if (last.empty()) throw FormatError("metric command printed no number", 0);
  return std::stod(last);
}

CommandMetric::CommandMetric(std::string name, std::string command) : name_(std::move(name)), command_(std::move(command)) {
  if (name_.empty()) throw InvalidArgument("metric plugin needs a name");
}

double CommandMetric::compute(const ImageBuffer& ref, const ImageBuffer& test) const {
  detail::ScratchDir dir("metric");
  const auto rp = dir.path() / "ref.png", tp = dir.path() / "test.png";
  io::write_image(rp, ref);
  io::write_image(tp, test);
  std::string cmd = detail::substitute(command_, "{ref}", detail::shell_quote(rp.string()));
  cmd = detail::substitute(cmd, "{test}", detail::shell_quote(tp.string()));
  const auto r = detail::run_capture(cmd);
  if (r.status != 0) throw IoError("metric '" + name_ + "' exited with status " + std::to_string(r.status));
  return parse_last_number(r.out);
}

CommandSetMetric::CommandSetMetric(std::string name, std::string command)
    : name_(std::move(name)), command_(std::move(command)) {
  if (name_.empty()) throw InvalidArgument("metric plugin needs a name");
}

double CommandSetMetric::compute(std::span<const ImageBuffer> refs, std::span<const ImageBuffer> tests) const {
  if (refs.size() != tests.size()) throw InvalidArgument("set metric: reference and test sets differ in size");
  detail::ScratchDir dir("setmetric");
  const auto rd = dir.path() / "ref", td = dir.path() / "test";
  std::filesystem::create_directories(rd);
  std::filesystem::create_directories(td);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    io::write_image(rd / name, refs[i]);
    io::write_image(td / name, tests[i]);
  }
  std::string cmd = detail::substitute(command_, "{ref_dir}", detail::shell_quote(rd.string()));
  cmd = detail::substitute(cmd, "{test_dir}", detail::shell_quote(td.string()));
  const auto r = detail::run_capture(cmd);
  if (r.status != 0) throw IoError("metric '" + name_ + "' exited with status " + std::to_string(r.status));
  return parse_last_number(r.out);
}

MetricRegistry::MetricRegistry() {
  add(std::make_shared<PsnrMetric>());
  add(std::make_shared<MsSsimMetric>());
}

void MetricRegistry::add(std::shared_ptr<const Metric> m) {
  if (!m) throw InvalidArgument("null metric");
  set_.erase(m->name());
  pair_[m->name()] = std::move(m);
}

void MetricRegistry::add(std::shared_ptr<const SetMetric> m) {
  if (!m) throw InvalidArgument("null metric");
  pair_.erase(m->name());
  set_[m->name()] = std::move(m);
}

bool MetricRegistry::contains(const std::string& name) const { return pair_.count(name) || set_.count(name); }

std::vector<std::string> MetricRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : pair_) out.push_back(k);
  for (const auto& [k, v] : set_) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

const Metric* MetricRegistry::pair_metric(const std::string& name) const {
  const auto it = pair_.find(name);
  return it == pair_.end() ? nullptr : it->second.get();
}

const SetMetric* MetricRegistry::set_metric(const std::string& name) const {
  const auto it = set_.find(name);
  return it == set_.end() ? nullptr : it->second.get();
}

std::vector<RDPoint> rd_sweep(std::span<const ImageBuffer> images, const pipeline::Pipeline& pipe,
                              const SweepOptions& opts, const MetricRegistry& metrics) {
  if (images.empty() || opts.qps.empty() || opts.scales.empty() || opts.metrics.empty())
    throw InvalidArgument("rd_sweep: empty input");
  for (const auto& m : opts.metrics)
    if (!metrics.contains(m)) throw InvalidArgument("rd_sweep: unknown metric '" + m + "'");

  std::vector<RDPoint> out;
  for (double qp : opts.qps) {
    for (double s : opts.scales) {
      pipeline::EncodingParams p;
      p.codec = opts.codec;
      p.quality = {qp, 0.0};
      p.s = s;
      p.crd_enabled = opts.crd_enabled;
      p.caption_enabled = opts.caption_enabled;

      std::vector<ImageBuffer> decoded;
      double bpp = 0.0, anchor_bpp = 0.0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        const auto c = pipe.compress(images[i], p);
        const auto rr = pipeline::rate_report(c);
        bpp += rr.total_bpp;
        anchor_bpp += rr.anchor_bpp;
        decoded.push_back(pipe.decompress(c, opts.steps, opts.seed + i));
      }
      const double n = static_cast<double>(images.size());
      for (const auto& name : opts.metrics) {
        RDPoint pt;
        pt.metric = name;
        pt.config = {opts.codec, qp, pipeline::stored_scale(s)};
        pt.bpp = bpp / n;
        pt.anchor_bpp = anchor_bpp / n;
        if (const Metric* m = metrics.pair_metric(name)) {
          double q = 0.0;
          for (std::size_t i = 0; i < images.size(); ++i) q += m->compute(images[i], decoded[i]);
          pt.quality = q / n;
        } else {
          pt.quality = metrics.set_metric(name)->compute(images, decoded);
        }
        out.push_back(std::move(pt));
      }
    }
  }
  return out;
}

void write_rd_csv(std::ostream& os, std::span<const RDPoint> points) {
  os << "codec,qp,s,metric,bpp,anchor_bpp,quality\n";
  for (const auto& p : points) {
    const double q = p.metric == "psnr" ? cap_psnr(p.quality) : p.quality;
    os << codec_name(p.config.codec) << ',' << fmt(p.config.qp) << ',' << fmt(p.config.s) << ',' << p.metric << ','
       << fmt(p.bpp) << ',' << fmt(p.anchor_bpp) << ',' << fmt(q) << '\n';
  }
}

std::vector<RDPoint> read_rd_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty R-D csv " + path.string(), 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "codec,qp,s,metric,bpp,anchor_bpp,quality")
    throw FormatError("unexpected R-D csv header in " + path.string(), 0);
  std::vector<RDPoint> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw FormatError("expected 7 fields on line " + std::to_string(lineno), lineno);
    RDPoint p;
    try {
      p.config.codec = parse_codec_id(f[0]);
    } catch (const InvalidArgument&) {
      throw FormatError("unknown codec '" + f[0] + "' on line " + std::to_string(lineno), lineno);
    }
    p.config.qp = to_double(f[1], lineno);
    p.config.s = to_double(f[2], lineno);
    p.metric = f[3];
    p.bpp = to_double(f[4], lineno);
    p.anchor_bpp = to_double(f[5], lineno);
    p.quality = to_double(f[6], lineno);
    if (!(p.bpp > 0.0)) throw FormatError("bpp must be positive on line " + std::to_string(lineno), lineno);
    out.push_back(std::move(p));
  }
  return out;
}

void write_rd_svg(const std::filesystem::path& path, std::span<const RDPoint> points, const std::string& metric) {
  std::map<double, std::vector<std::pair<double, double>>> curves;
  for (const auto& p : points)
    if (p.metric == metric) curves[p.config.s].push_back({p.bpp, p.metric == "psnr" ? cap_psnr(p.quality) : p.quality});
  if (curves.empty()) throw InvalidArgument("write_rd_svg: no points for metric '" + metric + "'");

  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (auto& [s, pts] : curves) {
    std::sort(pts.begin(), pts.end());
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 - x0 < 1e-12) x1 = x0 + 1e-3;
  if (y1 - y0 < 1e-12) y1 = y0 + 1e-3;
  const double W = 640, H = 480, L = 70, R = 20, T = 30, B = 50;
  auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << std::setprecision(3) << xv << "</text>\n"
       << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << yv
       << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" font-size=\"13\" text-anchor=\"middle\">bpp</text>\n"
     << "<text x=\"16\" y=\"" << H / 2 << "\" font-size=\"13\" transform=\"rotate(-90 16 " << H / 2
     << ")\" text-anchor=\"middle\">" << metric << "</text>\n";
  int k = 0;
  for (const auto& [s, pts] : curves) {
    const char* col = colors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) os << sx(x) << ',' << sy(y) << ' ';
    os << "\"/>\n";
    for (const auto& [x, y] : pts)
      os << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
    os << "<text x=\"" << W - R - 70 << "\" y=\"" << T + 16 * (k + 1) << "\" font-size=\"12\" fill=\"" << col
       << "\">s = " << s << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
}

}  // namespace assr::eval
