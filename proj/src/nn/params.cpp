#include "assr/nn/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "assr/bit_io.hpp"
#include "assr/errors.hpp"
#include "assr/nn/ops.hpp"

namespace assr::nn {
namespace {

constexpr char kMagic[4] = {'A', 'E', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(std::span<const std::uint8_t> in, std::size_t offset) {
  if (offset + 8 > in.size()) throw TruncatedError("truncated 64-bit field", in.size());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  return v;
}

void init_tensor(Tensor& t, Init init, double std, std::mt19937_64& rng) {
  switch (init) {
    case Init::kZeros:
      t.fill(0.0);
      break;
    case Init::kOnes:
      t.fill(1.0);
      break;
    case Init::kNormal: {
      if (std <= 0.0) {
        const double fan_in = t.rank() > 0 && t.dim(0) > 0 ? static_cast<double>(t.size()) / t.dim(0) : 1.0;
        std = 1.0 / std::sqrt(fan_in);
      }
      std::normal_distribution<double> dist(0.0, std);
      for (double& v : t.values()) v = dist(rng);
      break;
    }
    case Init::kIdentity: {
      t.fill(0.0);
      if (t.rank() < 2) throw InvalidArgument("identity init needs a matrix or kernel");
      const int n = std::min(t.dim(0), t.dim(1));
      const std::size_t inner = t.size() / (static_cast<std::size_t>(t.dim(0)) * t.dim(1));
      for (int i = 0; i < n; ++i) t[(static_cast<std::size_t>(i) * t.dim(1) + i) * inner + inner / 2] = 1.0;
      break;
    }
  }
}

}  // namespace

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kBackboneCore: return "backbone_core";
    case ParamGroup::kGlobalEmbedding: return "global_embedding";
    case ParamGroup::kFidelity: return "fidelity";
    case ParamGroup::kLocalModulator: return "local_modulator";
    case ParamGroup::kAttention: return "attention";
    case ParamGroup::kImageEncoder: return "image_encoder";
    case ParamGroup::kAutoencoder: return "autoencoder";
    case ParamGroup::kSemanticEncoder: return "semantic_encoder";
    case ParamGroup::kCaptionTable: return "caption_table";
  }
  return "unknown";
}

Var ParamStore::create(const std::string& name, ParamGroup group, std::vector<int> shape, Init init, double std) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter name: " + name);
  Tensor t(std::move(shape));
  init_tensor(t, init, std, rng_);
  Var v(std::move(t), trainable(group));
  index_[name] = entries_.size();
  entries_.push_back({name, group, v});
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter: " + name);
  return entries_[it->second].var;
}

std::vector<Var> ParamStore::group_params(ParamGroup g) const {
  std::vector<Var> out;
  for (const auto& e : entries_)
    if (e.group == g) out.push_back(e.var);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParamStore::set_trainable(ParamGroup g, bool on) {
  trainable_[static_cast<int>(g)] = on;
  for (auto& e : entries_)
    if (e.group == g) e.var.set_requires_grad(on);
}

bool ParamStore::trainable(ParamGroup g) const { return trainable_[static_cast<int>(g)]; }

void ParamStore::freeze_all() {
  for (int g = 0; g < kParamGroupCount; ++g) set_trainable(static_cast<ParamGroup>(g), false);
}

std::vector<Var> ParamStore::trainable_params() const {
  std::vector<Var> out;
  for (const auto& e : entries_)
    if (trainable(e.group)) out.push_back(e.var);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

int ParamStore::copy_prefix(const std::string& src_prefix, const std::string& dst_prefix) {
  int copied = 0;
  for (auto& e : entries_) {
    if (e.name.rfind(dst_prefix, 0) != 0) continue;
    const std::string src = src_prefix + e.name.substr(dst_prefix.size());
    auto it = index_.find(src);
    if (it == index_.end()) continue;
    const Var& from = entries_[it->second].var;
    if (from.shape() != e.var.shape()) continue;
    e.var.mutable_value() = from.value();
    ++copied;
  }
  return copied;
}

std::uint64_t ParamStore::group_hash(ParamGroup g) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& e : entries_) {
    if (e.group != g) continue;
    for (double v : e.var.value().values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

std::vector<std::uint8_t> ParamStore::serialize() const {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32_le(out, kVersion);
  put_u32_le(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    put_u32_le(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.group));
    out.push_back(trainable(e.group) ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(e.var.value().rank()));
    for (int d : e.var.shape()) put_u32_le(out, static_cast<std::uint32_t>(d));
    for (double v : e.var.value().values()) put_u64_le(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<std::string> ParamStore::deserialize(const std::vector<std::uint8_t>& bytes) {
  std::span<const std::uint8_t> in(bytes);
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint", 0);
  const std::uint32_t version = get_u32_le(in, 4);
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint32_t count = get_u32_le(in, 8);
  std::size_t pos = 12;
  std::vector<std::string> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32_le(in, pos);
    pos += 4;
    if (pos + name_len + 3 > in.size()) throw TruncatedError("truncated checkpoint entry", in.size());
    std::string name(reinterpret_cast<const char*>(in.data() + pos), name_len);
    pos += name_len;
    pos += 2;  // group, trainable flag: informational
    const int rank = in[pos++];
    std::vector<int> shape(static_cast<std::size_t>(rank));
    for (int& d : shape) {
      d = static_cast<int>(get_u32_le(in, pos));
      pos += 4;
    }
    const std::size_t n = element_count(shape);
    if (pos + 8 * n > in.size()) throw TruncatedError("truncated checkpoint data for " + name, in.size());
    auto it = index_.find(name);
    if (it != index_.end()) {
      Var& v = entries_[it->second].var;
      if (v.shape() != shape) {
        throw FormatError("checkpoint shape mismatch for " + name + ": " + shape_string(shape) + " vs " +
                              shape_string(v.shape()),
                          pos);
      }
      Tensor& t = v.mutable_value();
      for (std::size_t k = 0; k < n; ++k) t[k] = std::bit_cast<double>(get_u64_le(in, pos + 8 * k));
      loaded.push_back(name);
    }
    pos += 8 * n;
  }
  if (pos != in.size()) throw FormatError("trailing bytes after checkpoint", pos);
  return loaded;
}

void ParamStore::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<std::string> ParamStore::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    const Tensor& g = p.grad();
    if (!g.empty()) {
      Tensor& w = p.mutable_value();
      for (std::size_t k = 0; k < w.size(); ++k) {
        m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
        v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
        w[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
      }
    }
    p.zero_grad();
  }
}

Linear::Linear(ParamStore& store, const std::string& name, ParamGroup g, int in, int out, Init w_init, Init b_init)
    : weight(store.create(name + ".weight", g, {out, in}, w_init)),
      bias(store.create(name + ".bias", g, {out}, b_init)) {}

Var Linear::operator()(const Var& x) const { return linear(x, weight, bias); }

Conv2d::Conv2d(ParamStore& store, const std::string& name, ParamGroup g, int in, int out, int kernel, int stride_,
               Init w_init)
    : weight(store.create(name + ".weight", g, {out, in, kernel, kernel}, w_init)),
      bias(store.create(name + ".bias", g, {out}, Init::kZeros)),
      stride(stride_),
      pad(kernel / 2) {}

Var Conv2d::operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }

ConvTranspose2d::ConvTranspose2d(ParamStore& store, const std::string& name, ParamGroup g, int in, int out)
    : weight(store.create(name + ".weight", g, {in, out, 4, 4}, Init::kNormal, 1.0 / std::sqrt(4.0 * in))),
      bias(store.create(name + ".bias", g, {out}, Init::kZeros)) {}

Var ConvTranspose2d::operator()(const Var& x) const { return conv_transpose2d(x, weight, bias, stride, pad); }

GroupNorm::GroupNorm(ParamStore& store, const std::string& name, ParamGroup g, int channels, int groups_)
    : gamma(store.create(name + ".gamma", g, {channels}, Init::kOnes)),
      beta(store.create(name + ".beta", g, {channels}, Init::kZeros)),
      groups(groups_) {}

Var GroupNorm::operator()(const Var& x) const { return group_norm(x, gamma, beta, groups); }

}  // namespace assr::nn
