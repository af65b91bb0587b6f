#include "assr/conditioning.hpp"

#include <cmath>

#include "assr/errors.hpp"
#include "assr/nn/ops.hpp"

namespace assr::cond {

using nn::Init;
using nn::Tensor;

double pre_scale(ParamKind kind) {
  switch (kind) {
    case ParamKind::kCodecType: return 100.0;
    case ParamKind::kQuality: return 1000.0;
    case ParamKind::kScale: return 100.0;
    case ParamKind::kTimestep: return 1.0;
  }
  return 1.0;
}

const char* kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::kCodecType: return "ct";
    case ParamKind::kQuality: return "qp";
    case ParamKind::kScale: return "s";
    case ParamKind::kTimestep: return "t";
  }
  return "?";
}

Tensor positional_encode(double p_scaled, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw InvalidArgument("positional encoding dim must be even and positive");
  Tensor out({dim});
  for (int k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, 2.0 * k / dim);
    out[2 * k] = std::sin(p_scaled / freq);
    out[2 * k + 1] = std::cos(p_scaled / freq);
  }
  return out;
}

Tensor positional_encode(double p, ParamKind kind, int dim) { return positional_encode(pre_scale(kind) * p, dim); }

ParamEmbedder::ParamEmbedder(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, ParamKind kind,
                             int dim)
    : l1_(store, name + ".l1", group, dim, dim),
      l2_(store, name + ".l2", group, dim, dim),
      kind_(kind),
      dim_(dim) {}

Var ParamEmbedder::operator()(double p) const {
  const Var pe = nn::constant(positional_encode(p, kind_, dim_));
  return l2_(nn::silu(l1_(pe)));
}

Var fuse_global_embedding(const Var& ct, const Var& qp, const Var& s) { return nn::add(nn::add(ct, qp), s); }

EmbedderSet::EmbedderSet(nn::ParamStore& store, const std::string& prefix, nn::ParamGroup group, int dim)
    : ct_(store, prefix + ".ct_emb", group, ParamKind::kCodecType, dim),
      qp_(store, prefix + ".qp_emb", group, ParamKind::kQuality, dim),
      s_(store, prefix + ".s_emb", group, ParamKind::kScale, dim) {}

DegradationEmbeddings EmbedderSet::embed(const Degradation& d) const { return {ct_(d.chi_ct), qp_(d.chi_qp), s_(d.s)}; }

Var EmbedderSet::global(const Degradation& d) const {
  const auto e = embed(d);
  return fuse_global_embedding(e.ct, e.qp, e.s);
}

GlobalAdaptor::GlobalAdaptor(nn::ParamStore& store, const std::string& name, nn::ParamGroup core_group,
                             nn::ParamGroup ge_group, int channels, int emb_dim, AdaptorOptions options)
    : opt_(options), channels_(channels) {
  if (opt_.norm) {
    norm1_ = nn::GroupNorm(store, name + ".norm1", core_group, channels, opt_.groups);
    norm2_ = nn::GroupNorm(store, name + ".norm2", core_group, channels, opt_.groups);
  }
  conv1_ = nn::Conv2d(store, name + ".conv1", core_group, channels, channels, opt_.kernel);
  conv2_ = nn::Conv2d(store, name + ".conv2", core_group, channels, channels, opt_.kernel);
  proj_t_ = nn::Linear(store, name + ".proj_t", core_group, emb_dim, channels);
  proj_ge_ = nn::Linear(store, name + ".proj_ge", ge_group, emb_dim, channels, Init::kZeros, Init::kZeros);
}

Var GlobalAdaptor::operator()(const Var& f, const Var& t_emb, const Var& ge) const {
  if (f.value().rank() != 3 || f.dim(0) != channels_) {
    throw ShapeError("global adaptor expects " + std::to_string(channels_) + " channels, got " +
                     nn::shape_string(f.shape()));
  }
  auto pre = [this](const Var& x, const nn::GroupNorm& norm) {
    Var y = opt_.norm ? norm(x) : x;
    return opt_.activation ? nn::silu(y) : y;
  };
  Var h = conv1_(pre(f, norm1_));
  h = nn::add_channel(h, nn::add(proj_t_(t_emb), proj_ge_(ge)));
  return nn::add(conv2_(pre(h, norm2_)), f);
}

EMod::EMod(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, int emb_dim, int channels)
    : alpha_(store, name + ".alpha", group, emb_dim, channels, Init::kZeros, Init::kOnes),
      beta_(store, name + ".beta", group, emb_dim, channels, Init::kZeros, Init::kZeros) {}

Modulation EMod::modulation(const Var& emb) const { return {alpha_(emb), beta_(emb)}; }

Var EMod::operator()(const Var& f, const Var& emb) const {
  const auto m = modulation(emb);
  return nn::channel_affine(f, m.alpha, m.beta);
}

LocalModulator::LocalModulator(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, int emb_dim,
                               int channels)
    : ct_(store, name + ".ct", group, emb_dim, channels),
      qp_(store, name + ".qp", group, emb_dim, channels),
      s_(store, name + ".s", group, emb_dim, channels) {}

Var LocalModulator::operator()(const Var& f, const DegradationEmbeddings& e) const {
  const Var f1 = ct_(f, e.ct);
  return nn::scale(nn::add(qp_(f1, e.qp), s_(f1, e.s)), 0.5);
}

SemanticAttention::SemanticAttention(nn::ParamStore& store, const std::string& name, nn::ParamGroup group,
                                     int channels, int kv_channels, int key_dim)
    : key_dim_(key_dim) {
  if (key_dim <= 0) throw InvalidArgument("attention key dimension must be positive");
  w_q_ = store.create(name + ".w_q", group, {key_dim, channels}, Init::kNormal);
  w_k_ = store.create(name + ".w_k", group, {key_dim, kv_channels}, Init::kNormal);
  w_v_ = store.create(name + ".w_v", group, {channels, kv_channels}, Init::kZeros);
}

Var SemanticAttention::weights(const Var& f, const Var& kv) const {
  if (f.value().rank() != 3 || f.dim(0) != w_q_.dim(1)) throw ShapeError("attention query channel mismatch");
  if (kv.value().rank() != 2 || kv.dim(1) != w_k_.dim(1)) throw ShapeError("attention key/value channel mismatch");
  const Var q = nn::linear(nn::to_tokens(f), w_q_, Var());
  const Var k = nn::linear(kv, w_k_, Var());
  return nn::softmax_rows(nn::scale(nn::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(key_dim_))));
}

Var SemanticAttention::operator()(const Var& f, const Var& kv) const {
  const Var a = weights(f, kv);
  const Var v = nn::linear(kv, w_v_, Var());
  return nn::add(f, nn::from_tokens(nn::matmul(a, v), f.dim(1), f.dim(2)));
}

Var SemanticAttention::attend_map(const Var& f, const Var& kv_map) const {
  if (kv_map.value().rank() != 3) throw ShapeError("semantic features must be [C, h, w]");
  return (*this)(f, nn::to_tokens(kv_map));
}

}  // namespace assr::cond
