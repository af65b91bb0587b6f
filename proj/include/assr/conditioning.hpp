#pragma once

#include <string>

#include "assr/nn/params.hpp"

// Degradation-aware conditioning: parameter embeddings, the global adaptor
// residual block, the local E-Mod modulator and semantic attention.
namespace assr::cond {

using nn::Var;

enum class ParamKind { kCodecType, kQuality, kScale, kTimestep };
constexpr int kEmbedDim = 128;

/// Multiplier applied to a raw parameter before positional encoding.
double pre_scale(ParamKind kind);
const char* kind_name(ParamKind kind);

/// Sinusoidal encoding of an already pre-scaled value: [2k] = sin(p / 10000^(2k/dim)), [2k+1] = cos(...).
nn::Tensor positional_encode(double p_scaled, int dim = kEmbedDim);
nn::Tensor positional_encode(double p, ParamKind kind, int dim = kEmbedDim);

/// The degradation descriptor triple.
struct Degradation {
  double chi_ct = 0.0;
  double chi_qp = 0.0;
  double s = 1.0;
};

/// Emb(p) = Linear2(SiLU(Linear1(PE(pre_scale * p)))).
class ParamEmbedder {
 public:
  ParamEmbedder() = default;
  ParamEmbedder(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, ParamKind kind,
                int dim = kEmbedDim);
  Var operator()(double p) const;

  ParamKind kind() const { return kind_; }
  nn::Linear& first() { return l1_; }
  nn::Linear& second() { return l2_; }

 private:
  nn::Linear l1_, l2_;
  ParamKind kind_ = ParamKind::kTimestep;
  int dim_ = kEmbedDim;
};

/// Element-wise sum of the three parameter embeddings.
Var fuse_global_embedding(const Var& ct, const Var& qp, const Var& s);

struct DegradationEmbeddings {
  Var ct, qp, s;
};

/// One CT/QP/s embedder triple. Backbone, fidelity module and local
/// modulator each own a separate set.
class EmbedderSet {
 public:
  EmbedderSet() = default;
  EmbedderSet(nn::ParamStore& store, const std::string& prefix, nn::ParamGroup group, int dim = kEmbedDim);
  DegradationEmbeddings embed(const Degradation& d) const;
  /// fuse_global_embedding of embed(d).
  Var global(const Degradation& d) const;

 private:
  ParamEmbedder ct_, qp_, s_;
};

struct AdaptorOptions {
  bool norm = true;
  bool activation = true;
  int kernel = 3;
  int groups = 8;
};

/// Residual block with timestep and global-encoding injection:
/// h = conv1(act(norm(F))) + proj_t(t_emb) + proj_GE(GE); out = conv2(act(norm(h))) + F.
/// GE projections start at zero.
class GlobalAdaptor {
 public:
  GlobalAdaptor() = default;
  GlobalAdaptor(nn::ParamStore& store, const std::string& name, nn::ParamGroup core_group,
                nn::ParamGroup ge_group, int channels, int emb_dim = kEmbedDim, AdaptorOptions options = {});
  Var operator()(const Var& f, const Var& t_emb, const Var& ge) const;

  nn::Conv2d& conv1() { return conv1_; }
  nn::Conv2d& conv2() { return conv2_; }
  nn::Linear& proj_t() { return proj_t_; }
  nn::Linear& proj_ge() { return proj_ge_; }

 private:
  nn::GroupNorm norm1_, norm2_;
  nn::Conv2d conv1_, conv2_;
  nn::Linear proj_t_, proj_ge_;
  AdaptorOptions opt_;
  int channels_ = 0;
};

struct Modulation {
  Var alpha, beta;
};

/// F_out = alpha(emb) * F + beta(emb), per channel. Starts as the identity.
class EMod {
 public:
  EMod() = default;
  EMod(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, int emb_dim, int channels);
  Modulation modulation(const Var& emb) const;
  Var operator()(const Var& f, const Var& emb) const;

  nn::Linear& alpha() { return alpha_; }
  nn::Linear& beta() { return beta_; }

 private:
  nn::Linear alpha_, beta_;
};

/// F' = emod_ct(F); F_mod = 0.5 * (emod_qp(F') + emod_s(F')).
class LocalModulator {
 public:
  LocalModulator() = default;
  LocalModulator(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, int emb_dim, int channels);
  Var operator()(const Var& f, const DegradationEmbeddings& e) const;

  EMod& ct() { return ct_; }
  EMod& qp() { return qp_; }
  EMod& s() { return s_; }

 private:
  EMod ct_, qp_, s_;
};

/// Single-head cross attention from a feature map onto a token sequence,
/// added residually: F + tokens^-1(softmax(Q K^T / sqrt(dk)) V). W_V starts at zero.
class SemanticAttention {
 public:
  SemanticAttention() = default;
  SemanticAttention(nn::ParamStore& store, const std::string& name, nn::ParamGroup group, int channels,
                    int kv_channels, int key_dim = 32);
  /// `kv` is a token sequence [N, kv_channels].
  Var operator()(const Var& f, const Var& kv) const;
  /// Same with a [C_kv, h, w] feature map flattened spatially.
  Var attend_map(const Var& f, const Var& kv_map) const;
  /// Attention matrix [h*w, N].
  Var weights(const Var& f, const Var& kv) const;

  Var& w_q() { return w_q_; }
  Var& w_k() { return w_k_; }
  Var& w_v() { return w_v_; }

 private:
  Var w_q_, w_k_, w_v_;
  int key_dim_ = 0;
};

}  // namespace assr::cond
