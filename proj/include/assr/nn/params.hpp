#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "assr/nn/autograd.hpp"

namespace assr::nn {

/// Parameter groups for the freezing policy.
enum class ParamGroup : std::uint8_t {
  kBackboneCore = 0,     // denoiser convs, norms, timestep network
  kGlobalEmbedding = 1,  // CT/QP/s embedding MLPs and GE projections of the backbone
  kFidelity = 2,
  kLocalModulator = 3,
  kAttention = 4,      // semantic and caption attention projections, null caption token
  kImageEncoder = 5,   // trainable encoder applied to x_g plus toRGB heads
  kAutoencoder = 6,    // latent encoder/decoder
  kSemanticEncoder = 7,
  kCaptionTable = 8,
};
constexpr int kParamGroupCount = 9;
const char* group_name(ParamGroup g);

enum class Init { kZeros, kOnes, kNormal, kIdentity };

struct ParamEntry {
  std::string name;
  ParamGroup group;
  Var var;
};

/// Named parameter registry. Layers hold Var handles that share nodes with
/// the entries here, so loading or stepping in place is visible everywhere.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  /// `std` scales kNormal. Names must be unique.
  Var create(const std::string& name, ParamGroup group, std::vector<int> shape, Init init, double std = 0.0);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Var get(const std::string& name) const;
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<Var> group_params(ParamGroup g) const;
  std::size_t parameter_count() const;

  void set_trainable(ParamGroup g, bool on);
  bool trainable(ParamGroup g) const;
  void freeze_all();
  std::vector<Var> trainable_params() const;
  void zero_grad();

  /// Copies values of every `src_prefix*` entry onto `dst_prefix*` entries with
  /// the same suffix and shape. Returns the number copied.
  int copy_prefix(const std::string& src_prefix, const std::string& dst_prefix);

  /// FNV-1a over the raw bytes of a group's values.
  std::uint64_t group_hash(ParamGroup g) const;

  /// Versioned binary checkpoint (see README).
  void save(const std::filesystem::path& path) const;
  /// Loads every entry present in the file; names absent from the store are
  /// ignored, shape mismatches throw. Returns names loaded.
  std::vector<std::string> load(const std::filesystem::path& path);

  std::vector<std::uint8_t> serialize() const;
  std::vector<std::string> deserialize(const std::vector<std::uint8_t>& bytes);

 private:
  std::mt19937_64 rng_;
  std::vector<ParamEntry> entries_;
  std::map<std::string, std::size_t> index_;
  bool trainable_[kParamGroupCount] = {};
};

/// Adam with bias correction. State is keyed by parameter node.
class Adam {
 public:
  explicit Adam(std::vector<Var> params, double lr = 5e-5, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  /// Applies one update from the accumulated grads, then clears them.
  void step();
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long steps() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Thin layers over the registry.

struct Linear {
  Var weight, bias;
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, ParamGroup g, int in, int out, Init w_init = Init::kNormal,
         Init b_init = Init::kZeros);
  Var operator()(const Var& x) const;
};

struct Conv2d {
  Var weight, bias;
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, ParamGroup g, int in, int out, int kernel, int stride = 1,
         Init w_init = Init::kNormal);
  Var operator()(const Var& x) const;
};

struct ConvTranspose2d {
  Var weight, bias;
  int stride = 2, pad = 1;
  ConvTranspose2d() = default;
  /// Kernel 4, stride 2, pad 1: exact x2 upsampling.
  ConvTranspose2d(ParamStore& store, const std::string& name, ParamGroup g, int in, int out);
  Var operator()(const Var& x) const;
};

struct GroupNorm {
  Var gamma, beta;
  int groups = 1;
  GroupNorm() = default;
  GroupNorm(ParamStore& store, const std::string& name, ParamGroup g, int channels, int groups);
  Var operator()(const Var& x) const;
};

}  // namespace assr::nn
