#pragma once

#include <array>
#include <map>
#include <string>

#include "assr/image.hpp"
#include "assr/nn/autograd.hpp"

namespace assr::losses {

/// Scalar loss node plus named components for logging.
struct LossValue {
  nn::Var var;
  std::map<std::string, double> components;
  double value() const { return var.value()[0]; }
};

/// Mean squared error between true and predicted noise.
LossValue diffusion_loss(const nn::Var& eps, const nn::Var& eps_hat);

/// Bicubic-downsampled ground truth at ceil(H / 2^n) x ceil(W / 2^n), n = 1..3.
std::array<nn::Tensor, 3> alignment_targets(const ImageBuffer& gt);

/// Sum over levels of mean |x^(n) - toRGB(f_n)|.
LossValue domain_alignment_loss(const std::array<nn::Var, 3>& rgb, const ImageBuffer& gt);
LossValue domain_alignment_loss(const std::array<nn::Var, 3>& rgb, const std::array<nn::Tensor, 3>& targets);

/// w_a * L_A + w_diff * L_diff.
LossValue total_loss(const LossValue& l_a, const LossValue& l_diff, double w_a = 1.0, double w_diff = 1.0);

}  // namespace assr::losses
