#include "assr/losses.hpp"

#include "assr/errors.hpp"
#include "assr/nn/image_tensor.hpp"
#include "assr/nn/ops.hpp"
#include "assr/rescaler.hpp"

namespace assr::losses {

LossValue diffusion_loss(const nn::Var& eps, const nn::Var& eps_hat) {
  if (eps.shape() != eps_hat.shape()) {
    throw ShapeError("diffusion loss: " + nn::shape_string(eps.shape()) + " vs " + nn::shape_string(eps_hat.shape()));
  }
  LossValue out;
  out.var = nn::mse(eps_hat, eps);
  out.components["L_diff"] = out.value();
  return out;
}

std::array<nn::Tensor, 3> alignment_targets(const ImageBuffer& gt) {
  if (gt.empty()) throw InvalidArgument("alignment targets of an empty image");
  std::array<nn::Tensor, 3> out;
  int h = gt.height(), w = gt.width();
  for (std::size_t n = 0; n < 3; ++n) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    out[n] = nn::image_to_tensor(rescaler::resize(gt, h, w));
  }
  return out;
}

LossValue domain_alignment_loss(const std::array<nn::Var, 3>& rgb, const std::array<nn::Tensor, 3>& targets) {
  LossValue out;
  nn::Var total;
  for (std::size_t n = 0; n < 3; ++n) {
    if (rgb[n].shape() != targets[n].shape()) {
      throw ShapeError("alignment level " + std::to_string(n + 1) + ": prediction " +
                       nn::shape_string(rgb[n].shape()) + " vs target " + nn::shape_string(targets[n].shape()));
    }
    const nn::Var level = nn::l1_mean(rgb[n], nn::constant(targets[n]));
    out.components["L_A" + std::to_string(n + 1)] = level.value()[0];
    total = total.defined() ? nn::add(total, level) : level;
  }
  out.var = total;
  out.components["L_A"] = out.value();
  return out;
}

LossValue domain_alignment_loss(const std::array<nn::Var, 3>& rgb, const ImageBuffer& gt) {
  return domain_alignment_loss(rgb, alignment_targets(gt));
}

LossValue total_loss(const LossValue& l_a, const LossValue& l_diff, double w_a, double w_diff) {
  LossValue out;
  out.var = nn::add(nn::scale(l_a.var, w_a), nn::scale(l_diff.var, w_diff));
  out.components["L_A"] = l_a.value();
  out.components["L_diff"] = l_diff.value();
  out.components["L_total"] = out.value();
  return out;
}

}  // namespace assr::losses
