#pragma once

#include "assr/nn/autograd.hpp"

// Differentiable primitives. Feature maps are [C, H, W]; token sequences
// [N, D]; vectors [D].
namespace assr::nn {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var silu(const Var& x);

/// x[C,H,W] + v[C] broadcast over space.
Var add_channel(const Var& x, const Var& v);
/// alpha[C] * x[C,H,W] + beta[C], per-channel.
Var channel_affine(const Var& x, const Var& alpha, const Var& beta);

/// x W^T + b for x of shape [in] or [N, in] and W of shape [out, in]. `b` may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// a[m,k] b[k,n].
Var matmul(const Var& a, const Var& b);
/// a[m,k] b[n,k]^T.
Var matmul_nt(const Var& a, const Var& b);
/// Row-wise softmax of a [m, n] matrix.
Var softmax_rows(const Var& x);

/// [C,H,W] -> [H*W, C] and back.
Var to_tokens(const Var& x);
Var from_tokens(const Var& tokens, int height, int width);

/// weight [O, C, k, k], bias [O] (may be undefined).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
/// weight [C, O, k, k], bias [O]. Output size (H - 1) * stride - 2 * pad + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

/// Nearest-neighbour x2 upsampling cropped to (height, width).
Var upsample_nearest2x(const Var& x, int height, int width);

/// Top-left crop of a [C,H,W] map.
Var crop(const Var& x, int height, int width);

/// Mean squared error and mean absolute error over all elements.
Var mse(const Var& a, const Var& b);
Var l1_mean(const Var& a, const Var& b);
Var sum(const Var& x);
/// sum(x * w) with a constant weight tensor of the same size.
Var weighted_sum(const Var& x, const Tensor& w);

double silu_value(double x);

}  // namespace assr::nn
