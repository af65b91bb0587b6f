#include "assr/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "assr/errors.hpp"

namespace assr::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(const Tensor& t, int rows, int cols) { return ConstMatMap(t.data(), rows, cols); }
MatMap as_matrix(Tensor& t, int rows, int cols) { return MatMap(t.data(), rows, cols); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(const Var& x, int rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(x.shape()));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ConvGeometry {
  int channels, height, width, kernel, stride, pad, out_h, out_w;
};

// cols[(c*k + ky)*k + kx, oy*out_w + ox] = img[c, oy*s - p + ky, ox*s - p + kx] (zero outside).
Tensor im2col(const Tensor& img, const ConvGeometry& g) {
  const int k = g.kernel;
  Tensor cols({g.channels * k * k, g.out_h * g.out_w});
  double* dst = cols.data();
  const double* src = img.data();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, 0.0);
            dst += g.out_w;
            continue;
          }
          const double* row = src + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            *dst++ = (ix >= 0 && ix < g.width) ? row[ix] : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds columns back onto an image of the geometry's input size.
Tensor col2im(const Tensor& cols, const ConvGeometry& g) {
  const int k = g.kernel;
  Tensor img({g.channels, g.height, g.width});
  const double* src = cols.data();
  double* dst = img.data();
  for (int c = 0; c < g.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.height) {
            src += g.out_w;
            continue;
          }
          double* row = dst + (static_cast<std::size_t>(c) * g.height + iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.width) row[ix] += *src;
            ++src;
          }
        }
      }
    }
  }
  return img;
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

double silu_value(double x) { return x * sigmoid(x); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor g = self.grad;
      for (double& v : g.values()) v = -v;
      self.parents[1]->accumulate(g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pb.value[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pa.value[i];
      pb.accumulate(g);
    }
  });
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= k;
  return make_result(std::move(out), {a}, [k](Node& self) {
    Tensor g = self.grad;
    for (double& v : g.values()) v *= k;
    self.parents[0]->accumulate(g);
  });
}

Var silu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = silu_value(v);
  return make_result(std::move(out), {x}, [](Node& self) {
    const Tensor& in = self.parents[0]->value;
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(in[i]);
      g[i] *= s * (1.0 + in[i] * (1.0 - s));
    }
    self.parents[0]->accumulate(g);
  });
}

Var add_channel(const Var& x, const Var& v) {
  require_rank(x, 3, "add_channel");
  const int C = x.dim(0);
  const int hw = x.dim(1) * x.dim(2);
  if (v.value().size() != static_cast<std::size_t>(C)) throw ShapeError("add_channel: vector length != channels");
  Tensor out = x.value();
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < hw; ++i) out[static_cast<std::size_t>(c) * hw + i] += v.value()[c];
  return make_result(std::move(out), {x, v}, [C, hw](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor g(self.parents[1]->value.shape());
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < hw; ++i) g[c] += self.grad[static_cast<std::size_t>(c) * hw + i];
      self.parents[1]->accumulate(g);
    }
  });
}

Var channel_affine(const Var& x, const Var& alpha, const Var& beta) {
  require_rank(x, 3, "channel_affine");
  const int C = x.dim(0);
  const int hw = x.dim(1) * x.dim(2);
  if (alpha.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C)) {
    throw ShapeError("channel_affine: gain/bias length != channels");
  }
  Tensor out = x.value();
  for (int c = 0; c < C; ++c) {
    for (int i = 0; i < hw; ++i) {
      double& v = out[static_cast<std::size_t>(c) * hw + i];
      v = alpha.value()[c] * v + beta.value()[c];
    }
  }
  return make_result(std::move(out), {x, alpha, beta}, [C, hw](Node& self) {
    Node& px = *self.parents[0];
    Node& pa = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) {
      Tensor g = self.grad;
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < hw; ++i) g[static_cast<std::size_t>(c) * hw + i] *= pa.value[c];
      px.accumulate(g);
    }
    if (pa.requires_grad) {
      Tensor g(pa.value.shape());
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < hw; ++i) {
          const std::size_t k = static_cast<std::size_t>(c) * hw + i;
          g[c] += self.grad[k] * px.value[k];
        }
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g(pb.value.shape());
      for (int c = 0; c < C; ++c)
        for (int i = 0; i < hw; ++i) g[c] += self.grad[static_cast<std::size_t>(c) * hw + i];
      pb.accumulate(g);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(weight, 2, "linear");
  const int out_dim = weight.dim(0);
  const int in_dim = weight.dim(1);
  const bool vector_input = x.value().rank() == 1;
  const int n = vector_input ? 1 : x.dim(0);
  const int x_in = vector_input ? x.dim(0) : x.dim(1);
  if (x_in != in_dim || x.value().rank() > 2) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.value().size() != static_cast<std::size_t>(out_dim)) throw ShapeError("linear: bias length");

  Tensor out(vector_input ? std::vector<int>{out_dim} : std::vector<int>{n, out_dim});
  as_matrix(out, n, out_dim).noalias() = as_matrix(x.value(), n, in_dim) * as_matrix(weight.value(), out_dim, in_dim).transpose();
  if (has_bias) {
    for (int r = 0; r < n; ++r)
      for (int o = 0; o < out_dim; ++o) out[static_cast<std::size_t>(r) * out_dim + o] += bias.value()[o];
  }
  std::vector<Var> parents = {x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [n, in_dim, out_dim, has_bias](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const auto gy = as_matrix(self.grad, n, out_dim);
    if (px.requires_grad) {
      Tensor g(px.value.shape());
      as_matrix(g, n, in_dim).noalias() = gy * as_matrix(pw.value, out_dim, in_dim);
      px.accumulate(g);
    }
    if (pw.requires_grad) {
      Tensor g(pw.value.shape());
      as_matrix(g, out_dim, in_dim).noalias() = gy.transpose() * as_matrix(px.value, n, in_dim);
      pw.accumulate(g);
    }
    if (has_bias && self.parents[2]->requires_grad) {
      Tensor g(self.parents[2]->value.shape());
      for (int r = 0; r < n; ++r)
        for (int o = 0; o < out_dim; ++o) g[o] += self.grad[static_cast<std::size_t>(r) * out_dim + o];
      self.parents[2]->accumulate(g);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner dimension mismatch");
  Tensor out({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), k, n);
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto gy = as_matrix(self.grad, m, n);
    if (pa.requires_grad) {
      Tensor g({m, k});
      as_matrix(g, m, k).noalias() = gy * as_matrix(pb.value, k, n).transpose();
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g({k, n});
      as_matrix(g, k, n).noalias() = as_matrix(pa.value, m, k).transpose() * gy;
      pb.accumulate(g);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt: inner dimension mismatch");
  Tensor out({m, n});
  as_matrix(out, m, n).noalias() = as_matrix(a.value(), m, k) * as_matrix(b.value(), n, k).transpose();
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto gy = as_matrix(self.grad, m, n);
    if (pa.requires_grad) {
      Tensor g({m, k});
      as_matrix(g, m, k).noalias() = gy * as_matrix(pb.value, n, k);
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor g({n, k});
      as_matrix(g, n, k).noalias() = gy.transpose() * as_matrix(pa.value, m, k);
      pb.accumulate(g);
    }
  });
}

Var softmax_rows(const Var& x) {
  require_rank(x, 2, "softmax_rows");
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = x.value();
  for (int r = 0; r < m; ++r) {
    double* row = out.data() + static_cast<std::size_t>(r) * n;
    double mx = row[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double total = 0.0;
    for (int c = 0; c < n; ++c) total += (row[c] = std::exp(row[c] - mx));
    for (int c = 0; c < n; ++c) row[c] /= total;
  }
  Tensor y = out;
  return make_result(std::move(out), {x}, [m, n, y = std::move(y)](Node& self) {
    Tensor g({m, n});
    for (int r = 0; r < m; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * n;
      double dot = 0.0;
      for (int c = 0; c < n; ++c) dot += self.grad[base + c] * y[base + c];
      for (int c = 0; c < n; ++c) g[base + c] = y[base + c] * (self.grad[base + c] - dot);
    }
    self.parents[0]->accumulate(g);
  });
}

Var to_tokens(const Var& x) {
  require_rank(x, 3, "to_tokens");
  const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out({hw, C});
  as_matrix(out, hw, C) = as_matrix(x.value(), C, hw).transpose();
  return make_result(std::move(out), {x}, [C, hw](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    as_matrix(g, C, hw) = as_matrix(self.grad, hw, C).transpose();
    self.parents[0]->accumulate(g);
  });
}

Var from_tokens(const Var& tokens, int height, int width) {
  require_rank(tokens, 2, "from_tokens");
  const int hw = tokens.dim(0), C = tokens.dim(1);
  if (hw != height * width) throw ShapeError("from_tokens: token count != height * width");
  Tensor out({C, height, width});
  as_matrix(out, C, hw) = as_matrix(tokens.value(), hw, C).transpose();
  return make_result(std::move(out), {tokens}, [C, hw](Node& self) {
    Tensor g({hw, C});
    as_matrix(g, hw, C) = as_matrix(self.grad, C, hw).transpose();
    self.parents[0]->accumulate(g);
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int O = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != C || weight.dim(3) != k) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  }
  const int out_h = (H + 2 * pad - k) / stride + 1;
  const int out_w = (W + 2 * pad - k) / stride + 1;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: input smaller than kernel");
  const ConvGeometry g{C, H, W, k, stride, pad, out_h, out_w};
  const int ckk = C * k * k;
  const int hw = out_h * out_w;
  const bool has_bias = bias.defined();

  Tensor cols = is_pointwise(g) ? Tensor() : im2col(x.value(), g);
  const Tensor& col_ref = is_pointwise(g) ? x.value() : cols;
  Tensor out({O, out_h, out_w});
  as_matrix(out, O, hw).noalias() = as_matrix(weight.value(), O, ckk) * as_matrix(col_ref, ckk, hw);
  if (has_bias) {
    for (int o = 0; o < O; ++o) {
      double* row = out.data() + static_cast<std::size_t>(o) * hw;
      for (int i = 0; i < hw; ++i) row[i] += bias.value()[o];
    }
  }

  std::vector<Var> parents = {x, weight};
  if (has_bias) parents.push_back(bias);
  const bool need_cols = weight.requires_grad() && !is_pointwise(g);
  return make_result(std::move(out), std::move(parents),
                     [g, O, ckk, hw, has_bias, cols = need_cols ? std::move(cols) : Tensor()](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pw = *self.parents[1];
                       const auto gy = as_matrix(self.grad, O, hw);
                       if (pw.requires_grad) {
                         const Tensor& c = is_pointwise(g) ? px.value : cols;
                         Tensor gw(pw.value.shape());
                         as_matrix(gw, O, ckk).noalias() = gy * as_matrix(c, ckk, hw).transpose();
                         pw.accumulate(gw);
                       }
                       if (px.requires_grad) {
                         Tensor gcols({ckk, hw});
                         as_matrix(gcols, ckk, hw).noalias() = as_matrix(pw.value, O, ckk).transpose() * gy;
                         if (is_pointwise(g)) {
                           px.accumulate(gcols.reshaped(px.value.shape()));
                         } else {
                           px.accumulate(col2im(gcols, g));
                         }
                       }
                       if (has_bias && self.parents[2]->requires_grad) {
                         Tensor gb({O});
                         for (int o = 0; o < O; ++o) gb[o] = gy.row(o).sum();
                         self.parents[2]->accumulate(gb);
                       }
                     });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 3, "conv_transpose2d");
  require_rank(weight, 4, "conv_transpose2d");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int O = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != C || weight.dim(3) != k) {
    throw ShapeError("conv_transpose2d: input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  const int out_h = (H - 1) * stride - 2 * pad + k;
  const int out_w = (W - 1) * stride - 2 * pad + k;
  if (out_h < 1 || out_w < 1) throw ShapeError("conv_transpose2d: empty output");
  // Geometry of the equivalent forward convolution from the output grid back to x.
  const ConvGeometry g{O, out_h, out_w, k, stride, pad, H, W};
  const int okk = O * k * k;
  const int hw = H * W;
  const bool has_bias = bias.defined();

  Tensor cols({okk, hw});
  as_matrix(cols, okk, hw).noalias() = as_matrix(weight.value(), C, okk).transpose() * as_matrix(x.value(), C, hw);
  Tensor out = col2im(cols, g);
  if (has_bias) {
    const int ohw = out_h * out_w;
    for (int o = 0; o < O; ++o) {
      double* row = out.data() + static_cast<std::size_t>(o) * ohw;
      for (int i = 0; i < ohw; ++i) row[i] += bias.value()[o];
    }
  }
  std::vector<Var> parents = {x, weight};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), std::move(parents), [g, C, O, okk, hw, has_bias](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const Tensor gcols = im2col(self.grad, g);
    if (px.requires_grad) {
      Tensor gx(px.value.shape());
      as_matrix(gx, C, hw).noalias() = as_matrix(pw.value, C, okk) * as_matrix(gcols, okk, hw);
      px.accumulate(gx);
    }
    if (pw.requires_grad) {
      Tensor gw(pw.value.shape());
      as_matrix(gw, C, okk).noalias() = as_matrix(px.value, C, hw) * as_matrix(gcols, okk, hw).transpose();
      pw.accumulate(gw);
    }
    if (has_bias && self.parents[2]->requires_grad) {
      const int ohw = g.height * g.width;
      Tensor gb({O});
      for (int o = 0; o < O; ++o) {
        double acc = 0.0;
        for (int i = 0; i < ohw; ++i) acc += self.grad[static_cast<std::size_t>(o) * ohw + i];
        gb[o] = acc;
      }
      self.parents[2]->accumulate(gb);
    }
  });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps) {
  require_rank(x, 3, "group_norm");
  const int C = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (groups < 1 || C % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  if (gamma.value().size() != static_cast<std::size_t>(C) || beta.value().size() != static_cast<std::size_t>(C)) {
    throw ShapeError("group_norm: affine length != channels");
  }
  const int per_group = C / groups;
  const std::size_t n = static_cast<std::size_t>(per_group) * hw;
  Tensor xhat(x.shape());
  std::vector<double> inv_std(static_cast<std::size_t>(groups));
  for (int gi = 0; gi < groups; ++gi) {
    const std::size_t base = static_cast<std::size_t>(gi) * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x.value()[base + i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x.value()[base + i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[gi] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) xhat[base + i] = (x.value()[base + i] - mean) * inv_std[gi];
  }
  Tensor out(x.shape());
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < hw; ++i) {
      const std::size_t k = static_cast<std::size_t>(c) * hw + i;
      out[k] = gamma.value()[c] * xhat[k] + beta.value()[c];
    }
  return make_result(std::move(out), {x, gamma, beta},
                     [C, hw, groups, per_group, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pg = *self.parents[1];
                       Node& pb = *self.parents[2];
                       if (pg.requires_grad || pb.requires_grad) {
                         Tensor gg({C}), gb({C});
                         for (int c = 0; c < C; ++c)
                           for (int i = 0; i < hw; ++i) {
                             const std::size_t k = static_cast<std::size_t>(c) * hw + i;
                             gg[c] += self.grad[k] * xhat[k];
                             gb[c] += self.grad[k];
                           }
                         if (pg.requires_grad) pg.accumulate(gg.reshaped(pg.value.shape()));
                         if (pb.requires_grad) pb.accumulate(gb.reshaped(pb.value.shape()));
                       }
                       if (px.requires_grad) {
                         Tensor gx(px.value.shape());
                         for (int gi = 0; gi < groups; ++gi) {
                           const std::size_t base = static_cast<std::size_t>(gi) * n;
                           double mean_d = 0.0, mean_dx = 0.0;
                           for (std::size_t i = 0; i < n; ++i) {
                             const int c = gi * per_group + static_cast<int>(i / hw);
                             const double d = self.grad[base + i] * pg.value[c];
                             mean_d += d;
                             mean_dx += d * xhat[base + i];
                           }
                           mean_d /= static_cast<double>(n);
                           mean_dx /= static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                             const int c = gi * per_group + static_cast<int>(i / hw);
                             const double d = self.grad[base + i] * pg.value[c];
                             gx[base + i] = inv_std[gi] * (d - mean_d - xhat[base + i] * mean_dx);
                           }
                         }
                         px.accumulate(gx);
                       }
                     });
}

Var upsample_nearest2x(const Var& x, int height, int width) {
  require_rank(x, 3, "upsample_nearest2x");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (height > 2 * H || width > 2 * W || height < 1 || width < 1) {
    throw ShapeError("upsample_nearest2x: target exceeds 2x source");
  }
  Tensor out({C, height, width});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx) out.at(c, y, xx) = x.value().at(c, y / 2, xx / 2);
  return make_result(std::move(out), {x}, [C, height, width](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < height; ++y)
        for (int xx = 0; xx < width; ++xx) g.at(c, y / 2, xx / 2) += self.grad.at(c, y, xx);
    self.parents[0]->accumulate(g);
  });
}

Var crop(const Var& x, int height, int width) {
  require_rank(x, 3, "crop");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (height < 1 || width < 1 || height > H || width > W) throw ShapeError("crop: target outside source");
  if (height == H && width == W) return x;
  Tensor out({C, height, width});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < height; ++y)
      for (int xx = 0; xx < width; ++xx) out.at(c, y, xx) = x.value().at(c, y, xx);
  return make_result(std::move(out), {x}, [C, height, width](Node& self) {
    Tensor g(self.parents[0]->value.shape());
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < height; ++y)
        for (int xx = 0; xx < width; ++xx) g.at(c, y, xx) = self.grad.at(c, y, xx);
    self.parents[0]->accumulate(g);
  });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const double n = static_cast<double>(a.value().size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return make_result(Tensor({1}, {acc / n}), {a, b}, [n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double k = 2.0 * self.grad[0] / n;
    Tensor g(pa.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = k * (pa.value[i] - pb.value[i]);
    if (pa.requires_grad) pa.accumulate(g);
    if (pb.requires_grad) {
      for (double& v : g.values()) v = -v;
      pb.accumulate(g);
    }
  });
}

Var l1_mean(const Var& a, const Var& b) {
  require_same_shape(a, b, "l1_mean");
  const double n = static_cast<double>(a.value().size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  return make_result(Tensor({1}, {acc / n}), {a, b}, [n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double k = self.grad[0] / n;
    Tensor g(pa.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = pa.value[i] - pb.value[i];
      g[i] = d > 0 ? k : (d < 0 ? -k : 0.0);
    }
    if (pa.requires_grad) pa.accumulate(g);
    if (pb.requires_grad) {
      for (double& v : g.values()) v = -v;
      pb.accumulate(g);
    }
  });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().values()) acc += v;
  return make_result(Tensor({1}, {acc}), {x}, [](Node& self) {
    self.parents[0]->accumulate(Tensor(self.parents[0]->value.shape(), self.grad[0]));
  });
}

Var weighted_sum(const Var& x, const Tensor& w) {
  if (w.size() != x.value().size()) throw ShapeError("weighted_sum: weight size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += x.value()[i] * w[i];
  return make_result(Tensor({1}, {acc}), {x}, [w](Node& self) {
    Tensor g = w.reshaped(self.parents[0]->value.shape());
    for (double& v : g.values()) v *= self.grad[0];
    self.parents[0]->accumulate(g);
  });
}

}  // namespace assr::nn
