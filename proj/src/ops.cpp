#include "bbdm/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace bbdm {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Gradient buffer of input i, or nullptr when that input needs none.
template <typename T>
BasicTensor<T>* grad_of(GraphNode<T>& node, std::size_t i) {
  auto& in = node.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return &in->grad_buffer();
}

template <typename T>
const BasicTensor<T>& value_of(GraphNode<T>& node, std::size_t i) {
  return node.inputs[i]->value;
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(s));
  }
}

struct ConvGeometry {
  std::int64_t n, c, h, w;  // input
  std::int64_t k, pad;
  std::int64_t ho, wo;      // output
  std::int64_t col_rows() const { return c * k * k; }
  std::int64_t col_cols() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& weight, int padding, const char* what) {
  require_rank(x, 4, what);
  require_rank(weight, 4, what);
  if (weight[1] != x[1]) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(x[1]) +
                     " channels, kernel expects " + std::to_string(weight[1]));
  }
  if (weight[2] != weight[3] || weight[2] % 2 == 0) {
    throw ShapeError(std::string(what) + ": kernel must be square with odd size");
  }
  if (padding < 0) throw ShapeError(std::string(what) + ": negative padding");
  ConvGeometry g{x[0], x[1], x[2], x[3], weight[2], padding, 0, 0};
  g.ho = g.h + 2 * g.pad - g.k + 1;
  g.wo = g.w + 2 * g.pad - g.k + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError(std::string(what) + ": input smaller than kernel");
  return g;
}

// col[(c*k + ky)*k + kx][oy*wo + ox] = x[c][oy + ky - pad][ox + kx - pad] (zero outside)
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy + ky - g.pad;
          T* out = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(out, out + g.wo, T(0));
            continue;
          }
          const T* in = x + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox + kx - g.pad;
            out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.ho * g.wo;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy + ky - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          T* out = dx + (c * g.h + iy) * g.w;
          const T* in = row + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox + kx - g.pad;
            if (ix >= 0 && ix < g.w) out[ix] += in[ox];
          }
        }
      }
    }
  }
}

// Replaces each 9-tap group of a column matrix by its pixel differences.
template <typename T>
void difference_columns(const T* col, const ConvGeometry& g, const TapPairing& pairing, T* out) {
  const std::int64_t len = g.col_cols();
  for (std::int64_t c = 0; c < g.c; ++c) {
    const T* src = col + c * 9 * len;
    T* dst = out + c * 9 * len;
    for (int i = 0; i < 9; ++i) {
      T* d = dst + i * len;
      const int p = pairing.plus[i];
      const int m = pairing.minus[i];
      if (p == m) {
        std::fill(d, d + len, T(0));
      } else if (m < 0) {
        std::copy(src + p * len, src + (p + 1) * len, d);
      } else {
        const T* a = src + p * len;
        const T* b = src + m * len;
        for (std::int64_t j = 0; j < len; ++j) d[j] = a[j] - b[j];
      }
    }
  }
}

template <typename T>
void difference_columns_backward(const T* dout, const ConvGeometry& g, const TapPairing& pairing, T* dcol) {
  const std::int64_t len = g.col_cols();
  std::fill(dcol, dcol + g.col_rows() * len, T(0));
  for (std::int64_t c = 0; c < g.c; ++c) {
    const T* src = dout + c * 9 * len;
    T* dst = dcol + c * 9 * len;
    for (int i = 0; i < 9; ++i) {
      const int p = pairing.plus[i];
      const int m = pairing.minus[i];
      if (p == m) continue;
      const T* s = src + i * len;
      T* a = dst + p * len;
      for (std::int64_t j = 0; j < len; ++j) a[j] += s[j];
      if (m >= 0) {
        T* b = dst + m * len;
        for (std::int64_t j = 0; j < len; ++j) b[j] -= s[j];
      }
    }
  }
}

// Shared driver for plain and difference convolutions.
template <typename T>
BasicVar<T> conv_impl(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias,
                      int padding, const TapPairing* pairing, const char* what) {
  const ConvGeometry g = conv_geometry(x.shape(), weight.shape(), padding, what);
  const std::int64_t out_ch = weight.shape()[0];
  if (bias.defined() && bias.shape() != Shape{out_ch}) {
    throw ShapeError(std::string(what) + ": bias must have shape (" + std::to_string(out_ch) + ")");
  }
  BasicTensor<T> out(Shape{g.n, out_ch, g.ho, g.wo});
  std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  std::vector<T> dcol(pairing ? col.size() : 0);
  ConstMapMat<T> wmat(weight.value().data(), out_ch, g.col_rows());
  for (std::int64_t n = 0; n < g.n; ++n) {
    im2col(x.value().data() + n * g.c * g.h * g.w, g, col.data());
    const T* src = col.data();
    if (pairing) {
      difference_columns(col.data(), g, *pairing, dcol.data());
      src = dcol.data();
    }
    MapMat<T> omat(out.data() + n * out_ch * g.col_cols(), out_ch, g.col_cols());
    omat.noalias() = wmat * ConstMapMat<T>(src, g.col_rows(), g.col_cols());
    if (bias.defined()) {
      for (std::int64_t o = 0; o < out_ch; ++o) omat.row(o).array() += bias.value()[o];
    }
  }

  return make_result<T>(std::move(out), {x, weight, bias}, [g, out_ch, pairing](GraphNode<T>& node) {
    const BasicTensor<T>& xv = value_of(node, 0);
    const BasicTensor<T>& wv = value_of(node, 1);
    BasicTensor<T>* dx = grad_of(node, 0);
    BasicTensor<T>* dw = grad_of(node, 1);
    BasicTensor<T>* db = grad_of(node, 2);
    std::vector<T> col(static_cast<std::size_t>(g.col_rows() * g.col_cols()));
    std::vector<T> work(col.size());
    ConstMapMat<T> wmat(wv.data(), out_ch, g.col_rows());
    for (std::int64_t n = 0; n < g.n; ++n) {
      ConstMapMat<T> gout(node.grad.data() + n * out_ch * g.col_cols(), out_ch, g.col_cols());
      if (dw) {
        im2col(xv.data() + n * g.c * g.h * g.w, g, col.data());
        const T* src = col.data();
        if (pairing) {
          difference_columns(col.data(), g, *pairing, work.data());
          src = work.data();
        }
        MapMat<T> dwmat(dw->data(), out_ch, g.col_rows());
        dwmat.noalias() += gout * ConstMapMat<T>(src, g.col_rows(), g.col_cols()).transpose();
      }
      if (db) {
        for (std::int64_t o = 0; o < out_ch; ++o) (*db)[o] += gout.row(o).sum();
      }
      if (dx) {
        MapMat<T> gcol(col.data(), g.col_rows(), g.col_cols());
        if (pairing) {
          MapMat<T> gdiff(work.data(), g.col_rows(), g.col_cols());
          gdiff.noalias() = wmat.transpose() * gout;
          difference_columns_backward(work.data(), g, *pairing, col.data());
        } else {
          gcol.noalias() = wmat.transpose() * gout;
        }
        col2im_add(col.data(), g, dx->data() + n * g.c * g.h * g.w);
      }
    }
  });
}

template <typename T>
BasicVar<T> elementwise_binary(const BasicVar<T>& a, const BasicVar<T>& b, int op) {
  require_same_shape(a.shape(), b.shape(), "elementwise op");
  BasicTensor<T> out(a.shape());
  const auto av = a.value().values();
  const auto bv = b.value().values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    ov[i] = op == 0 ? av[i] + bv[i] : op == 1 ? av[i] - bv[i] : av[i] * bv[i];
  }
  return make_result<T>(std::move(out), {a, b}, [op](GraphNode<T>& node) {
    const auto g = node.grad.values();
    if (auto* da = grad_of(node, 0)) {
      auto d = da->values();
      if (op == 2) {
        const auto bv = value_of(node, 1).values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
      } else {
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      }
    }
    if (auto* db = grad_of(node, 1)) {
      auto d = db->values();
      if (op == 2) {
        const auto av = value_of(node, 0).values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
      } else {
        const T sign = op == 1 ? T(-1) : T(1);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += sign * g[i];
      }
    }
  });
}

}  // namespace

template <typename T>
BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b) {
  return elementwise_binary(a, b, 0);
}

template <typename T>
BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b) {
  return elementwise_binary(a, b, 1);
}

template <typename T>
BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b) {
  return elementwise_binary(a, b, 2);
}

template <typename T>
BasicVar<T> scale(const BasicVar<T>& x, T factor) {
  BasicTensor<T> out = x.value();
  for (auto& v : out.values()) v *= factor;
  return make_result<T>(std::move(out), {x}, [factor](GraphNode<T>& node) {
    if (auto* dx = grad_of(node, 0)) {
      auto d = dx->values();
      const auto g = node.grad.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
    }
  });
}

template <typename T>
BasicVar<T> sum(const BasicVar<T>& x) {
  T total = 0;
  for (T v : x.value().values()) total += v;
  return make_result<T>(BasicTensor<T>::scalar(total), {x}, [](GraphNode<T>& node) {
    if (auto* dx = grad_of(node, 0)) {
      const T g = node.grad[0];
      for (auto& d : dx->values()) d += g;
    }
  });
}

template <typename T>
BasicVar<T> mean(const BasicVar<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

template <typename T>
BasicVar<T> l1_loss(const BasicVar<T>& prediction, const BasicVar<T>& target) {
  require_same_shape(prediction.shape(), target.shape(), "l1_loss");
  const auto p = prediction.value().values();
  const auto q = target.value().values();
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::abs(static_cast<double>(p[i]) - q[i]);
  const T inv_n = T(1) / static_cast<T>(p.size());
  return make_result<T>(BasicTensor<T>::scalar(static_cast<T>(total / p.size())), {prediction, target},
                        [inv_n](GraphNode<T>& node) {
                          const auto p = value_of(node, 0).values();
                          const auto q = value_of(node, 1).values();
                          const T g = node.grad[0] * inv_n;
                          auto* dp = grad_of(node, 0);
                          auto* dq = grad_of(node, 1);
                          for (std::size_t i = 0; i < p.size(); ++i) {
                            const T sgn = p[i] > q[i] ? T(1) : (p[i] < q[i] ? T(-1) : T(0));
                            if (dp) (*dp)[i] += g * sgn;
                            if (dq) (*dq)[i] -= g * sgn;
                          }
                        });
}

template <typename T>
BasicVar<T> matmul(const BasicVar<T>& a, const BasicVar<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner extents differ " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  BasicTensor<T> out(Shape{m, n});
  MapMat<T>(out.data(), m, n).noalias() =
      ConstMapMat<T>(a.value().data(), m, k) * ConstMapMat<T>(b.value().data(), k, n);
  return make_result<T>(std::move(out), {a, b}, [m, k, n](GraphNode<T>& node) {
    ConstMapMat<T> g(node.grad.data(), m, n);
    if (auto* da = grad_of(node, 0)) {
      MapMat<T>(da->data(), m, k).noalias() += g * ConstMapMat<T>(value_of(node, 1).data(), k, n).transpose();
    }
    if (auto* db = grad_of(node, 1)) {
      MapMat<T>(db->data(), k, n).noalias() += ConstMapMat<T>(value_of(node, 0).data(), m, k).transpose() * g;
    }
  });
}

template <typename T>
BasicVar<T> linear(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias) {
  require_rank(x.shape(), 2, "linear");
  require_rank(weight.shape(), 2, "linear");
  const std::int64_t n = x.shape()[0], in = x.shape()[1], out_dim = weight.shape()[0];
  if (weight.shape()[1] != in) {
    throw ShapeError("linear: weight " + to_string(weight.shape()) + " does not accept input " +
                     to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) throw ShapeError("linear: bias shape mismatch");
  BasicTensor<T> out(Shape{n, out_dim});
  MapMat<T> omat(out.data(), n, out_dim);
  omat.noalias() = ConstMapMat<T>(x.value().data(), n, in) *
                   ConstMapMat<T>(weight.value().data(), out_dim, in).transpose();
  if (bias.defined()) {
    for (std::int64_t r = 0; r < n; ++r) {
      for (std::int64_t c = 0; c < out_dim; ++c) omat(r, c) += bias.value()[c];
    }
  }
  return make_result<T>(std::move(out), {x, weight, bias}, [n, in, out_dim](GraphNode<T>& node) {
    ConstMapMat<T> g(node.grad.data(), n, out_dim);
    if (auto* dx = grad_of(node, 0)) {
      MapMat<T>(dx->data(), n, in).noalias() += g * ConstMapMat<T>(value_of(node, 1).data(), out_dim, in);
    }
    if (auto* dw = grad_of(node, 1)) {
      MapMat<T>(dw->data(), out_dim, in).noalias() += g.transpose() * ConstMapMat<T>(value_of(node, 0).data(), n, in);
    }
    if (auto* db = grad_of(node, 2)) {
      for (std::int64_t c = 0; c < out_dim; ++c) (*db)[c] += g.col(c).sum();
    }
  });
}

template <typename T>
BasicVar<T> conv2d(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias, int padding) {
  return conv_impl(x, weight, bias, padding, nullptr, "conv2d");
}

template <typename T>
BasicVar<T> difference_conv2d(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias,
                              DifferenceKind kind, int padding) {
  require_3x3_kernel(weight.shape(), "difference_conv2d");
  return conv_impl(x, weight, bias, padding, &tap_pairing(kind), "difference_conv2d");
}

template <typename T>
BasicVar<T> kernel_transform(const BasicVar<T>& weight, DifferenceKind kind) {
  BasicTensor<T> out = equivalent_kernel(weight.value(), kind);
  return make_result<T>(std::move(out), {weight}, [kind](GraphNode<T>& node) {
    auto* dw = grad_of(node, 0);
    if (!dw) return;
    const TapPairing& pairing = tap_pairing(kind);
    const std::int64_t planes = node.grad.numel() / 9;
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* g = node.grad.data() + p * 9;
      T* d = dw->data() + p * 9;
      for (int i = 0; i < 9; ++i) {
        if (pairing.plus[i] == pairing.minus[i]) continue;
        d[i] += g[pairing.plus[i]];
        if (pairing.minus[i] >= 0) d[i] -= g[pairing.minus[i]];
      }
    }
  });
}

template <typename T>
BasicVar<T> group_norm(const BasicVar<T>& x, int groups, const BasicVar<T>& gamma, const BasicVar<T>& beta,
                       T eps) {
  require_rank(x.shape(), 4, "group_norm");
  const std::int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (groups <= 0 || c % groups != 0) {
    throw std::invalid_argument("group_norm: " + std::to_string(c) + " channels cannot form " +
                                std::to_string(groups) + " groups");
  }
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("group_norm: affine parameters must have shape (" + std::to_string(c) + ")");
  }
  const std::int64_t cg = c / groups;
  const std::int64_t group_size = cg * hw;
  BasicTensor<T> out(x.shape());
  std::vector<T> xhat(static_cast<std::size_t>(x.value().numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(n * groups));
  const T* xv = x.value().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t gi = 0; gi < groups; ++gi) {
      const std::int64_t base = (b * c + gi * cg) * hw;
      double mu = 0;
      for (std::int64_t i = 0; i < group_size; ++i) mu += xv[base + i];
      mu /= static_cast<double>(group_size);
      double var = 0;
      for (std::int64_t i = 0; i < group_size; ++i) {
        const double d = xv[base + i] - mu;
        var += d * d;
      }
      var /= static_cast<double>(group_size);
      const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
      inv_std[b * groups + gi] = istd;
      for (std::int64_t i = 0; i < group_size; ++i) {
        const std::int64_t ch = gi * cg + i / hw;
        const T h = static_cast<T>((xv[base + i] - mu) * istd);
        xhat[base + i] = h;
        out[base + i] = h * gamma.value()[ch] + beta.value()[ch];
      }
    }
  }
  return make_result<T>(
      std::move(out), {x, gamma, beta},
      [n, c, hw, groups, cg, group_size, xhat = std::move(xhat), inv_std = std::move(inv_std)](GraphNode<T>& node) {
        const T* g = node.grad.data();
        const BasicTensor<T>& gam = value_of(node, 1);
        auto* dx = grad_of(node, 0);
        auto* dgamma = grad_of(node, 1);
        auto* dbeta = grad_of(node, 2);
        for (std::int64_t b = 0; b < n; ++b) {
          for (std::int64_t gi = 0; gi < groups; ++gi) {
            const std::int64_t base = (b * c + gi * cg) * hw;
            double sum_dh = 0, sum_dh_h = 0;
            for (std::int64_t i = 0; i < group_size; ++i) {
              const std::int64_t ch = gi * cg + i / hw;
              const double dh = static_cast<double>(g[base + i]) * gam[ch];
              sum_dh += dh;
              sum_dh_h += dh * xhat[base + i];
              if (dgamma) (*dgamma)[ch] += g[base + i] * xhat[base + i];
              if (dbeta) (*dbeta)[ch] += g[base + i];
            }
            if (!dx) continue;
            const double mean_dh = sum_dh / static_cast<double>(group_size);
            const double mean_dh_h = sum_dh_h / static_cast<double>(group_size);
            const double istd = inv_std[b * groups + gi];
            for (std::int64_t i = 0; i < group_size; ++i) {
              const std::int64_t ch = gi * cg + i / hw;
              const double dh = static_cast<double>(g[base + i]) * gam[ch];
              (*dx)[base + i] += static_cast<T>(istd * (dh - mean_dh - xhat[base + i] * mean_dh_h));
            }
          }
        }
      });
}

template <typename T>
BasicVar<T> silu(const BasicVar<T>& x) {
  BasicTensor<T> out(x.shape());
  const auto xv = x.value().values();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] / (T(1) + std::exp(-xv[i]));
  return make_result<T>(std::move(out), {x}, [](GraphNode<T>& node) {
    auto* dx = grad_of(node, 0);
    if (!dx) return;
    const auto xv = value_of(node, 0).values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-xv[i]));
      (*dx)[i] += node.grad[i] * s * (T(1) + xv[i] * (T(1) - s));
    }
  });
}

template <typename T>
BasicVar<T> upsample_nearest2x(const BasicVar<T>& x) {
  require_rank(x.shape(), 4, "upsample_nearest2x");
  const std::int64_t planes = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  BasicTensor<T> out(Shape{x.shape()[0], x.shape()[1], 2 * h, 2 * w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x.value().data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (std::int64_t y = 0; y < 2 * h; ++y) {
      for (std::int64_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return make_result<T>(std::move(out), {x}, [planes, h, w](GraphNode<T>& node) {
    auto* dx = grad_of(node, 0);
    if (!dx) return;
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* g = node.grad.data() + p * 4 * h * w;
      T* d = dx->data() + p * h * w;
      for (std::int64_t y = 0; y < 2 * h; ++y) {
        for (std::int64_t xx = 0; xx < 2 * w; ++xx) d[(y / 2) * w + xx / 2] += g[y * 2 * w + xx];
      }
    }
  });
}

template <typename T>
BasicVar<T> downsample_nearest2x(const BasicVar<T>& x) {
  require_rank(x.shape(), 4, "downsample_nearest2x");
  const std::int64_t planes = x.shape()[0] * x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (h % 2 || w % 2) throw ShapeError("downsample_nearest2x: spatial extents must be even, got " + to_string(x.shape()));
  const std::int64_t ho = h / 2, wo = w / 2;
  BasicTensor<T> out(Shape{x.shape()[0], x.shape()[1], ho, wo});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x.value().data() + p * h * w;
    T* dst = out.data() + p * ho * wo;
    for (std::int64_t y = 0; y < ho; ++y) {
      for (std::int64_t xx = 0; xx < wo; ++xx) dst[y * wo + xx] = src[2 * y * w + 2 * xx];
    }
  }
  return make_result<T>(std::move(out), {x}, [planes, h, w, ho, wo](GraphNode<T>& node) {
    auto* dx = grad_of(node, 0);
    if (!dx) return;
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* g = node.grad.data() + p * ho * wo;
      T* d = dx->data() + p * h * w;
      for (std::int64_t y = 0; y < ho; ++y) {
        for (std::int64_t xx = 0; xx < wo; ++xx) d[2 * y * w + 2 * xx] += g[y * wo + xx];
      }
    }
  });
}

template <typename T>
BasicVar<T> concat_channels(const BasicVar<T>& a, const BasicVar<T>& b) {
  require_rank(a.shape(), 4, "concat_channels");
  require_rank(b.shape(), 4, "concat_channels");
  if (a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[2] || a.shape()[3] != b.shape()[3]) {
    throw ShapeError("concat_channels: incompatible " + to_string(a.shape()) + " and " + to_string(b.shape()));
  }
  const std::int64_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  const std::int64_t hw = a.shape()[2] * a.shape()[3];
  BasicTensor<T> out(Shape{n, ca + cb, a.shape()[2], a.shape()[3]});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.value().data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return make_result<T>(std::move(out), {a, b}, [n, ca, cb, hw](GraphNode<T>& node) {
    const T* g = node.grad.data();
    if (auto* da = grad_of(node, 0)) {
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < ca * hw; ++j) (*da)[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
      }
    }
    if (auto* db = grad_of(node, 1)) {
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < cb * hw; ++j) (*db)[i * cb * hw + j] += g[(i * (ca + cb) + ca) * hw + j];
      }
    }
  });
}

template <typename T>
BasicVar<T> slice_channels(const BasicVar<T>& x, std::int64_t begin, std::int64_t end) {
  require_rank(x.shape(), 4, "slice_channels");
  const std::int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (begin < 0 || end > c || begin >= end) throw ShapeError("slice_channels: bad channel range");
  const std::int64_t cs = end - begin;
  BasicTensor<T> out(Shape{n, cs, x.shape()[2], x.shape()[3]});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(x.value().data() + (i * c + begin) * hw, cs * hw, out.data() + i * cs * hw);
  }
  return make_result<T>(std::move(out), {x}, [n, c, hw, begin, cs](GraphNode<T>& node) {
    auto* dx = grad_of(node, 0);
    if (!dx) return;
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < cs * hw; ++j) (*dx)[(i * c + begin) * hw + j] += node.grad[i * cs * hw + j];
    }
  });
}

template <typename T>
BasicVar<T> add_channel_bias(const BasicVar<T>& x, const BasicVar<T>& bias) {
  require_rank(x.shape(), 4, "add_channel_bias");
  const std::int64_t n = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (bias.shape() != Shape{n, c}) {
    throw ShapeError("add_channel_bias: bias " + to_string(bias.shape()) + " does not match " + to_string(x.shape()));
  }
  BasicTensor<T> out = x.value();
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T b = bias.value()[p];
    T* o = out.data() + p * hw;
    for (std::int64_t j = 0; j < hw; ++j) o[j] += b;
  }
  return make_result<T>(std::move(out), {x, bias}, [n, c, hw](GraphNode<T>& node) {
    if (auto* dx = grad_of(node, 0)) {
      for (std::int64_t i = 0; i < node.grad.numel(); ++i) (*dx)[i] += node.grad[i];
    }
    if (auto* db = grad_of(node, 1)) {
      for (std::int64_t p = 0; p < n * c; ++p) {
        T s = 0;
        for (std::int64_t j = 0; j < hw; ++j) s += node.grad[p * hw + j];
        (*db)[p] += s;
      }
    }
  });
}

#define BBDM_INSTANTIATE_OPS(T)                                                                         \
  template BasicVar<T> add(const BasicVar<T>&, const BasicVar<T>&);                                    \
  template BasicVar<T> sub(const BasicVar<T>&, const BasicVar<T>&);                                    \
  template BasicVar<T> mul(const BasicVar<T>&, const BasicVar<T>&);                                    \
  template BasicVar<T> scale(const BasicVar<T>&, T);                                                   \
  template BasicVar<T> sum(const BasicVar<T>&);                                                        \
  template BasicVar<T> mean(const BasicVar<T>&);                                                       \
  template BasicVar<T> l1_loss(const BasicVar<T>&, const BasicVar<T>&);                                \
  template BasicVar<T> matmul(const BasicVar<T>&, const BasicVar<T>&);                                 \
  template BasicVar<T> linear(const BasicVar<T>&, const BasicVar<T>&, const BasicVar<T>&);             \
  template BasicVar<T> conv2d(const BasicVar<T>&, const BasicVar<T>&, const BasicVar<T>&, int);        \
  template BasicVar<T> difference_conv2d(const BasicVar<T>&, const BasicVar<T>&, const BasicVar<T>&,    \
                                         DifferenceKind, int);                                        \
  template BasicVar<T> kernel_transform(const BasicVar<T>&, DifferenceKind);                           \
  template BasicVar<T> group_norm(const BasicVar<T>&, int, const BasicVar<T>&, const BasicVar<T>&, T); \
  template BasicVar<T> silu(const BasicVar<T>&);                                                       \
  template BasicVar<T> upsample_nearest2x(const BasicVar<T>&);                                         \
  template BasicVar<T> downsample_nearest2x(const BasicVar<T>&);                                       \
  template BasicVar<T> concat_channels(const BasicVar<T>&, const BasicVar<T>&);                        \
  template BasicVar<T> slice_channels(const BasicVar<T>&, std::int64_t, std::int64_t);                 \
  template BasicVar<T> add_channel_bias(const BasicVar<T>&, const BasicVar<T>&);

BBDM_INSTANTIATE_OPS(float)
BBDM_INSTANTIATE_OPS(double)

#undef BBDM_INSTANTIATE_OPS

}  // namespace bbdm
