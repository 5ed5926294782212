// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/numerics/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "diffq/errors.hpp"

namespace diffq::numerics::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ShapeError(std::string(op) + ": " + what);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), op, shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

struct ConvDims {
  std::size_t n, c, h, w, o, k, pad;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w) {
  require(x.rank() == 4, "conv2d", "input must be NCHW, got " + shape_string(x.shape()));
  require(w.rank() == 4, "conv2d", "weight must be [O,C,k,k], got " + shape_string(w.shape()));
  require(w.dim(1) == x.dim(1), "conv2d", "channel mismatch " + shape_string(x.shape()) + " vs " +
                                              shape_string(w.shape()));
  require(w.dim(2) == w.dim(3) && w.dim(2) % 2 == 1, "conv2d", "kernel must be square and odd");
  return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(2) / 2};
}

// cols is [C*k*k, N*H*W] row-major. Every entry is written once: each output
// row is a shifted copy of an input row with zeros where it leaves the image.
RowMat im2col(const Tensor& x, const ConvDims& d) {
  const std::size_t hw = d.h * d.w;
  RowMat cols(static_cast<Eigen::Index>(d.c * d.k * d.k), static_cast<Eigen::Index>(d.n * hw));
  const auto xs = x.data();
  const auto h = static_cast<std::ptrdiff_t>(d.h), w = static_cast<std::ptrdiff_t>(d.w);
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t ky = 0; ky < d.k; ++ky)
      for (std::size_t kx = 0; kx < d.k; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * d.k + ky) * d.k + kx);
        const auto dy = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(d.pad);
        const auto dx = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(d.pad);
        // Output columns [x0, x1) read inside the image.
        const std::ptrdiff_t x0 = std::clamp<std::ptrdiff_t>(-dx, 0, w), x1 = std::clamp<std::ptrdiff_t>(w - dx, 0, w);
        double* dst = cols.row(row).data();
        for (std::size_t n = 0; n < d.n; ++n) {
          const double* src = xs.data() + (n * d.c + c) * hw;
          for (std::ptrdiff_t y = 0; y < h; ++y, dst += w) {
            const std::ptrdiff_t sy = y + dy;
            if (sy < 0 || sy >= h || x0 >= x1) {
              std::fill(dst, dst + w, 0.0);
              continue;
            }
            std::fill(dst, dst + x0, 0.0);
            std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, dst + x0);
            std::fill(dst + x1, dst + w, 0.0);
          }
        }
      }
  return cols;
}

Tensor col2im(const RowMat& cols, const ConvDims& d) {
  const std::size_t hw = d.h * d.w;
  Tensor dx({d.n, d.c, d.h, d.w});
  auto out = dx.mutable_data();
  for (std::size_t c = 0; c < d.c; ++c)
    for (std::size_t ky = 0; ky < d.k; ++ky)
      for (std::size_t kx = 0; kx < d.k; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * d.k + ky) * d.k + kx);
        const double* src = cols.row(row).data();
        for (std::size_t n = 0; n < d.n; ++n) {
          double* dst = out.data() + (n * d.c + c) * hw;
          for (std::size_t y = 0; y < d.h; ++y) {
            const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(d.pad);
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(d.h)) continue;
            for (std::size_t xx = 0; xx < d.w; ++xx) {
              const auto sx = static_cast<std::ptrdiff_t>(xx + kx) - static_cast<std::ptrdiff_t>(d.pad);
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(d.w)) continue;
              dst[static_cast<std::size_t>(sy) * d.w + static_cast<std::size_t>(sx)] += src[n * hw + y * d.w + xx];
            }
          }
        }
      }
  return dx;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out = a.clone();
  auto o = out.mutable_data();
  auto bs = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bs[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out = a.clone();
  auto o = out.mutable_data();
  auto bs = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bs[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out = a.clone();
  auto o = out.mutable_data();
  auto bs = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bs[i];
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a.clone();
  for (double& v : out.mutable_data()) v *= c;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
          shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out({a.dim(0), b.dim(1)});
  as_matrix(out.mutable_data(), a.dim(0), b.dim(1)).noalias() =
      as_matrix(a, a.dim(0), a.dim(1)) * as_matrix(b, b.dim(0), b.dim(1));
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1), "linear",
          shape_string(x.shape()) + " with weight " + shape_string(w.shape()));
  require(b.size() == w.dim(0), "linear", "bias size mismatch");
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  Tensor out({n, out_f});
  auto y = as_matrix(out.mutable_data(), n, out_f);
  y.noalias() = as_matrix(x, n, in) * as_matrix(w, out_f, in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), static_cast<Eigen::Index>(out_f));
  return out;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad, bool need_dx, bool need_dw,
                            bool need_db) {
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = w.dim(0);
  LinearGrads g;
  const auto gm = as_matrix(grad, n, out_f);
  if (need_dx) {
    g.dx = Tensor({n, in});
    as_matrix(g.dx.mutable_data(), n, in).noalias() = gm * as_matrix(w, out_f, in);
  }
  if (need_dw) {
    g.dw = Tensor({out_f, in});
    as_matrix(g.dw.mutable_data(), out_f, in).noalias() = gm.transpose() * as_matrix(x, n, in);
  }
  if (need_db) {
    g.db = Tensor({out_f});
    Eigen::Map<Eigen::RowVectorXd>(g.db.mutable_data().data(), static_cast<Eigen::Index>(out_f)) = gm.colwise().sum();
  }
  return g;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  const ConvDims d = conv_dims(x, w);
  require(b.size() == d.o, "conv2d", "bias size mismatch");
  const std::size_t hw = d.h * d.w;
  const RowMat cols = im2col(x, d);
  const RowMat prod = as_matrix(w, d.o, d.c * d.k * d.k) * cols;
  Tensor out({d.n, d.o, d.h, d.w});
  auto o = out.mutable_data();
  const auto bs = b.data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oc = 0; oc < d.o; ++oc) {
      const double* src = prod.row(static_cast<Eigen::Index>(oc)).data() + n * hw;
      double* dst = o.data() + (n * d.o + oc) * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p] + bs[oc];
    }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& grad, bool need_dx, bool need_dw,
                          bool need_db) {
  const ConvDims d = conv_dims(x, w);
  const std::size_t hw = d.h * d.w;
  RowMat gm(static_cast<Eigen::Index>(d.o), static_cast<Eigen::Index>(d.n * hw));
  const auto gs = grad.data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t oc = 0; oc < d.o; ++oc) {
      const double* src = gs.data() + (n * d.o + oc) * hw;
      double* dst = gm.row(static_cast<Eigen::Index>(oc)).data() + n * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[p] = src[p];
    }
  ConvGrads g;
  const std::size_t ck = d.c * d.k * d.k;
  if (need_dw) {
    const RowMat cols = im2col(x, d);
    g.dw = Tensor(w.shape());
    as_matrix(g.dw.mutable_data(), d.o, ck).noalias() = gm * cols.transpose();
  }
  if (need_db) {
    g.db = Tensor({d.o});
    Eigen::Map<Eigen::VectorXd>(g.db.mutable_data().data(), static_cast<Eigen::Index>(d.o)) = gm.rowwise().sum();
  }
  if (need_dx) {
    const RowMat dcols = as_matrix(w, d.o, ck).transpose() * gm;
    g.dx = col2im(dcols, d);
  }
  return g;
}

Tensor silu(const Tensor& x) {
  Tensor out = x.clone();
  for (double& v : out.mutable_data()) v = v * sigmoid(v);
  return out;
}

Tensor silu_backward(const Tensor& x, const Tensor& grad) {
  Tensor out = grad.clone();
  auto o = out.mutable_data();
  const auto xs = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double s = sigmoid(xs[i]);
    o[i] *= s * (1.0 + xs[i] * (1.0 - s));
  }
  return out;
}

namespace {
struct GnDims {
  std::size_t n, c, spatial, per_group, groups;
};

GnDims gn_dims(const Tensor& x, const Tensor& gamma, std::size_t groups) {
  require(x.rank() == 2 || x.rank() == 4, "group_norm", "input must be [N,C] or [N,C,H,W]");
  const std::size_t c = x.dim(1);
  require(groups > 0 && c % groups == 0, "group_norm", "channels not divisible by groups");
  require(gamma.size() == c, "group_norm", "affine size mismatch");
  const std::size_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), c, spatial, c / groups * spatial, groups};
}
}  // namespace

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, std::size_t groups, double eps) {
  const GnDims d = gn_dims(x, gamma, groups);
  require(beta.size() == d.c, "group_norm", "affine size mismatch");
  Tensor out(x.shape());
  auto o = out.mutable_data();
  const auto xs = x.data();
  const auto gs = gamma.data();
  const auto bs = beta.data();
  const std::size_t cpg = d.c / d.groups;
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t g = 0; g < d.groups; ++g) {
      const std::size_t base = (n * d.c + g * cpg) * d.spatial;
      double mu = 0.0;
      for (std::size_t i = 0; i < d.per_group; ++i) mu += xs[base + i];
      mu /= static_cast<double>(d.per_group);
      double var = 0.0;
      for (std::size_t i = 0; i < d.per_group; ++i) var += (xs[base + i] - mu) * (xs[base + i] - mu);
      var /= static_cast<double>(d.per_group);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t i = 0; i < d.per_group; ++i) {
        const std::size_t ch = g * cpg + i / d.spatial;
        o[base + i] = (xs[base + i] - mu) * inv * gs[ch] + bs[ch];
      }
    }
  return out;
}

GroupNormGrads group_norm_backward(const Tensor& x, const Tensor& gamma, std::size_t groups, double eps,
                                   const Tensor& grad) {
  const GnDims d = gn_dims(x, gamma, groups);
  GroupNormGrads g{Tensor(x.shape()), Tensor({d.c}), Tensor({d.c})};
  auto dx = g.dx.mutable_data();
  auto dgam = g.dgamma.mutable_data();
  auto dbet = g.dbeta.mutable_data();
  const auto xs = x.data();
  const auto gs = grad.data();
  const auto gam = gamma.data();
  const std::size_t cpg = d.c / d.groups;
  const double m = static_cast<double>(d.per_group);
  std::vector<double> xhat(d.per_group), dxhat(d.per_group);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t gr = 0; gr < d.groups; ++gr) {
      const std::size_t base = (n * d.c + gr * cpg) * d.spatial;
      double mu = 0.0;
      for (std::size_t i = 0; i < d.per_group; ++i) mu += xs[base + i];
      mu /= m;
      double var = 0.0;
      for (std::size_t i = 0; i < d.per_group; ++i) var += (xs[base + i] - mu) * (xs[base + i] - mu);
      var /= m;
      const double inv = 1.0 / std::sqrt(var + eps);
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < d.per_group; ++i) {
        const std::size_t ch = gr * cpg + i / d.spatial;
        xhat[i] = (xs[base + i] - mu) * inv;
        dxhat[i] = gs[base + i] * gam[ch];
        dgam[ch] += gs[base + i] * xhat[i];
        dbet[ch] += gs[base + i];
        sum_dxhat += dxhat[i];
        sum_dxhat_xhat += dxhat[i] * xhat[i];
      }
      for (std::size_t i = 0; i < d.per_group; ++i)
        dx[base + i] = inv / m * (m * dxhat[i] - sum_dxhat - xhat[i] * sum_dxhat_xhat);
    }
  return g;
}

Tensor broadcast_add_spatial(const Tensor& x, const Tensor& e) {
  require(x.rank() == 4 && e.rank() == 2 && e.dim(0) == x.dim(0) && e.dim(1) == x.dim(1), "broadcast_add_spatial",
          shape_string(x.shape()) + " + " + shape_string(e.shape()));
  Tensor out = x.clone();
  auto o = out.mutable_data();
  const auto es = e.data();
  const std::size_t hw = x.dim(2) * x.dim(3);
  for (std::size_t nc = 0; nc < es.size(); ++nc)
    for (std::size_t p = 0; p < hw; ++p) o[nc * hw + p] += es[nc];
  return out;
}

Tensor spatial_sum(const Tensor& grad) {
  require(grad.rank() == 4, "spatial_sum", "expects NCHW");
  Tensor out({grad.dim(0), grad.dim(1)});
  auto o = out.mutable_data();
  const auto gs = grad.data();
  const std::size_t hw = grad.dim(2) * grad.dim(3);
  for (std::size_t nc = 0; nc < o.size(); ++nc) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += gs[nc * hw + p];
    o[nc] = s;
  }
  return out;
}

Tensor avg_pool2(const Tensor& x) {
  require(x.rank() == 4 && x.dim(2) % 2 == 0 && x.dim(3) % 2 == 0, "avg_pool2", "needs even NCHW input");
  const std::size_t h = x.dim(2) / 2, w = x.dim(3) / 2, iw = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), h, w});
  auto o = out.mutable_data();
  const auto xs = x.data();
  for (std::size_t nc = 0; nc < x.dim(0) * x.dim(1); ++nc)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double* s = xs.data() + nc * x.dim(2) * iw + 2 * y * iw + 2 * xx;
        o[nc * h * w + y * w + xx] = 0.25 * (s[0] + s[1] + s[iw] + s[iw + 1]);
      }
  return out;
}

Tensor avg_pool2_backward(const Tensor& x, const Tensor& grad) {
  const std::size_t h = x.dim(2) / 2, w = x.dim(3) / 2, iw = x.dim(3);
  Tensor dx(x.shape());
  auto d = dx.mutable_data();
  const auto gs = grad.data();
  for (std::size_t nc = 0; nc < x.dim(0) * x.dim(1); ++nc)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double g = 0.25 * gs[nc * h * w + y * w + xx];
        double* t = d.data() + nc * x.dim(2) * iw + 2 * y * iw + 2 * xx;
        t[0] += g;
        t[1] += g;
        t[iw] += g;
        t[iw + 1] += g;
      }
  return dx;
}

Tensor upsample2(const Tensor& x) {
  require(x.rank() == 4, "upsample2", "expects NCHW");
  const std::size_t h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  auto o = out.mutable_data();
  const auto xs = x.data();
  for (std::size_t nc = 0; nc < x.dim(0) * x.dim(1); ++nc)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) o[(nc * 2 * h + y) * 2 * w + xx] = xs[(nc * h + y / 2) * w + xx / 2];
  return out;
}

Tensor upsample2_backward(const Tensor& x, const Tensor& grad) {
  const std::size_t h = x.dim(2), w = x.dim(3);
  Tensor dx(x.shape());
  auto d = dx.mutable_data();
  const auto gs = grad.data();
  for (std::size_t nc = 0; nc < x.dim(0) * x.dim(1); ++nc)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) d[(nc * h + y / 2) * w + xx / 2] += gs[(nc * 2 * h + y) * 2 * w + xx];
  return dx;
}

double sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return s;
}

double mean(const Tensor& x) {
  if (!x.size()) throw ShapeError("mean of empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s / static_cast<double>(x.size());
}

double dot(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "dot", "size mismatch");
  double s = 0.0;
  const auto as = a.data();
  const auto bs = b.data();
  for (std::size_t i = 0; i < as.size(); ++i) s += as[i] * bs[i];
  return s;
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), "cosine_similarity", "size mismatch");
  const double sa = sum_squares(a);
  const double sb = sum_squares(b);
  if (sa == 0.0 || sb == 0.0) throw NumericError("cosine_similarity: zero vector");
  // sqrt(fl(x * x)) == x, so identical inputs give exactly 1.
  const double c = dot(a, b) / std::sqrt(sa * sb);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace diffq::numerics::kernels
