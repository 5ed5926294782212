// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/numerics/ops.hpp"

#include <cmath>

#include "diffq/errors.hpp"
#include "diffq/numerics/kernels.hpp"

namespace diffq::numerics {

namespace k = kernels;

namespace {
using Grads = std::vector<Tensor>;
using Needs = std::vector<bool>;
}  // namespace

Var add(Var a, Var b) {
  return a.tape().record({"add", [](TensorRefs in) { return k::add(*in[0], *in[1]); },
                          [](const Tensor& g, TensorRefs, const Tensor&, const Needs&) { return Grads{g, g}; }},
                         {a, b});
}

Var sub(Var a, Var b) {
  return a.tape().record({"sub", [](TensorRefs in) { return k::sub(*in[0], *in[1]); },
                          [](const Tensor& g, TensorRefs, const Tensor&, const Needs& needs) {
                            return Grads{g, needs[1] ? k::scale(g, -1.0) : Tensor{}};
                          }},
                         {a, b});
}

Var mul(Var a, Var b) {
  return a.tape().record({"mul", [](TensorRefs in) { return k::mul(*in[0], *in[1]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs& needs) {
                            return Grads{needs[0] ? k::mul(g, *in[1]) : Tensor{},
                                         needs[1] ? k::mul(g, *in[0]) : Tensor{}};
                          }},
                         {a, b});
}

Var scale(Var a, double c) {
  return a.tape().record({"scale", [c](TensorRefs in) { return k::scale(*in[0], c); },
                          [c](const Tensor& g, TensorRefs, const Tensor&, const Needs&) {
                            return Grads{k::scale(g, c)};
                          }},
                         {a});
}

Var matmul(Var a, Var b) {
  return a.tape().record({"matmul", [](TensorRefs in) { return k::matmul(*in[0], *in[1]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs& needs) {
                            Grads out(2);
                            if (needs[0]) {
                              const Tensor& b = *in[1];
                              Tensor bt({b.dim(1), b.dim(0)});
                              auto d = bt.mutable_data();
                              for (std::size_t i = 0; i < b.dim(0); ++i)
                                for (std::size_t j = 0; j < b.dim(1); ++j) d[j * b.dim(0) + i] = b[i * b.dim(1) + j];
                              out[0] = k::matmul(g, bt);
                            }
                            if (needs[1]) {
                              const Tensor& a = *in[0];
                              Tensor at({a.dim(1), a.dim(0)});
                              auto d = at.mutable_data();
                              for (std::size_t i = 0; i < a.dim(0); ++i)
                                for (std::size_t j = 0; j < a.dim(1); ++j) d[j * a.dim(0) + i] = a[i * a.dim(1) + j];
                              out[1] = k::matmul(at, g);
                            }
                            return out;
                          }},
                         {a, b});
}

Var linear(Var x, Var w, Var b) {
  return x.tape().record({"linear", [](TensorRefs in) { return k::linear(*in[0], *in[1], *in[2]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs& needs) {
                            auto r = k::linear_backward(*in[0], *in[1], g, needs[0], needs[1], needs[2]);
                            return Grads{std::move(r.dx), std::move(r.dw), std::move(r.db)};
                          }},
                         {x, w, b});
}

Var conv2d(Var x, Var w, Var b) {
  return x.tape().record({"conv2d", [](TensorRefs in) { return k::conv2d(*in[0], *in[1], *in[2]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs& needs) {
                            auto r = k::conv2d_backward(*in[0], *in[1], g, needs[0], needs[1], needs[2]);
                            return Grads{std::move(r.dx), std::move(r.dw), std::move(r.db)};
                          }},
                         {x, w, b});
}

Var silu(Var x) {
  return x.tape().record({"silu", [](TensorRefs in) { return k::silu(*in[0]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
                            return Grads{k::silu_backward(*in[0], g)};
                          }},
                         {x});
}

Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  return x.tape().record(
      {"group_norm", [groups, eps](TensorRefs in) { return k::group_norm(*in[0], *in[1], *in[2], groups, eps); },
       [groups, eps](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
         auto r = k::group_norm_backward(*in[0], *in[1], groups, eps, g);
         return Grads{std::move(r.dx), std::move(r.dgamma), std::move(r.dbeta)};
       }},
      {x, gamma, beta});
}

Var broadcast_add_spatial(Var x, Var e) {
  return x.tape().record({"broadcast_add_spatial", [](TensorRefs in) { return k::broadcast_add_spatial(*in[0], *in[1]); },
                          [](const Tensor& g, TensorRefs, const Tensor&, const Needs& needs) {
                            return Grads{g, needs[1] ? k::spatial_sum(g) : Tensor{}};
                          }},
                         {x, e});
}

Var avg_pool2(Var x) {
  return x.tape().record({"avg_pool2", [](TensorRefs in) { return k::avg_pool2(*in[0]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
                            return Grads{k::avg_pool2_backward(*in[0], g)};
                          }},
                         {x});
}

Var upsample2(Var x) {
  return x.tape().record({"upsample2", [](TensorRefs in) { return k::upsample2(*in[0]); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
                            return Grads{k::upsample2_backward(*in[0], g)};
                          }},
                         {x});
}

Var reshape(Var x, Shape shape) {
  return x.tape().record({"reshape", [shape](TensorRefs in) { return in[0]->reshape(shape); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
                            return Grads{g.reshape(in[0]->shape())};
                          }},
                         {x});
}

Var mean(Var x) {
  return x.tape().record({"mean", [](TensorRefs in) { return Tensor::scalar(k::mean(*in[0])); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
                            return Grads{Tensor(in[0]->shape(), g.item() / static_cast<double>(in[0]->size()))};
                          }},
                         {x});
}

Var sum_squares(Var x) {
  return x.tape().record({"sum_squares", [](TensorRefs in) { return Tensor::scalar(k::sum_squares(*in[0])); },
                          [](const Tensor& g, TensorRefs in, const Tensor&, const Needs&) {
                            return Grads{k::scale(*in[0], 2.0 * g.item())};
                          }},
                         {x});
}

Var cosine_similarity(Var a, Var b) {
  return a.tape().record(
      {"cosine_similarity", [](TensorRefs in) { return Tensor::scalar(k::cosine_similarity(*in[0], *in[1])); },
       [](const Tensor& g, TensorRefs in, const Tensor&, const Needs& needs) {
         const Tensor& x = *in[0];
         const Tensor& y = *in[1];
         const double nx = std::sqrt(k::sum_squares(x));
         const double ny = std::sqrt(k::sum_squares(y));
         const double c = k::dot(x, y) / (nx * ny);
         // d cos / dx = y/(|x||y|) - cos * x/|x|^2
         auto grad_for = [&](const Tensor& self, const Tensor& other, double ns, double no) {
           Tensor out(self.shape());
           auto o = out.mutable_data();
           for (std::size_t i = 0; i < o.size(); ++i)
             o[i] = g.item() * (other[i] / (ns * no) - c * self[i] / (ns * ns));
           return out;
         };
         return Grads{needs[0] ? grad_for(x, y, nx, ny) : Tensor{}, needs[1] ? grad_for(y, x, ny, nx) : Tensor{}};
       }},
      {a, b});
}

}  // namespace diffq::numerics
