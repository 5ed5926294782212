// SPDX-FileCopyrightText: © 2026 The diffq Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "diffq/diffusion/trainer.hpp"

#include <cmath>
#include <random>
#include <string>

#include "diffq/diffusion/rng.hpp"
#include "diffq/errors.hpp"
#include "diffq/numerics/adam.hpp"
#include "diffq/numerics/kernels.hpp"
#include "diffq/numerics/ops.hpp"

namespace diffq::diffusion {

namespace {

struct Batch {
  Tensor x_t, noise;
  std::vector<int> t;
};

Batch draw_batch(const SyntheticDataset& data, const NoiseSchedule& sched, std::size_t n, std::mt19937_64& gen,
                 std::uint64_t noise_seed) {
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<int> tpick(1, sched.T);
  std::vector<std::size_t> idx(n);
  Batch b;
  for (auto& i : idx) i = pick(gen);
  for (std::size_t i = 0; i < n; ++i) b.t.push_back(tpick(gen));
  const Tensor x0 = data.batch(idx);
  b.noise = gaussian(x0.shape(), noise_seed);
  const std::size_t per = x0.size() / n;
  std::vector<double> xt(x0.size());
  for (std::size_t r = 0; r < n; ++r) {
    const double ab = sched.alpha_bar_at(b.t[r]);
    const double a = std::sqrt(ab), c = std::sqrt(1.0 - ab);
    for (std::size_t j = r * per; j < (r + 1) * per; ++j) xt[j] = a * x0[j] + c * b.noise[j];
  }
  b.x_t = Tensor(x0.shape(), std::move(xt));
  return b;
}

}  // namespace

double validation_loss(const ModelGraph& model, const SyntheticDataset& data, const NoiseSchedule& sched,
                       std::size_t count, std::uint64_t val_seed) {
  if (count == 0) throw ConfigError("validation size must be positive");
  std::mt19937_64 gen(val_seed);
  const Batch b = draw_batch(data, sched, count, gen, derive_seed(val_seed, 1));
  const Tensor eps = model.predict(b.x_t, b.t);
  return numerics::kernels::sum_squares(numerics::kernels::sub(eps, b.noise)) / static_cast<double>(eps.size());
}

TrainResult train_toy(ModelGraph& model, const SyntheticDataset& data, const NoiseSchedule& sched,
                      const TrainConfig& cfg) {
  if (cfg.batch == 0) throw ConfigError("train.batch must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("train.lr must be positive");
  TrainResult res;
  res.initial_val_loss = validation_loss(model, data, sched, cfg.val_size, cfg.val_seed);
  numerics::Adam opt(cfg.lr);
  std::mt19937_64 gen(cfg.seed);
  double window = 0.0;
  std::size_t in_window = 0;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const Batch b = draw_batch(data, sched, cfg.batch, gen, derive_seed(cfg.seed, it + 1));
    Tape tape;
    std::unordered_map<std::string, Var> leaves;
    ForwardContext ctx(tape);
    ctx.params = &leaves;
    const Var eps = model.forward(ctx, tape.leaf(b.x_t), b.t);
    const Var diff = numerics::sub(eps, tape.leaf(b.noise));
    const Var loss = numerics::scale(numerics::sum_squares(diff), 1.0 / static_cast<double>(b.noise.size()));
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) throw NumericError("training loss non-finite at iteration " + std::to_string(it));

    auto params = model.parameters();
    std::vector<Var> wrt;
    std::vector<Tensor*> targets;
    for (auto& [name, tensor] : params) {
      wrt.push_back(leaves.at(name));
      targets.push_back(tensor);
    }
    auto grads = numerics::gradients(tape, loss, wrt);
    std::vector<Tensor> g;
    g.reserve(wrt.size());
    for (const Var& w : wrt) g.push_back(grads.at(w.id()));
    opt.step(targets, g);

    window += lv;
    if (++in_window == cfg.log_every || it + 1 == cfg.iterations) {
      res.loss_curve.push_back(window / static_cast<double>(in_window));
      window = 0.0;
      in_window = 0;
    }
  }
  res.final_val_loss = validation_loss(model, data, sched, cfg.val_size, cfg.val_seed);
  return res;
}

}  // namespace diffq::diffusion
