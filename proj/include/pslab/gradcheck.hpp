/*
 * Copyright 2026 The ps-lab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PSLAB_GRADCHECK_HPP_
#define PSLAB_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pslab/error.hpp"
#include "pslab/finite_diff.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/mlp.hpp"
#include "pslab/rng.hpp"
#include "pslab/synthesis.hpp"
#include "pslab/trainer.hpp"

namespace pslab {

struct GradCheckSpec {
  std::size_t batch = 8;
  std::size_t classes = 5;
  std::size_t embedding_dim = 16;
  std::size_t input_dim = 3;
  std::vector<std::size_t> hidden = {8};
  double tolerance = 1e-4;
  double step = kDefaultFiniteDiffStep;
  double kink_margin = 1e-3;  // minimum |pre-activation| on relu layers
  std::size_t max_redraws = 1000;
};

/// One random problem: a small relu network, its inputs, a proxy bank and
/// the synthesis draws, all frozen so the loss is a deterministic function
/// of the parameters.
struct GradCheckInstance {
  MlpModel model;
  ProxyBank bank;
  Matrix inputs;
  std::vector<ClassId> labels;
  std::vector<PairDraw> pairs;
};

/// Loss of a full training step with the draws held fixed. Gradients are on
/// the network parameters, the proxies and the network output.
struct ComposedGrad {
  double loss = 0.0;
  MlpGrad model_grad;
  Matrix d_embeddings;
  Matrix d_proxies;
};

inline ComposedGrad composed_loss(const MlpModel& model, const ProxyBank& bank,
                                  const Matrix& inputs,
                                  const std::vector<ClassId>& labels,
                                  const std::vector<PairDraw>& pairs,
                                  const TrainConfig& cfg) {
  ForwardResult fwd = forward(model, inputs);
  EmbeddingBatch batch{std::move(fwd.embeddings), labels};
  LossGrad g = cfg.ps_enabled ? augmented_loss(batch, bank, pairs, cfg.mode, cfg.loss)
                              : loss_forward_backward(batch, bank, cfg.loss);
  ComposedGrad out;
  out.loss = g.loss;
  out.model_grad = backward(model, fwd.cache, g.d_embeddings);
  out.d_embeddings = std::move(g.d_embeddings);
  out.d_proxies = std::move(g.d_proxies);
  return out;
}

namespace detail {

inline bool near_kink(const MlpModel& model, const Matrix& inputs, double margin) {
  const ForwardResult fwd = forward(model, inputs);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (model.layers[l].activation != Activation::kRelu) continue;
    for (double v : fwd.cache.pre_activations[l].data()) {
      if (std::abs(v) < margin) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Draws an instance whose relu pre-activations all sit at least
/// `spec.kink_margin` from zero; labels cover at least two classes.
inline GradCheckInstance make_gradcheck_instance(const GradCheckSpec& spec,
                                                 const TrainConfig& cfg, Rng& rng) {
  if (spec.batch < 2 || spec.classes < 2) {
    throw InvalidParameter("gradcheck: need at least two samples and two classes");
  }
  for (std::size_t attempt = 0; attempt < spec.max_redraws; ++attempt) {
    GradCheckInstance inst;
    inst.model = make_mlp(spec.input_dim, spec.hidden, spec.embedding_dim, rng);
    for (auto& layer : inst.model.layers) {
      for (double& b : layer.bias) b = rng.normal(0.0, 0.1);
    }
    inst.inputs = Matrix(spec.batch, spec.input_dim);
    for (double& v : inst.inputs.data()) v = rng.normal();
    inst.bank = ProxyBank{Matrix(spec.classes, spec.embedding_dim)};
    for (double& v : inst.bank.proxies.data()) v = rng.normal();
    inst.labels.clear();
    for (std::size_t i = 0; i < spec.batch; ++i) {
      inst.labels.push_back(rng.uniform_index(spec.classes));
    }
    if (inst.labels[0] == inst.labels[1]) {
      inst.labels[1] = (inst.labels[0] + 1) % spec.classes;
    }
    if (cfg.ps_enabled && cfg.mode.uses_synthetics()) {
      inst.pairs = sample_pairs(inst.labels, cfg.mu, cfg.lambda_source(), rng);
    }
    if (!detail::near_kink(inst.model, inst.inputs, spec.kink_margin)) return inst;
  }
  throw NumericError("gradcheck: could not draw an instance away from relu kinks");
}

struct GradCheckReport {
  double embeddings = 0.0;  // relative errors, worst over instances
  double proxies = 0.0;
  double weights = 0.0;
  std::size_t instances = 0;
  double tolerance = 0.0;

  double worst() const { return std::max({embeddings, proxies, weights}); }
  bool passed() const { return instances > 0 && worst() <= tolerance; }
};

inline void check_instance(const GradCheckInstance& inst, const TrainConfig& cfg,
                           const GradCheckSpec& spec, GradCheckReport& report) {
  const ComposedGrad g =
      composed_loss(inst.model, inst.bank, inst.inputs, inst.labels, inst.pairs, cfg);

  // Embeddings: the loss as a function of the network output.
  const Matrix fd_e = finite_diff_grad(
      [&](const Matrix& e) {
        EmbeddingBatch b{e, inst.labels};
        return cfg.ps_enabled ? augmented_loss(b, inst.bank, inst.pairs, cfg.mode, cfg.loss).loss
                              : loss_value(b, inst.bank, cfg.loss);
      },
      embed(inst.model, inst.inputs), spec.step);
  report.embeddings = std::max(report.embeddings, relative_error(g.d_embeddings, fd_e));

  const Matrix fd_p = finite_diff_grad(
      [&](const Matrix& p) {
        return composed_loss(inst.model, ProxyBank{p}, inst.inputs, inst.labels,
                             inst.pairs, cfg).loss;
      },
      inst.bank.proxies, spec.step);
  report.proxies = std::max(report.proxies, relative_error(g.d_proxies, fd_p));

  // Network parameters, flattened into one vector in optimiser order.
  MlpModel probe = inst.model;
  std::vector<double> analytic, numeric;
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto perturb = [&](double& slot, double grad) {
      const double orig = slot;
      slot = orig + spec.step;
      const double up = composed_loss(probe, inst.bank, inst.inputs, inst.labels,
                                      inst.pairs, cfg).loss;
      slot = orig - spec.step;
      const double down = composed_loss(probe, inst.bank, inst.inputs, inst.labels,
                                        inst.pairs, cfg).loss;
      slot = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("gradcheck: non-finite loss");
      }
      analytic.push_back(grad);
      numeric.push_back((up - down) / (2.0 * spec.step));
    };
    auto& layer = probe.layers[l];
    const auto& lg = g.model_grad.layers[l];
    for (std::size_t k = 0; k < layer.weight.size(); ++k) {
      perturb(layer.weight.data()[k], lg.weight.data()[k]);
    }
    for (std::size_t k = 0; k < layer.bias.size(); ++k) perturb(layer.bias[k], lg.bias[k]);
  }
  const Matrix a(1, analytic.size(), analytic);
  const Matrix n(1, numeric.size(), numeric);
  report.weights = std::max(report.weights, relative_error(a, n));
  ++report.instances;
}

/// Compares analytic and central-difference gradients of the configured
/// loss and augmentation mode on `instances` random problems.
inline GradCheckReport run_gradcheck(const TrainConfig& cfg, std::size_t instances,
                                     std::uint64_t seed, const GradCheckSpec& spec = {}) {
  cfg.loss.validate();
  if (cfg.ps_enabled) {
    cfg.lambda_source().validate();
    cfg.mode.validate();
  }
  Rng rng(seed, Streams::kGradCheck);
  GradCheckReport report;
  report.tolerance = spec.tolerance;
  for (std::size_t i = 0; i < instances; ++i) {
    check_instance(make_gradcheck_instance(spec, cfg, rng), cfg, spec, report);
  }
  return report;
}

/// Pre-run self-test: ten instances of the configured loss and mode.
inline GradCheckReport gradient_gate(const TrainConfig& cfg) {
  return run_gradcheck(cfg, 10, cfg.seed);
}

}  // namespace pslab

#endif  // PSLAB_GRADCHECK_HPP_
