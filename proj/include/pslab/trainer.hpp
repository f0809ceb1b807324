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

#ifndef PSLAB_TRAINER_HPP_
#define PSLAB_TRAINER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "pslab/data_io.hpp"
#include "pslab/error.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/mlp.hpp"
#include "pslab/rng.hpp"
#include "pslab/synthesis.hpp"

namespace pslab {

struct TrainConfig {
  LossConfig loss;
  bool ps_enabled = false;
  double alpha = 0.4;
  double mu = 1.0;
  std::optional<double> static_lambda;  // overrides alpha when set
  AugmentMode mode = AugmentMode::full();
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  double proxy_lr_scale = 1.0;  // proxy learning rate = scale * optimizer lr
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 2;

  LambdaSource lambda_source() const { return {alpha, static_lambda}; }

  void validate() const {
    loss.validate();
    optimizer.validate();
    if (batch_size == 0) throw InvalidParameter("train: batch_size must be positive");
    if (!(proxy_lr_scale > 0.0) || !std::isfinite(proxy_lr_scale)) {
      throw InvalidParameter("train: proxy_lr_scale must be positive");
    }
    if (embedding_dim == 0) throw InvalidParameter("train: embedding_dim must be positive");
    if (ps_enabled) {
      lambda_source().validate();
      synthetic_count(1, mu);
      mode.validate();
    }
  }
};

// Augmented row counts of one mini-batch.
struct BatchShape {
  std::size_t batch = 0;
  std::size_t synthetics = 0;
  std::size_t embeddings = 0;
  std::size_t proxies = 0;

  friend bool operator==(const BatchShape&, const BatchShape&) = default;
};

struct TrainResult {
  MlpModel model;
  ProxyBank bank;
  std::vector<double> history;          // per-epoch mean loss
  std::vector<BatchShape> first_epoch;  // augmented shapes of epoch 0
  std::vector<double> lambdas_seen;     // every lambda of epoch 0
};

/// Parameters of a model/bank pair as flat spans in optimiser order:
/// (weight, bias) per layer, then the proxy bank.
inline std::vector<std::span<double>> parameter_spans(MlpModel& model, ProxyBank& bank) {
  std::vector<std::span<double>> out;
  for (auto& layer : model.layers) {
    out.emplace_back(layer.weight.data());
    out.emplace_back(layer.bias);
  }
  out.emplace_back(bank.proxies.data());
  return out;
}

inline std::vector<std::span<const double>> gradient_spans(const MlpGrad& g,
                                                           const Matrix& d_proxies) {
  std::vector<std::span<const double>> out;
  for (const auto& layer : g.layers) {
    out.emplace_back(layer.weight.data());
    out.emplace_back(layer.bias);
  }
  out.emplace_back(d_proxies.data());
  return out;
}

inline ProxyBank init_proxies(std::size_t classes, std::size_t dim, Rng& rng) {
  ProxyBank bank{Matrix(classes, dim)};
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : bank.proxies.data()) v = rng.normal(0.0, std_dev);
  return bank;
}

/// One mini-batch: forward, optional synthesis, loss, scatter, backward.
struct StepOutput {
  LossGrad loss;  // gradients already on original embeddings/proxies
  MlpGrad model_grad;
  BatchShape shape;
  std::vector<PairDraw> pairs;
};

inline StepOutput compute_step(const MlpModel& model, const ProxyBank& bank,
                               const Matrix& inputs, const std::vector<ClassId>& labels,
                               const TrainConfig& cfg, Rng& synth_rng) {
  ForwardResult fwd = forward(model, inputs);
  EmbeddingBatch batch{std::move(fwd.embeddings), labels};
  StepOutput out;
  out.shape.batch = batch.size();
  if (cfg.ps_enabled) {
    if (cfg.mode.uses_synthetics()) {
      out.pairs = sample_pairs(labels, cfg.mu, cfg.lambda_source(), synth_rng);
    }
    const SyntheticSet syn = synthesize(batch, bank, out.pairs);
    const AugmentedBatch aug = assemble(batch, bank, syn, cfg.mode);
    out.shape.synthetics = syn.size();
    out.shape.embeddings = aug.batch.size();
    out.shape.proxies = aug.bank.num_classes();
    out.loss = scatter_gradients(loss_forward_backward(aug.batch, aug.bank, cfg.loss),
                                 aug.backmap);
  } else {
    out.shape.embeddings = batch.size();
    out.shape.proxies = bank.num_classes();
    out.loss = loss_forward_backward(batch, bank, cfg.loss);
  }
  out.model_grad = backward(model, fwd.cache, out.loss.d_embeddings);
  return out;
}

/// Trains the embedder and proxies jointly. Random sources are separate
/// streams of `cfg.seed` (init, shuffle, synthesis), so toggling Proxy
/// Synthesis never changes initialisation or batch order.
inline TrainResult train(const TrainConfig& cfg, const LabeledPoints& data) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw InvalidParameter("train: empty dataset");
  const std::size_t classes = count_classes(data.labels);

  Rng init_rng(cfg.seed, Streams::kInit);
  Rng shuffle_rng(cfg.seed, Streams::kShuffle);
  Rng synth_rng(cfg.seed, Streams::kSynthesis);

  TrainResult result;
  result.model = make_mlp(data.dim(), cfg.hidden, cfg.embedding_dim, init_rng);
  result.bank = init_proxies(classes, cfg.embedding_dim, init_rng);
  OptimState optim(cfg.optimizer);
  std::vector<double> lr_scale(2 * result.model.layers.size(), 1.0);
  lr_scale.push_back(cfg.proxy_lr_scale);

  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = order.size(); k > 1; --k) {
      std::swap(order[k - 1], order[shuffle_rng.uniform_index(k)]);
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const LabeledPoints mb = data.select(rows);
      StepOutput step = compute_step(result.model, result.bank, mb.points, mb.labels, cfg,
                                     synth_rng);
      if (!std::isfinite(step.loss.loss) || !step.loss.d_proxies.all_finite() ||
          !step.loss.d_embeddings.all_finite()) {
        throw TrainingDiverged(epoch);
      }
      if (epoch == 0) {
        result.first_epoch.push_back(step.shape);
        for (const auto& p : step.pairs) result.lambdas_seen.push_back(p.lambda);
      }
      weighted += step.loss.loss * static_cast<double>(rows.size());
      optim.step(parameter_spans(result.model, result.bank),
                 gradient_spans(step.model_grad, step.loss.d_proxies), lr_scale);
      ++result.model.version;
    }
    const double epoch_loss = weighted / static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) throw TrainingDiverged(epoch);
    result.history.push_back(epoch_loss);
  }
  return result;
}

}  // namespace pslab

#endif  // PSLAB_TRAINER_HPP_
