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

#ifndef PSLAB_PAIRED_HPP_
#define PSLAB_PAIRED_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pslab/data_io.hpp"
#include "pslab/experiments.hpp"
#include "pslab/metrics.hpp"
#include "pslab/mlp.hpp"
#include "pslab/rng.hpp"
#include "pslab/synthesis.hpp"
#include "pslab/trainer.hpp"

namespace pslab {

/// Training defaults for the toy study. A low scale keeps the normalized
/// softmax from saturating on two classes, and faster proxies stop the
/// network from settling while the proxies are still at their random init.
inline TrainConfig default_toy_train() {
  TrainConfig t;
  t.loss.gamma = 4.0;
  t.proxy_lr_scale = 10.0;
  return t;
}

/// Seen/unseen toy study: one baseline and one Proxy Synthesis model trained
/// from the same seed on the same data, then compared on held-out points.
struct PairedStudyConfig {
  std::uint64_t seed = 0;
  TrainConfig train = default_toy_train();  // ps_enabled is overridden per arm
  std::size_t train_per_class = 500;
  std::size_t eval_per_class = 200;
  std::size_t profile_steps = 101;
  std::size_t deformation_samples = 20;
  std::vector<double> deformation_lambdas = {0.1, 0.2, 0.3, 0.4, 0.5,
                                             0.6, 0.7, 0.8, 0.9, 1.0};
};

struct ToyData {
  LabeledPoints train;  // seen classes only
  LabeledPoints eval;   // held-out seen draws plus the unseen class
};

/// Default layout drawn from stream Streams::kData of `seed`: training set
/// first, then the evaluation set.
inline ToyData make_toy_data(std::uint64_t seed, std::size_t train_per_class,
                             std::size_t eval_per_class, double sigma = 0.5) {
  Rng rng(seed, Streams::kData);
  auto train_classes = default_gaussian_classes(train_per_class, 1, sigma);
  train_classes.pop_back();
  GaussianSpec train_spec{train_classes, seed};
  GaussianSpec eval_spec{
      default_gaussian_classes(eval_per_class, eval_per_class, sigma), seed};
  ToyData out;
  out.train = gen_gaussians(train_spec, rng);
  out.eval = gen_gaussians(eval_spec, rng);
  return out;
}

inline std::vector<double> class_centroid(const LabeledPoints& data, ClassId cls) {
  std::vector<double> c(data.dim(), 0.0);
  std::size_t count = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    if (data.labels[r] != cls) continue;
    axpy(1.0, data.points.row(r), c);
    ++count;
  }
  if (count == 0) throw InvalidParameter("class_centroid: class has no points");
  for (double& v : c) v /= static_cast<double>(count);
  return c;
}

struct ArmDiagnostics {
  std::vector<double> history;
  SmoothnessProfile smoothness;
  double unseen_recall_at_1 = 0.0;        // same-set R@1 on all eval embeddings
  std::vector<double> deformation_recall; // seen eval embeddings, one per lambda
  HeatmapDiagonals diagonals;
};

inline LabeledPoints embed_points(const MlpModel& model, const LabeledPoints& data) {
  LabeledPoints out;
  out.points = embed(model, data.points);
  out.labels = data.labels;
  out.roles = data.roles;
  return out;
}

/// Evaluation shared by both arms. Synthetics for the heatmap diagonals are
/// drawn with the Proxy Synthesis defaults (alpha 0.4, mu 1) from a stream
/// that depends only on the seed, so both arms see the same draws.
inline ArmDiagnostics diagnose(const MlpModel& model, const ProxyBank& bank,
                               const LossConfig& loss, const ToyData& data,
                               const PairedStudyConfig& cfg) {
  ArmDiagnostics out;
  const auto a = class_centroid(data.train, 0);
  const auto b = class_centroid(data.train, 1);
  out.smoothness = boundary_smoothness(model, bank, loss, a, b, cfg.profile_steps);

  const LabeledPoints eval_emb = embed_points(model, data.eval);
  out.unseen_recall_at_1 = recall_at_k(RetrievalSetup::same(eval_emb), 1);

  std::vector<std::size_t> seen_rows;
  for (std::size_t r = 0; r < eval_emb.size(); ++r) {
    if (eval_emb.labels[r] < bank.num_classes()) seen_rows.push_back(r);
  }
  const LabeledPoints seen = eval_emb.select(seen_rows);

  for (double lambda : cfg.deformation_lambdas) {
    DeformationSpec spec{lambda, cfg.deformation_samples, cfg.seed, true};
    out.deformation_recall.push_back(deformation_test(seen, spec));
  }
  EmbeddingBatch batch{seen.points, seen.labels};
  Rng rng(cfg.seed, Streams::kEval);
  const auto pairs = sample_pairs(batch.labels, 1.0, LambdaSource{0.4, {}}, rng);
  out.diagonals = heatmap_diagonals(batch, bank, synthesize(batch, bank, pairs));
  return out;
}

struct PairedStudyResult {
  ArmDiagnostics baseline;
  ArmDiagnostics ps;
};

inline PairedStudyResult run_paired_study(const PairedStudyConfig& cfg) {
  const ToyData data = make_toy_data(cfg.seed, cfg.train_per_class, cfg.eval_per_class);
  TrainConfig base = cfg.train;
  base.seed = cfg.seed;
  base.ps_enabled = false;
  TrainConfig with_ps = base;
  with_ps.ps_enabled = true;
  PairedStudyResult out;
  const TrainResult rb = train(base, data.train);
  out.baseline = diagnose(rb.model, rb.bank, base.loss, data, cfg);
  out.baseline.history = rb.history;
  const TrainResult rp = train(with_ps, data.train);
  out.ps = diagnose(rp.model, rp.bank, with_ps.loss, data, cfg);
  out.ps.history = rp.history;
  return out;
}

}  // namespace pslab

#endif  // PSLAB_PAIRED_HPP_
