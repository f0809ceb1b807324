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

#ifndef PSLAB_SYNTHESIS_HPP_
#define PSLAB_SYNTHESIS_HPP_

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pslab/error.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/rng.hpp"

namespace pslab {

// One synthetic generation: lambda * row i + (1 - lambda) * row j.
struct PairDraw {
  std::size_t i = 0;
  std::size_t j = 0;
  double lambda = 1.0;

  friend bool operator==(const PairDraw&, const PairDraw&) = default;
};

/// Where interpolation coefficients come from: Beta(alpha, alpha) draws, or
/// one fixed value when `static_lambda` is set (it overrides alpha).
struct LambdaSource {
  double alpha = 0.4;
  std::optional<double> static_lambda;

  void validate() const {
    if (static_lambda) {
      if (!(*static_lambda >= 0.0 && *static_lambda <= 1.0)) {
        throw InvalidParameter("static_lambda must lie in [0, 1]");
      }
    } else if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw InvalidParameter("alpha must be positive and finite");
    }
  }

  double draw(Rng& rng) const {
    return static_lambda ? *static_lambda : beta_sample(alpha, rng);
  }
};

inline std::size_t synthetic_count(std::size_t batch_size, double mu) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) {
    throw InvalidParameter("mu must be non-negative and finite");
  }
  return static_cast<std::size_t>(std::floor(mu * static_cast<double>(batch_size)));
}

/// Draws floor(mu * N) ordered cross-class index pairs, uniform over all
/// (i, j) with labels[i] != labels[j] and with replacement across draws,
/// each followed by its own lambda. Per draw the stream is consumed as:
/// rejection-sampled i, j (two uniform_index calls per attempt), then lambda.
inline std::vector<PairDraw> sample_pairs(const std::vector<ClassId>& labels,
                                          double mu, const LambdaSource& lambdas,
                                          Rng& rng) {
  lambdas.validate();
  const std::size_t n = labels.size();
  const std::size_t m = synthetic_count(n, mu);
  std::vector<PairDraw> out;
  if (m == 0) return out;
  bool multi_class = false;
  for (std::size_t k = 1; k < n && !multi_class; ++k) {
    multi_class = labels[k] != labels[0];
  }
  if (!multi_class) {
    throw NoValidPair("sample_pairs: batch holds a single class; no "
                      "cross-class pair exists");
  }
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t i, j;
    do {
      i = static_cast<std::size_t>(rng.uniform_index(n));
      j = static_cast<std::size_t>(rng.uniform_index(n));
    } while (labels[i] == labels[j]);
    out.push_back({i, j, lambdas.draw(rng)});
  }
  return out;
}

/// Synthetic embeddings/proxies (one synthetic class per row) and the
/// draws that produced them.
struct SyntheticSet {
  Matrix embeddings;
  Matrix proxies;
  std::vector<PairDraw> pairs;
  // Classes of the two sources, i.e. the proxy rows that were mixed.
  std::vector<ClassId> source_class_i;
  std::vector<ClassId> source_class_j;

  std::size_t size() const noexcept { return pairs.size(); }
};

inline SyntheticSet synthesize(const EmbeddingBatch& batch, const ProxyBank& bank,
                               const std::vector<PairDraw>& pairs) {
  const std::size_t d = batch.dim();
  if (bank.dim() != d) throw ContractError("synthesize: dimension mismatch");
  SyntheticSet out;
  out.embeddings = Matrix(pairs.size(), d);
  out.proxies = Matrix(pairs.size(), d);
  out.pairs = pairs;
  out.source_class_i.reserve(pairs.size());
  out.source_class_j.reserve(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& pr = pairs[k];
    if (pr.i >= batch.size() || pr.j >= batch.size()) {
      throw ContractError("synthesize: pair index out of range");
    }
    const ClassId ci = batch.labels[pr.i];
    const ClassId cj = batch.labels[pr.j];
    if (ci >= bank.num_classes() || cj >= bank.num_classes()) {
      throw InvalidLabel("synthesize: source label out of range");
    }
    if (ci == cj) throw InvalidPair("synthesize: sources share a class");
    const double a = pr.lambda, b = 1.0 - pr.lambda;
    for (std::size_t c = 0; c < d; ++c) {
      out.embeddings(k, c) = a * batch.embeddings(pr.i, c) + b * batch.embeddings(pr.j, c);
      out.proxies(k, c) = a * bank.proxies(ci, c) + b * bank.proxies(cj, c);
    }
    out.source_class_i.push_back(ci);
    out.source_class_j.push_back(cj);
  }
  return out;
}

/// Which original and synthetic rows enter the loss.
struct AugmentMode {
  bool use_original_embeddings = true;
  bool use_synthetic_embeddings = true;
  bool use_original_proxies = true;
  bool use_synthetic_proxies = true;

  static constexpr AugmentMode full() { return {true, true, true, true}; }
  static constexpr AugmentMode m1() { return {true, false, true, false}; }
  static constexpr AugmentMode m2() { return {false, true, false, true}; }
  static constexpr AugmentMode m3() { return {true, false, true, true}; }
  static constexpr AugmentMode m4() { return {false, true, true, true}; }

  bool uses_synthetics() const noexcept {
    return use_synthetic_embeddings || use_synthetic_proxies;
  }

  // Flag-level consistency; independent of how many synthetics exist.
  void validate() const {
    if (!use_original_embeddings && !use_synthetic_embeddings) {
      throw InconsistentMode("augment mode uses no embeddings");
    }
    if (!use_original_proxies && !use_synthetic_proxies) {
      throw InconsistentMode("augment mode uses no proxies");
    }
    if (use_original_embeddings && !use_original_proxies) {
      throw InconsistentMode(
          "original embeddings need their original positive proxies");
    }
    if (use_synthetic_embeddings && !use_synthetic_proxies) {
      throw InconsistentMode(
          "synthetic embeddings need their synthetic positive proxies");
    }
  }

  friend bool operator==(const AugmentMode&, const AugmentMode&) = default;
};

inline std::string_view to_string(const AugmentMode& mode) {
  if (mode == AugmentMode::full()) return "full";
  if (mode == AugmentMode::m1()) return "m1";
  if (mode == AugmentMode::m2()) return "m2";
  if (mode == AugmentMode::m3()) return "m3";
  if (mode == AugmentMode::m4()) return "m4";
  return "custom";
}

inline AugmentMode parse_augment_mode(std::string_view name) {
  if (name == "full" || name == "ps") return AugmentMode::full();
  if (name == "m1") return AugmentMode::m1();
  if (name == "m2") return AugmentMode::m2();
  if (name == "m3") return AugmentMode::m3();
  if (name == "m4") return AugmentMode::m4();
  throw InvalidParameter("unknown augment mode '" + std::string(name) +
                         "' (expected m1, m2, m3, m4 or full)");
}

/// Linear map from the augmented rows back to their sources. Original rows
/// come first in both matrices; synthetic row k of either matrix mixes two
/// sources with weights (lambda_k, 1 - lambda_k).
struct Backmap {
  std::size_t num_embeddings = 0;  // N of the original batch
  std::size_t num_proxies = 0;     // C of the original bank
  bool original_embeddings = false;
  bool original_proxies = false;
  bool synthetic_embeddings = false;
  bool synthetic_proxies = false;
  std::vector<PairDraw> pairs;
  std::vector<ClassId> class_i;
  std::vector<ClassId> class_j;
};

/// The loss input after augmentation. Synthetic class k is labelled C' + k,
/// where C' is the number of original proxy rows kept (C or 0).
struct AugmentedBatch {
  EmbeddingBatch batch;
  ProxyBank bank;
  Backmap backmap;
};

inline AugmentedBatch assemble(const EmbeddingBatch& batch, const ProxyBank& bank,
                               const SyntheticSet& syn, const AugmentMode& mode) {
  mode.validate();
  if (syn.embeddings.rows() != syn.size() || syn.proxies.rows() != syn.size()) {
    throw ContractError("assemble: synthetic set is inconsistent");
  }
  if (syn.size() > 0 && syn.embeddings.cols() != batch.dim()) {
    throw ContractError("assemble: synthetic dimension mismatch");
  }
  AugmentedBatch out;
  auto& bm = out.backmap;
  bm.num_embeddings = batch.size();
  bm.num_proxies = bank.num_classes();
  bm.original_embeddings = mode.use_original_embeddings;
  bm.original_proxies = mode.use_original_proxies;
  bm.synthetic_embeddings = mode.use_synthetic_embeddings && syn.size() > 0;
  bm.synthetic_proxies = mode.use_synthetic_proxies && syn.size() > 0;
  bm.pairs = syn.pairs;
  bm.class_i = syn.source_class_i;
  bm.class_j = syn.source_class_j;

  const std::size_t kept_classes = mode.use_original_proxies ? bank.num_classes() : 0;
  Matrix embeddings = mode.use_original_embeddings ? batch.embeddings
                                                   : Matrix(0, batch.dim());
  std::vector<ClassId> labels;
  if (mode.use_original_embeddings) labels = batch.labels;
  if (bm.synthetic_embeddings) {
    embeddings = vstack(embeddings, syn.embeddings);
    for (std::size_t k = 0; k < syn.size(); ++k) labels.push_back(kept_classes + k);
  }
  Matrix proxies = mode.use_original_proxies ? bank.proxies : Matrix(0, bank.dim());
  if (bm.synthetic_proxies) proxies = vstack(proxies, syn.proxies);

  out.batch = EmbeddingBatch{std::move(embeddings), std::move(labels)};
  out.bank = ProxyBank{std::move(proxies)};
  return out;
}

/// Adjoint of assemble: accumulates gradients on augmented rows onto the
/// original embeddings and proxies they were built from.
inline LossGrad scatter_gradients(const LossGrad& aug, const Backmap& bm) {
  const std::size_t n_orig = bm.original_embeddings ? bm.num_embeddings : 0;
  const std::size_t c_orig = bm.original_proxies ? bm.num_proxies : 0;
  const std::size_t m = bm.pairs.size();
  const std::size_t n_expected = n_orig + (bm.synthetic_embeddings ? m : 0);
  const std::size_t c_expected = c_orig + (bm.synthetic_proxies ? m : 0);
  if (aug.d_embeddings.rows() != n_expected || aug.d_proxies.rows() != c_expected) {
    throw ContractError("scatter_gradients: gradient shapes do not match backmap");
  }
  const std::size_t d = aug.d_embeddings.cols();
  if (aug.d_proxies.cols() != d) {
    throw ContractError("scatter_gradients: gradient widths differ");
  }

  LossGrad out;
  out.loss = aug.loss;
  out.d_embeddings = Matrix(bm.num_embeddings, d);
  out.d_proxies = Matrix(bm.num_proxies, d);
  for (std::size_t r = 0; r < n_orig; ++r) {
    axpy(1.0, aug.d_embeddings.row(r), out.d_embeddings.row(r));
  }
  for (std::size_t r = 0; r < c_orig; ++r) {
    axpy(1.0, aug.d_proxies.row(r), out.d_proxies.row(r));
  }
  for (std::size_t k = 0; k < m; ++k) {
    const auto& pr = bm.pairs[k];
    const double a = pr.lambda, b = 1.0 - pr.lambda;
    if (bm.synthetic_embeddings) {
      const auto g = aug.d_embeddings.row(n_orig + k);
      axpy(a, g, out.d_embeddings.row(pr.i));
      axpy(b, g, out.d_embeddings.row(pr.j));
    }
    if (bm.synthetic_proxies) {
      const auto g = aug.d_proxies.row(c_orig + k);
      axpy(a, g, out.d_proxies.row(bm.class_i[k]));
      axpy(b, g, out.d_proxies.row(bm.class_j[k]));
    }
  }
  return out;
}

/// Loss and source gradients for one batch under a fixed set of draws:
/// synthesize, assemble, evaluate, scatter.
inline LossGrad augmented_loss(const EmbeddingBatch& batch, const ProxyBank& bank,
                               const std::vector<PairDraw>& pairs,
                               const AugmentMode& mode, const LossConfig& cfg) {
  const SyntheticSet syn = synthesize(batch, bank, pairs);
  const AugmentedBatch aug = assemble(batch, bank, syn, mode);
  return scatter_gradients(loss_forward_backward(aug.batch, aug.bank, cfg),
                           aug.backmap);
}

}  // namespace pslab

#endif  // PSLAB_SYNTHESIS_HPP_
