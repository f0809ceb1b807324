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

#ifndef PSLAB_EXPERIMENTS_HPP_
#define PSLAB_EXPERIMENTS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pslab/data_io.hpp"
#include "pslab/error.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/metrics.hpp"
#include "pslab/mlp.hpp"
#include "pslab/rng.hpp"
#include "pslab/synthesis.hpp"

namespace pslab {

// ---------------------------------------------------------------------------
// Inference over the original proxies.
// ---------------------------------------------------------------------------

/// Class probabilities of one embedding: softmax over the kind's
/// margin-free logits (x^T p for softmax, gamma cos for the softmax
/// variants, 2 cos for Proxy-NCA, pa_alpha cos for Proxy-anchor). A zero
/// embedding has no direction; its cosine logits are taken as 0, giving the
/// uniform distribution.
inline std::vector<double> class_probabilities(std::span<const double> embedding,
                                               const ProxyBank& bank,
                                               const LossConfig& cfg) {
  if (embedding.size() != bank.dim()) {
    throw ContractError("class_probabilities: dimension mismatch");
  }
  const std::size_t c = bank.num_classes();
  std::vector<double> logits(c, 0.0), probs(c);
  const bool no_direction = norm(embedding) == 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    if (no_direction && cfg.kind != LossKind::kSoftmax) continue;
    switch (cfg.kind) {
      case LossKind::kSoftmax:
        logits[k] = dot(embedding, bank.proxies.row(k));
        break;
      case LossKind::kProxyNca:
        logits[k] = 2.0 * cosine_similarity(embedding, bank.proxies.row(k));
        break;
      case LossKind::kProxyAnchor:
        logits[k] = cfg.pa_alpha * cosine_similarity(embedding, bank.proxies.row(k));
        break;
      default:
        logits[k] = cfg.gamma * cosine_similarity(embedding, bank.proxies.row(k));
        break;
    }
  }
  detail::log_sum_exp(logits, probs);
  return probs;
}

enum class GridSpace { kInput, kEmbedding };

inline std::string_view to_string(GridSpace s) {
  return s == GridSpace::kInput ? "input" : "embedding";
}

/// Square lattice over [x_min, x_max] x [y_min, y_max], endpoints included.
/// Row r sits at y_max - r * dy (top row first, as in an image); column c at
/// x_min + c * dx.
struct GridSpec {
  double x_min = -4.0, x_max = 4.0;
  double y_min = -4.0, y_max = 4.0;
  std::size_t resolution = 101;

  void validate() const {
    if (resolution < 2) throw InvalidParameter("grid: resolution must be at least 2");
    if (!(x_max > x_min) || !(y_max > y_min)) {
      throw InvalidParameter("grid: ranges must be non-empty");
    }
  }
  double x(std::size_t c) const {
    return x_min + (x_max - x_min) * static_cast<double>(c) /
                       static_cast<double>(resolution - 1);
  }
  double y(std::size_t r) const {
    return y_max - (y_max - y_min) * static_cast<double>(r) /
                       static_cast<double>(resolution - 1);
  }
};

struct ConfidenceGrid {
  GridSpace space = GridSpace::kInput;
  GridSpec spec;
  ClassId target = 0;
  Matrix values;  // resolution x resolution, entries in [0, 1]
};

/// Probability of every class at every grid point; result[k] is the grid of
/// class k. Grid rows are split across `threads` workers; each point is
/// computed independently, so the output does not depend on the count.
inline std::vector<Matrix> class_probability_grids(const MlpModel& model,
                                                   const ProxyBank& bank,
                                                   const LossConfig& cfg, GridSpace space,
                                                   const GridSpec& spec,
                                                   std::size_t threads = 1) {
  spec.validate();
  if (space == GridSpace::kEmbedding && bank.dim() != 2) {
    throw InvalidParameter("embedding-space grid needs a 2-dimensional embedding, got " +
                           std::to_string(bank.dim()));
  }
  if (space == GridSpace::kInput) {
    model.validate();
    if (model.input_dim() != 2) {
      throw InvalidParameter("input-space grid needs a 2-dimensional input");
    }
    if (model.embedding_dim() != bank.dim()) {
      throw ContractError("model embedding width does not match proxy bank");
    }
  }
  const std::size_t res = spec.resolution;
  std::vector<Matrix> grids(bank.num_classes(), Matrix(res, res));
  auto work = [&](std::size_t row_begin, std::size_t row_end) {
    for (std::size_t r = row_begin; r < row_end; ++r) {
      Matrix points(res, 2);
      for (std::size_t c = 0; c < res; ++c) {
        points(c, 0) = spec.x(c);
        points(c, 1) = spec.y(r);
      }
      const Matrix emb = space == GridSpace::kInput ? embed(model, points) : points;
      for (std::size_t c = 0; c < res; ++c) {
        const auto probs = class_probabilities(emb.row(c), bank, cfg);
        for (std::size_t k = 0; k < probs.size(); ++k) grids[k](r, c) = probs[k];
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, res);
  if (threads == 1) {
    work(0, res);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (res + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(res, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  return grids;
}

inline ConfidenceGrid confidence_grid(const MlpModel& model, const ProxyBank& bank,
                                      const LossConfig& cfg, GridSpace space,
                                      const GridSpec& spec, ClassId target,
                                      std::size_t threads = 1) {
  if (target >= bank.num_classes()) {
    throw InvalidLabel("confidence_grid: target class out of range");
  }
  auto grids = class_probability_grids(model, bank, cfg, space, spec, threads);
  return ConfidenceGrid{space, spec, target, std::move(grids[target])};
}

inline std::string grid_to_csv(const Matrix& values) {
  std::string out;
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

/// Binary PGM (P5), one byte per value: round(v * 255) with v in [0, 1].
inline std::string grid_to_pgm(const Matrix& values) {
  std::string out = "P5\n" + std::to_string(values.cols()) + " " +
                    std::to_string(values.rows()) + "\n255\n";
  for (double v : values.data()) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out += static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Boundary smoothness along a segment.
// ---------------------------------------------------------------------------

struct SmoothnessProfile {
  ClassId target = 0;            // argmax class at A
  std::vector<double> profile;   // confidence of `target` at each step
  double deviation = 0.0;        // sup-norm distance to the ramp 1 -> 0
};

inline double ramp_deviation(const std::vector<double>& profile) {
  if (profile.size() < 2) throw InvalidParameter("ramp_deviation: need two points");
  double dev = 0.0;
  const double last = static_cast<double>(profile.size() - 1);
  for (std::size_t t = 0; t < profile.size(); ++t) {
    dev = std::max(dev, std::abs(profile[t] - (1.0 - static_cast<double>(t) / last)));
  }
  return dev;
}

/// Confidence of class(A) at A + t/(steps-1) (B - A), t = 0..steps-1, in
/// input space, and its largest deviation from the linear ramp.
inline SmoothnessProfile boundary_smoothness(const MlpModel& model, const ProxyBank& bank,
                                             const LossConfig& cfg,
                                             std::span<const double> a,
                                             std::span<const double> b, std::size_t steps) {
  if (steps < 2) throw InvalidParameter("boundary_smoothness: steps must be at least 2");
  model.validate();
  if (a.size() != model.input_dim() || b.size() != model.input_dim()) {
    throw ContractError("boundary_smoothness: endpoint dimension mismatch");
  }
  Matrix points(steps, a.size());
  for (std::size_t t = 0; t < steps; ++t) {
    const double s = static_cast<double>(t) / static_cast<double>(steps - 1);
    for (std::size_t k = 0; k < a.size(); ++k) points(t, k) = a[k] + s * (b[k] - a[k]);
  }
  const Matrix emb = embed(model, points);
  SmoothnessProfile out;
  const auto at_a = class_probabilities(emb.row(0), bank, cfg);
  out.target = static_cast<ClassId>(std::max_element(at_a.begin(), at_a.end()) - at_a.begin());
  for (std::size_t t = 0; t < steps; ++t) {
    out.profile.push_back(class_probabilities(emb.row(t), bank, cfg)[out.target]);
  }
  out.deviation = ramp_deviation(out.profile);
  return out;
}

// ---------------------------------------------------------------------------
// Logit heatmap.
// ---------------------------------------------------------------------------

struct Heatmap {
  Matrix values;                      // cosine similarities
  std::vector<std::size_t> row_order; // original row index of each heatmap row
  std::size_t original_rows = 0;
  std::size_t original_cols = 0;
};

/// Rows: embeddings sorted by class (stable), then synthetic embeddings.
/// Columns: original proxies, then synthetic proxies.
inline Heatmap logits_heatmap(const Matrix& embeddings, const std::vector<ClassId>& labels,
                              const ProxyBank& bank,
                              const SyntheticSet* synthetics = nullptr) {
  if (labels.size() != embeddings.rows()) {
    throw ContractError("logits_heatmap: label count mismatch");
  }
  if (embeddings.cols() != bank.dim()) {
    throw ContractError("logits_heatmap: dimension mismatch");
  }
  Heatmap out;
  out.row_order.resize(embeddings.rows());
  std::iota(out.row_order.begin(), out.row_order.end(), std::size_t{0});
  std::stable_sort(out.row_order.begin(), out.row_order.end(),
                   [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  out.original_rows = embeddings.rows();
  out.original_cols = bank.num_classes();
  const std::size_t m = synthetics ? synthetics->size() : 0;
  out.values = Matrix(out.original_rows + m, out.original_cols + m);
  auto column = [&](std::size_t c) {
    return c < out.original_cols ? bank.proxies.row(c)
                                 : synthetics->proxies.row(c - out.original_cols);
  };
  auto row = [&](std::size_t r) {
    return r < out.original_rows ? embeddings.row(out.row_order[r])
                                 : synthetics->embeddings.row(r - out.original_rows);
  };
  for (std::size_t r = 0; r < out.values.rows(); ++r) {
    for (std::size_t c = 0; c < out.values.cols(); ++c) {
      out.values(r, c) = cosine_similarity(row(r), column(c));
    }
  }
  return out;
}

/// Mean cosines of the four heatmap diagonals. For synthetic k the
/// dominant source is the one with the larger weight (i when lambda >= 0.5).
///   gt_original      s(x_n, p_{y_n})              (ground truth, originals)
///   gt_synthetic     s(x~_k, p~_k)                (ground truth, synthetics)
///   competitor_proxy s(x_dom(k), p~_k)            (synthetic proxy vs its source)
///   competitor_embed s(x~_k, p_{y_dom(k)})        (synthetic vs source proxy)
struct HeatmapDiagonals {
  double gt_original = 0.0;
  double gt_synthetic = 0.0;
  double competitor_proxy = 0.0;
  double competitor_embedding = 0.0;
};

inline HeatmapDiagonals heatmap_diagonals(const EmbeddingBatch& batch, const ProxyBank& bank,
                                          const SyntheticSet& syn) {
  HeatmapDiagonals d;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    d.gt_original += cosine_similarity(batch.embeddings.row(n),
                                       bank.proxies.row(batch.labels[n]));
  }
  d.gt_original /= static_cast<double>(batch.size());
  if (syn.size() == 0) return d;
  for (std::size_t k = 0; k < syn.size(); ++k) {
    const bool first = syn.pairs[k].lambda >= 0.5;
    const std::size_t src = first ? syn.pairs[k].i : syn.pairs[k].j;
    const ClassId cls = first ? syn.source_class_i[k] : syn.source_class_j[k];
    d.gt_synthetic += cosine_similarity(syn.embeddings.row(k), syn.proxies.row(k));
    d.competitor_proxy += cosine_similarity(batch.embeddings.row(src), syn.proxies.row(k));
    d.competitor_embedding += cosine_similarity(syn.embeddings.row(k), bank.proxies.row(cls));
  }
  const double m = static_cast<double>(syn.size());
  d.gt_synthetic /= m;
  d.competitor_proxy /= m;
  d.competitor_embedding /= m;
  return d;
}

// ---------------------------------------------------------------------------
// Embedding deformation retrieval.
// ---------------------------------------------------------------------------

struct DeformationSpec {
  double lambda = 0.5;
  std::size_t samples_per_pair = 10;
  std::uint64_t seed = 0;
  // Ordered pairs (i, j) and (j, i) are distinct synthetic classes; with
  // `ordered_pairs = false` only i < j is generated.
  bool ordered_pairs = true;

  void validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw InvalidParameter("deformation: lambda must lie in [0, 1]");
    }
    if (samples_per_pair < 2) {
      throw InvalidParameter("deformation: samples_per_pair must be at least 2");
    }
  }
};

/// Combined retrieval set of a deformation run: gallery rows are the
/// originals followed by the synthetic mixes; queries are the mixes.
struct DeformationSet {
  LabeledPoints gallery;          // synthetic class ids start at num_classes
  std::size_t num_originals = 0;
  std::vector<PairDraw> sources;  // per synthetic row, gallery indices mixed
};

inline DeformationSet build_deformation_set(const LabeledPoints& data,
                                            const DeformationSpec& spec) {
  spec.validate();
  data.validate();
  const std::size_t classes = count_classes(data.labels);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t r = 0; r < data.size(); ++r) members[data.labels[r]].push_back(r);
  std::vector<ClassId> present;
  for (ClassId c = 0; c < classes; ++c) {
    if (!members[c].empty()) present.push_back(c);
  }
  if (present.size() < 2) {
    throw InvalidParameter("deformation: needs at least two populated classes");
  }
  Rng rng(spec.seed, Streams::kEval);
  DeformationSet out;
  out.num_originals = data.size();
  std::vector<std::vector<double>> rows;
  std::vector<ClassId> labels;
  ClassId next_label = classes;
  for (ClassId a : present) {
    for (ClassId b : present) {
      if (a == b || (!spec.ordered_pairs && a > b)) continue;
      for (std::size_t s = 0; s < spec.samples_per_pair; ++s) {
        const std::size_t i = members[a][rng.uniform_index(members[a].size())];
        const std::size_t j = members[b][rng.uniform_index(members[b].size())];
        std::vector<double> mix(data.dim());
        for (std::size_t c = 0; c < mix.size(); ++c) {
          mix[c] = spec.lambda * data.points(i, c) + (1.0 - spec.lambda) * data.points(j, c);
        }
        rows.push_back(std::move(mix));
        labels.push_back(next_label);
        out.sources.push_back({i, j, spec.lambda});
      }
      ++next_label;
    }
  }
  out.gallery.points = Matrix(data.size() + rows.size(), data.dim());
  std::copy(data.points.data().begin(), data.points.data().end(),
            out.gallery.points.data().begin());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy(rows[k].begin(), rows[k].end(), out.gallery.points.row(data.size() + k).begin());
  }
  out.gallery.labels = data.labels;
  out.gallery.labels.insert(out.gallery.labels.end(), labels.begin(), labels.end());
  return out;
}

/// Recall@1 of synthetic mixes retrieving a mix of the same (i, j, lambda)
/// class from the gallery of originals and mixes, excluding the query.
inline double deformation_test(const LabeledPoints& data, const DeformationSpec& spec) {
  const DeformationSet set = build_deformation_set(data, spec);
  const std::size_t m = set.sources.size();
  std::vector<std::size_t> query_rows(m);
  std::iota(query_rows.begin(), query_rows.end(), set.num_originals);
  RetrievalSetup setup;
  setup.queries = set.gallery.select(query_rows);
  setup.gallery = set.gallery;
  setup.exclude = query_rows;
  return evaluate(setup, {1}).recall_at_k.at(1);
}

// ---------------------------------------------------------------------------
// PCA by power iteration.
// ---------------------------------------------------------------------------

struct PcaResult {
  Matrix coordinates;                   // N x components
  Matrix directions;                    // components x d, unit rows
  std::vector<double> explained_variance;
  std::vector<double> mean;
};

/// Projects mean-centred rows onto the leading principal directions of the
/// sample covariance, found by power iteration with deflation (tolerance
/// 1e-9 on the direction, at most 10^4 iterations per component). Each
/// direction's sign is fixed so that its largest-magnitude entry is positive.
inline PcaResult pca_project(const Matrix& data, std::size_t components = 2,
                             double tolerance = 1e-9, std::size_t max_iterations = 10000) {
  const std::size_t n = data.rows(), d = data.cols();
  if (n < 2) throw InvalidParameter("pca: need at least two rows");
  if (components == 0 || components > d) {
    throw InvalidParameter("pca: components must lie in [1, d]");
  }
  data.require_finite("pca");
  PcaResult out;
  out.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) axpy(1.0, data.row(r), out.mean);
  for (double& m : out.mean) m /= static_cast<double>(n);
  Matrix centered = data;
  for (std::size_t r = 0; r < n; ++r) axpy(-1.0, out.mean, centered.row(r));

  Matrix cov(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov(a, b) += centered(r, a) * centered(r, b);
    }
  }
  cov *= 1.0 / static_cast<double>(n - 1);
  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) trace += cov(a, a);
  if (!(trace > 0.0)) throw DegenerateInput("pca: data has zero variance (rank 0)");

  Rng rng(0x9ca, 0);
  out.directions = Matrix(components, d);
  std::vector<double> v(d), w(d);
  for (std::size_t comp = 0; comp < components; ++comp) {
    for (double& x : v) x = rng.normal();
    auto orthogonalize = [&](std::vector<double>& vec) {
      for (std::size_t prev = 0; prev < comp; ++prev) {
        axpy(-dot(vec, out.directions.row(prev)), out.directions.row(prev), vec);
      }
    };
    orthogonalize(v);
    double len = norm(v);
    for (double& x : v) x /= len;
    double eigen = 0.0;
    for (std::size_t it = 0; it < max_iterations; ++it) {
      for (std::size_t a = 0; a < d; ++a) w[a] = dot(cov.row(a), v);
      orthogonalize(w);  // deflation against the directions already found
      len = norm(w);
      if (!(len > trace * 1e-12)) break;  // remaining spectrum is zero
      for (double& x : w) x /= len;
      double diff = 0.0;
      for (std::size_t a = 0; a < d; ++a) diff = std::max(diff, std::abs(w[a] - v[a]));
      v.swap(w);
      if (diff < tolerance) break;
    }
    for (std::size_t a = 0; a < d; ++a) w[a] = dot(cov.row(a), v);
    eigen = dot(v, w);
    const auto biggest = std::max_element(v.begin(), v.end(), [](double x, double y) {
      return std::abs(x) < std::abs(y);
    });
    if (*biggest < 0.0) {
      for (double& x : v) x = -x;
    }
    std::copy(v.begin(), v.end(), out.directions.row(comp).begin());
    out.explained_variance.push_back(std::max(eigen, 0.0));
  }
  out.coordinates = Matrix(n, components);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t comp = 0; comp < components; ++comp) {
      out.coordinates(r, comp) = dot(centered.row(r), out.directions.row(comp));
    }
  }
  return out;
}

}  // namespace pslab

#endif  // PSLAB_EXPERIMENTS_HPP_
