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

#ifndef PSLAB_LOSSES_HPP_
#define PSLAB_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "pslab/error.hpp"
#include "pslab/matrix.hpp"

namespace pslab {

using ClassId = std::size_t;

/// Unnormalised embeddings, one row per sample, with their class ids.
struct EmbeddingBatch {
  Matrix embeddings;
  std::vector<ClassId> labels;

  std::size_t size() const noexcept { return embeddings.rows(); }
  std::size_t dim() const noexcept { return embeddings.cols(); }
};

/// Learnable class proxies, one row per class.
struct ProxyBank {
  Matrix proxies;

  std::size_t num_classes() const noexcept { return proxies.rows(); }
  std::size_t dim() const noexcept { return proxies.cols(); }
};

enum class LossKind {
  kSoftmax,
  kNormSoftmax,
  kCosFace,
  kArcFace,
  kSphereFace,
  kProxyNca,
  kProxyAnchor,
};

inline constexpr LossKind kAllLossKinds[] = {
    LossKind::kSoftmax,    LossKind::kNormSoftmax, LossKind::kCosFace,
    LossKind::kArcFace,    LossKind::kSphereFace,  LossKind::kProxyNca,
    LossKind::kProxyAnchor,
};

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kNormSoftmax: return "norm_softmax";
    case LossKind::kCosFace: return "cosface";
    case LossKind::kArcFace: return "arcface";
    case LossKind::kSphereFace: return "sphereface";
    case LossKind::kProxyNca: return "proxy_nca";
    case LossKind::kProxyAnchor: return "proxy_anchor";
  }
  return "unknown";
}

inline LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : kAllLossKinds) {
    if (to_string(k) == name) return k;
  }
  throw InvalidParameter("unknown loss kind '" + std::string(name) + "'");
}

// Every kind except plain softmax works on l2-normalised vectors.
inline bool is_normalized(LossKind kind) noexcept {
  return kind != LossKind::kSoftmax;
}

/// Loss selection and hyper-parameters. `margin` falls back to the kind's
/// conventional default when unset: CosFace 0.35 (additive cosine), ArcFace
/// 0.5 (additive angle), SphereFace 4 (multiplicative angle, integer).
struct LossConfig {
  LossKind kind = LossKind::kNormSoftmax;
  double gamma = 16.0;
  std::optional<double> margin;
  double pa_alpha = 32.0;
  double pa_delta = 0.1;

  double effective_margin() const noexcept {
    if (margin) return *margin;
    switch (kind) {
      case LossKind::kCosFace: return 0.35;
      case LossKind::kArcFace: return 0.5;
      case LossKind::kSphereFace: return 4.0;
      default: return 0.0;
    }
  }

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw InvalidParameter("loss: gamma must be positive and finite");
    }
    const double m = effective_margin();
    switch (kind) {
      case LossKind::kCosFace:
        if (!(m >= 0.0 && m < 2.0)) {
          throw InvalidParameter("loss: cosface margin must lie in [0, 2)");
        }
        break;
      case LossKind::kArcFace:
        if (!(m >= 0.0 && m < std::numbers::pi)) {
          throw InvalidParameter("loss: arcface margin must lie in [0, pi)");
        }
        break;
      case LossKind::kSphereFace:
        if (!(m >= 1.0 && m <= 16.0) || m != std::floor(m)) {
          throw InvalidParameter(
              "loss: sphereface margin must be an integer in [1, 16]");
        }
        break;
      case LossKind::kProxyAnchor:
        if (!(pa_alpha > 0.0) || !std::isfinite(pa_alpha)) {
          throw InvalidParameter("loss: pa_alpha must be positive and finite");
        }
        if (!std::isfinite(pa_delta)) {
          throw InvalidParameter("loss: pa_delta must be finite");
        }
        break;
      default:
        break;
    }
  }
};

/// Mean loss over the batch and its gradients with respect to the raw
/// (pre-normalisation) embeddings and proxies.
struct LossGrad {
  double loss = 0.0;
  Matrix d_embeddings;
  Matrix d_proxies;
};

namespace detail {

inline void validate_inputs(const EmbeddingBatch& batch, const ProxyBank& bank) {
  if (batch.size() == 0 || batch.dim() == 0) {
    throw ContractError("loss: batch must hold at least one non-empty row");
  }
  if (batch.labels.size() != batch.size()) {
    throw ContractError("loss: label count does not match embedding rows");
  }
  if (bank.num_classes() == 0) throw ContractError("loss: empty proxy bank");
  if (bank.dim() != batch.dim()) {
    throw ContractError("loss: embedding and proxy dimensions differ");
  }
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] >= bank.num_classes()) {
      throw InvalidLabel("loss: label " + std::to_string(batch.labels[i]) +
                         " at row " + std::to_string(i) + " is out of range [0, " +
                         std::to_string(bank.num_classes()) + ")");
    }
  }
}

// log(sum exp(v)) with max shift; also writes softmax(v) into `probs`.
inline double log_sum_exp(std::span<const double> v, std::span<double> probs) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    probs[k] = std::exp(v[k] - m);
    s += probs[k];
  }
  for (double& p : probs) p /= s;
  return m + std::log(s);
}

// Chebyshev polynomials T_m(c) and U_{m-1}(c) by the shared recurrence.
inline std::pair<double, double> chebyshev_tu(int m, double c) {
  double t_prev = 1.0, t = c;        // T_0, T_1
  double u_prev = 0.0, u = 1.0;      // U_{-1}, U_0
  if (m == 0) return {1.0, 0.0};
  for (int k = 1; k < m; ++k) {
    const double t_next = 2.0 * c * t - t_prev;
    const double u_next = 2.0 * c * u - u_prev;
    t_prev = t;
    t = t_next;
    u_prev = u;
    u = u_next;
  }
  return {t, u};
}

// Positive-class logit transform of the margin softmax variants: returns
// the logit and its derivative with respect to the cosine.
inline std::pair<double, double> positive_logit(const LossConfig& cfg,
                                                double cos_theta) {
  const double g = cfg.gamma;
  const double m = cfg.effective_margin();
  switch (cfg.kind) {
    case LossKind::kCosFace:
      return {g * (cos_theta - m), g};
    case LossKind::kArcFace: {
      // cos(theta + m) without acos.
      const double sin_theta =
          std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
      const double value = cos_theta * std::cos(m) - sin_theta * std::sin(m);
      const double safe_sin = std::max(sin_theta, 1e-12);
      const double deriv = std::cos(m) + cos_theta * std::sin(m) / safe_sin;
      return {g * value, g * deriv};
    }
    case LossKind::kSphereFace: {
      // psi(theta) = (-1)^k cos(m theta) - 2k on [k pi/m, (k+1) pi/m].
      const int mi = static_cast<int>(m);
      const double theta = std::acos(std::clamp(cos_theta, -1.0, 1.0));
      int k = static_cast<int>(std::floor(mi * theta / std::numbers::pi));
      k = std::clamp(k, 0, mi - 1);
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      const auto [t_m, u_m1] = chebyshev_tu(mi, cos_theta);
      return {g * (sign * t_m - 2.0 * k), g * sign * mi * u_m1};
    }
    default:
      return {g * cos_theta, g};
  }
}

// Per-sample loss gradient over the similarity matrix for the softmax
// family. `sims` holds dot products (softmax) or cosines (the rest).
inline double softmax_family(const LossConfig& cfg,
                             const std::vector<ClassId>& labels,
                             const Matrix& sims, Matrix& d_sims) {
  const std::size_t n = sims.rows(), c = sims.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> logits(c), probs(c), slope(c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId y = labels[i];
    for (std::size_t k = 0; k < c; ++k) {
      if (cfg.kind == LossKind::kSoftmax) {
        logits[k] = sims(i, k);
        slope[k] = 1.0;
      } else if (k == y) {
        std::tie(logits[k], slope[k]) = positive_logit(cfg, sims(i, k));
      } else {
        logits[k] = cfg.gamma * sims(i, k);
        slope[k] = cfg.gamma;
      }
    }
    total += log_sum_exp(logits, probs) - logits[y];
    for (std::size_t k = 0; k < c; ++k) {
      const double dz = probs[k] - (k == y ? 1.0 : 0.0);
      d_sims(i, k) = dz * slope[k] * inv_n;
    }
  }
  return total * inv_n;
}

// -log( exp(-|x-p+|^2) / sum_{q in P-} exp(-|x-q|^2) ) on unit vectors,
// where |a-b|^2 = 2 - 2 cos.
inline double proxy_nca(const std::vector<ClassId>& labels, const Matrix& cosines,
                        Matrix& d_sims) {
  const std::size_t n = cosines.rows(), c = cosines.cols();
  if (c < 2) {
    throw InvalidParameter("proxy_nca: needs at least two proxies (one negative)");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> neg_logits(c - 1), probs(c - 1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const ClassId y = labels[i];
    std::size_t slot = 0;
    for (std::size_t k = 0; k < c; ++k) {
      if (k != y) neg_logits[slot++] = -(2.0 - 2.0 * cosines(i, k));
    }
    const double pos_logit = -(2.0 - 2.0 * cosines(i, y));
    total += log_sum_exp(neg_logits, probs) - pos_logit;
    slot = 0;
    for (std::size_t k = 0; k < c; ++k) {
      d_sims(i, k) = (k == y ? -2.0 : 2.0 * probs[slot++]) * inv_n;
    }
  }
  return total * inv_n;
}

// Proxies as anchors:
//   1/|P+| sum_{p in P+} log(1 + sum_{x in X+_p} exp(-a (s(x,p) - delta)))
// + 1/|P|  sum_{p in P}  log(1 + sum_{x in X-_p} exp( a (s(x,p) + delta)))
inline double proxy_anchor(const LossConfig& cfg,
                           const std::vector<ClassId>& labels,
                           const Matrix& cosines, Matrix& d_sims) {
  const std::size_t n = cosines.rows(), c = cosines.cols();
  const double a = cfg.pa_alpha, delta = cfg.pa_delta;
  std::vector<char> has_positive(c, 0);
  for (ClassId y : labels) has_positive[y] = 1;
  const auto num_pos = static_cast<std::size_t>(
      std::count(has_positive.begin(), has_positive.end(), 1));
  if (num_pos == 0) {
    throw InvalidParameter("proxy_anchor: batch has no positive proxy");
  }
  d_sims.fill(0.0);
  std::vector<double> terms, probs;
  std::vector<std::size_t> rows;
  double pos_total = 0.0, neg_total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    for (int positive = 1; positive >= 0; --positive) {
      if (positive && !has_positive[k]) continue;
      // The leading zero is the "1 +" inside the log.
      terms.assign(1, 0.0);
      rows.clear();
      for (std::size_t i = 0; i < n; ++i) {
        if ((labels[i] == k) != static_cast<bool>(positive)) continue;
        const double s = cosines(i, k);
        terms.push_back(positive ? -a * (s - delta) : a * (s + delta));
        rows.push_back(i);
      }
      probs.resize(terms.size());
      const double value = log_sum_exp(terms, probs);
      const double weight =
          1.0 / static_cast<double>(positive ? num_pos : c);
      (positive ? pos_total : neg_total) += value;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        d_sims(rows[r], k) += weight * probs[r + 1] * (positive ? -a : a);
      }
    }
  }
  return pos_total / static_cast<double>(num_pos) +
         neg_total / static_cast<double>(c);
}

// d/dv of v/|v| applied to an upstream gradient g: (g - <g, u> u) / |v|.
inline void project_through_normalization(std::span<double> grad,
                                          std::span<const double> unit,
                                          double length) {
  const double radial = dot(grad, unit);
  for (std::size_t k = 0; k < grad.size(); ++k) {
    grad[k] = (grad[k] - radial * unit[k]) / length;
  }
}

}  // namespace detail

/// Forward and analytic backward pass of the configured proxy loss.
///
/// Softmax-family kinds and Proxy-NCA average per-sample terms over the
/// batch. Proxy-anchor reduces over proxies instead (its own published
/// normalisation by |P+| and |P|). Normalised kinds differentiate through
/// the internal l2 normalisation, so gradients refer to the raw inputs.
inline LossGrad loss_forward_backward(const EmbeddingBatch& batch,
                                      const ProxyBank& bank,
                                      const LossConfig& cfg) {
  cfg.validate();
  detail::validate_inputs(batch, bank);
  const bool normalized = is_normalized(cfg.kind);

  Matrix x_unit, p_unit;
  std::vector<double> x_len, p_len;
  if (normalized) {
    std::tie(x_unit, x_len) = normalize_rows(batch.embeddings, "loss: embedding");
    std::tie(p_unit, p_len) = normalize_rows(bank.proxies, "loss: proxy");
  }
  const Matrix& xs = normalized ? x_unit : batch.embeddings;
  const Matrix& ps = normalized ? p_unit : bank.proxies;
  Matrix sims = matmul_transpose_b(xs, ps);
  if (normalized) {
    for (double& s : sims.data()) s = std::clamp(s, -1.0, 1.0);
  }

  Matrix d_sims(sims.rows(), sims.cols());
  double loss = 0.0;
  switch (cfg.kind) {
    case LossKind::kProxyNca:
      loss = detail::proxy_nca(batch.labels, sims, d_sims);
      break;
    case LossKind::kProxyAnchor:
      loss = detail::proxy_anchor(cfg, batch.labels, sims, d_sims);
      break;
    default:
      loss = detail::softmax_family(cfg, batch.labels, sims, d_sims);
      break;
  }

  LossGrad out;
  out.loss = loss;
  out.d_embeddings = Matrix(batch.size(), batch.dim());
  out.d_proxies = Matrix(bank.num_classes(), bank.dim());
  for (std::size_t i = 0; i < sims.rows(); ++i) {
    for (std::size_t k = 0; k < sims.cols(); ++k) {
      const double g = d_sims(i, k);
      if (g == 0.0) continue;
      axpy(g, ps.row(k), out.d_embeddings.row(i));
      axpy(g, xs.row(i), out.d_proxies.row(k));
    }
  }
  if (normalized) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      detail::project_through_normalization(out.d_embeddings.row(i),
                                            x_unit.row(i), x_len[i]);
    }
    for (std::size_t k = 0; k < bank.num_classes(); ++k) {
      detail::project_through_normalization(out.d_proxies.row(k),
                                            p_unit.row(k), p_len[k]);
    }
  }
  return out;
}

inline double loss_value(const EmbeddingBatch& batch, const ProxyBank& bank,
                         const LossConfig& cfg) {
  return loss_forward_backward(batch, bank, cfg).loss;
}

/// Closed-form gradient of anchor i's plain softmax loss (S(x, p) = x^T p)
/// over its positive similarity: E(p_y) / sum_q E(q) - 1.
inline double softmax_grad_over_similarity(const EmbeddingBatch& batch,
                                           const ProxyBank& bank,
                                           std::size_t anchor) {
  detail::validate_inputs(batch, bank);
  if (anchor >= batch.size()) throw ContractError("anchor index out of range");
  std::vector<double> logits(bank.num_classes()), probs(bank.num_classes());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    logits[k] = dot(batch.embeddings.row(anchor), bank.proxies.row(k));
  }
  detail::log_sum_exp(logits, probs);
  return probs[batch.labels[anchor]] - 1.0;
}

/// Gradients of anchor i's plain softmax loss over S(x, p_i) and S(x, p_j)
/// once the synthetic proxy lambda p_i + (1 - lambda) p_j joins the proxy
/// set as an extra negative:
///   ( (lambda E(p~) + E(p_i)) / (E(p~) + sum_P E(q)) - 1,
///     ((1 - lambda) E(p~) + E(p_j)) / (E(p~) + sum_P E(q)) ).
inline std::pair<double, double> ps_grad_over_similarity(
    const EmbeddingBatch& batch, const ProxyBank& bank, std::size_t anchor,
    ClassId other_class, double lambda) {
  detail::validate_inputs(batch, bank);
  if (anchor >= batch.size()) throw ContractError("anchor index out of range");
  if (other_class >= bank.num_classes()) {
    throw InvalidLabel("ps_grad_over_similarity: class out of range");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw InvalidParameter("ps_grad_over_similarity: lambda must lie in [0, 1]");
  }
  const ClassId pos = batch.labels[anchor];
  if (pos == other_class) {
    throw InvalidPair("ps_grad_over_similarity: synthetic proxy must mix two "
                      "distinct classes");
  }
  const auto x = batch.embeddings.row(anchor);
  std::vector<double> synthetic(bank.dim());
  for (std::size_t k = 0; k < synthetic.size(); ++k) {
    synthetic[k] = lambda * bank.proxies(pos, k) +
                   (1.0 - lambda) * bank.proxies(other_class, k);
  }
  const std::size_t c = bank.num_classes();
  std::vector<double> logits(c + 1), probs(c + 1);
  for (std::size_t k = 0; k < c; ++k) logits[k] = dot(x, bank.proxies.row(k));
  logits[c] = dot(x, synthetic);
  detail::log_sum_exp(logits, probs);
  // probs[k] = E(k) / (E(p~) + sum_P E(q)).
  return {lambda * probs[c] + probs[pos] - 1.0,
          (1.0 - lambda) * probs[c] + probs[other_class]};
}

}  // namespace pslab

#endif  // PSLAB_LOSSES_HPP_
