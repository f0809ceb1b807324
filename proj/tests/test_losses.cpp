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

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "pslab/finite_diff.hpp"
#include "pslab/losses.hpp"
#include "pslab/rng.hpp"

namespace pslab {
namespace {

struct Instance {
  EmbeddingBatch batch;
  ProxyBank bank;
};

Instance random_instance(Rng& rng, std::size_t n = 8, std::size_t c = 5, std::size_t d = 16,
                         double scale = 1.0) {
  Instance in{{Matrix(n, d), {}}, {Matrix(c, d)}};
  for (double& v : in.batch.embeddings.data()) v = scale * rng.normal();
  for (double& v : in.bank.proxies.data()) v = scale * rng.normal();
  for (std::size_t i = 0; i < n; ++i) in.batch.labels.push_back(rng.uniform_index(c));
  return in;
}

LossConfig config_for(LossKind kind) {
  LossConfig cfg;
  cfg.kind = kind;
  return cfg;
}

// --- straight-line reference formulas -------------------------------------

double ref_cos(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

double ref_lse(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Positive logit from the angle itself rather than the cosine identities.
double ref_positive(const LossConfig& cfg, double c) {
  const double theta = std::acos(std::clamp(c, -1.0, 1.0));
  const double m = cfg.effective_margin();
  switch (cfg.kind) {
    case LossKind::kCosFace: return cfg.gamma * (c - m);
    case LossKind::kArcFace: return cfg.gamma * std::cos(theta + m);
    case LossKind::kSphereFace: {
      const int k = std::min(static_cast<int>(m) - 1,
                             static_cast<int>(std::floor(m * theta / std::numbers::pi)));
      return cfg.gamma * ((k % 2 ? -1.0 : 1.0) * std::cos(m * theta) - 2.0 * k);
    }
    default: return cfg.gamma * c;
  }
}

double reference_loss(const Instance& in, const LossConfig& cfg) {
  const auto& x = in.batch.embeddings;
  const auto& p = in.bank.proxies;
  const auto& y = in.batch.labels;
  const std::size_t n = x.rows(), c = p.rows();
  if (cfg.kind == LossKind::kProxyAnchor) {
    double pos = 0, neg = 0;
    std::size_t n_pos = 0;
    for (std::size_t k = 0; k < c; ++k) {
      double sp = 0, sn = 0;
      bool present = false;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = ref_cos(x.row(i), p.row(k));
        if (y[i] == k) {
          present = true;
          sp += std::exp(-cfg.pa_alpha * (s - cfg.pa_delta));
        } else {
          sn += std::exp(cfg.pa_alpha * (s + cfg.pa_delta));
        }
      }
      if (present) {
        pos += std::log1p(sp);
        ++n_pos;
      }
      neg += std::log1p(sn);
    }
    return pos / static_cast<double>(n_pos) + neg / static_cast<double>(c);
  }
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> logits;
    double pos = 0;
    for (std::size_t k = 0; k < c; ++k) {
      const double s = cfg.kind == LossKind::kSoftmax
                           ? std::inner_product(x.row(i).begin(), x.row(i).end(),
                                                p.row(k).begin(), 0.0)
                           : ref_cos(x.row(i), p.row(k));
      if (cfg.kind == LossKind::kProxyNca) {
        // -|x^ - p^|^2 from the unit vectors directly.
        double d2 = 0;
        const double nx = std::sqrt(std::inner_product(x.row(i).begin(), x.row(i).end(),
                                                        x.row(i).begin(), 0.0));
        const double np = std::sqrt(std::inner_product(p.row(k).begin(), p.row(k).end(),
                                                        p.row(k).begin(), 0.0));
        for (std::size_t a = 0; a < x.cols(); ++a) {
          const double diff = x(i, a) / nx - p(k, a) / np;
          d2 += diff * diff;
        }
        if (k == y[i]) pos = -d2;
        else logits.push_back(-d2);
        continue;
      }
      const double z = cfg.kind == LossKind::kSoftmax ? s
                       : k == y[i]                    ? ref_positive(cfg, s)
                                                      : cfg.gamma * s;
      if (k == y[i]) pos = z;
      logits.push_back(z);
    }
    total += ref_lse(logits) - pos;
  }
  return total / static_cast<double>(n);
}

// --- examples --------------------------------------------------------------

TEST(Losses, SingleClassSoftmaxIsZero) {
  Rng rng(1);
  Instance in = random_instance(rng, 4, 1, 3);
  const LossGrad g = loss_forward_backward(in.batch, in.bank, config_for(LossKind::kSoftmax));
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_EQ(g.d_embeddings, Matrix(4, 3));
  EXPECT_EQ(g.d_proxies, Matrix(1, 3));
}

TEST(Losses, NormSoftmaxOrthogonalPair) {
  EmbeddingBatch batch{Matrix{{1.0, 0.0}}, {0}};
  ProxyBank bank{Matrix{{1.0, 0.0}, {0.0, 1.0}}};
  for (double gamma : {1.0, 4.0, 16.0}) {
    LossConfig cfg;
    cfg.gamma = gamma;
    EXPECT_NEAR(loss_value(batch, bank, cfg), std::log1p(std::exp(-gamma)), 1e-15);
  }
  EXPECT_NEAR(loss_value(batch, bank, LossConfig{}), 1.1254e-7, 1e-11);
}

TEST(Losses, MatchReferenceFormulas) {
  Rng rng(2);
  for (LossKind kind : kAllLossKinds) {
    for (int t = 0; t < 50; ++t) {
      const Instance in = random_instance(rng);
      const LossConfig cfg = config_for(kind);
      const double ref = reference_loss(in, cfg);
      ASSERT_NEAR(loss_value(in.batch, in.bank, cfg), ref, 1e-10 * std::max(1.0, std::abs(ref)))
          << to_string(kind);
    }
  }
}

TEST(Losses, SphereFaceIsContinuousAcrossSegments) {
  LossConfig cfg = config_for(LossKind::kSphereFace);
  cfg.gamma = 1.0;
  for (int k = 1; k < 4; ++k) {
    const double theta = k * std::numbers::pi / 4.0;
    const double below = detail::positive_logit(cfg, std::cos(theta - 1e-9)).first;
    const double above = detail::positive_logit(cfg, std::cos(theta + 1e-9)).first;
    EXPECT_NEAR(below, above, 1e-7) << "k=" << k;
  }
  double prev = detail::positive_logit(cfg, 1.0).first;
  for (int s = 1; s <= 1000; ++s) {
    const double next = detail::positive_logit(cfg, std::cos(std::numbers::pi * s / 1000)).first;
    ASSERT_LT(next, prev) << "step " << s;
    prev = next;
  }
}

TEST(Losses, ArcFaceMarginLowersPositiveLogit) {
  LossConfig cfg = config_for(LossKind::kArcFace);
  for (double c : {-0.5, 0.0, 0.3, 0.9, 0.999999}) {
    EXPECT_LT(detail::positive_logit(cfg, c).first, cfg.gamma * c);
  }
}

TEST(Losses, Errors) {
  Rng rng(3);
  Instance in = random_instance(rng, 4, 3, 5);
  in.batch.labels[2] = 3;
  EXPECT_THROW(loss_value(in.batch, in.bank, LossConfig{}), InvalidLabel);
  in.batch.labels[2] = 0;
  for (double& v : in.batch.embeddings.row(1)) v = 0.0;
  EXPECT_THROW(loss_value(in.batch, in.bank, LossConfig{}), DegenerateInput);
  EXPECT_NO_THROW(loss_value(in.batch, in.bank, config_for(LossKind::kSoftmax)));
  Instance one = random_instance(rng, 2, 1, 3);
  EXPECT_THROW(loss_value(one.batch, one.bank, config_for(LossKind::kProxyNca)),
               InvalidParameter);
  EXPECT_THROW(loss_value(in.batch, ProxyBank{Matrix(3, 4, 1.0)}, LossConfig{}), ContractError);
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  cfg.gamma = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidParameter);
  cfg = config_for(LossKind::kArcFace);
  cfg.margin = std::numbers::pi;
  EXPECT_THROW(cfg.validate(), InvalidParameter);
  cfg.margin = 0.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg = config_for(LossKind::kSphereFace);
  cfg.margin = 2.5;
  EXPECT_THROW(cfg.validate(), InvalidParameter);
  cfg.margin = 2.0;
  EXPECT_NO_THROW(cfg.validate());
  cfg = config_for(LossKind::kCosFace);
  cfg.margin = -0.1;
  EXPECT_THROW(cfg.validate(), InvalidParameter);
  EXPECT_EQ(config_for(LossKind::kCosFace).effective_margin(), 0.35);
  EXPECT_EQ(config_for(LossKind::kArcFace).effective_margin(), 0.5);
  EXPECT_EQ(config_for(LossKind::kSphereFace).effective_margin(), 4.0);
}

TEST(LossKind, NamesRoundTrip) {
  for (LossKind kind : kAllLossKinds) EXPECT_EQ(parse_loss_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_loss_kind("triplet"), InvalidParameter);
}

// --- properties ------------------------------------------------------------

TEST(LossProperties, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  for (LossKind kind : kAllLossKinds) {
    const LossConfig cfg = config_for(kind);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Instance in = random_instance(rng);
      const LossGrad g = loss_forward_backward(in.batch, in.bank, cfg);
      const Matrix fe = finite_diff_grad(
          [&](const Matrix& x) { return loss_value({x, in.batch.labels}, in.bank, cfg); },
          in.batch.embeddings);
      const Matrix fp = finite_diff_grad(
          [&](const Matrix& p) { return loss_value(in.batch, ProxyBank{p}, cfg); },
          in.bank.proxies);
      worst = std::max({worst, relative_error(g.d_embeddings, fe),
                        relative_error(g.d_proxies, fp)});
    }
    EXPECT_LT(worst, 1e-4) << to_string(kind);
  }
}

// Proxy-NCA leaves the positive out of its denominator, so its value is
// not bounded below by zero; every other kind is -log of a probability or
// a sum of log(1 + positive).
TEST(LossProperties, NonNegative) {
  Rng rng(5);
  for (LossKind kind : kAllLossKinds) {
    if (kind == LossKind::kProxyNca) continue;
    for (int t = 0; t < 200; ++t) {
      const Instance in = random_instance(rng, 8, 5, 16, t % 2 ? 1.0 : 10.0);
      ASSERT_GE(loss_value(in.batch, in.bank, config_for(kind)), 0.0) << to_string(kind);
    }
  }
}

TEST(LossProperties, ProxyNcaCanGoNegative) {
  EmbeddingBatch batch{Matrix{{1.0, 0.0}}, {0}};
  ProxyBank bank{Matrix{{1.0, 0.0}, {-1.0, 0.0}}};
  // -log(e^0 / e^-4) = -4.
  EXPECT_NEAR(loss_value(batch, bank, config_for(LossKind::kProxyNca)), -4.0, 1e-12);
}

TEST(LossProperties, PermutationInvariance) {
  Rng rng(6);
  for (LossKind kind : kAllLossKinds) {
    const Instance in = random_instance(rng);
    std::vector<std::size_t> perm(in.batch.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = perm.size(); k > 1; --k) {
      std::swap(perm[k - 1], perm[rng.uniform_index(k)]);
    }
    EmbeddingBatch shuffled{Matrix(in.batch.size(), in.batch.dim()), {}};
    for (std::size_t r = 0; r < perm.size(); ++r) {
      std::copy(in.batch.embeddings.row(perm[r]).begin(), in.batch.embeddings.row(perm[r]).end(),
                shuffled.embeddings.row(r).begin());
      shuffled.labels.push_back(in.batch.labels[perm[r]]);
    }
    const LossConfig cfg = config_for(kind);
    const LossGrad a = loss_forward_backward(in.batch, in.bank, cfg);
    const LossGrad b = loss_forward_backward(shuffled, in.bank, cfg);
    EXPECT_NEAR(a.loss, b.loss, 1e-12) << to_string(kind);
    for (std::size_t r = 0; r < perm.size(); ++r) {
      for (std::size_t k = 0; k < in.batch.dim(); ++k) {
        ASSERT_NEAR(b.d_embeddings(r, k), a.d_embeddings(perm[r], k), 1e-12);
      }
    }
  }
}

TEST(LossProperties, NormalizedKindsAreScaleInvariant) {
  Rng rng(7);
  for (LossKind kind : kAllLossKinds) {
    if (!is_normalized(kind)) continue;
    for (int t = 0; t < 20; ++t) {
      const Instance in = random_instance(rng);
      const double c = std::exp(rng.normal(0.0, 3.0));
      Instance scaled = in;
      scaled.batch.embeddings *= c;
      const LossConfig cfg = config_for(kind);
      ASSERT_NEAR(loss_value(in.batch, in.bank, cfg), loss_value(scaled.batch, in.bank, cfg),
                  1e-9)
          << to_string(kind);
    }
  }
}

TEST(LossProperties, NormalizedGradientsAreTangent) {
  Rng rng(8);
  for (LossKind kind : kAllLossKinds) {
    if (!is_normalized(kind)) continue;
    for (int t = 0; t < 20; ++t) {
      const Instance in = random_instance(rng);
      const LossGrad g = loss_forward_backward(in.batch, in.bank, config_for(kind));
      for (std::size_t i = 0; i < in.batch.size(); ++i) {
        ASSERT_NEAR(dot(g.d_embeddings.row(i), in.batch.embeddings.row(i)), 0.0, 1e-9);
      }
      for (std::size_t k = 0; k < in.bank.num_classes(); ++k) {
        ASSERT_NEAR(dot(g.d_proxies.row(k), in.bank.proxies.row(k)), 0.0, 1e-9);
      }
    }
  }
}

// --- closed-form gradients over similarities ------------------------------

// Plain softmax loss of one anchor as a function of its logit row, with an
// optional synthetic column tied to lambda s_i + (1 - lambda) s_j.
double anchor_loss(const std::vector<double>& logits, ClassId y, std::optional<ClassId> other,
                   double lambda) {
  std::vector<double> z = logits;
  if (other) z.push_back(lambda * logits[y] + (1.0 - lambda) * logits[*other]);
  return ref_lse(z) - logits[y];
}

double numeric_logit_grad(std::vector<double> logits, ClassId y, std::size_t at,
                          std::optional<ClassId> other = {}, double lambda = 0.0) {
  const double h = 1e-5;
  const double base = logits[at];
  logits[at] = base + h;
  const double up = anchor_loss(logits, y, other, lambda);
  logits[at] = base - h;
  const double down = anchor_loss(logits, y, other, lambda);
  return (up - down) / (2.0 * h);
}

std::vector<double> logit_row(const Instance& in, std::size_t i) {
  std::vector<double> z;
  for (std::size_t k = 0; k < in.bank.num_classes(); ++k) {
    z.push_back(dot(in.batch.embeddings.row(i), in.bank.proxies.row(k)));
  }
  return z;
}

TEST(SoftmaxSimilarityGrad, UniformLogits) {
  for (std::size_t c : {2u, 3u, 7u}) {
    EmbeddingBatch batch{Matrix(1, 4), {1}};  // x = 0: every logit is 0
    Rng rng(9);
    ProxyBank bank{Matrix(c, 4)};
    for (double& v : bank.proxies.data()) v = rng.normal();
    EXPECT_NEAR(softmax_grad_over_similarity(batch, bank, 0), 1.0 / c - 1.0, 1e-15);
  }
}

TEST(SoftmaxSimilarityGrad, SingleClassIsZero) {
  EmbeddingBatch batch{Matrix{{0.3, -1.0}}, {0}};
  ProxyBank bank{Matrix{{2.0, 1.0}}};
  EXPECT_EQ(softmax_grad_over_similarity(batch, bank, 0), 0.0);
}

TEST(SoftmaxSimilarityGrad, MatchesNumericDerivative) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const Instance in = random_instance(rng, 6, 5, 8, 0.7);
    const std::size_t i = rng.uniform_index(in.batch.size());
    const ClassId y = in.batch.labels[i];
    EXPECT_NEAR(softmax_grad_over_similarity(in.batch, in.bank, i),
                numeric_logit_grad(logit_row(in, i), y, y), 1e-6);
  }
}

// For the softmax kind d_x_i = (1/N) sum_k g_ik p_k; with linearly
// independent proxies the logit gradients g_i can be recovered exactly.
TEST(SoftmaxSimilarityGrad, AgreesWithChainRule) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const Instance in = random_instance(rng, 6, 5, 16);
    const LossGrad g = loss_forward_backward(in.batch, in.bank, config_for(LossKind::kSoftmax));
    Eigen::MatrixXd P(in.bank.num_classes(), in.bank.dim());
    for (std::size_t k = 0; k < in.bank.num_classes(); ++k) {
      for (std::size_t a = 0; a < in.bank.dim(); ++a) P(k, a) = in.bank.proxies(k, a);
    }
    const auto qr = P.transpose().colPivHouseholderQr();
    for (std::size_t i = 0; i < in.batch.size(); ++i) {
      Eigen::VectorXd dx(in.bank.dim());
      for (std::size_t a = 0; a < in.bank.dim(); ++a) dx(a) = g.d_embeddings(i, a);
      const Eigen::VectorXd logit_grad = qr.solve(dx) * static_cast<double>(in.batch.size());
      ASSERT_NEAR(logit_grad(static_cast<Eigen::Index>(in.batch.labels[i])),
                  softmax_grad_over_similarity(in.batch, in.bank, i), 1e-9);
    }
  }
}

TEST(PsSimilarityGrad, LambdaZeroCountsOtherProxyTwice) {
  Rng rng(12);
  const Instance in = random_instance(rng, 4, 4, 6, 0.8);
  const ClassId y = in.batch.labels[0];
  const ClassId j = (y + 1) % 4;
  const auto z = logit_row(in, 0);
  double denom = std::exp(z[j]);
  for (double v : z) denom += std::exp(v);
  const auto [gi, gj] = ps_grad_over_similarity(in.batch, in.bank, 0, j, 0.0);
  EXPECT_NEAR(gi, std::exp(z[y]) / denom - 1.0, 1e-14);
  EXPECT_NEAR(gj, 2.0 * std::exp(z[j]) / denom, 1e-14);
}

TEST(PsSimilarityGrad, LambdaOneReducesToDuplicatedPositive) {
  Rng rng(13);
  const Instance in = random_instance(rng, 4, 4, 6, 0.8);
  const ClassId y = in.batch.labels[1];
  const auto z = logit_row(in, 1);
  double denom = std::exp(z[y]);
  for (double v : z) denom += std::exp(v);
  const auto [gi, gj] = ps_grad_over_similarity(in.batch, in.bank, 1, (y + 2) % 4, 1.0);
  EXPECT_NEAR(gi, 2.0 * std::exp(z[y]) / denom - 1.0, 1e-14);
  EXPECT_NEAR(gj, std::exp(z[(y + 2) % 4]) / denom, 1e-14);
}

TEST(PsSimilarityGrad, UniformLogitsWithOneSynthetic) {
  for (std::size_t c : {2u, 4u, 9u}) {
    EmbeddingBatch batch{Matrix(1, 3), {0}};
    ProxyBank bank{Matrix(c, 3, 1.0)};
    const auto [gi, gj] = ps_grad_over_similarity(batch, bank, 0, 1, 1.0);
    EXPECT_NEAR(gi, 2.0 / (c + 1.0) - 1.0, 1e-15);
    EXPECT_NEAR(gj, 1.0 / (c + 1.0), 1e-15);
  }
}

TEST(PsSimilarityGrad, MatchesNumericDerivative) {
  Rng rng(14);
  for (int t = 0; t < 50; ++t) {
    const Instance in = random_instance(rng, 6, 5, 8, 0.7);
    const std::size_t i = rng.uniform_index(in.batch.size());
    const ClassId y = in.batch.labels[i];
    const ClassId j = (y + 1 + rng.uniform_index(4)) % 5;
    const double lambda = rng.uniform();
    const auto [gi, gj] = ps_grad_over_similarity(in.batch, in.bank, i, j, lambda);
    const auto z = logit_row(in, i);
    EXPECT_NEAR(gi, numeric_logit_grad(z, y, y, j, lambda), 1e-6);
    EXPECT_NEAR(gj, numeric_logit_grad(z, y, j, j, lambda), 1e-6);
  }
}

TEST(PsSimilarityGrad, Errors) {
  Rng rng(15);
  const Instance in = random_instance(rng, 3, 3, 4);
  const ClassId y = in.batch.labels[0];
  EXPECT_THROW(ps_grad_over_similarity(in.batch, in.bank, 0, y, 0.5), InvalidPair);
  EXPECT_THROW(ps_grad_over_similarity(in.batch, in.bank, 0, (y + 1) % 3, 1.5),
               InvalidParameter);
  EXPECT_THROW(ps_grad_over_similarity(in.batch, in.bank, 0, 3, 0.5), InvalidLabel);
  EXPECT_THROW(ps_grad_over_similarity(in.batch, in.bank, 5, (y + 1) % 3, 0.5),
               ContractError);
}

}  // namespace
}  // namespace pslab
