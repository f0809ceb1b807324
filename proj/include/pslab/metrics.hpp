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

#ifndef PSLAB_METRICS_HPP_
#define PSLAB_METRICS_HPP_

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "pslab/data_io.hpp"
#include "pslab/error.hpp"
#include "pslab/matrix.hpp"

namespace pslab {

inline constexpr std::size_t kNoExclusion = std::numeric_limits<std::size_t>::max();

/// Cosine retrieval of queries against a gallery. With `same_set` the
/// queries are the gallery and each query's own row is excluded. `exclude`
/// generalises this: when non-empty it names, per query, one gallery row to
/// drop (or kNoExclusion).
struct RetrievalSetup {
  LabeledPoints queries;
  LabeledPoints gallery;
  bool same_set = false;
  std::vector<std::size_t> exclude;

  static RetrievalSetup same(const LabeledPoints& set) {
    return RetrievalSetup{set, set, true, {}};
  }
  static RetrievalSetup split(const LabeledPoints& queries, const LabeledPoints& gallery) {
    return RetrievalSetup{queries, gallery, false, {}};
  }

  std::size_t excluded_row(std::size_t q) const {
    if (same_set) return q;
    return exclude.empty() ? kNoExclusion : exclude[q];
  }

  void validate() const {
    queries.validate();
    gallery.validate();
    if (queries.size() == 0) throw InvalidParameter("retrieval: empty query set");
    if (gallery.size() == 0) throw InvalidParameter("retrieval: empty gallery");
    if (queries.dim() != gallery.dim()) {
      throw ContractError("retrieval: query and gallery dimensions differ");
    }
    if (same_set && queries.size() != gallery.size()) {
      throw ContractError("retrieval: same_set requires identical sets");
    }
    if (!same_set && !exclude.empty() && exclude.size() != queries.size()) {
      throw ContractError("retrieval: exclusion list length mismatch");
    }
  }
};

/// Per query, gallery indices by descending cosine similarity; ties go to
/// the lower gallery index. The excluded row (if any) is omitted.
inline std::vector<std::vector<std::size_t>> rank_gallery(const RetrievalSetup& setup) {
  setup.validate();
  std::vector<std::vector<std::size_t>> ranks(setup.queries.size());
  std::vector<double> sims(setup.gallery.size());
  for (std::size_t q = 0; q < setup.queries.size(); ++q) {
    for (std::size_t g = 0; g < setup.gallery.size(); ++g) {
      sims[g] = cosine_similarity(setup.queries.points.row(q), setup.gallery.points.row(g));
    }
    auto& order = ranks[q];
    const std::size_t skip = setup.excluded_row(q);
    for (std::size_t g = 0; g < setup.gallery.size(); ++g) {
      if (g != skip) order.push_back(g);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  }
  return ranks;
}

struct QueryMetrics {
  std::size_t relevant = 0;  // R
  bool hit_at_1 = false;
  double r_precision = 0.0;
  double map_at_r = 0.0;
};

struct MetricReport {
  std::map<std::size_t, double> recall_at_k;
  double p_at_1 = 0.0;
  double r_precision = 0.0;
  double map_at_r = 0.0;
  std::size_t skipped = 0;  // queries with R = 0, left out of RP and MAP@R
  std::size_t n_queries = 0;
  std::vector<QueryMetrics> per_query;
};

namespace detail {

inline std::vector<std::vector<char>> relevance_lists(
    const RetrievalSetup& setup, const std::vector<std::vector<std::size_t>>& ranks) {
  std::vector<std::vector<char>> rel(ranks.size());
  for (std::size_t q = 0; q < ranks.size(); ++q) {
    const ClassId y = setup.queries.labels[q];
    rel[q].reserve(ranks[q].size());
    for (std::size_t g : ranks[q]) rel[q].push_back(setup.gallery.labels[g] == y);
  }
  return rel;
}

inline QueryMetrics query_metrics(const std::vector<char>& rel) {
  QueryMetrics m;
  m.relevant = static_cast<std::size_t>(std::count(rel.begin(), rel.end(), 1));
  m.hit_at_1 = !rel.empty() && rel.front();
  if (m.relevant == 0) return m;
  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t i = 0; i < m.relevant; ++i) {
    if (rel[i]) {
      ++hits;
      precision_sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  m.r_precision = static_cast<double>(hits) / static_cast<double>(m.relevant);
  m.map_at_r = precision_sum / static_cast<double>(m.relevant);
  return m;
}

inline void check_k(const RetrievalSetup& setup, std::size_t k) {
  if (k == 0) throw InvalidParameter("recall_at_k: K must be at least 1");
  for (std::size_t q = 0; q < setup.queries.size(); ++q) {
    const std::size_t available =
        setup.gallery.size() - (setup.excluded_row(q) < setup.gallery.size() ? 1 : 0);
    if (k > available) {
      throw InvalidParameter("recall_at_k: K=" + std::to_string(k) +
                             " exceeds the " + std::to_string(available) +
                             " gallery items available to a query");
    }
  }
}

inline double recall_from_ranks(const std::vector<std::vector<char>>& rel, std::size_t k) {
  std::size_t hits = 0;
  for (const auto& r : rel) {
    if (std::find(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k), 1) !=
        r.begin() + static_cast<std::ptrdiff_t>(k)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

}  // namespace detail

/// Fraction of queries with at least one same-class item in the top K.
/// Queries without any same-class item count as misses.
inline double recall_at_k(const RetrievalSetup& setup, std::size_t k) {
  detail::check_k(setup, k);
  return detail::recall_from_ranks(detail::relevance_lists(setup, rank_gallery(setup)), k);
}

/// Full report. P@1 averages over all queries (a query without positives
/// cannot score at rank 1), so it coincides with Recall@1. RP and MAP@R
/// average over queries with R >= 1; the rest are tallied in `skipped`.
inline MetricReport evaluate(const RetrievalSetup& setup, const std::vector<std::size_t>& ks,
                             bool keep_per_query = false) {
  for (std::size_t k : ks) detail::check_k(setup, k);
  const auto rel = detail::relevance_lists(setup, rank_gallery(setup));
  MetricReport report;
  report.n_queries = rel.size();
  for (std::size_t k : ks) report.recall_at_k[k] = detail::recall_from_ranks(rel, k);
  std::size_t hits1 = 0, counted = 0;
  double rp = 0.0, map = 0.0;
  for (const auto& r : rel) {
    const QueryMetrics m = detail::query_metrics(r);
    if (m.hit_at_1) ++hits1;
    if (m.relevant == 0) {
      ++report.skipped;
    } else {
      ++counted;
      rp += m.r_precision;
      map += m.map_at_r;
    }
    if (keep_per_query) report.per_query.push_back(m);
  }
  report.p_at_1 = static_cast<double>(hits1) / static_cast<double>(rel.size());
  if (counted > 0) {
    report.r_precision = rp / static_cast<double>(counted);
    report.map_at_r = map / static_cast<double>(counted);
  }
  return report;
}

inline double p_at_1(const RetrievalSetup& setup) { return evaluate(setup, {}).p_at_1; }
inline double r_precision(const RetrievalSetup& setup) {
  return evaluate(setup, {}).r_precision;
}
inline double map_at_r(const RetrievalSetup& setup) { return evaluate(setup, {}).map_at_r; }

}  // namespace pslab

#endif  // PSLAB_METRICS_HPP_
