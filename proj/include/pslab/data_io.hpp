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

#ifndef PSLAB_DATA_IO_HPP_
#define PSLAB_DATA_IO_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pslab/error.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/rng.hpp"

namespace pslab {

enum class Role { kSeen, kUnseen };

inline std::string_view to_string(Role r) { return r == Role::kSeen ? "seen" : "unseen"; }

inline Role parse_role(std::string_view s) {
  if (s == "seen") return Role::kSeen;
  if (s == "unseen") return Role::kUnseen;
  throw InvalidParameter("unknown role '" + std::string(s) + "'");
}

/// Points (or embeddings) with class ids. `roles` is either empty or holds
/// one entry per row.
struct LabeledPoints {
  Matrix points;
  std::vector<ClassId> labels;
  std::vector<Role> roles;

  std::size_t size() const noexcept { return points.rows(); }
  std::size_t dim() const noexcept { return points.cols(); }

  void validate() const {
    if (labels.size() != points.rows()) {
      throw ContractError("labeled points: label count does not match rows");
    }
    if (!roles.empty() && roles.size() != points.rows()) {
      throw ContractError("labeled points: role count does not match rows");
    }
  }

  LabeledPoints select(const std::vector<std::size_t>& rows) const {
    LabeledPoints out;
    out.points = Matrix(rows.size(), dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = points.row(rows[r]);
      std::copy(src.begin(), src.end(), out.points.row(r).begin());
      out.labels.push_back(labels[rows[r]]);
      if (!roles.empty()) out.roles.push_back(roles[rows[r]]);
    }
    return out;
  }
};

// One past the largest class id.
inline std::size_t count_classes(const std::vector<ClassId>& labels) {
  std::size_t c = 0;
  for (ClassId y : labels) c = std::max(c, y + 1);
  return c;
}

struct GaussianClass {
  std::string name;
  std::vector<double> center;
  double sigma = 0.5;
  std::size_t count = 0;
  Role role = Role::kSeen;
};

/// Isotropic Gaussian classes; class k of the list gets label k.
struct GaussianSpec {
  std::vector<GaussianClass> classes;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes.empty()) throw InvalidParameter("gaussian spec: no classes");
    std::size_t seen = 0;
    const std::size_t dim = classes.front().center.size();
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const auto& c = classes[k];
      const std::string where = "gaussian spec: class " + std::to_string(k);
      if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) {
        throw InvalidParameter(where + ": sigma must be positive");
      }
      if (c.count == 0) throw InvalidParameter(where + ": count must be at least 1");
      if (c.center.empty() || c.center.size() != dim) {
        throw InvalidParameter(where + ": center dimension mismatch");
      }
      if (c.role == Role::kSeen) ++seen;
    }
    if (seen < 2) throw InvalidParameter("gaussian spec: need at least two seen classes");
  }
};

/// The two-seen/one-unseen layout: red (-2, 0) and blue (+2, 0) are seen,
/// gray (0, +2) is unseen, sigma 0.5.
inline std::vector<GaussianClass> default_gaussian_classes(std::size_t red_blue_count,
                                                           std::size_t gray_count,
                                                           double sigma = 0.5) {
  return {
      {"red", {-2.0, 0.0}, sigma, red_blue_count, Role::kSeen},
      {"blue", {2.0, 0.0}, sigma, red_blue_count, Role::kSeen},
      {"gray", {0.0, 2.0}, sigma, gray_count, Role::kUnseen},
  };
}

inline LabeledPoints gen_gaussians(const GaussianSpec& spec, Rng& rng) {
  spec.validate();
  std::size_t total = 0;
  for (const auto& c : spec.classes) total += c.count;
  const std::size_t dim = spec.classes.front().center.size();
  LabeledPoints out;
  out.points = Matrix(total, dim);
  std::size_t r = 0;
  for (std::size_t k = 0; k < spec.classes.size(); ++k) {
    const auto& c = spec.classes[k];
    for (std::size_t s = 0; s < c.count; ++s, ++r) {
      for (std::size_t a = 0; a < dim; ++a) out.points(r, a) = rng.normal(c.center[a], c.sigma);
      out.labels.push_back(k);
      out.roles.push_back(c.role);
    }
  }
  return out;
}

// Shortest text that is still the 17-significant-digit rendering.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// CSV with header `id,label[,role],e0,...,e{d-1}`, LF endings, values at
/// 17 significant digits. The role column is written only when roles exist.
inline std::string embeddings_to_csv(const LabeledPoints& data) {
  data.validate();
  const bool with_roles = !data.roles.empty();
  std::string out = "id,label";
  if (with_roles) out += ",role";
  for (std::size_t c = 0; c < data.dim(); ++c) out += ",e" + std::to_string(c);
  out += '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    out += std::to_string(r);
    out += ',';
    out += std::to_string(data.labels[r]);
    if (with_roles) {
      out += ',';
      out += to_string(data.roles[r]);
    }
    for (double v : data.points.row(r)) {
      if (!std::isfinite(v)) throw NumericError("write_embeddings: non-finite value");
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error("write to '" + path + "' failed");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_embeddings(const std::string& path, const LabeledPoints& data) {
  write_text_file(path, embeddings_to_csv(data));
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double_cell(std::string_view cell, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite value", line);
  return v;
}

inline std::size_t parse_index_cell(std::string_view cell, std::size_t line,
                                    const char* what) {
  std::size_t v = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || cell.empty()) {
    throw ParseError(std::string("invalid ") + what + " '" + std::string(cell) + "'", line);
  }
  return v;
}

}  // namespace detail

inline LabeledPoints parse_embeddings_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("empty embedding file", 1);

  const auto header = detail::split_commas(lines[0]);
  if (header.size() < 2 || header[0] != "id" || header[1] != "label") {
    throw ParseError("header must start with 'id,label'", 1);
  }
  const bool with_roles = header.size() > 2 && header[2] == "role";
  const std::size_t first_value = with_roles ? 3 : 2;
  const std::size_t dim = header.size() - first_value;
  if (dim == 0) throw ParseError("header names no embedding columns", 1);
  for (std::size_t c = 0; c < dim; ++c) {
    if (header[first_value + c] != "e" + std::to_string(c)) {
      throw ParseError("header column " + std::to_string(first_value + c) +
                           " should be 'e" + std::to_string(c) + "'",
                       1);
    }
  }
  if (lines.size() < 2) throw ParseError("embedding file has no data rows", 1);

  LabeledPoints out;
  out.points = Matrix(lines.size() - 1, dim);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::size_t line_no = r + 1;
    const auto cells = detail::split_commas(lines[r]);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(cells.size()),
                       line_no);
    }
    detail::parse_index_cell(cells[0], line_no, "id");
    out.labels.push_back(detail::parse_index_cell(cells[1], line_no, "label"));
    if (with_roles) {
      if (cells[2] == "seen") {
        out.roles.push_back(Role::kSeen);
      } else if (cells[2] == "unseen") {
        out.roles.push_back(Role::kUnseen);
      } else {
        throw ParseError("invalid role '" + std::string(cells[2]) + "'", line_no);
      }
    }
    for (std::size_t c = 0; c < dim; ++c) {
      out.points(r - 1, c) = detail::parse_double_cell(cells[first_value + c], line_no);
    }
  }
  return out;
}

inline LabeledPoints read_embeddings(const std::string& path) {
  return parse_embeddings_csv(read_text_file(path));
}

}  // namespace pslab

#endif  // PSLAB_DATA_IO_HPP_
