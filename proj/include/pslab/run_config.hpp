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

#ifndef PSLAB_RUN_CONFIG_HPP_
#define PSLAB_RUN_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "pslab/checkpoint.hpp"
#include "pslab/data_io.hpp"
#include "pslab/error.hpp"
#include "pslab/experiments.hpp"
#include "pslab/paired.hpp"
#include "pslab/trainer.hpp"

namespace pslab {

struct DataSection {
  double sigma = 0.5;
  std::size_t train_per_class = 500;
  std::size_t eval_per_class = 200;
};

struct EvalSection {
  std::vector<std::size_t> ks = {1, 2, 4, 8};
  bool per_query = false;
};

struct DiagSection {
  bool paired = false;
  GridSpec grid;
  bool input_grid = true;
  bool embedding_grid = true;
  std::size_t profile_steps = 101;
  std::size_t deformation_samples = 20;
  std::vector<double> lambdas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::size_t heatmap_per_class = 8;  // eval rows per seen class in the heatmap
};

struct GradCheckSection {
  std::size_t instances = 100;
};

// Empty strings fall back to files inside out_dir.
struct PathsSection {
  std::string out_dir = "out";
  std::string train_csv;
  std::string eval_csv;
  std::string checkpoint;
  std::string baseline;
  std::string ps;
  std::string embeddings;
  std::string queries;
  std::string gallery;

  std::string in_out(const std::string& explicit_path, const char* name) const {
    return explicit_path.empty() ? out_dir + "/" + name : explicit_path;
  }
};

struct RunConfig {
  std::uint64_t seed = 0;
  bool gate = true;  // gradient-check gate before training and diagnostics
  DataSection data;
  TrainConfig train = default_toy_train();
  EvalSection eval;
  DiagSection diag;
  GradCheckSection gradcheck;
  PathsSection paths;

  /// Seed propagated into the training section.
  TrainConfig effective_train() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  void validate() const {
    if (!(data.sigma > 0.0) || !std::isfinite(data.sigma)) {
      throw InvalidParameter("data.sigma must be positive");
    }
    if (data.train_per_class == 0) throw InvalidParameter("data.train_per_class must be positive");
    if (data.eval_per_class == 0) throw InvalidParameter("data.eval_per_class must be positive");
    effective_train().validate();
    for (std::size_t k : eval.ks) {
      if (k == 0) throw InvalidParameter("eval.ks entries must be positive");
    }
    diag.grid.validate();
    if (diag.profile_steps < 2) throw InvalidParameter("diag.profile_steps must be at least 2");
    if (diag.deformation_samples < 2) {
      throw InvalidParameter("diag.deformation_samples must be at least 2");
    }
    for (double l : diag.lambdas) {
      if (!(l >= 0.0 && l <= 1.0)) throw InvalidParameter("diag.lambdas must lie in [0, 1]");
    }
    if (diag.heatmap_per_class == 0) {
      throw InvalidParameter("diag.heatmap_per_class must be positive");
    }
    if (gradcheck.instances == 0) throw InvalidParameter("gradcheck.instances must be positive");
    if (paths.out_dir.empty()) throw InvalidParameter("paths.out_dir must not be empty");
  }
};

namespace detail {

// Reads keys from one TOML table and remembers which were consumed, so
// leftovers can be reported as unknown.
class TomlSection {
 public:
  TomlSection(const toml::table* table, std::string prefix)
      : table_(table), prefix_(std::move(prefix)) {}

  std::string name(std::string_view key) const {
    return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key);
  }

  template <typename T>
  void read(std::string_view key, T& out) {
    const toml::node* node = take(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      out = require(node->value<bool>(), key, "a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      out = require(node->value<std::string>(), key, "a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      out = require(node->value<double>(), key, "a number");
    } else if constexpr (std::is_integral_v<T>) {
      const auto v = require(node->value<std::int64_t>(), key, "an integer");
      if (v < 0) throw InvalidParameter(name(key) + " must be non-negative");
      out = static_cast<T>(v);
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  template <typename T>
  void read_optional(std::string_view key, std::optional<T>& out) {
    if (!table_ || !table_->contains(key)) return;
    T v{};
    read(key, v);
    out = v;
  }

  template <typename T>
  void read_list(std::string_view key, std::vector<T>& out) {
    const toml::node* node = take(key);
    if (!node) return;
    const toml::array* arr = node->as_array();
    if (!arr) throw InvalidParameter(name(key) + " must be an array");
    std::vector<T> values;
    for (const toml::node& item : *arr) {
      if constexpr (std::is_floating_point_v<T>) {
        values.push_back(require(item.value<double>(), key, "an array of numbers"));
      } else {
        const auto v = require(item.value<std::int64_t>(), key, "an array of integers");
        if (v < 0) throw InvalidParameter(name(key) + " entries must be non-negative");
        values.push_back(static_cast<T>(v));
      }
    }
    out = std::move(values);
  }

  TomlSection sub(std::string_view key) {
    const toml::node* node = take(key);
    if (!node) return TomlSection(nullptr, name(key));
    const toml::table* t = node->as_table();
    if (!t) throw InvalidParameter(name(key) + " must be a table");
    return TomlSection(t, name(key));
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [key, node] : *table_) {
      if (!used_.count(std::string(key.str()))) {
        throw InvalidParameter("unknown config key '" + name(key.str()) + "'");
      }
    }
  }

 private:
  const toml::node* take(std::string_view key) {
    if (!table_) return nullptr;
    const toml::node* node = table_->get(key);
    if (node) used_.insert(std::string(key));
    return node;
  }

  template <typename T>
  T require(std::optional<T> v, std::string_view key, const char* what) const {
    if (!v) throw InvalidParameter(name(key) + " must be " + what);
    return *v;
  }

  const toml::table* table_;
  std::string prefix_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Parses a TOML run configuration on top of the defaults. Unknown keys and
/// wrongly typed values throw with the dotted key name.
inline RunConfig parse_run_config(std::string_view text, RunConfig cfg = {}) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ParseError(std::string(e.description()), e.source().begin.line);
  }
  detail::TomlSection top(&root, "");
  top.read("seed", cfg.seed);
  top.read("gate", cfg.gate);

  auto data = top.sub("data");
  data.read("sigma", cfg.data.sigma);
  data.read("train_per_class", cfg.data.train_per_class);
  data.read("eval_per_class", cfg.data.eval_per_class);
  data.reject_unknown();

  auto train = top.sub("train");
  TrainConfig& t = cfg.train;
  std::string word;
  auto read_word = [&](std::string_view key) {
    word.clear();
    train.read(key, word);
    return !word.empty();
  };
  if (read_word("loss")) t.loss.kind = parse_loss_kind(word);
  train.read("gamma", t.loss.gamma);
  train.read_optional("margin", t.loss.margin);
  train.read("pa_alpha", t.loss.pa_alpha);
  train.read("pa_delta", t.loss.pa_delta);
  train.read("ps", t.ps_enabled);
  train.read("alpha", t.alpha);
  train.read("mu", t.mu);
  train.read_optional("static_lambda", t.static_lambda);
  if (read_word("mode")) t.mode = parse_augment_mode(word);
  train.read("epochs", t.epochs);
  train.read("batch_size", t.batch_size);
  if (read_word("optimizer")) t.optimizer.kind = parse_optimizer(word);
  train.read("learning_rate", t.optimizer.learning_rate);
  train.read("beta1", t.optimizer.beta1);
  train.read("beta2", t.optimizer.beta2);
  train.read("epsilon", t.optimizer.epsilon);
  train.read("proxy_lr_scale", t.proxy_lr_scale);
  train.read_list("hidden", t.hidden);
  train.read("embedding_dim", t.embedding_dim);
  train.reject_unknown();

  auto eval = top.sub("eval");
  eval.read_list("ks", cfg.eval.ks);
  eval.read("per_query", cfg.eval.per_query);
  eval.reject_unknown();

  auto diag = top.sub("diag");
  diag.read("paired", cfg.diag.paired);
  diag.read("grid_resolution", cfg.diag.grid.resolution);
  diag.read("grid_x_min", cfg.diag.grid.x_min);
  diag.read("grid_x_max", cfg.diag.grid.x_max);
  diag.read("grid_y_min", cfg.diag.grid.y_min);
  diag.read("grid_y_max", cfg.diag.grid.y_max);
  diag.read("input_grid", cfg.diag.input_grid);
  diag.read("embedding_grid", cfg.diag.embedding_grid);
  diag.read("profile_steps", cfg.diag.profile_steps);
  diag.read("deformation_samples", cfg.diag.deformation_samples);
  diag.read_list("lambdas", cfg.diag.lambdas);
  diag.read("heatmap_per_class", cfg.diag.heatmap_per_class);
  diag.reject_unknown();

  auto gc = top.sub("gradcheck");
  gc.read("instances", cfg.gradcheck.instances);
  gc.reject_unknown();

  auto paths = top.sub("paths");
  paths.read("out_dir", cfg.paths.out_dir);
  paths.read("train_csv", cfg.paths.train_csv);
  paths.read("eval_csv", cfg.paths.eval_csv);
  paths.read("checkpoint", cfg.paths.checkpoint);
  paths.read("baseline", cfg.paths.baseline);
  paths.read("ps", cfg.paths.ps);
  paths.read("embeddings", cfg.paths.embeddings);
  paths.read("queries", cfg.paths.queries);
  paths.read("gallery", cfg.paths.gallery);
  paths.reject_unknown();

  top.reject_unknown();
  return cfg;
}

inline Json run_config_to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["gate"] = c.gate;
  j["data"] = {{"sigma", c.data.sigma},
               {"train_per_class", c.data.train_per_class},
               {"eval_per_class", c.data.eval_per_class}};
  j["train"] = train_config_to_json(c.effective_train());
  j["eval"] = {{"ks", c.eval.ks}, {"per_query", c.eval.per_query}};
  j["diag"] = {{"paired", c.diag.paired},
               {"grid", {{"x_min", c.diag.grid.x_min},
                         {"x_max", c.diag.grid.x_max},
                         {"y_min", c.diag.grid.y_min},
                         {"y_max", c.diag.grid.y_max},
                         {"resolution", c.diag.grid.resolution}}},
               {"input_grid", c.diag.input_grid},
               {"embedding_grid", c.diag.embedding_grid},
               {"profile_steps", c.diag.profile_steps},
               {"deformation_samples", c.diag.deformation_samples},
               {"lambdas", c.diag.lambdas},
               {"heatmap_per_class", c.diag.heatmap_per_class}};
  j["gradcheck"] = {{"instances", c.gradcheck.instances}};
  return j;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
  return s;
}

inline constexpr const char* kArtifactVersion = "ps-lab/1";

/// Provenance block attached to every output: hash of the effective config
/// (paths excluded), seed and artifact version. No clock or host data, so
/// identical runs give identical bytes.
inline Json make_manifest(const RunConfig& c, std::string_view command) {
  Json m;
  m["artifact_version"] = kArtifactVersion;
  m["command"] = std::string(command);
  m["config_hash"] = hex64(fnv1a64(run_config_to_json(c).dump()));
  m["seed"] = c.seed;
  return m;
}

}  // namespace pslab

#endif  // PSLAB_RUN_CONFIG_HPP_
