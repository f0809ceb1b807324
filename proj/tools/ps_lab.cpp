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

// ps-lab: generate toy data, train, evaluate and run diagnostics.
//
//   ps-lab <gen|train|eval|diag|gradcheck> [--config run.toml] [overrides]
//
// Flags override the config file, which overrides built-in defaults.
// PS_LAB_THREADS caps the worker threads used for confidence grids.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "pslab/pslab.hpp"

namespace {

using pslab::Json;

constexpr int kExitError = 1;
constexpr int kExitGate = 3;
constexpr int kExitDiverged = 4;

class GateFailure : public pslab::Error {
 public:
  using Error::Error;
};

// Flag values that override the config file when given.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<bool> gate;

  std::optional<double> sigma;
  std::optional<std::size_t> train_per_class, eval_per_class;

  std::optional<std::string> ps, loss, mode, optimizer;
  std::optional<double> alpha, mu, static_lambda, gamma, margin, lr, proxy_lr_scale;
  std::optional<std::size_t> epochs, batch_size, embedding_dim;

  std::optional<std::string> train_csv, eval_csv, checkpoint, baseline, ps_checkpoint;
  std::optional<std::string> embeddings, queries, gallery;
  std::optional<bool> paired, per_query;
  std::optional<std::size_t> instances;
};

template <typename T>
void apply(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

pslab::RunConfig load_config(const Overrides& o) {
  pslab::RunConfig cfg;
  if (!o.config_path.empty()) {
    cfg = pslab::parse_run_config(pslab::read_text_file(o.config_path));
  }
  apply(o.seed, cfg.seed);
  apply(o.out_dir, cfg.paths.out_dir);
  apply(o.gate, cfg.gate);
  apply(o.sigma, cfg.data.sigma);
  apply(o.train_per_class, cfg.data.train_per_class);
  apply(o.eval_per_class, cfg.data.eval_per_class);

  auto& t = cfg.train;
  if (o.ps) {
    if (*o.ps != "on" && *o.ps != "off") {
      throw pslab::InvalidParameter("--ps must be 'on' or 'off'");
    }
    t.ps_enabled = *o.ps == "on";
  }
  if (o.loss) t.loss.kind = pslab::parse_loss_kind(*o.loss);
  if (o.mode) {
    t.mode = pslab::parse_augment_mode(*o.mode);
    if (!o.ps) t.ps_enabled = true;  // choosing a mode implies the synthesis path
  }
  if (o.optimizer) t.optimizer.kind = pslab::parse_optimizer(*o.optimizer);
  apply(o.alpha, t.alpha);
  apply(o.mu, t.mu);
  if (o.static_lambda) t.static_lambda = *o.static_lambda;
  apply(o.gamma, t.loss.gamma);
  if (o.margin) t.loss.margin = *o.margin;
  apply(o.lr, t.optimizer.learning_rate);
  apply(o.proxy_lr_scale, t.proxy_lr_scale);
  apply(o.epochs, t.epochs);
  apply(o.batch_size, t.batch_size);
  apply(o.embedding_dim, t.embedding_dim);

  apply(o.train_csv, cfg.paths.train_csv);
  apply(o.eval_csv, cfg.paths.eval_csv);
  apply(o.checkpoint, cfg.paths.checkpoint);
  apply(o.baseline, cfg.paths.baseline);
  apply(o.ps_checkpoint, cfg.paths.ps);
  apply(o.embeddings, cfg.paths.embeddings);
  apply(o.queries, cfg.paths.queries);
  apply(o.gallery, cfg.paths.gallery);
  apply(o.paired, cfg.diag.paired);
  apply(o.per_query, cfg.eval.per_query);
  apply(o.instances, cfg.gradcheck.instances);
  cfg.validate();
  return cfg;
}

std::size_t thread_budget() {
  const char* env = std::getenv("PS_LAB_THREADS");
  if (env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) {
      throw pslab::InvalidParameter("PS_LAB_THREADS must be a positive integer");
    }
    return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Collects output file names for the per-command manifest.
class Outputs {
 public:
  Outputs(const pslab::RunConfig& cfg, std::string command)
      : cfg_(cfg), command_(std::move(command)) {
    std::filesystem::create_directories(cfg.paths.out_dir);
  }

  std::string path(const char* name) const { return cfg_.paths.out_dir + "/" + name; }

  void text(const std::string& file, const std::string& body) {
    const auto parent = std::filesystem::path(file).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    pslab::write_text_file(file, body);
    files_.push_back(file);
  }

  // JSON outputs carry their own copy of the manifest.
  void json(const std::string& file, Json body) {
    Json doc;
    doc["manifest"] = manifest();
    for (auto& [k, v] : body.items()) doc[k] = v;
    text(file, doc.dump(2) + "\n");
  }

  Json manifest() const { return pslab::make_manifest(cfg_, command_); }

  void finish() {
    Json m = manifest();
    m["outputs"] = files_;
    pslab::write_text_file(path((command_ + ".manifest.json").c_str()), m.dump(2) + "\n");
  }

 private:
  const pslab::RunConfig& cfg_;
  std::string command_;
  std::vector<std::string> files_;
};

Json gate_json(const pslab::GradCheckReport& r) {
  return {{"passed", r.passed()},
          {"instances", r.instances},
          {"tolerance", r.tolerance},
          {"max_rel_error_embeddings", r.embeddings},
          {"max_rel_error_proxies", r.proxies},
          {"max_rel_error_weights", r.weights}};
}

// Runs the gradient-check gate for `train` unless disabled.
Json run_gate(const pslab::RunConfig& cfg, const pslab::TrainConfig& train) {
  if (!cfg.gate) return {{"skipped", true}};
  const pslab::GradCheckReport r = pslab::gradient_gate(train);
  if (!r.passed()) {
    throw GateFailure("gradient-check gate failed: max relative error " +
                      std::to_string(r.worst()));
  }
  return gate_json(r);
}

int cmd_gen(const pslab::RunConfig& cfg) {
  const pslab::ToyData data = pslab::make_toy_data(cfg.seed, cfg.data.train_per_class,
                                                   cfg.data.eval_per_class, cfg.data.sigma);
  Outputs out(cfg, "gen");
  const std::string train = cfg.paths.in_out(cfg.paths.train_csv, "train.csv");
  const std::string eval = cfg.paths.in_out(cfg.paths.eval_csv, "eval.csv");
  out.text(train, pslab::embeddings_to_csv(data.train));
  out.text(eval, pslab::embeddings_to_csv(data.eval));
  out.finish();
  std::cout << "wrote " << data.train.size() << " training rows to " << train << "\n"
            << "wrote " << data.eval.size() << " evaluation rows to " << eval << "\n";
  return 0;
}

int cmd_train(const pslab::RunConfig& cfg) {
  const pslab::TrainConfig train = cfg.effective_train();
  const pslab::LabeledPoints data =
      pslab::read_embeddings(cfg.paths.in_out(cfg.paths.train_csv, "train.csv"));
  const Json gate = run_gate(cfg, train);
  const pslab::TrainResult result = pslab::train(train, data);

  Outputs out(cfg, "train");
  const std::string ck_path = cfg.paths.in_out(cfg.paths.checkpoint, "checkpoint.json");
  pslab::Checkpoint ck{result.model, result.bank, train, cfg.seed};
  Json ck_json = pslab::checkpoint_to_json(ck);
  ck_json["manifest"] = out.manifest();
  out.text(ck_path, ck_json.dump(1) + "\n");

  Json shapes = Json::array();
  for (const auto& s : result.first_epoch) {
    shapes.push_back({{"batch", s.batch},
                      {"synthetics", s.synthetics},
                      {"embeddings", s.embeddings},
                      {"proxies", s.proxies}});
  }
  Json history;
  history["gate"] = gate;
  history["config"] = pslab::train_config_to_json(train);
  history["loss"] = result.history;
  history["first_epoch_batches"] = shapes;
  history["first_epoch_lambdas"] = result.lambdas_seen;
  out.json(out.path("history.json"), history);
  out.finish();
  std::cout << "trained " << train.epochs << " epochs, final loss "
            << pslab::format_double(result.history.empty() ? 0.0 : result.history.back())
            << "\ncheckpoint: " << ck_path << "\n";
  return 0;
}

Json report_json(const pslab::MetricReport& r) {
  Json recall = Json::object();
  for (const auto& [k, v] : r.recall_at_k) recall[std::to_string(k)] = v;
  Json j{{"recall_at_k", recall},
         {"p_at_1", r.p_at_1},
         {"r_precision", r.r_precision},
         {"map_at_r", r.map_at_r},
         {"skipped", r.skipped},
         {"n_queries", r.n_queries}};
  if (!r.per_query.empty()) {
    Json rows = Json::array();
    for (const auto& q : r.per_query) {
      rows.push_back({{"relevant", q.relevant},
                      {"hit_at_1", q.hit_at_1},
                      {"r_precision", q.r_precision},
                      {"map_at_r", q.map_at_r}});
    }
    j["per_query"] = rows;
  }
  return j;
}

int cmd_eval(const pslab::RunConfig& cfg) {
  const auto& p = cfg.paths;
  pslab::RetrievalSetup setup;
  Json source;
  if (!p.queries.empty() || !p.gallery.empty()) {
    if (p.queries.empty() || p.gallery.empty()) {
      throw pslab::InvalidParameter("eval: queries and gallery must be given together");
    }
    const auto q = pslab::read_embeddings(p.queries);
    const auto g = pslab::read_embeddings(p.gallery);
    if (q.dim() != g.dim()) {
      throw pslab::ParseError("eval: query file has dimension " + std::to_string(q.dim()) +
                              ", gallery file has " + std::to_string(g.dim()));
    }
    setup = pslab::RetrievalSetup::split(q, g);
    source = {{"mode", "split"}, {"queries", p.queries}, {"gallery", p.gallery}};
  } else {
    const std::string path = p.in_out(p.embeddings, "embeddings.csv");
    setup = pslab::RetrievalSetup::same(pslab::read_embeddings(path));
    source = {{"mode", "same_set"}, {"embeddings", path}};
  }
  const pslab::MetricReport report = pslab::evaluate(setup, cfg.eval.ks, cfg.eval.per_query);
  Outputs out(cfg, "eval");
  Json body = report_json(report);
  body["source"] = source;
  out.json(out.path("eval.json"), body);
  out.finish();
  for (const auto& [k, v] : report.recall_at_k) {
    std::cout << "R@" << k << " " << pslab::format_double(v) << "\n";
  }
  std::cout << "P@1 " << pslab::format_double(report.p_at_1) << "\nRP "
            << pslab::format_double(report.r_precision) << "\nMAP@R "
            << pslab::format_double(report.map_at_r) << "\n";
  return 0;
}

struct LoadedModel {
  pslab::Checkpoint ck;
  std::string path;
};

LoadedModel load_for_diag(const std::string& path, const pslab::RunConfig& cfg,
                          const pslab::ToyData& data) {
  LoadedModel m{pslab::load_checkpoint(path), path};
  const auto& model = m.ck.model;
  if (model.input_dim() != data.eval.dim() || model.input_dim() != data.train.dim()) {
    throw pslab::ContractError("checkpoint " + path + " expects " +
                               std::to_string(model.input_dim()) +
                               "-d inputs, data has " + std::to_string(data.eval.dim()));
  }
  if (m.ck.bank.num_classes() != pslab::count_classes(data.train.labels)) {
    throw pslab::ContractError("checkpoint " + path + " has " +
                               std::to_string(m.ck.bank.num_classes()) +
                               " proxies, training data has " +
                               std::to_string(pslab::count_classes(data.train.labels)) +
                               " classes");
  }
  if (model.embedding_dim() != cfg.train.embedding_dim) {
    throw pslab::ContractError("checkpoint " + path + " has embedding_dim " +
                               std::to_string(model.embedding_dim()) + ", config says " +
                               std::to_string(cfg.train.embedding_dim));
  }
  return m;
}

pslab::PairedStudyConfig study_config(const pslab::RunConfig& cfg) {
  pslab::PairedStudyConfig s;
  s.seed = cfg.seed;
  s.train = cfg.effective_train();
  s.profile_steps = cfg.diag.profile_steps;
  s.deformation_samples = cfg.diag.deformation_samples;
  s.deformation_lambdas = cfg.diag.lambdas;
  return s;
}

Json diagnostics_json(const pslab::ArmDiagnostics& d, const std::vector<double>& lambdas) {
  Json deformation = Json::array();
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    deformation.push_back({{"lambda", lambdas[k]}, {"recall_at_1", d.deformation_recall[k]}});
  }
  return {{"smoothness",
           {{"target", d.smoothness.target},
            {"deviation", d.smoothness.deviation},
            {"profile", d.smoothness.profile}}},
          {"unseen_recall_at_1", d.unseen_recall_at_1},
          {"deformation", deformation},
          {"heatmap_diagonals",
           {{"gt_original", d.diagonals.gt_original},
            {"gt_synthetic", d.diagonals.gt_synthetic},
            {"competitor_proxy", d.diagonals.competitor_proxy},
            {"competitor_embedding", d.diagonals.competitor_embedding}}}};
}

std::string matrix_csv(const pslab::Matrix& m) {
  std::string s;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) s += ',';
      s += pslab::format_double(m(r, c));
    }
    s += '\n';
  }
  return s;
}

void write_grids(Outputs& out, const pslab::Checkpoint& ck, pslab::GridSpace space,
                 const pslab::RunConfig& cfg, std::size_t threads) {
  const auto grids = pslab::class_probability_grids(ck.model, ck.bank, ck.config.loss, space,
                                                    cfg.diag.grid, threads);
  const std::string stem = "grid_" + std::string(pslab::to_string(space)) + "_class";
  for (std::size_t k = 0; k < grids.size(); ++k) {
    const std::string base = stem + std::to_string(k);
    out.text(out.path((base + ".csv").c_str()), pslab::grid_to_csv(grids[k]));
    out.text(out.path((base + ".pgm").c_str()), pslab::grid_to_pgm(grids[k]));
  }
}

int diag_single(const pslab::RunConfig& cfg, const pslab::ToyData& data) {
  const LoadedModel m =
      load_for_diag(cfg.paths.in_out(cfg.paths.checkpoint, "checkpoint.json"), cfg, data);
  const auto& ck = m.ck;
  if (cfg.diag.embedding_grid && ck.model.embedding_dim() != 2) {
    throw pslab::InvalidParameter(
        "embedding-space grid needs a 2-d embedding, checkpoint has embedding_dim " +
        std::to_string(ck.model.embedding_dim()) +
        "; set diag.embedding_grid = false");
  }
  const Json gate = run_gate(cfg, ck.config);
  const std::size_t threads = thread_budget();
  Outputs out(cfg, "diag");

  if (cfg.diag.input_grid) write_grids(out, ck, pslab::GridSpace::kInput, cfg, threads);
  if (cfg.diag.embedding_grid) write_grids(out, ck, pslab::GridSpace::kEmbedding, cfg, threads);

  const pslab::LabeledPoints emb = pslab::embed_points(ck.model, data.eval);
  out.text(out.path("embeddings.csv"), pslab::embeddings_to_csv(emb));

  pslab::LabeledPoints pca_points = emb;
  pca_points.points = pslab::pca_project(emb.points, std::min<std::size_t>(2, emb.dim()))
                          .coordinates;
  out.text(out.path("pca.csv"), pslab::embeddings_to_csv(pca_points));

  // Heatmap over the first few eval rows of each seen class plus synthetics
  // drawn with alpha 0.4, mu 1 from the evaluation stream.
  const std::size_t classes = ck.bank.num_classes();
  std::vector<std::size_t> rows;
  std::vector<std::size_t> taken(classes, 0);
  for (std::size_t r = 0; r < emb.size(); ++r) {
    const auto y = emb.labels[r];
    if (y < classes && taken[y] < cfg.diag.heatmap_per_class) {
      rows.push_back(r);
      ++taken[y];
    }
  }
  const pslab::LabeledPoints hm_rows = emb.select(rows);
  pslab::EmbeddingBatch batch{hm_rows.points, hm_rows.labels};
  pslab::Rng rng(cfg.seed, pslab::Streams::kEval);
  const auto pairs = pslab::sample_pairs(batch.labels, 1.0, pslab::LambdaSource{0.4, {}}, rng);
  const pslab::SyntheticSet syn = pslab::synthesize(batch, ck.bank, pairs);
  const pslab::Heatmap hm = pslab::logits_heatmap(batch.embeddings, batch.labels, ck.bank, &syn);
  out.text(out.path("heatmap.csv"), matrix_csv(hm.values));

  const pslab::ArmDiagnostics d =
      pslab::diagnose(ck.model, ck.bank, ck.config.loss, data, study_config(cfg));
  const Json dj = diagnostics_json(d, cfg.diag.lambdas);
  out.json(out.path("smoothness.json"), {{"checkpoint", m.path}, {"smoothness", dj["smoothness"]}});
  out.json(out.path("deformation.json"),
           {{"checkpoint", m.path},
            {"samples_per_pair", cfg.diag.deformation_samples},
            {"deformation", dj["deformation"]}});
  out.json(out.path("heatmap.json"),
           {{"checkpoint", m.path},
            {"original_rows", hm.original_rows},
            {"original_cols", hm.original_cols},
            {"heatmap_diagonals", dj["heatmap_diagonals"]},
            {"gate", gate}});
  out.finish();
  std::cout << "boundary deviation " << pslab::format_double(d.smoothness.deviation) << "\n"
            << "unseen R@1 " << pslab::format_double(d.unseen_recall_at_1) << "\n";
  return 0;
}

int diag_paired(const pslab::RunConfig& cfg, const pslab::ToyData& data) {
  const LoadedModel base =
      load_for_diag(cfg.paths.in_out(cfg.paths.baseline, "baseline/checkpoint.json"), cfg, data);
  const LoadedModel ps =
      load_for_diag(cfg.paths.in_out(cfg.paths.ps, "ps/checkpoint.json"), cfg, data);
  if (base.ck.seed != ps.ck.seed) {
    throw pslab::ContractError("paired diag: checkpoints were trained with different seeds");
  }
  const Json gate_base = run_gate(cfg, base.ck.config);
  const Json gate_ps = run_gate(cfg, ps.ck.config);
  const auto study = study_config(cfg);
  const auto db = pslab::diagnose(base.ck.model, base.ck.bank, base.ck.config.loss, data, study);
  const auto dp = pslab::diagnose(ps.ck.model, ps.ck.bank, ps.ck.config.loss, data, study);

  Json per_lambda = Json::array();
  for (std::size_t k = 0; k < cfg.diag.lambdas.size(); ++k) {
    per_lambda.push_back({{"lambda", cfg.diag.lambdas[k]},
                          {"baseline", db.deformation_recall[k]},
                          {"ps", dp.deformation_recall[k]}});
  }
  Outputs out(cfg, "diag");
  out.json(out.path("comparison.json"),
           {{"baseline_checkpoint", base.path},
            {"ps_checkpoint", ps.path},
            {"deviation", {{"baseline", db.smoothness.deviation}, {"ps", dp.smoothness.deviation}}},
            {"unseen_recall_at_1",
             {{"baseline", db.unseen_recall_at_1}, {"ps", dp.unseen_recall_at_1}}},
            {"deformation_recall_at_1", per_lambda},
            {"baseline", diagnostics_json(db, cfg.diag.lambdas)},
            {"ps", diagnostics_json(dp, cfg.diag.lambdas)},
            {"gate", {{"baseline", gate_base}, {"ps", gate_ps}}}});
  out.finish();
  std::cout << "deviation baseline " << pslab::format_double(db.smoothness.deviation)
            << " ps " << pslab::format_double(dp.smoothness.deviation) << "\n";
  return 0;
}

int cmd_diag(const pslab::RunConfig& cfg) {
  pslab::ToyData data;
  data.train = pslab::read_embeddings(cfg.paths.in_out(cfg.paths.train_csv, "train.csv"));
  data.eval = pslab::read_embeddings(cfg.paths.in_out(cfg.paths.eval_csv, "eval.csv"));
  return cfg.diag.paired ? diag_paired(cfg, data) : diag_single(cfg, data);
}

int cmd_gradcheck(const pslab::RunConfig& cfg) {
  Json rows = Json::array();
  bool ok = true;
  for (pslab::LossKind kind : pslab::kAllLossKinds) {
    for (bool ps : {false, true}) {
      pslab::TrainConfig t = cfg.effective_train();
      t.loss = pslab::LossConfig{};
      t.loss.kind = kind;
      t.ps_enabled = ps;
      t.alpha = 0.4;
      t.mu = 1.0;
      t.static_lambda.reset();
      t.mode = pslab::AugmentMode::full();
      const auto r = pslab::run_gradcheck(t, cfg.gradcheck.instances, cfg.seed);
      ok = ok && r.passed();
      Json row = gate_json(r);
      row["loss"] = std::string(pslab::to_string(kind));
      row["ps"] = ps;
      rows.push_back(row);
      std::cout << (r.passed() ? "ok   " : "FAIL ") << pslab::to_string(kind)
                << (ps ? " ps=on " : " ps=off") << " max rel error "
                << pslab::format_double(r.worst()) << "\n";
    }
  }
  Outputs out(cfg, "gradcheck");
  out.json(out.path("gradcheck.json"), {{"passed", ok}, {"results", rows}});
  out.finish();
  return ok ? 0 : kExitGate;
}

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "TOML run configuration")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "global seed");
  sub->add_option("--out-dir", o.out_dir, "output directory");
}

void add_train_flags(CLI::App* sub, Overrides& o) {
  sub->add_option("--ps", o.ps, "Proxy Synthesis on|off");
  sub->add_option("--loss", o.loss, "loss kind");
  sub->add_option("--mode", o.mode, "augmentation mode: full, m1, m2, m3, m4");
  sub->add_option("--alpha", o.alpha, "Beta(alpha, alpha) for lambda");
  sub->add_option("--mu", o.mu, "synthetic ratio");
  sub->add_option("--static-lambda", o.static_lambda, "fixed lambda for every synthetic");
  sub->add_option("--gamma", o.gamma, "scale of normalized losses");
  sub->add_option("--margin", o.margin, "margin of cosface, arcface or sphereface");
  sub->add_option("--epochs", o.epochs);
  sub->add_option("--batch-size", o.batch_size);
  sub->add_option("--lr", o.lr, "learning rate");
  sub->add_option("--proxy-lr-scale", o.proxy_lr_scale, "proxy learning rate multiplier");
  sub->add_option("--optimizer", o.optimizer, "adam or sgd_momentum");
  sub->add_option("--embedding-dim", o.embedding_dim);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proxy Synthesis regularizer lab"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen", "generate the toy seen/unseen Gaussian data");
  add_common(gen, o);
  gen->add_option("--sigma", o.sigma, "isotropic standard deviation");
  gen->add_option("--train-per-class", o.train_per_class);
  gen->add_option("--eval-per-class", o.eval_per_class);
  gen->add_option("--train-csv", o.train_csv);
  gen->add_option("--eval-csv", o.eval_csv);

  auto* train = app.add_subcommand("train", "train the embedder and proxies");
  add_common(train, o);
  add_train_flags(train, o);
  train->add_option("--train-csv", o.train_csv);
  train->add_option("--checkpoint", o.checkpoint, "checkpoint output path");
  train->add_flag("--gate,!--no-gate", o.gate, "run the gradient-check gate first");

  auto* eval = app.add_subcommand("eval", "retrieval metrics for embedding CSV files");
  add_common(eval, o);
  eval->add_option("--embeddings", o.embeddings, "same-set embedding CSV");
  eval->add_option("--queries", o.queries, "query embedding CSV");
  eval->add_option("--gallery", o.gallery, "gallery embedding CSV");
  eval->add_flag("--per-query", o.per_query, "include per-query rows");

  auto* diag = app.add_subcommand("diag", "diagnostics for one checkpoint or a paired run");
  add_common(diag, o);
  diag->add_option("--checkpoint", o.checkpoint);
  diag->add_option("--baseline", o.baseline, "baseline checkpoint (paired mode)");
  diag->add_option("--ps-checkpoint", o.ps_checkpoint, "Proxy Synthesis checkpoint (paired mode)");
  diag->add_option("--train-csv", o.train_csv);
  diag->add_option("--eval-csv", o.eval_csv);
  diag->add_flag("--paired", o.paired, "compare a baseline and a PS checkpoint");
  diag->add_flag("--gate,!--no-gate", o.gate, "run the gradient-check gate first");

  auto* gc = app.add_subcommand("gradcheck", "gradient oracle suite over every loss kind");
  add_common(gc, o);
  gc->add_option("--instances", o.instances, "random instances per loss and PS setting");

  CLI11_PARSE(app, argc, argv);

  try {
    const pslab::RunConfig cfg = load_config(o);
    if (gen->parsed()) return cmd_gen(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (diag->parsed()) return cmd_diag(cfg);
    return cmd_gradcheck(cfg);
  } catch (const pslab::TrainingDiverged& e) {
    std::cerr << "ps-lab: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const GateFailure& e) {
    std::cerr << "ps-lab: " << e.what() << "\n";
    return kExitGate;
  } catch (const std::exception& e) {
    std::cerr << "ps-lab: error: " << e.what() << "\n";
    return kExitError;
  }
}
