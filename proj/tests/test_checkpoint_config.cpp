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

#include <string>

#include <gtest/gtest.h>

#include "pslab/checkpoint.hpp"
#include "pslab/run_config.hpp"

namespace pslab {
namespace {

Checkpoint trained_checkpoint() {
  const ToyData data = make_toy_data(3, 20, 5);
  TrainConfig cfg = default_toy_train();
  cfg.epochs = 3;
  cfg.hidden = {6, 5};
  cfg.seed = 3;
  cfg.ps_enabled = true;
  cfg.static_lambda = 0.25;
  cfg.loss.margin = 0.2;
  cfg.loss.kind = LossKind::kCosFace;
  const TrainResult r = train(cfg, data.train);
  return Checkpoint{r.model, r.bank, cfg, cfg.seed};
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Checkpoint ck = trained_checkpoint();
  const std::string path = ::testing::TempDir() + "pslab_ck.json";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  ASSERT_EQ(back.model.layers.size(), ck.model.layers.size());
  for (std::size_t l = 0; l < ck.model.layers.size(); ++l) {
    EXPECT_EQ(back.model.layers[l].weight, ck.model.layers[l].weight);
    EXPECT_EQ(back.model.layers[l].bias, ck.model.layers[l].bias);
    EXPECT_EQ(back.model.layers[l].activation, ck.model.layers[l].activation);
  }
  EXPECT_EQ(back.bank.proxies, ck.bank.proxies);
  EXPECT_EQ(back.seed, 3u);
  EXPECT_EQ(train_config_to_json(back.config).dump(), train_config_to_json(ck.config).dump());
  EXPECT_EQ(back.config.static_lambda, 0.25);
  EXPECT_EQ(back.config.loss.margin, 0.2);
  EXPECT_EQ(back.config.mode, AugmentMode::full());
  EXPECT_EQ(checkpoint_to_json(back).dump(1), checkpoint_to_json(ck).dump(1));
}

TEST(Checkpoint, RejectsForeignOrBrokenFiles) {
  const Json good = checkpoint_to_json(trained_checkpoint());
  Json j = good;
  j["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(j), ParseError);
  j = good;
  j["version"] = 2;
  EXPECT_THROW(checkpoint_from_json(j), ParseError);
  j = good;
  j["seed"] = "three";
  EXPECT_THROW(checkpoint_from_json(j), ParseError);
  j = good;
  j["proxies"]["cols"] = 3;
  EXPECT_THROW(checkpoint_from_json(j), Error);
  j = good;
  j.erase("layers");
  EXPECT_THROW(checkpoint_from_json(j), Error);
  const std::string path = ::testing::TempDir() + "pslab_bad.json";
  write_text_file(path, "{not json");
  EXPECT_THROW(load_checkpoint(path), ParseError);
  EXPECT_THROW(load_checkpoint(path + ".missing"), Error);
}

TEST(RunConfig, DefaultsAndFullParse) {
  const RunConfig d = parse_run_config("");
  EXPECT_EQ(d.seed, 0u);
  EXPECT_EQ(d.train.loss.gamma, 4.0);
  EXPECT_EQ(d.train.proxy_lr_scale, 10.0);
  EXPECT_NO_THROW(d.validate());

  const RunConfig c = parse_run_config(R"(
seed = 42
gate = false
[data]
sigma = 0.3
train_per_class = 10
eval_per_class = 4
[train]
loss = "arcface"
gamma = 8.0
margin = 0.3
ps = true
alpha = 1.5
mu = 0.5
static_lambda = 0.7
mode = "m3"
epochs = 12
batch_size = 16
optimizer = "sgd_momentum"
learning_rate = 0.05
proxy_lr_scale = 2.0
hidden = [4, 3]
embedding_dim = 3
[eval]
ks = [1, 5]
per_query = true
[diag]
paired = true
grid_resolution = 11
lambdas = [0.5]
[gradcheck]
instances = 7
[paths]
out_dir = "runs/a"
checkpoint = "x.json"
)");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_FALSE(c.gate);
  EXPECT_EQ(c.data.sigma, 0.3);
  EXPECT_EQ(c.train.loss.kind, LossKind::kArcFace);
  EXPECT_EQ(c.train.loss.margin, 0.3);
  EXPECT_TRUE(c.train.ps_enabled);
  EXPECT_EQ(c.train.static_lambda, 0.7);
  EXPECT_EQ(c.train.mode, AugmentMode::m3());
  EXPECT_EQ(c.train.optimizer.kind, OptimizerKind::kSgdMomentum);
  EXPECT_EQ(c.train.hidden, (std::vector<std::size_t>{4, 3}));
  EXPECT_EQ(c.eval.ks, (std::vector<std::size_t>{1, 5}));
  EXPECT_TRUE(c.diag.paired);
  EXPECT_EQ(c.diag.grid.resolution, 11u);
  EXPECT_EQ(c.diag.lambdas, std::vector<double>{0.5});
  EXPECT_EQ(c.gradcheck.instances, 7u);
  EXPECT_EQ(c.paths.out_dir, "runs/a");
  EXPECT_EQ(c.paths.in_out(c.paths.checkpoint, "checkpoint.json"), "x.json");
  EXPECT_EQ(c.paths.in_out(c.paths.train_csv, "train.csv"), "runs/a/train.csv");
  EXPECT_EQ(c.effective_train().seed, 42u);
  EXPECT_NO_THROW(c.validate());
}

std::string parse_message(const std::string& text) {
  try {
    parse_run_config(text).validate();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, ErrorsNameTheKey) {
  EXPECT_NE(parse_message("[train]\nfoo = 1\n").find("train.foo"), std::string::npos);
  EXPECT_NE(parse_message("bogus = 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(parse_message("[data]\nsigma = \"wide\"\n").find("data.sigma"), std::string::npos);
  EXPECT_NE(parse_message("[data]\nsigma = -1.0\n").find("data.sigma"), std::string::npos);
  EXPECT_NE(parse_message("[train]\nepochs = -3\n").find("train.epochs"), std::string::npos);
  EXPECT_NE(parse_message("[train]\nhidden = [1, \"a\"]\n").find("train.hidden"),
            std::string::npos);
  EXPECT_NE(parse_message("[diag]\nlambdas = [1.5]\n").find("diag.lambdas"), std::string::npos);
  EXPECT_NE(parse_message("[gradcheck]\ninstances = 0\n").find("gradcheck.instances"),
            std::string::npos);
  EXPECT_FALSE(parse_message("[train]\nloss = \"triplet\"\n").empty());
  EXPECT_FALSE(parse_message("[train]\nmode = \"m9\"\n").empty());
  try {
    parse_run_config("seed = 1\n[data\n");
    FAIL() << "no error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Manifest, HashIsDeterministicAndIgnoresPaths) {
  RunConfig a = parse_run_config("seed = 5\n");
  RunConfig b = a;
  b.paths.out_dir = "elsewhere";
  EXPECT_EQ(make_manifest(a, "train"), make_manifest(b, "train"));
  b.train.loss.gamma = 5.0;
  EXPECT_NE(make_manifest(a, "train")["config_hash"], make_manifest(b, "train")["config_hash"]);
  const Json m = make_manifest(a, "gen");
  EXPECT_EQ(m["artifact_version"], "ps-lab/1");
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["seed"], 5u);
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
}

TEST(Manifest, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

}  // namespace
}  // namespace pslab
