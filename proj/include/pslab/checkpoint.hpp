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

#ifndef PSLAB_CHECKPOINT_HPP_
#define PSLAB_CHECKPOINT_HPP_

// Checkpoint format (JSON object):
//   format      "ps-lab-checkpoint"
//   version     1
//   seed        training seed
//   config      TrainConfig echo, see train_config_to_json()
//   layers      [{in, out, activation, weight: row-major out x in, bias}]
//   proxies     {rows, cols, data: row-major}
// Doubles are written in shortest round-trip form, so a load reproduces
// every weight bit for bit.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pslab/data_io.hpp"
#include "pslab/error.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/mlp.hpp"
#include "pslab/synthesis.hpp"
#include "pslab/trainer.hpp"

namespace pslab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCheckpointFormat = "ps-lab-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline Json loss_config_to_json(const LossConfig& c) {
  Json j;
  j["kind"] = std::string(to_string(c.kind));
  j["gamma"] = c.gamma;
  j["margin"] = c.effective_margin();
  j["pa_alpha"] = c.pa_alpha;
  j["pa_delta"] = c.pa_delta;
  return j;
}

inline Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["loss"] = loss_config_to_json(c.loss);
  j["ps"] = c.ps_enabled;
  j["alpha"] = c.alpha;
  j["mu"] = c.mu;
  j["static_lambda"] = c.static_lambda ? Json(*c.static_lambda) : Json(nullptr);
  j["mode"] = std::string(to_string(c.mode));
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["optimizer"] = {{"kind", std::string(to_string(c.optimizer.kind))},
                    {"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["proxy_lr_scale"] = c.proxy_lr_scale;
  j["hidden"] = c.hidden;
  j["embedding_dim"] = c.embedding_dim;
  return j;
}

namespace detail {

template <typename T>
T json_field(const Json& j, const char* key, const char* where) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string(where) + ": missing field '" + key + "'", 0);
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(std::string(where) + ": field '" + key + "' has the wrong type", 0);
  }
}

}  // namespace detail

inline TrainConfig train_config_from_json(const Json& j) {
  using detail::json_field;
  TrainConfig c;
  const Json l = json_field<Json>(j, "loss", "config");
  c.loss.kind = parse_loss_kind(json_field<std::string>(l, "kind", "config.loss"));
  c.loss.gamma = json_field<double>(l, "gamma", "config.loss");
  c.loss.margin = json_field<double>(l, "margin", "config.loss");
  c.loss.pa_alpha = json_field<double>(l, "pa_alpha", "config.loss");
  c.loss.pa_delta = json_field<double>(l, "pa_delta", "config.loss");
  c.ps_enabled = json_field<bool>(j, "ps", "config");
  c.alpha = json_field<double>(j, "alpha", "config");
  c.mu = json_field<double>(j, "mu", "config");
  if (j.contains("static_lambda") && !j.at("static_lambda").is_null()) {
    c.static_lambda = json_field<double>(j, "static_lambda", "config");
  }
  c.mode = parse_augment_mode(json_field<std::string>(j, "mode", "config"));
  c.epochs = json_field<std::size_t>(j, "epochs", "config");
  c.batch_size = json_field<std::size_t>(j, "batch_size", "config");
  c.seed = json_field<std::uint64_t>(j, "seed", "config");
  const Json o = json_field<Json>(j, "optimizer", "config");
  c.optimizer.kind = parse_optimizer(json_field<std::string>(o, "kind", "config.optimizer"));
  c.optimizer.learning_rate = json_field<double>(o, "learning_rate", "config.optimizer");
  c.optimizer.beta1 = json_field<double>(o, "beta1", "config.optimizer");
  c.optimizer.beta2 = json_field<double>(o, "beta2", "config.optimizer");
  c.optimizer.epsilon = json_field<double>(o, "epsilon", "config.optimizer");
  c.proxy_lr_scale = json_field<double>(j, "proxy_lr_scale", "config");
  c.hidden = json_field<std::vector<std::size_t>>(j, "hidden", "config");
  c.embedding_dim = json_field<std::size_t>(j, "embedding_dim", "config");
  return c;
}

struct Checkpoint {
  MlpModel model;
  ProxyBank bank;
  TrainConfig config;
  std::uint64_t seed = 0;
};

inline Json checkpoint_to_json(const Checkpoint& ck) {
  Json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["seed"] = ck.seed;
  j["config"] = train_config_to_json(ck.config);
  Json layers = Json::array();
  for (const auto& layer : ck.model.layers) {
    layers.push_back({{"in", layer.in_dim()},
                      {"out", layer.out_dim()},
                      {"activation", std::string(to_string(layer.activation))},
                      {"weight", layer.weight.data()},
                      {"bias", layer.bias}});
  }
  j["layers"] = std::move(layers);
  j["proxies"] = {{"rows", ck.bank.proxies.rows()},
                  {"cols", ck.bank.proxies.cols()},
                  {"data", ck.bank.proxies.data()}};
  return j;
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  using detail::json_field;
  if (json_field<std::string>(j, "format", "checkpoint") != kCheckpointFormat) {
    throw ParseError("checkpoint: not a ps-lab checkpoint", 0);
  }
  const int version = json_field<int>(j, "version", "checkpoint");
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version), 0);
  }
  Checkpoint ck;
  ck.seed = json_field<std::uint64_t>(j, "seed", "checkpoint");
  ck.config = train_config_from_json(json_field<Json>(j, "config", "checkpoint"));
  for (const Json& lj : json_field<Json::array_t>(j, "layers", "checkpoint")) {
    const auto in = json_field<std::size_t>(lj, "in", "checkpoint.layers");
    const auto out = json_field<std::size_t>(lj, "out", "checkpoint.layers");
    Layer layer;
    layer.weight = Matrix(out, in, json_field<std::vector<double>>(lj, "weight", "checkpoint.layers"));
    layer.bias = json_field<std::vector<double>>(lj, "bias", "checkpoint.layers");
    layer.activation =
        parse_activation(json_field<std::string>(lj, "activation", "checkpoint.layers"));
    ck.model.layers.push_back(std::move(layer));
  }
  const Json pj = json_field<Json>(j, "proxies", "checkpoint");
  ck.bank.proxies = Matrix(json_field<std::size_t>(pj, "rows", "checkpoint.proxies"),
                           json_field<std::size_t>(pj, "cols", "checkpoint.proxies"),
                           json_field<std::vector<double>>(pj, "data", "checkpoint.proxies"));
  ck.model.validate();
  if (ck.bank.dim() != ck.model.embedding_dim()) {
    throw ParseError("checkpoint: proxy dimension does not match the model", 0);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  write_text_file(path, checkpoint_to_json(ck).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("checkpoint " + path + ": " + e.what(), 0);
  }
  return checkpoint_from_json(j);
}

}  // namespace pslab

#endif  // PSLAB_CHECKPOINT_HPP_
