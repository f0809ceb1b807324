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

#ifndef PSLAB_MLP_HPP_
#define PSLAB_MLP_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pslab/error.hpp"
#include "pslab/matrix.hpp"
#include "pslab/rng.hpp"

namespace pslab {

enum class Activation { kIdentity, kRelu };

inline std::string_view to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw InvalidParameter("unknown activation '" + std::string(name) + "'");
}

// y = act(W x + b); W is out x in.
struct Layer {
  Matrix weight;
  std::vector<double> bias;
  Activation activation = Activation::kIdentity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Feed-forward embedder. `version` increases on every parameter update so
/// a forward cache can be matched to the parameters it was computed with.
struct MlpModel {
  std::vector<Layer> layers;
  std::uint64_t version = 0;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t embedding_dim() const { return layers.back().out_dim(); }

  void validate() const {
    if (layers.empty()) throw ContractError("mlp: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
        throw ContractError("mlp: empty layer " + std::to_string(l));
      }
      if (layer.bias.size() != layer.out_dim()) {
        throw ContractError("mlp: bias length mismatch at layer " + std::to_string(l));
      }
      if (l > 0 && layer.in_dim() != layers[l - 1].out_dim()) {
        throw ContractError("mlp: layer " + std::to_string(l) +
                            " input does not chain from the previous output");
      }
    }
    if (layers.back().activation != Activation::kIdentity) {
      throw ContractError("mlp: final layer must be linear (embedding output)");
    }
  }
};

/// in -> hidden... -> embedding_dim with relu hidden layers. Weights are
/// N(0, 1/fan_in), biases zero.
inline MlpModel make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t embedding_dim, Rng& rng) {
  if (input_dim == 0 || embedding_dim == 0) {
    throw InvalidParameter("mlp: dimensions must be positive");
  }
  MlpModel model;
  std::size_t fan_in = input_dim;
  auto add = [&](std::size_t out, Activation act) {
    if (out == 0) throw InvalidParameter("mlp: hidden width must be positive");
    Layer layer{Matrix(out, fan_in), std::vector<double>(out, 0.0), act};
    const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : layer.weight.data()) w = rng.normal(0.0, std_dev);
    model.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (std::size_t width : hidden) add(width, Activation::kRelu);
  add(embedding_dim, Activation::kIdentity);
  return model;
}

// Per-layer inputs and pre-activations recorded by forward().
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;
  std::uint64_t model_version = 0;
};

struct ForwardResult {
  Matrix embeddings;
  ForwardCache cache;
};

inline ForwardResult forward(const MlpModel& model, const Matrix& inputs) {
  model.validate();
  if (inputs.cols() != model.input_dim()) {
    throw ContractError("mlp forward: input has " + std::to_string(inputs.cols()) +
                        " columns, model expects " +
                        std::to_string(model.input_dim()));
  }
  ForwardResult out;
  out.cache.model_version = model.version;
  Matrix current = inputs;
  for (const auto& layer : model.layers) {
    Matrix pre = matmul_transpose_b(current, layer.weight);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
      for (std::size_t c = 0; c < pre.cols(); ++c) pre(r, c) += layer.bias[c];
    }
    Matrix post = pre;
    if (layer.activation == Activation::kRelu) {
      for (double& v : post.data()) v = v > 0.0 ? v : 0.0;
    }
    out.cache.inputs.push_back(std::move(current));
    out.cache.pre_activations.push_back(std::move(pre));
    current = std::move(post);
  }
  out.embeddings = std::move(current);
  return out;
}

inline Matrix embed(const MlpModel& model, const Matrix& inputs) {
  return forward(model, inputs).embeddings;
}

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
};

struct MlpGrad {
  std::vector<LayerGrad> layers;
  Matrix d_inputs;
};

inline MlpGrad backward(const MlpModel& model, const ForwardCache& cache,
                        const Matrix& d_embeddings) {
  if (cache.model_version != model.version ||
      cache.inputs.size() != model.layers.size()) {
    throw ContractError("mlp backward: cache is stale for this model");
  }
  const std::size_t batch = cache.inputs.front().rows();
  if (d_embeddings.rows() != batch || d_embeddings.cols() != model.embedding_dim()) {
    throw ContractError("mlp backward: upstream gradient shape mismatch");
  }
  MlpGrad grads;
  grads.layers.resize(model.layers.size());
  Matrix upstream = d_embeddings;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    const Matrix& pre = cache.pre_activations[l];
    const Matrix& in = cache.inputs[l];
    if (layer.activation == Activation::kRelu) {
      for (std::size_t k = 0; k < upstream.size(); ++k) {
        if (!(pre.data()[k] > 0.0)) upstream.data()[k] = 0.0;
      }
    }
    auto& g = grads.layers[l];
    g.weight = Matrix(layer.out_dim(), layer.in_dim());
    g.bias.assign(layer.out_dim(), 0.0);
    Matrix d_in(batch, layer.in_dim());
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t o = 0; o < layer.out_dim(); ++o) {
        const double u = upstream(r, o);
        if (u == 0.0) continue;
        g.bias[o] += u;
        axpy(u, in.row(r), g.weight.row(o));
        axpy(u, layer.weight.row(o), d_in.row(r));
      }
    }
    upstream = std::move(d_in);
  }
  grads.d_inputs = std::move(upstream);
  return grads;
}

enum class OptimizerKind { kAdam, kSgdMomentum };

inline std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

inline OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::kSgdMomentum;
  throw InvalidParameter("unknown optimizer '" + std::string(name) + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;  // also the SGD momentum coefficient
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidParameter("optimizer: learning_rate must be non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw InvalidParameter("optimizer: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw InvalidParameter("optimizer: epsilon must be positive");
  }
};

/// Moment buffers for a flat list of parameter tensors. Tensor order is
/// fixed by the caller: per layer weight then bias, then the proxy bank.
struct OptimState {
  OptimizerConfig config;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
  std::uint64_t steps = 0;

  explicit OptimState(OptimizerConfig cfg = {}) : config(cfg) {}

  // `lr_scale`, when non-empty, multiplies the learning rate per tensor.
  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads,
            const std::vector<double>& lr_scale = {}) {
    if (params.size() != grads.size()) {
      throw ContractError("optimizer: parameter/gradient count mismatch");
    }
    if (first.empty()) {
      for (const auto& p : params) {
        first.emplace_back(p.size(), 0.0);
        second.emplace_back(config.kind == OptimizerKind::kAdam ? p.size() : 0, 0.0);
      }
    }
    if (first.size() != params.size()) {
      throw ContractError("optimizer: parameter list changed between steps");
    }
    ++steps;
    if (!lr_scale.empty() && lr_scale.size() != params.size()) {
      throw ContractError("optimizer: lr_scale length mismatch");
    }
    const double b1 = config.beta1, b2 = config.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(steps));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(steps));
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto p = params[t];
      auto g = grads[t];
      auto& m = first[t];
      const double lr = config.learning_rate * (lr_scale.empty() ? 1.0 : lr_scale[t]);
      if (p.size() != g.size() || p.size() != m.size()) {
        throw ContractError("optimizer: buffer shape mismatch");
      }
      if (config.kind == OptimizerKind::kAdam) {
        auto& v = second[t];
        for (std::size_t k = 0; k < p.size(); ++k) {
          m[k] = b1 * m[k] + (1.0 - b1) * g[k];
          v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
          const double m_hat = m[k] / bias1;
          const double v_hat = v[k] / bias2;
          p[k] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
      } else {
        for (std::size_t k = 0; k < p.size(); ++k) {
          m[k] = b1 * m[k] + g[k];
          p[k] -= lr * m[k];
        }
      }
    }
  }
};

}  // namespace pslab

#endif  // PSLAB_MLP_HPP_
