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

#ifndef PSLAB_FINITE_DIFF_HPP_
#define PSLAB_FINITE_DIFF_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>

#include "pslab/error.hpp"
#include "pslab/matrix.hpp"

namespace pslab {

inline constexpr double kDefaultFiniteDiffStep = 1e-5;

/// Central-difference gradient of a scalar function of a matrix:
/// (f(x + h e_k) - f(x - h e_k)) / 2h for every entry k.
template <typename F>
  requires std::invocable<F&, const Matrix&>
Matrix finite_diff_grad(F&& f, const Matrix& x,
                        double h = kDefaultFiniteDiffStep) {
  if (!(h > 0.0)) throw InvalidParameter("finite_diff_grad: h must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe.data()[k];
    probe.data()[k] = orig + h;
    const double up = f(static_cast<const Matrix&>(probe));
    probe.data()[k] = orig - h;
    const double down = f(static_cast<const Matrix&>(probe));
    probe.data()[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite function value");
    }
    grad.data()[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// ||a - b|| / max(||a||, ||b||, floor), Frobenius norms. The floor keeps
/// two vanishing gradients from dividing zero by zero.
inline double relative_error(const Matrix& a, const Matrix& b,
                             double floor = 1e-8) {
  if (!a.same_shape(b)) throw ContractError("relative_error: shape mismatch");
  const double scale =
      std::max({frobenius_norm(a), frobenius_norm(b), floor});
  return frobenius_norm(a - b) / scale;
}

}  // namespace pslab

#endif  // PSLAB_FINITE_DIFF_HPP_
