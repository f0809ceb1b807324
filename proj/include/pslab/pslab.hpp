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

#ifndef PSLAB_PSLAB_HPP_
#define PSLAB_PSLAB_HPP_

#include "pslab/checkpoint.hpp"
#include "pslab/data_io.hpp"
#include "pslab/error.hpp"
#include "pslab/experiments.hpp"
#include "pslab/finite_diff.hpp"
#include "pslab/gradcheck.hpp"
#include "pslab/losses.hpp"
#include "pslab/matrix.hpp"
#include "pslab/metrics.hpp"
#include "pslab/mlp.hpp"
#include "pslab/paired.hpp"
#include "pslab/rng.hpp"
#include "pslab/run_config.hpp"
#include "pslab/synthesis.hpp"
#include "pslab/trainer.hpp"

#endif  // PSLAB_PSLAB_HPP_
