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

#ifndef PSLAB_ERROR_HPP_
#define PSLAB_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pslab {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A scalar parameter is outside its documented domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Zero or non-finite vector where a direction is required.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class InvalidLabel : public Error {
 public:
  using Error::Error;
};

// Two sources of a synthetic pair share a class.
class InvalidPair : public Error {
 public:
  using Error::Error;
};

// The batch holds a single class, so no cross-class pair exists.
class NoValidPair : public Error {
 public:
  using Error::Error;
};

// The augmentation flags leave some embedding without its positive proxy.
class InconsistentMode : public Error {
 public:
  using Error::Error;
};

// Shapes or state handed between stages do not line up.
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  explicit ParseError(const std::string& what) : ParseError(what, 0) {}

  // 1-based line number, or 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(std::size_t epoch)
      : Error("training diverged: non-finite loss at epoch " +
              std::to_string(epoch)),
        epoch_(epoch) {}

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace pslab

#endif  // PSLAB_ERROR_HPP_
