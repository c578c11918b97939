/*
 * Copyright 2026 The MOOMIN Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace moomin {

/// Base class for all recoverable library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shape disagreement.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (probabilities out of range, empty lists, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Unknown vertex, cell or parameter name.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text; message carries a byte offset or line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Cross-reference or content violations in loaded data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint version/shape problems.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Metric is undefined for the given inputs (e.g. single-class ROC AUC).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Internal invariant breach; maps to exit code 2 in the CLI.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace moomin
