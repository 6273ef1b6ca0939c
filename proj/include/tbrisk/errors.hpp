/* Copyright 2026 The tbrisk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace tbrisk {

// Base class for every error raised by the toolkit. The CLI maps subclasses
// onto process exit codes (see tools/tbrisk.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible matrix / tensor dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration (bad option values, mismatched
// metadata, unsupported kinds).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Threshold policy violations, e.g. r2 >= r1.
class PolicyError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Input is structurally valid but carries no usable signal (constant
// activations, all-zero gradients, empty restricted set, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Corrupt or malformed on-disk artifact. Messages name the byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged. Messages name the epoch.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Internal numeric contract violated (e.g. a similarity score far outside
// [0,1]). Signals a bug or ill-conditioned input, never silently clamped.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A surrogate pool (or the pool total) is below its required cardinality.
class InsufficientPoolError : public Error {
 public:
  using Error::Error;
};

// Fewer data points than the estimator needs.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Regression design matrix is rank deficient (all similarities equal).
class RankDeficiencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Too many bootstrap resamples failed to fit.
class InstabilityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// The transfer table is missing a required (surrogate, attack) cell.
class IncompleteCoverageError : public Error {
 public:
  using Error::Error;
};

// A prerequisite artifact file is absent. Messages name the expected path.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbrisk
