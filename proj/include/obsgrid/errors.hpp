/*
 * Copyright 2026 The obsgrid Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace obsgrid {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value, unknown id, or violated precondition on input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input tables violate the database invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation not supported for this input (e.g. ground truth on real data).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Model could not be fitted: single-label input, zero events, etc.
class DegenerateFitError : public Error {
 public:
  using Error::Error;
};

/// A cross-validation fold lacks one of the label classes.
class CvDegenerateError : public DegenerateFitError {
 public:
  using DegenerateFitError::DegenerateFitError;
};

/// Balance diagnostics requested on an empty arm.
class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

}  // namespace obsgrid
