// Copyright 2026 The msgcn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace msgcn {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for an operation.
struct ShapeError : Error {
  using Error::Error;
};

/// A forward value, gradient, or loss became NaN/Inf, or an input is
/// outside an operation's numeric domain.
struct NumericError : Error {
  using Error::Error;
};

/// Malformed input data; messages carry file/line context where known.
struct ParseError : Error {
  using Error::Error;
};

/// Invalid configuration value or inconsistent config/checkpoint pair.
struct ConfigError : Error {
  using Error::Error;
};

/// Filesystem problem (missing path, unwritable output, truncated file).
struct IoError : Error {
  using Error::Error;
};

}  // namespace msgcn
