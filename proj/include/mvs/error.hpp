// Copyright 2026 The mvselect Authors
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

namespace mvs {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration, unknown keys, bad flag values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A referenced input path does not exist.
class MissingFileError : public Error {
 public:
  using Error::Error;
};

// Tensor / dataset / checkpoint dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Corrupt or unreadable on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in a state where it is not allowed (e.g. stepping a
// finished episode).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvs
