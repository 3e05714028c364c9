// Copyright 2026 The shadowfit Authors
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

namespace shadowfit {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonPositiveDepth : Error {
  using Error::Error;
};

struct DegenerateRay : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct InvalidParams : Error {
  using Error::Error;
};

struct MissingFile : Error {
  using Error::Error;
};

struct SizeMismatch : Error {
  using Error::Error;
};

struct BadConfig : Error {
  using Error::Error;
};

struct ConstantTruth : Error {
  using Error::Error;
};

struct EmptyMask : Error {
  using Error::Error;
};

}  // namespace shadowfit
