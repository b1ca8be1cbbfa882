// Copyright 2026 The dopphase Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace dopphase {

// Every error thrown by the library derives from Error so callers can catch
// one type at the boundary (CLI, HTTP handlers).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DOPPHASE_DEFINE_ERROR(Name) \
  class Name : public Error {       \
   public:                          \
    using Error::Error;             \
  }

DOPPHASE_DEFINE_ERROR(FormatError);
DOPPHASE_DEFINE_ERROR(UnsupportedError);
DOPPHASE_DEFINE_ERROR(RangeError);
DOPPHASE_DEFINE_ERROR(TooShortError);
DOPPHASE_DEFINE_ERROR(ShapeError);
DOPPHASE_DEFINE_ERROR(NumericError);
DOPPHASE_DEFINE_ERROR(StateError);
DOPPHASE_DEFINE_ERROR(EmptyError);
DOPPHASE_DEFINE_ERROR(IoError);
DOPPHASE_DEFINE_ERROR(DataError);
DOPPHASE_DEFINE_ERROR(VersionError);
DOPPHASE_DEFINE_ERROR(CorruptError);

#undef DOPPHASE_DEFINE_ERROR

}  // namespace dopphase
