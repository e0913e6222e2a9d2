// Copyright 2026 The Minima Authors
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

namespace minima {

// Base of every error thrown by the library. kind() is the stable,
// machine-readable name written into CLI error documents.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define MINIMA_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {}  \
  }

MINIMA_DEFINE_ERROR(ShapeError);
MINIMA_DEFINE_ERROR(IndexError);
MINIMA_DEFINE_ERROR(NumericsError);
MINIMA_DEFINE_ERROR(DegenerateReferenceError);
MINIMA_DEFINE_ERROR(RankError);
MINIMA_DEFINE_ERROR(EmptyModelError);
MINIMA_DEFINE_ERROR(PlanMismatchError);
MINIMA_DEFINE_ERROR(DraftSupportError);
MINIMA_DEFINE_ERROR(OracleTooLargeError);
MINIMA_DEFINE_ERROR(FormatError);
MINIMA_DEFINE_ERROR(TruncationError);
MINIMA_DEFINE_ERROR(DuplicateEntryError);
MINIMA_DEFINE_ERROR(UsageError);
MINIMA_DEFINE_ERROR(ConfigError);
MINIMA_DEFINE_ERROR(InvalidArgument);

#undef MINIMA_DEFINE_ERROR

// Carries the best ratio the solver could reach so callers can report it.
class InfeasibleBudgetError : public Error {
 public:
  InfeasibleBudgetError(const std::string& what, double best_ratio)
      : Error("InfeasibleBudgetError", what), best_ratio_(best_ratio) {}
  double best_ratio() const noexcept { return best_ratio_; }

 private:
  double best_ratio_;
};

}  // namespace minima
