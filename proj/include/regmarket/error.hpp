/*
 * Copyright 2026 The regmarket Authors.
 *
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

#ifndef REGMARKET_ERROR_HPP_
#define REGMARKET_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace regmarket {

enum class ErrorKind {
  kSchema,            // CSV header / column role mismatch.
  kParse,             // Malformed cell, file or document.
  kOrdering,          // Non-increasing timestamps.
  kParameter,         // Invalid argument value.
  kInsufficientData,  // Not enough rows for the requested operation.
  kLookup,            // Unknown feature, agent or coalition member.
  kNumeric,           // Non-finite input or result.
  kSingular,          // Linear system could not be solved.
  kConvergence,       // Iterative solver did not converge.
  kCoverage,          // Loss table / model set is incomplete.
  kNoSurplus,         // Allocation normalizer is not positive.
  kConfig,            // Run configuration problem.
  kIo,                // File system failure.
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kOrdering: return "ordering";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kSingular: return "singular";
    case ErrorKind::kConvergence: return "convergence";
    case ErrorKind::kCoverage: return "coverage";
    case ErrorKind::kNoSurplus: return "no-surplus";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace regmarket

#endif  // REGMARKET_ERROR_HPP_
