/* Copyright 2026 The routescale Authors. All Rights Reserved.

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

namespace routescale {

/// Broad error class, mapped one-to-one onto CLI exit codes.
enum class ErrorCategory {
  Usage = 2,
  Data = 3,
  Numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

// Inputs outside a function's mathematical domain (E < E_min, N <= 0, K > E).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(ErrorCategory::Numeric, "domain error: " + what) {}
};

// Coefficient set whose fields do not match its law form.
class InvalidCoefficients : public Error {
 public:
  explicit InvalidCoefficients(const std::string& what)
      : Error(ErrorCategory::Data, "invalid coefficients: " + what) {}
};

// alpha(E_start) == 0: the effective parameter count is undefined.
class DegenerateCoefficients : public Error {
 public:
  explicit DegenerateCoefficients(const std::string& what)
      : Error(ErrorCategory::Numeric, "degenerate coefficients: " + what) {}
};

// c == 0 (or so small that 10^(-b/c) overflows): routing never stops helping.
class NoCutoff : public Error {
 public:
  explicit NoCutoff(const std::string& what)
      : Error(ErrorCategory::Numeric, "no cutoff: " + what) {}
};

class UnsupportedForm : public Error {
 public:
  explicit UnsupportedForm(const std::string& what)
      : Error(ErrorCategory::Usage, "unsupported law form: " + what) {}
};

class FitInfeasible : public Error {
 public:
  explicit FitInfeasible(const std::string& what)
      : Error(ErrorCategory::Data, "fit infeasible: " + what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorCategory::Data, "data error: " + what) {}
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(ErrorCategory::Data,
              source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::Numeric, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what)
      : Error(ErrorCategory::Usage, what) {}
};

}  // namespace routescale
