#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixpo {

/// State space too large for exact enumeration.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters or objective values became non-finite.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Malformed task/config file. `line()` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Guide pretraining ran out of budget before reaching its target.
class GuideTrainingError : public std::runtime_error {
 public:
  GuideTrainingError(const std::string& what, double best_success)
      : std::runtime_error(what), best_success_(best_success) {}
  double best_success() const noexcept { return best_success_; }

 private:
  double best_success_;
};

}  // namespace mixpo
