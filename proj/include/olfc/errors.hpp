#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace olfc {

/// A configuration that violates a model rule. `rule()` is a stable identifier
/// (for example "M3 strictly positive"); line/column are 1-based source
/// positions when the value came from a scenario file, 0 otherwise.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string rule, const std::string& message, int line = 0,
              int column = 0);

  const std::string& rule() const noexcept { return rule_; }
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  std::string rule_;
  int line_;
  int column_;
};

/// Integration or solver failure. `last_valid_time()` is the last simulated
/// instant with a finite state (NaN when not applicable).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& message,
                        double last_valid_time = std::numeric_limits<double>::quiet_NaN());

  double last_valid_time() const noexcept { return last_valid_time_; }

 private:
  double last_valid_time_;
};

}  // namespace olfc
