#include "olfc/errors.hpp"

#include <limits>

namespace olfc {

namespace {

std::string located(const std::string& rule, const std::string& message,
                    int line, int column) {
  std::string out;
  if (line > 0) {
    out = "line " + std::to_string(line) + ", column " + std::to_string(column) + ": ";
  }
  out += "[" + rule + "] " + message;
  return out;
}

}  // namespace

ConfigError::ConfigError(std::string rule, const std::string& message, int line,
                         int column)
    : std::runtime_error(located(rule, message, line, column)),
      rule_(std::move(rule)),
      line_(line),
      column_(column) {}

NumericError::NumericError(const std::string& message, double last_valid_time)
    : std::runtime_error(message), last_valid_time_(last_valid_time) {}

}  // namespace olfc
