#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ebm3d {

enum class ErrorCategory {
  Config,
  Numeric,
  Parse,
  Io,
  Input,
  Generation,
  UndefinedMetric,
};

std::string_view category_name(ErrorCategory category);

// Every failure raised by the library. `index` carries the layer, iteration,
// annotation or line number the failure refers to, when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message,
        std::optional<long> index = std::nullopt)
      : std::runtime_error(message), category_(category), index_(index) {}

  ErrorCategory category() const { return category_; }
  std::optional<long> index() const { return index_; }

 private:
  ErrorCategory category_;
  std::optional<long> index_;
};

}  // namespace ebm3d
