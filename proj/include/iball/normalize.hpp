#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "iball/error.hpp"

namespace iball {

/// Monotone map from raw citation counts to labels in [0, 7].
struct Normalizer {
  enum class Kind { Log2, MinMax };

  Kind kind = Kind::Log2;
  double max_count = 0.0;  ///< MinMax only: the count mapped to 7

  static constexpr double kTop = 7.0;

  [[nodiscard]] double operator()(double count) const {
    require(std::isfinite(count) && count >= 0.0, "Normalizer: count must be finite and nonnegative");
    double v = 0.0;
    if (kind == Kind::Log2) {
      v = std::log2(1.0 + count);
    } else if (max_count > 0.0) {
      v = kTop * count / max_count;
    }
    return std::clamp(v, 0.0, kTop);
  }

  [[nodiscard]] std::string name() const { return kind == Kind::Log2 ? "log2" : "minmax"; }

  static Kind parse(const std::string& name) {
    if (name == "log2") return Kind::Log2;
    if (name == "minmax") return Kind::MinMax;
    throw ValidationError("unknown normalization '" + name + "' (expected log2 or minmax)");
  }
};

}  // namespace iball
