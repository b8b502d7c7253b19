#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gmc {

/// Shapes of the arguments disagree (dimension mismatch, n > D, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A Gram matrix or Cholesky factor lost positive definiteness.
class SingularError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value encountered. Carries the offending example when known.
class NumericalError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericalError(const std::string& what, std::size_t example = npos)
      : std::runtime_error(what), example_(example) {}

  std::size_t example() const { return example_; }

 private:
  std::size_t example_;
};

/// Invalid user configuration; message lists the offending keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gmc
