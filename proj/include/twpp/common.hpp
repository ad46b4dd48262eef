#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace twpp {

using cplx = std::complex<double>;

inline constexpr cplx I{0.0, 1.0};

// Coefficients below this magnitude are treated as exact zeros when merging
// symbolic terms.
inline constexpr double kMergeTol = 1e-14;

// Invalid user input: bad config values, dimension mismatches, schedule
// inconsistencies. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure at runtime: non-convergent eigensolve, factorization
// residual, norm drift. CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Internal invariant violated; indicates a bug, not bad input.
class InternalError : public std::logic_error {
public:
  explicit InternalError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace twpp
