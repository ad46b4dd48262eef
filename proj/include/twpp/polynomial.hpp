#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "twpp/common.hpp"

namespace twpp {

// Multi-index over phase-space variables, kept sorted by variable index.
// Doubles as a monomial (variable -> exponent) and as a derivative
// multi-index (variable -> order).
class MultiIndex {
public:
  MultiIndex() = default;

  static MultiIndex var(uint32_t v) {
    MultiIndex m;
    m.factors_.emplace_back(v, 1);
    return m;
  }

  void raise(uint32_t v, uint32_t by = 1);
  // Lowers the exponent of v by one; exponent must be positive.
  void lower(uint32_t v);

  uint32_t exponent(uint32_t v) const;
  uint32_t degree() const;
  bool empty() const { return factors_.empty(); }

  const std::vector<std::pair<uint32_t, uint32_t>>& factors() const {
    return factors_;
  }

  cplx eval(std::span<const cplx> values) const;

  bool operator==(const MultiIndex& o) const { return factors_ == o.factors_; }
  bool operator<(const MultiIndex& o) const;

  std::string str(const std::string& prefix = "v") const;

private:
  std::vector<std::pair<uint32_t, uint32_t>> factors_;
};

// Sparse polynomial with complex coefficients over phase-space variables.
class Poly {
public:
  Poly() = default;
  explicit Poly(cplx constant);
  static Poly variable(uint32_t v);

  Poly& operator+=(const Poly& o);
  Poly& operator-=(const Poly& o);
  Poly operator+(const Poly& o) const;
  Poly operator-(const Poly& o) const;
  Poly operator*(const Poly& o) const;
  Poly operator*(cplx scale) const;
  Poly operator-() const { return *this * cplx(-1.0); }

  void add_term(const MultiIndex& mono, cplx coeff);
  void prune(double tol = kMergeTol);

  bool is_zero(double tol = kMergeTol) const;
  size_t n_terms() const { return terms_.size(); }
  uint32_t degree() const;
  double max_abs_coeff() const;

  cplx eval(std::span<const cplx> values) const;
  Poly derivative(uint32_t v) const;

  const std::map<MultiIndex, cplx>& terms() const { return terms_; }

  std::string str(const std::string& prefix = "v") const;

private:
  std::map<MultiIndex, cplx> terms_;
};

// Flattened polynomial for the integration hot path: every monomial is an
// explicit product of at most four variable loads.
class CompiledPoly {
public:
  CompiledPoly() = default;
  explicit CompiledPoly(const Poly& p);

  cplx eval(const cplx* values) const {
    cplx acc{0.0, 0.0};
    for (const Term& t : terms_) {
      cplx m = t.coeff;
      for (uint32_t i = 0; i < t.n_vars; ++i) m *= values[t.vars[i]];
      acc += m;
    }
    return acc;
  }

  bool empty() const { return terms_.empty(); }

private:
  struct Term {
    cplx coeff;
    uint32_t n_vars = 0;
    uint32_t vars[4] = {0, 0, 0, 0};
  };
  std::vector<Term> terms_;
};

}  // namespace twpp
