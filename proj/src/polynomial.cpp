#include "twpp/polynomial.hpp"

#include <algorithm>
#include <sstream>

namespace twpp {

void MultiIndex::raise(uint32_t v, uint32_t by) {
  if (by == 0) return;
  auto it = std::lower_bound(
      factors_.begin(), factors_.end(), v,
      [](const auto& f, uint32_t w) { return f.first < w; });
  if (it != factors_.end() && it->first == v) {
    it->second += by;
  } else {
    factors_.insert(it, {v, by});
  }
}

void MultiIndex::lower(uint32_t v) {
  auto it = std::lower_bound(
      factors_.begin(), factors_.end(), v,
      [](const auto& f, uint32_t w) { return f.first < w; });
  if (it == factors_.end() || it->first != v || it->second == 0) {
    throw InternalError("MultiIndex::lower on absent variable");
  }
  if (--it->second == 0) factors_.erase(it);
}

uint32_t MultiIndex::exponent(uint32_t v) const {
  for (const auto& [var, exp] : factors_) {
    if (var == v) return exp;
  }
  return 0;
}

uint32_t MultiIndex::degree() const {
  uint32_t d = 0;
  for (const auto& [var, exp] : factors_) d += exp;
  return d;
}

cplx MultiIndex::eval(std::span<const cplx> values) const {
  cplx acc{1.0, 0.0};
  for (const auto& [var, exp] : factors_) {
    cplx v = values[var];
    for (uint32_t i = 0; i < exp; ++i) acc *= v;
  }
  return acc;
}

bool MultiIndex::operator<(const MultiIndex& o) const {
  return factors_ < o.factors_;
}

std::string MultiIndex::str(const std::string& prefix) const {
  std::ostringstream os;
  bool first = true;
  for (const auto& [var, exp] : factors_) {
    if (!first) os << "*";
    first = false;
    os << prefix << var;
    if (exp > 1) os << "^" << exp;
  }
  if (first) os << "1";
  return os.str();
}

Poly::Poly(cplx constant) {
  if (std::abs(constant) > 0.0) terms_[MultiIndex{}] = constant;
}

Poly Poly::variable(uint32_t v) {
  Poly p;
  p.terms_[MultiIndex::var(v)] = cplx{1.0, 0.0};
  return p;
}

void Poly::add_term(const MultiIndex& mono, cplx coeff) {
  auto [it, inserted] = terms_.try_emplace(mono, coeff);
  if (!inserted) {
    it->second += coeff;
    if (std::abs(it->second) < kMergeTol) terms_.erase(it);
  }
}

Poly& Poly::operator+=(const Poly& o) {
  for (const auto& [mono, c] : o.terms_) add_term(mono, c);
  return *this;
}

Poly& Poly::operator-=(const Poly& o) {
  for (const auto& [mono, c] : o.terms_) add_term(mono, -c);
  return *this;
}

Poly Poly::operator+(const Poly& o) const {
  Poly r = *this;
  r += o;
  return r;
}

Poly Poly::operator-(const Poly& o) const {
  Poly r = *this;
  r -= o;
  return r;
}

Poly Poly::operator*(const Poly& o) const {
  Poly r;
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : o.terms_) {
      MultiIndex m = ma;
      for (const auto& [var, exp] : mb.factors()) m.raise(var, exp);
      r.add_term(m, ca * cb);
    }
  }
  return r;
}

Poly Poly::operator*(cplx scale) const {
  Poly r;
  if (std::abs(scale) < kMergeTol) return r;
  for (const auto& [mono, c] : terms_) r.terms_[mono] = c * scale;
  return r;
}

void Poly::prune(double tol) {
  for (auto it = terms_.begin(); it != terms_.end();) {
    if (std::abs(it->second) < tol) {
      it = terms_.erase(it);
    } else {
      ++it;
    }
  }
}

bool Poly::is_zero(double tol) const {
  for (const auto& [mono, c] : terms_) {
    if (std::abs(c) >= tol) return false;
  }
  return true;
}

uint32_t Poly::degree() const {
  uint32_t d = 0;
  for (const auto& [mono, c] : terms_) d = std::max(d, mono.degree());
  return d;
}

double Poly::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(c));
  return m;
}

cplx Poly::eval(std::span<const cplx> values) const {
  cplx acc{0.0, 0.0};
  for (const auto& [mono, c] : terms_) acc += c * mono.eval(values);
  return acc;
}

Poly Poly::derivative(uint32_t v) const {
  Poly r;
  for (const auto& [mono, c] : terms_) {
    uint32_t e = mono.exponent(v);
    if (e == 0) continue;
    MultiIndex m = mono;
    m.lower(v);
    r.add_term(m, c * double(e));
  }
  return r;
}

std::string Poly::str(const std::string& prefix) const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [mono, c] : terms_) {
    if (!first) os << " + ";
    first = false;
    os << "(" << c.real() << (c.imag() < 0 ? "-" : "+")
       << std::abs(c.imag()) << "i)*" << mono.str(prefix);
  }
  return os.str();
}

CompiledPoly::CompiledPoly(const Poly& p) {
  terms_.reserve(p.n_terms());
  for (const auto& [mono, c] : p.terms()) {
    Term t;
    t.coeff = c;
    for (const auto& [var, exp] : mono.factors()) {
      for (uint32_t i = 0; i < exp; ++i) {
        if (t.n_vars >= 4) {
          throw InternalError("CompiledPoly supports degree <= 4, got " +
                              mono.str());
        }
        t.vars[t.n_vars++] = var;
      }
    }
    terms_.push_back(t);
  }
}

}  // namespace twpp
