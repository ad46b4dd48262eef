#include "twpp/algebra.hpp"

#include <algorithm>
#include <numeric>

namespace twpp {

const char* to_string(HamClass c) {
  switch (c) {
    case HamClass::HC: return "H_C";
    case HamClass::HNC: return "H_NC";
    case HamClass::VLinear: return "V_linear";
    case HamClass::VQuadratic: return "V_quadratic";
    case HamClass::VCubic: return "V_cubic";
  }
  return "?";
}

void expr_add(OperatorExpr& target, const OperatorExpr& other, cplx scale) {
  for (const auto& [mono, c] : other) {
    auto [it, inserted] = target.try_emplace(mono, c * scale);
    if (!inserted) {
      it->second += c * scale;
      if (std::abs(it->second) < kMergeTol) target.erase(it);
    }
  }
}

namespace {

// Recursive bubble toward normal order: find an annihilator immediately
// left of a creator, apply c a^dag = a^dag c + delta.
void normal_order_rec(std::vector<OperatorFactor>& factors, cplx coeff,
                      OperatorExpr& out) {
  for (size_t i = 0; i + 1 < factors.size(); ++i) {
    if (factors[i].kind == OpKind::Annihilate &&
        factors[i + 1].kind == OpKind::Create) {
      std::vector<OperatorFactor> swapped = factors;
      std::swap(swapped[i], swapped[i + 1]);
      normal_order_rec(swapped, coeff, out);
      if (factors[i].mode == factors[i + 1].mode) {
        std::vector<OperatorFactor> contracted;
        contracted.reserve(factors.size() - 2);
        contracted.insert(contracted.end(), factors.begin(),
                          factors.begin() + i);
        contracted.insert(contracted.end(), factors.begin() + i + 2,
                          factors.end());
        normal_order_rec(contracted, coeff, out);
      }
      return;
    }
  }
  NormalMonomial mono;
  for (const auto& f : factors) {
    (f.kind == OpKind::Create ? mono.creators : mono.annihilators)
        .push_back(f.mode);
  }
  std::sort(mono.creators.begin(), mono.creators.end());
  std::sort(mono.annihilators.begin(), mono.annihilators.end());
  auto [it, inserted] = out.try_emplace(mono, coeff);
  if (!inserted) {
    it->second += coeff;
    if (std::abs(it->second) < kMergeTol) out.erase(it);
  }
}

}  // namespace

OperatorExpr normal_order(const std::vector<OperatorFactor>& factors,
                          cplx coeff) {
  OperatorExpr out;
  std::vector<OperatorFactor> work = factors;
  normal_order_rec(work, coeff, out);
  return out;
}

OperatorExpr symmetric_product(const std::vector<OperatorFactor>& factors) {
  if (factors.size() > 4) {
    throw ConfigError("symmetric_product limited to 4 factors");
  }
  OperatorExpr out;
  std::vector<size_t> perm(factors.size());
  std::iota(perm.begin(), perm.end(), 0);
  size_t count = 0;
  do {
    std::vector<OperatorFactor> arranged(factors.size());
    for (size_t i = 0; i < perm.size(); ++i) arranged[i] = factors[perm[i]];
    expr_add(out, normal_order(arranged));
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  OperatorExpr scaled;
  expr_add(scaled, out, cplx{1.0 / double(count), 0.0});
  return scaled;
}

}  // namespace twpp
