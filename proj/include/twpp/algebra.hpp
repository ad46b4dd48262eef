#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "twpp/common.hpp"

namespace twpp {

enum class OpKind : uint8_t { Create, Annihilate };
enum class Side : uint8_t { LeftOfRho, RightOfRho };

// Classification of a Hamiltonian monomial after the condensate /
// non-condensate split: pure-condensate, pure-non-condensate, or an
// interaction term counted by how many condensate indices it carries.
enum class HamClass : uint8_t { HC, HNC, VLinear, VQuadratic, VCubic };

struct OperatorFactor {
  uint32_t mode;
  OpKind kind;
  bool operator==(const OperatorFactor&) const = default;
};

// One monomial of the Hamiltonian in mode operators, in written order.
// When the engine forms [H, rho]/(i hbar) each term is instantiated twice,
// once acting on each side of rho, with opposite signs.
struct OperatorTerm {
  cplx coeff;
  std::vector<OperatorFactor> factors;
  HamClass cls = HamClass::HC;
};

const char* to_string(HamClass c);

// --- Normal-ordering calculus on mode operators -------------------------
//
// A NormalMonomial is c_{k1}^dag ... c_{kp}^dag c_{l1} ... c_{lq} with both
// index lists sorted. Expressions are sparse maps monomial -> coefficient.

struct NormalMonomial {
  std::vector<uint32_t> creators;      // sorted
  std::vector<uint32_t> annihilators;  // sorted
  bool operator==(const NormalMonomial&) const = default;
  auto operator<=>(const NormalMonomial&) const = default;
};

using OperatorExpr = std::map<NormalMonomial, cplx>;

// Rewrites an arbitrary product of mode operators into normal order using
// [c_i, c_j^dag] = delta_ij.
OperatorExpr normal_order(const std::vector<OperatorFactor>& factors,
                          cplx coeff = cplx{1.0, 0.0});

// Symmetrically ordered product: the average over all permutations of the
// factors, expressed in the normal-ordered basis. Factor counts above 4 are
// rejected (cost grows as n!).
OperatorExpr symmetric_product(const std::vector<OperatorFactor>& factors);

void expr_add(OperatorExpr& target, const OperatorExpr& other,
              cplx scale = cplx{1.0, 0.0});

}  // namespace twpp
