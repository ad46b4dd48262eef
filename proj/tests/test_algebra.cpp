#include "doctest.h"

#include "twpp/algebra.hpp"
#include "twpp/ffpe.hpp"
#include "twpp/lattice.hpp"

using namespace twpp;

namespace {

cplx coeff_of(const OperatorExpr& e, std::vector<uint32_t> cr,
              std::vector<uint32_t> an) {
  NormalMonomial m{std::move(cr), std::move(an)};
  auto it = e.find(m);
  return it == e.end() ? cplx{0.0, 0.0} : it->second;
}

}  // namespace

TEST_CASE("normal ordering: c c^dag = c^dag c + 1") {
  OperatorExpr e = normal_order(
      {{0, OpKind::Annihilate}, {0, OpKind::Create}});
  CHECK(std::abs(coeff_of(e, {0}, {0}) - cplx{1.0, 0.0}) < 1e-14);
  CHECK(std::abs(coeff_of(e, {}, {}) - cplx{1.0, 0.0}) < 1e-14);
}

TEST_CASE("symmetric product of c^dag c is c^dag c + 1/2") {
  OperatorExpr e =
      symmetric_product({{0, OpKind::Create}, {0, OpKind::Annihilate}});
  CHECK(std::abs(coeff_of(e, {0}, {0}) - cplx{1.0, 0.0}) < 1e-14);
  CHECK(std::abs(coeff_of(e, {}, {}) - cplx{0.5, 0.0}) < 1e-14);
}

TEST_CASE("symmetric quartic: {c+ c+ c c}_s = c+2 c2 + 2 c+ c + 1/2") {
  OperatorExpr e = symmetric_product({{0, OpKind::Create},
                                      {0, OpKind::Create},
                                      {0, OpKind::Annihilate},
                                      {0, OpKind::Annihilate}});
  CHECK(std::abs(coeff_of(e, {0, 0}, {0, 0}) - cplx{1.0, 0.0}) < 1e-14);
  CHECK(std::abs(coeff_of(e, {0}, {0}) - cplx{2.0, 0.0}) < 1e-14);
  CHECK(std::abs(coeff_of(e, {}, {}) - cplx{0.5, 0.0}) < 1e-14);
}

TEST_CASE("distinct-mode factors commute: no corrections") {
  OperatorExpr e =
      symmetric_product({{0, OpKind::Create}, {1, OpKind::Annihilate}});
  CHECK(e.size() == 1);
  CHECK(std::abs(coeff_of(e, {0}, {1}) - cplx{1.0, 0.0}) < 1e-14);
}

namespace {

CouplingTensors tiny_tensors(size_t n, double g) {
  CouplingTensors t;
  t.n_modes = n;
  t.g_strength = g;
  t.h.assign(n * n, cplx{0.0, 0.0});
  t.g4.assign(n * n * n * n, 0.0);
  return t;
}

}  // namespace

TEST_CASE("expand_hamiltonian: diagonal quadratic form, two modes, g = 0") {
  CouplingTensors t = tiny_tensors(2, 0.0);
  t.h[0] = cplx{0.5, 0.0};
  t.h[3] = cplx{1.5, 0.0};
  auto terms = expand_hamiltonian(t, 2);
  REQUIRE(terms.size() == 2);
  for (const auto& term : terms) {
    CHECK(term.cls == HamClass::HC);
    CHECK(term.factors.size() == 2);
  }
}

TEST_CASE("expand_hamiltonian: V classification by condensate count") {
  CouplingTensors t = tiny_tensors(3, 1.0);
  // c_1+ c_1+ c_1 c_3 carries three condensate indices -> V_cubic
  t.g4[((0 * 3 + 0) * 3 + 0) * 3 + 2] = 0.25;
  auto terms = expand_hamiltonian(t, 2);
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].cls == HamClass::VCubic);
  CHECK(std::abs(terms[0].coeff - cplx{0.125, 0.0}) < 1e-15);  // g/2
}

TEST_CASE("expand_hamiltonian: term count bound and uniform g/2 weights") {
  CouplingTensors t = tiny_tensors(2, 1.0);
  for (double& g : t.g4) g = 0.3;
  auto terms = expand_hamiltonian(t, 2);
  CHECK(terms.size() == 16);  // n^4
  for (const auto& term : terms) {
    CHECK(std::abs(term.coeff - cplx{0.15, 0.0}) < 1e-15);
  }
}
