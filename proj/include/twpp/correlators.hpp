#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <vector>

#include "twpp/dynamics.hpp"
#include "twpp/lattice.hpp"

namespace twpp {

// A registered stochastic moment: the product of alpha^+ factors
// (plus_modes) and alpha factors (modes) evaluated at one observation time.
struct MomentKey {
  uint32_t time_index = 0;
  std::vector<uint32_t> plus_modes;  // sorted
  std::vector<uint32_t> modes;       // sorted
  auto operator<=>(const MomentKey&) const = default;

  static MomentKey pair(uint32_t t, uint32_t j_plus, uint32_t k) {
    return {t, {j_plus}, {k}};
  }
};

struct MomentStat {
  cplx mean{0.0, 0.0};
  double se = 0.0;
  size_t count = 0;
};

// Streaming moment sums over trajectories. Mergeable: merging partial
// accumulators is exact on sums, so any partition of the ensemble gives the
// same result when merged in a fixed order.
class EnsembleAccumulator {
public:
  EnsembleAccumulator() = default;
  EnsembleAccumulator(size_t n_modes, size_t n_times);

  void register_moment(const MomentKey& key);
  void register_mode_pairs(uint32_t time_index);     // all <a_j^+ a_k>
  void register_mode_quartics(uint32_t time_index);  // all 2+2 products
  bool has(const MomentKey& key) const { return sums_.count(key) > 0; }

  void accumulate(const TrajectoryResult& traj);
  void merge(const EnsembleAccumulator& other);

  MomentStat stat(const MomentKey& key) const;
  size_t count() const { return count_; }
  size_t diverged() const { return diverged_; }
  size_t n_registered() const { return sums_.size(); }

private:
  struct Sums {
    cplx sum{0.0, 0.0};
    double sum_sq = 0.0;
  };
  size_t n_modes_ = 0;
  size_t n_times_ = 0;
  size_t count_ = 0;
  size_t diverged_ = 0;
  std::map<MomentKey, Sums> sums_;
};

// Linear combination of stochastic moments plus a constant; the shape every
// normally-ordered observable takes after the ordering conversion.
struct LinearCombo {
  std::map<MomentKey, cplx> terms;
  cplx constant{0.0, 0.0};

  void add(const MomentKey& key, cplx coeff);
  std::vector<MomentKey> keys() const;
};

// Expands the normally-ordered expectation <prod c^dag prod c> into
// stochastic moments. Condensate factors are symmetrically ordered in the
// Wigner sector, so their contribution is inverted recursively through the
// symmetric-product expansion; non-condensate (positive-P) factors map
// one-to-one.
LinearCombo normal_expectation(size_t n_condensate, uint32_t time_index,
                               const std::vector<uint32_t>& creators,
                               const std::vector<uint32_t>& annihilators);

struct ComboStat {
  cplx value{0.0, 0.0};
  double se = 0.0;
};

// Plug-in mean and standard error; moment errors are combined in quadrature
// (cross-moment covariances are not tracked).
ComboStat eval_combo(const EnsembleAccumulator& acc, const LinearCombo& combo);

enum class Ordering : uint8_t { SymmetricRaw, NormalCorrected };

struct CorrelationResult {
  std::vector<std::array<double, 2>> coords;
  std::vector<cplx> values;
  std::vector<double> errors;
  Ordering ordering = Ordering::NormalCorrected;
  size_t n_used = 0;
  size_t diverged_excluded = 0;
  double time = 0.0;
};

// G1(r; s) at one observation time for a list of grid-index pairs.
CorrelationResult g1(const EnsembleAccumulator& acc, const ModeBasis& basis,
                     const std::vector<std::pair<size_t, size_t>>& index_pairs,
                     uint32_t time_index,
                     Ordering ordering = Ordering::NormalCorrected);

// Normally ordered G2(r1, r2; r2, r1) for grid-index pairs.
CorrelationResult g2(const EnsembleAccumulator& acc, const ModeBasis& basis,
                     const std::vector<std::pair<size_t, size_t>>& index_pairs,
                     uint32_t time_index);

struct OneBodyMatrix {
  Eigen::MatrixXcd values;  // <c_j^dag c_k>
  Eigen::MatrixXd errors;
  size_t n_used = 0;
  size_t diverged_excluded = 0;
  double time = 0.0;

  cplx trace() const { return values.trace(); }
  // Occupations of the natural orbitals, descending: fragmentation
  // diagnostic.
  std::vector<double> natural_occupations() const;
};

OneBodyMatrix one_body_density_matrix(const EnsembleAccumulator& acc,
                                      size_t n_modes, size_t n_condensate,
                                      uint32_t time_index);

struct Visibility {
  double value = 0.0;
  double se = 0.0;
};

// (max - min) / (max + min) of Re G1(r, r) over the grid-index window.
Visibility visibility(const CorrelationResult& g1_diagonal, size_t window_begin,
                      size_t window_end);

// Registers every moment a set of combos needs.
void register_combo(EnsembleAccumulator& acc, const LinearCombo& combo);

}  // namespace twpp
