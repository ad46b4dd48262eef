#include "twpp/correlators.hpp"

#include "twpp/algebra.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace twpp {

namespace {

std::string key_str(const MomentKey& k) {
  std::ostringstream os;
  os << "t[" << k.time_index << "]";
  for (uint32_t m : k.plus_modes) os << " a" << m << "+";
  for (uint32_t m : k.modes) os << " a" << m;
  return os.str();
}

}  // namespace

EnsembleAccumulator::EnsembleAccumulator(size_t n_modes, size_t n_times)
    : n_modes_(n_modes), n_times_(n_times) {}

void EnsembleAccumulator::register_moment(const MomentKey& key) {
  if (key.time_index >= n_times_) {
    throw ConfigError("moment references unknown observation time: " +
                      key_str(key));
  }
  for (uint32_t m : key.plus_modes) {
    if (m >= n_modes_) {
      throw ConfigError("moment references unknown mode: " + key_str(key));
    }
  }
  for (uint32_t m : key.modes) {
    if (m >= n_modes_) {
      throw ConfigError("moment references unknown mode: " + key_str(key));
    }
  }
  sums_.try_emplace(key);
}

void EnsembleAccumulator::register_mode_pairs(uint32_t time_index) {
  for (uint32_t j = 0; j < n_modes_; ++j) {
    for (uint32_t k = 0; k < n_modes_; ++k) {
      register_moment(MomentKey::pair(time_index, j, k));
    }
  }
}

void EnsembleAccumulator::register_mode_quartics(uint32_t time_index) {
  for (uint32_t i = 0; i < n_modes_; ++i) {
    for (uint32_t j = i; j < n_modes_; ++j) {
      for (uint32_t k = 0; k < n_modes_; ++k) {
        for (uint32_t l = k; l < n_modes_; ++l) {
          register_moment({time_index, {i, j}, {k, l}});
        }
      }
    }
  }
}

void EnsembleAccumulator::accumulate(const TrajectoryResult& traj) {
  if (traj.status == TrajectoryStatus::Diverged) {
    ++diverged_;
    return;
  }
  if (traj.samples.size() != n_times_) {
    throw ConfigError("accumulate: trajectory has wrong observation count");
  }
  for (auto& [key, sums] : sums_) {
    const PhasePoint& p = traj.samples[key.time_index];
    const size_t n = p.n_modes();
    cplx val{1.0, 0.0};
    for (uint32_t m : key.plus_modes) val *= p.alpha[n + m];
    for (uint32_t m : key.modes) val *= p.alpha[m];
    sums.sum += val;
    sums.sum_sq += std::norm(val);
  }
  ++count_;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  if (other.sums_.size() != sums_.size() || other.n_modes_ != n_modes_ ||
      other.n_times_ != n_times_) {
    throw ConfigError("merge: accumulators have different registries");
  }
  auto it = sums_.begin();
  for (const auto& [key, osums] : other.sums_) {
    if (it->first != key) {
      throw ConfigError("merge: accumulators have different registries");
    }
    it->second.sum += osums.sum;
    it->second.sum_sq += osums.sum_sq;
    ++it;
  }
  count_ += other.count_;
  diverged_ += other.diverged_;
}

MomentStat EnsembleAccumulator::stat(const MomentKey& key) const {
  auto it = sums_.find(key);
  if (it == sums_.end()) {
    throw ConfigError("moment not registered: " + key_str(key));
  }
  MomentStat s;
  s.count = count_;
  if (count_ == 0) return s;
  s.mean = it->second.sum / double(count_);
  double var = it->second.sum_sq / double(count_) - std::norm(s.mean);
  s.se = var > 0.0 ? std::sqrt(var / double(count_)) : 0.0;
  return s;
}

void LinearCombo::add(const MomentKey& key, cplx coeff) {
  if (key.plus_modes.empty() && key.modes.empty()) {
    constant += coeff;
    return;
  }
  auto [it, inserted] = terms.try_emplace(key, coeff);
  if (!inserted) {
    it->second += coeff;
    if (std::abs(it->second) < kMergeTol) terms.erase(it);
  }
}

std::vector<MomentKey> LinearCombo::keys() const {
  std::vector<MomentKey> out;
  out.reserve(terms.size());
  for (const auto& [k, c] : terms) out.push_back(k);
  return out;
}

namespace {

// Recursively inverts the symmetric-ordering expansion for the condensate
// factors. `creators`/`annihilators` are full mode lists (condensate and
// non-condensate mixed).
void normal_expectation_rec(size_t n_condensate, uint32_t time_index,
                            const std::vector<uint32_t>& creators,
                            const std::vector<uint32_t>& annihilators,
                            cplx weight, LinearCombo& out) {
  std::vector<OperatorFactor> cond;
  MomentKey key;
  key.time_index = time_index;
  for (uint32_t m : creators) {
    if (m < n_condensate) cond.push_back({m, OpKind::Create});
    key.plus_modes.push_back(m);
  }
  for (uint32_t m : annihilators) {
    if (m < n_condensate) cond.push_back({m, OpKind::Annihilate});
    key.modes.push_back(m);
  }
  std::sort(key.plus_modes.begin(), key.plus_modes.end());
  std::sort(key.modes.begin(), key.modes.end());

  // The stochastic average of the matching phase-variable product equals the
  // quantum average with condensate factors symmetrized.
  out.add(key, weight);

  if (cond.size() < 2) return;  // no ordering corrections possible

  OperatorExpr sym = symmetric_product(cond);
  // Identify the top (fully retained) monomial: the original factors.
  NormalMonomial top;
  for (const auto& f : cond) {
    (f.kind == OpKind::Create ? top.creators : top.annihilators)
        .push_back(f.mode);
  }
  std::sort(top.creators.begin(), top.creators.end());
  std::sort(top.annihilators.begin(), top.annihilators.end());

  for (const auto& [mono, coeff] : sym) {
    if (mono == top) continue;
    // <top . NC> = E_stoch - sum_lower coeff * <lower . NC>, recursively.
    std::vector<uint32_t> cr, an;
    for (uint32_t m : creators) {
      if (m >= n_condensate) cr.push_back(m);
    }
    for (uint32_t m : annihilators) {
      if (m >= n_condensate) an.push_back(m);
    }
    cr.insert(cr.end(), mono.creators.begin(), mono.creators.end());
    an.insert(an.end(), mono.annihilators.begin(), mono.annihilators.end());
    normal_expectation_rec(n_condensate, time_index, cr, an, -weight * coeff,
                           out);
  }
}

}  // namespace

LinearCombo normal_expectation(size_t n_condensate, uint32_t time_index,
                               const std::vector<uint32_t>& creators,
                               const std::vector<uint32_t>& annihilators) {
  LinearCombo combo;
  normal_expectation_rec(n_condensate, time_index, creators, annihilators,
                         cplx{1.0, 0.0}, combo);
  return combo;
}

ComboStat eval_combo(const EnsembleAccumulator& acc, const LinearCombo& combo) {
  ComboStat out;
  out.value = combo.constant;
  double var = 0.0;
  for (const auto& [key, coeff] : combo.terms) {
    MomentStat s = acc.stat(key);
    out.value += coeff * s.mean;
    var += std::norm(coeff) * s.se * s.se;
  }
  out.se = std::sqrt(var);
  return out;
}

void register_combo(EnsembleAccumulator& acc, const LinearCombo& combo) {
  for (const auto& [key, coeff] : combo.terms) acc.register_moment(key);
}

CorrelationResult g1(const EnsembleAccumulator& acc, const ModeBasis& basis,
                     const std::vector<std::pair<size_t, size_t>>& index_pairs,
                     uint32_t time_index, Ordering ordering) {
  const size_t n = basis.n_modes;
  CorrelationResult res;
  res.ordering = ordering;
  res.n_used = acc.count();
  res.diverged_excluded = acc.diverged();

  // Mode-space moments first; every position pair reuses them.
  Eigen::MatrixXcd M(n, n);
  Eigen::MatrixXd E(n, n);
  for (uint32_t j = 0; j < n; ++j) {
    for (uint32_t k = 0; k < n; ++k) {
      MomentStat s = acc.stat(MomentKey::pair(time_index, j, k));
      M(j, k) = s.mean;
      E(j, k) = s.se;
    }
  }
  if (ordering == Ordering::NormalCorrected) {
    for (uint32_t k = 0; k < basis.n_condensate; ++k) M(k, k) -= 0.5;
  }

  for (const auto& [ri, si] : index_pairs) {
    cplx val{0.0, 0.0};
    double var = 0.0;
    for (uint32_t j = 0; j < n; ++j) {
      for (uint32_t k = 0; k < n; ++k) {
        double w = basis.modes[j][ri] * basis.modes[k][si];
        val += w * M(j, k);
        var += w * w * E(j, k) * E(j, k);
      }
    }
    res.coords.push_back({basis.x_min + basis.dx * double(ri),
                          basis.x_min + basis.dx * double(si)});
    res.values.push_back(val);
    res.errors.push_back(std::sqrt(var));
  }
  return res;
}

CorrelationResult g2(const EnsembleAccumulator& acc, const ModeBasis& basis,
                     const std::vector<std::pair<size_t, size_t>>& index_pairs,
                     uint32_t time_index) {
  const size_t n = basis.n_modes;
  CorrelationResult res;
  res.n_used = acc.count();
  res.diverged_excluded = acc.diverged();

  // Cache the ordering conversion per mode quadruple.
  std::map<std::array<uint32_t, 4>, LinearCombo> combos;
  auto combo_for = [&](uint32_t i, uint32_t j, uint32_t k,
                       uint32_t l) -> const LinearCombo& {
    std::array<uint32_t, 4> idx{i, j, k, l};
    auto it = combos.find(idx);
    if (it == combos.end()) {
      it = combos
               .emplace(idx, normal_expectation(basis.n_condensate, time_index,
                                                {i, j}, {k, l}))
               .first;
    }
    return it->second;
  };

  for (const auto& [r1_req, r2_req] : index_pairs) {
    // Bosonic exchange symmetry is exact; canonicalize so that (r1, r2) and
    // (r2, r1) produce identical floating-point sums.
    const size_t r1 = std::min(r1_req, r2_req);
    const size_t r2 = std::max(r1_req, r2_req);
    cplx val{0.0, 0.0};
    double var = 0.0;
    for (uint32_t i = 0; i < n; ++i) {
      for (uint32_t j = 0; j < n; ++j) {
        for (uint32_t k = 0; k < n; ++k) {
          for (uint32_t l = 0; l < n; ++l) {
            double w = basis.modes[i][r1] * basis.modes[j][r2] *
                       basis.modes[k][r2] * basis.modes[l][r1];
            if (w == 0.0) continue;
            ComboStat s = eval_combo(acc, combo_for(i, j, k, l));
            val += w * s.value;
            var += w * w * s.se * s.se;
          }
        }
      }
    }
    res.coords.push_back({basis.x_min + basis.dx * double(r1_req),
                          basis.x_min + basis.dx * double(r2_req)});
    res.values.push_back(val);
    res.errors.push_back(std::sqrt(var));
  }
  return res;
}

OneBodyMatrix one_body_density_matrix(const EnsembleAccumulator& acc,
                                      size_t n_modes, size_t n_condensate,
                                      uint32_t time_index) {
  OneBodyMatrix out;
  out.values.resize(n_modes, n_modes);
  out.errors.resize(n_modes, n_modes);
  out.n_used = acc.count();
  out.diverged_excluded = acc.diverged();
  for (uint32_t j = 0; j < n_modes; ++j) {
    for (uint32_t k = 0; k < n_modes; ++k) {
      MomentStat s = acc.stat(MomentKey::pair(time_index, j, k));
      cplx v = s.mean;
      if (j == k && j < n_condensate) v -= 0.5;
      out.values(j, k) = v;
      out.errors(j, k) = s.se;
    }
  }
  return out;
}

std::vector<double> OneBodyMatrix::natural_occupations() const {
  Eigen::MatrixXcd herm = 0.5 * (values + values.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(herm);
  std::vector<double> occ(solver.eigenvalues().data(),
                          solver.eigenvalues().data() +
                              solver.eigenvalues().size());
  std::sort(occ.rbegin(), occ.rend());
  return occ;
}

Visibility visibility(const CorrelationResult& g1_diagonal,
                      size_t window_begin, size_t window_end) {
  if (window_begin >= window_end || window_end > g1_diagonal.values.size()) {
    throw ConfigError("visibility: empty or out-of-range window");
  }
  size_t imax = window_begin, imin = window_begin;
  for (size_t i = window_begin; i < window_end; ++i) {
    if (g1_diagonal.values[i].real() > g1_diagonal.values[imax].real()) {
      imax = i;
    }
    if (g1_diagonal.values[i].real() < g1_diagonal.values[imin].real()) {
      imin = i;
    }
  }
  double hi = g1_diagonal.values[imax].real();
  double lo = g1_diagonal.values[imin].real();
  double denom = hi + lo;
  if (!(denom > 0.0)) {
    throw NumericError("visibility: non-positive max + min, fringe undefined");
  }
  Visibility v;
  v.value = (hi - lo) / denom;
  // First-order propagation through (max - min)/(max + min).
  double dhi = 2.0 * lo / (denom * denom);
  double dlo = 2.0 * hi / (denom * denom);
  double ehi = g1_diagonal.errors[imax];
  double elo = g1_diagonal.errors[imin];
  v.se = std::sqrt(dhi * dhi * ehi * ehi + dlo * dlo * elo * elo);
  return v;
}

}  // namespace twpp
