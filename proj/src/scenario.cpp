#include "twpp/scenario.hpp"

#include <cmath>

namespace twpp {

RampShape ramp_from_string(const std::string& s) {
  if (s == "hold") return RampShape::Hold;
  if (s == "linear") return RampShape::Linear;
  if (s == "smoothstep") return RampShape::Smoothstep;
  throw ConfigError("unknown ramp shape '" + s + "' (hold|linear|smoothstep)");
}

const char* to_string(RampShape r) {
  switch (r) {
    case RampShape::Hold: return "hold";
    case RampShape::Linear: return "linear";
    case RampShape::Smoothstep: return "smoothstep";
  }
  return "?";
}

PotentialProtocol::PotentialProtocol(double sigma, std::vector<Stage> stages)
    : sigma_(sigma), stages_(std::move(stages)) {
  if (!(sigma_ > 0.0)) throw ConfigError("protocol: sigma must be positive");
  if (stages_.empty()) throw ConfigError("protocol: needs at least one stage");
  double t = 0.0;
  TrapCoeffs prev{stages_.front().a, stages_.front().b, stages_.front().eps};
  for (size_t i = 0; i < stages_.size(); ++i) {
    const Stage& s = stages_[i];
    if (!(s.duration > 0.0)) {
      throw ConfigError("protocol: stage durations must be positive");
    }
    if (s.ramp == RampShape::Hold) {
      // A hold must not jump: its targets have to match where the previous
      // stage ended.
      if (i > 0 && (std::abs(s.a - prev.a) > 1e-12 ||
                    std::abs(s.b - prev.b) > 1e-12 ||
                    std::abs(s.eps - prev.eps) > 1e-12)) {
        throw ConfigError("protocol: hold stage " + std::to_string(i) +
                          " breaks continuity; use a ramp to change the trap");
      }
    }
    starts_.push_back(t);
    t += s.duration;
    prev = {s.a, s.b, s.eps};
  }
  total_ = t;
}

PotentialProtocol PotentialProtocol::static_harmonic(double omega,
                                                     double duration) {
  Stage s;
  s.duration = duration;
  s.ramp = RampShape::Hold;
  s.a = omega * omega;
  return PotentialProtocol(0.8, {s});
}

TrapCoeffs PotentialProtocol::coeffs(double t) const {
  if (t < -1e-12 || t > total_ + 1e-12) {
    throw ConfigError("protocol: t=" + std::to_string(t) +
                      " outside span [0, " + std::to_string(total_) + "]");
  }
  t = std::clamp(t, 0.0, total_);
  size_t i = stages_.size() - 1;
  for (size_t s = 0; s < stages_.size(); ++s) {
    if (t < starts_[s] + stages_[s].duration) {
      i = s;
      break;
    }
  }
  const Stage& st = stages_[i];
  TrapCoeffs from = i == 0 ? TrapCoeffs{st.a, st.b, st.eps}
                           : TrapCoeffs{stages_[i - 1].a, stages_[i - 1].b,
                                        stages_[i - 1].eps};
  double u = std::clamp((t - starts_[i]) / st.duration, 0.0, 1.0);
  double w = 1.0;
  switch (st.ramp) {
    case RampShape::Hold: w = 1.0; break;
    case RampShape::Linear: w = u; break;
    case RampShape::Smoothstep: w = u * u * (3.0 - 2.0 * u); break;
  }
  TrapCoeffs c;
  c.a = from.a + w * (st.a - from.a);
  c.b = from.b + w * (st.b - from.b);
  c.eps = from.eps + w * (st.eps - from.eps);
  return c;
}

std::vector<double> PotentialProtocol::sample(const Grid& grid,
                                              double t) const {
  TrapCoeffs c = coeffs(t);
  const double inv2s2 = 1.0 / (2.0 * sigma_ * sigma_);
  std::vector<double> v(grid.n_points);
  for (size_t i = 0; i < grid.n_points; ++i) {
    double x = grid.x[i];
    v[i] = 0.5 * c.a * x * x + c.b * std::exp(-x * x * inv2s2) + c.eps * x;
  }
  return v;
}

bool PotentialProtocol::time_dependent() const {
  const Stage& s0 = stages_.front();
  for (const Stage& s : stages_) {
    if (std::abs(s.a - s0.a) > 1e-15 || std::abs(s.b - s0.b) > 1e-15 ||
        std::abs(s.eps - s0.eps) > 1e-15) {
      return true;
    }
  }
  return false;
}

double sigma_from_half_separation(double q, double b, double a) {
  if (!(q > 0.0) || !(b > 0.0) || !(a > 0.0)) {
    throw ConfigError("half_separation: q, b, a must be positive");
  }
  auto minima_sq = [&](double sigma) {
    double arg = b / (a * sigma * sigma);
    if (arg <= 1.0) return -1.0;  // no double-well minima at this width
    return 2.0 * sigma * sigma * std::log(arg);
  };
  // q^2(sigma) rises to its peak at sigma^2 = b/(a e); bisect on the
  // narrow-barrier branch.
  double lo = 1e-4, hi = std::sqrt(b / (a * std::exp(1.0)));
  double flo = minima_sq(lo) - q * q;
  double fhi = minima_sq(hi) - q * q;
  if (flo * fhi > 0.0) {
    throw ConfigError("half_separation: no Gaussian width places minima at q=" +
                      std::to_string(q) + " for barrier b=" + std::to_string(b));
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double f = minima_sq(mid) - q * q;
    if (f * flo <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
      flo = f;
    }
  }
  return 0.5 * (lo + hi);
}

OneBodyMatrix single_particle_one_body(const Grid& grid,
                                       const ModeBasis& basis,
                                       const PotentialProtocol& protocol,
                                       double dt, double t_final) {
  const size_t n = basis.n_modes;
  auto steps = size_t(std::llround(t_final / dt));
  if (std::abs(double(steps) * dt - t_final) > 1e-9) {
    throw ConfigError("single_particle_one_body: dt does not divide t_final");
  }

  std::vector<double> fx2(grid.n_points), fg(grid.n_points), fx(grid.n_points);
  const double inv2s2 = 1.0 / (2.0 * protocol.sigma() * protocol.sigma());
  for (size_t i = 0; i < grid.n_points; ++i) {
    double x = grid.x[i];
    fx2[i] = 0.5 * x * x;
    fg[i] = std::exp(-x * x * inv2s2);
    fx[i] = x;
  }
  auto kin = kinetic_matrix(basis, grid);
  auto q2 = project_potential(basis, fx2);
  auto qg = project_potential(basis, fg);
  auto q1 = project_potential(basis, fx);

  const long ln = static_cast<long>(n);
  Eigen::VectorXcd c = Eigen::VectorXcd::Zero(ln);
  c(0) = 1.0;
  Eigen::MatrixXcd h(ln, ln);
  for (size_t s = 0; s < steps; ++s) {
    TrapCoeffs tc = protocol.coeffs(double(s) * dt);
    for (size_t k = 0; k < n; ++k) {
      for (size_t l = 0; l < n; ++l) {
        h(long(k), long(l)) = kin[k * n + l] + tc.a * q2[k * n + l] +
                              tc.b * qg[k * n + l] + tc.eps * q1[k * n + l];
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(h);
    if (eig.info() != Eigen::Success) {
      throw NumericError("single_particle_one_body: eigensolver failed");
    }
    Eigen::VectorXcd phases(ln);
    for (size_t k = 0; k < n; ++k) {
      phases(long(k)) = std::exp(cplx{0.0, -dt * eig.eigenvalues()(long(k))});
    }
    c = eig.eigenvectors() *
        (phases.asDiagonal() * (eig.eigenvectors().adjoint() * c));
  }

  OneBodyMatrix out;
  // <c_j^dag c_k> for the pure state: conj(c_j) c_k
  out.values = c.conjugate() * c.transpose();
  out.errors = Eigen::MatrixXd::Zero(ln, ln);
  out.time = t_final;
  return out;
}

ExcitationReport excitation_probability(const OneBodyMatrix& one_body,
                                        const ModeBasis& evolution_basis,
                                        const ModeBasis& final_basis) {
  const size_t ne = evolution_basis.n_modes;
  const size_t nf = final_basis.n_modes;
  if (evolution_basis.n_points != final_basis.n_points ||
      std::abs(evolution_basis.dx - final_basis.dx) > 1e-15) {
    throw ConfigError("excitation_probability: bases live on different grids");
  }
  if (size_t(one_body.values.rows()) != ne) {
    throw ConfigError("excitation_probability: one-body matrix dimension mismatch");
  }

  Eigen::MatrixXd U(nf, ne);
  for (size_t k = 0; k < nf; ++k) {
    for (size_t j = 0; j < ne; ++j) {
      double acc = 0.0;
      for (size_t i = 0; i < final_basis.n_points; ++i) {
        acc += final_basis.modes[k][i] * evolution_basis.modes[j][i];
      }
      U(long(k), long(j)) = acc * final_basis.dx;
    }
  }
  for (size_t k = 0; k < nf; ++k) {
    double row = U.row(long(k)).squaredNorm();
    if (std::abs(row - 1.0) > 1e-3) {
      throw ConfigError(
          "excitation_probability: final mode " + std::to_string(k) +
          " not resolved by the evolution basis (completeness defect " +
          std::to_string(std::abs(row - 1.0)) + "); raise n_modes");
    }
  }

  Eigen::MatrixXcd rot = U.cast<cplx>() * one_body.values *
                         U.cast<cplx>().adjoint();

  ExcitationReport rep;
  rep.populations.resize(nf);
  rep.errors.resize(nf);
  double total = 0.0, total_var = 0.0;
  double excited = 0.0, excited_var = 0.0;
  for (size_t k = 0; k < nf; ++k) {
    rep.populations[k] = rot(long(k), long(k)).real();
    double var = 0.0;
    for (size_t j = 0; j < ne; ++j) {
      for (size_t l = 0; l < ne; ++l) {
        double w = U(long(k), long(j)) * U(long(k), long(l));
        var += w * w * one_body.errors(long(j), long(l)) *
               one_body.errors(long(j), long(l));
      }
    }
    rep.errors[k] = std::sqrt(var);
    total += rep.populations[k];
    total_var += var;
    if (k >= final_basis.n_condensate) {
      excited += rep.populations[k];
      excited_var += var;
    }
  }
  rep.total_number = total;
  if (total > 0.0) {
    rep.p_excited = excited / total;
    // Ratio propagation, treating the condensate and excited sums as the
    // independent pieces.
    double cond_var = total_var - excited_var;
    double cond = total - excited;
    double d_exc = cond / (total * total);
    double d_cond = -excited / (total * total);
    rep.p_excited_se = std::sqrt(d_exc * d_exc * excited_var +
                                 d_cond * d_cond * std::max(cond_var, 0.0));
  }
  return rep;
}

}  // namespace twpp
