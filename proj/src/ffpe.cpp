#include "twpp/ffpe.hpp"

#include "twpp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace twpp {

std::vector<DiffTerm> to_terms(const DiffTermMap& m) {
  std::vector<DiffTerm> out;
  out.reserve(m.size());
  for (const auto& [key, c] : m) {
    out.push_back({key.first, key.second, c});
  }
  return out;
}

std::vector<OperatorTerm> expand_hamiltonian(const CouplingTensors& tensors,
                                             size_t n_condensate) {
  if (n_condensate != 2) {
    throw ConfigError("expand_hamiltonian: condensate sector is fixed at 2 modes");
  }
  const size_t n = tensors.n_modes;
  if (tensors.h.size() != n * n) {
    throw ConfigError("expand_hamiltonian: h has wrong dimension");
  }
  const bool have_g = !tensors.g4.empty();
  if (have_g && tensors.g4.size() != n * n * n * n) {
    throw ConfigError("expand_hamiltonian: g4 has wrong dimension");
  }
  std::vector<OperatorTerm> terms;

  auto classify = [&](std::initializer_list<size_t> modes) {
    size_t cond = 0;
    for (size_t m : modes) cond += (m < n_condensate) ? 1 : 0;
    const size_t total = modes.size();
    if (cond == total) return HamClass::HC;
    if (cond == 0) return HamClass::HNC;
    if (cond == 1) return HamClass::VLinear;
    if (cond == 2) return HamClass::VQuadratic;
    return HamClass::VCubic;
  };

  for (size_t k = 0; k < n; ++k) {
    for (size_t l = 0; l < n; ++l) {
      cplx w = tensors.h_at(k, l);
      if (std::abs(w) < kMergeTol) continue;
      OperatorTerm t;
      t.coeff = w;
      t.factors = {{uint32_t(k), OpKind::Create}, {uint32_t(l), OpKind::Annihilate}};
      t.cls = classify({k, l});
      terms.push_back(std::move(t));
    }
  }
  for (size_t k = 0; have_g && k < n; ++k) {
    for (size_t l = 0; l < n; ++l) {
      for (size_t m = 0; m < n; ++m) {
        for (size_t q = 0; q < n; ++q) {
          double w = 0.5 * tensors.g_at(k, l, m, q);
          if (std::abs(w) < kMergeTol) continue;
          OperatorTerm t;
          t.coeff = cplx{w, 0.0};
          t.factors = {{uint32_t(k), OpKind::Create},
                       {uint32_t(l), OpKind::Create},
                       {uint32_t(m), OpKind::Annihilate},
                       {uint32_t(q), OpKind::Annihilate}};
          t.cls = classify({k, l, m, q});
          terms.push_back(std::move(t));
        }
      }
    }
  }
  return terms;
}

namespace {

struct RulePrim {
  bool is_deriv;
  uint32_t var;
  cplx coeff;
};

// The 8-rule correspondence table in mode form. Wigner modes carry the
// +-1/2 derivative companions, positive-P modes the Glauber-style ones.
std::vector<RulePrim> rule_for(const OperatorFactor& f, Side side,
                               Sector sector, size_t n_modes) {
  const uint32_t x = var_alpha(f.mode);
  const uint32_t y = var_alpha_plus(f.mode, n_modes);
  const bool left = side == Side::LeftOfRho;
  if (sector == Sector::Wigner) {
    if (f.kind == OpKind::Annihilate) {
      return {{false, x, 1.0}, {true, y, left ? 0.5 : -0.5}};
    }
    return {{false, y, 1.0}, {true, x, left ? -0.5 : 0.5}};
  }
  if (f.kind == OpKind::Annihilate) {
    if (left) return {{false, x, 1.0}};
    return {{false, x, 1.0}, {true, y, -1.0}};
  }
  if (left) return {{false, y, 1.0}, {true, x, -1.0}};
  return {{false, y, 1.0}};
}

void map_add(DiffTermMap& m, const MultiIndex& deriv, const MultiIndex& mono,
             cplx c) {
  auto [it, inserted] = m.try_emplace({deriv, mono}, c);
  if (!inserted) {
    it->second += c;
    if (std::abs(it->second) < kMergeTol) m.erase(it);
  }
}

// Applies one first-order operator (a sum of multiply / differentiate
// primitives) to the canonical term set. Multiplication has to commute
// past existing derivatives: x_v d^nu = d^nu x_v - nu_v d^(nu - e_v).
DiffTermMap apply_prims(const DiffTermMap& terms,
                        const std::vector<RulePrim>& prims) {
  DiffTermMap out;
  for (const auto& [key, c] : terms) {
    const auto& [deriv, mono] = key;
    for (const RulePrim& p : prims) {
      if (p.is_deriv) {
        MultiIndex d = deriv;
        d.raise(p.var);
        map_add(out, d, mono, c * p.coeff);
      } else {
        MultiIndex m = mono;
        m.raise(p.var);
        map_add(out, deriv, m, c * p.coeff);
        uint32_t nv = deriv.exponent(p.var);
        if (nv > 0) {
          MultiIndex d = deriv;
          d.lower(p.var);
          map_add(out, d, mono, -c * p.coeff * double(nv));
        }
      }
    }
  }
  return out;
}

}  // namespace

DiffTermMap rewrite_side(const std::vector<OperatorFactor>& factors,
                         cplx coeff, Side side,
                         const std::vector<Sector>& sectors) {
  for (const auto& f : factors) {
    if (f.mode >= sectors.size()) {
      throw ConfigError("rewrite_side: mode " + std::to_string(f.mode) +
                        " has no sector assignment");
    }
  }
  DiffTermMap acc;
  acc[{MultiIndex{}, MultiIndex{}}] = coeff;
  if (side == Side::LeftOfRho) {
    // Innermost rule comes from the factor adjacent to rho: the last one.
    for (auto it = factors.rbegin(); it != factors.rend(); ++it) {
      acc = apply_prims(acc, rule_for(*it, side, sectors[it->mode],
                                      sectors.size()));
    }
  } else {
    for (const auto& f : factors) {
      acc = apply_prims(acc, rule_for(f, side, sectors[f.mode],
                                      sectors.size()));
    }
  }
  return acc;
}

DiffTermMap apply_rules(const std::vector<OperatorTerm>& terms,
                        const std::vector<Sector>& sectors) {
  DiffTermMap total;
  for (const OperatorTerm& t : terms) {
    if (std::abs(t.coeff) < kMergeTol) continue;
    DiffTermMap left =
        rewrite_side(t.factors, t.coeff * cplx{0.0, -1.0}, Side::LeftOfRho,
                     sectors);
    DiffTermMap right =
        rewrite_side(t.factors, t.coeff * cplx{0.0, 1.0}, Side::RightOfRho,
                     sectors);
    for (const auto& [key, c] : left) map_add(total, key.first, key.second, c);
    for (const auto& [key, c] : right) map_add(total, key.first, key.second, c);
  }
  return total;
}

double TruncationReport::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& t : dropped) m = std::max(m, std::abs(t.coeff));
  return m;
}

TruncationResult truncate(const DiffTermMap& terms, uint32_t max_order) {
  TruncationResult res;
  for (const auto& [key, c] : terms) {
    if (key.first.degree() > max_order) {
      res.report.dropped.push_back({key.first, key.second, c});
    } else {
      res.kept.emplace(key, c);
    }
  }
  return res;
}

void SymPolyMatrix::add(uint32_t v, uint32_t w, const Poly& p) {
  if (p.is_zero()) return;
  if (v > w) std::swap(v, w);
  auto [it, inserted] = entries_.try_emplace({v, w}, p);
  if (!inserted) {
    it->second += p;
    if (it->second.is_zero()) entries_.erase(it);
  }
}

const Poly* SymPolyMatrix::find(uint32_t v, uint32_t w) const {
  if (v > w) std::swap(v, w);
  auto it = entries_.find({v, w});
  return it == entries_.end() ? nullptr : &it->second;
}

SdeSystem extract_sde(const DiffTermMap& terms, size_t n_modes,
                      TruncationReport report) {
  SdeSystem sde;
  sde.n_modes = n_modes;
  sde.n_vars = 2 * n_modes;
  sde.drift.assign(sde.n_vars, Poly{});
  sde.diffusion = SymPolyMatrix(sde.n_vars);
  sde.report = std::move(report);

  double scale = 0.0;
  for (const auto& [key, c] : terms) scale = std::max(scale, std::abs(c));

  for (const auto& [key, c] : terms) {
    const auto& [deriv, mono] = key;
    const uint32_t order = deriv.degree();
    if (order == 0) {
      // Trace conservation: zeroth-order terms must cancel in exact
      // arithmetic; anything surviving the merge is a bug.
      if (std::abs(c) > 1e-10 * std::max(scale, 1.0)) {
        throw InternalError("extract_sde: zeroth-order generator term " +
                            mono.str() + " survives with coefficient " +
                            std::to_string(std::abs(c)));
      }
      continue;
    }
    if (order > 2) {
      throw ConfigError("extract_sde: input not truncated to order 2");
    }
    Poly p;
    p.add_term(mono, c);
    if (order == 1) {
      uint32_t v = deriv.factors()[0].first;
      sde.drift[v] -= p;
    } else if (deriv.factors().size() == 2) {
      uint32_t v = deriv.factors()[0].first;
      uint32_t w = deriv.factors()[1].first;
      sde.diffusion.add(v, w, p);
    } else {
      uint32_t v = deriv.factors()[0].first;
      sde.diffusion.add(v, v, p * cplx{2.0, 0.0});
    }
  }

  for (auto& p : sde.drift) p.prune();
  sde.drift_fast.reserve(sde.n_vars);
  for (const auto& p : sde.drift) sde.drift_fast.emplace_back(p);
  sde.noise = build_noise_model(sde.diffusion);
  return sde;
}

SdeSystem derive_sde(const CouplingTensors& tensors, size_t n_condensate) {
  std::vector<Sector> sectors(tensors.n_modes, Sector::PositiveP);
  for (size_t k = 0; k < std::min(n_condensate, tensors.n_modes); ++k) {
    sectors[k] = Sector::Wigner;
  }
  auto terms = expand_hamiltonian(tensors, n_condensate);
  auto generator = apply_rules(terms, sectors);
  auto trunc = truncate(generator);
  return extract_sde(trunc.kept, tensors.n_modes, std::move(trunc.report));
}

NoiseModel build_noise_model(
    const SymPolyMatrix& D,
    const std::vector<std::pair<uint32_t, uint32_t>>& extra_support) {
  // Union-find over the combined support graph.
  std::map<uint32_t, uint32_t> parent;
  std::function<uint32_t(uint32_t)> find = [&](uint32_t v) {
    auto it = parent.find(v);
    if (it == parent.end()) {
      parent[v] = v;
      return v;
    }
    if (it->second != v) it->second = find(it->second);
    return it->second;
  };
  auto unite = [&](uint32_t a, uint32_t b) { parent[find(a)] = find(b); };

  for (const auto& [key, p] : D.entries()) unite(key.first, key.second);
  for (const auto& [a, b] : extra_support) unite(a, b);

  std::map<uint32_t, std::vector<uint32_t>> groups;
  for (const auto& [v, _] : parent) groups[find(v)].push_back(v);

  NoiseModel model;
  for (auto& [root, vars] : groups) {
    std::sort(vars.begin(), vars.end());
    NoiseModel::Block blk;
    blk.vars = vars;
    blk.channel_base = uint32_t(model.n_channels_);
    const size_t m = vars.size();
    blk.scalar = (m == 1);
    blk.entries.resize(m * m);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < m; ++j) {
        const Poly* p = D.find(vars[i], vars[j]);
        blk.entries[i * m + j] = CompiledPoly(p ? *p : Poly{});
      }
    }
    model.n_channels_ += m;
    model.blocks_.push_back(std::move(blk));
  }
  return model;
}

void NoiseModel::accumulate(const cplx* vars,
                            const std::vector<Eigen::MatrixXcd>* extra,
                            const double* dw, cplx* alpha,
                            NoiseScratch& scratch) const {
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    const size_t m = blk.vars.size();
    const Eigen::MatrixXcd* add = extra ? &(*extra)[b] : nullptr;
    if (blk.scalar) {
      cplx dvv = blk.entries[0].eval(vars);
      if (add && add->size() > 0) dvv += (*add)(0, 0);
      if (dvv != cplx{0.0, 0.0}) {
        alpha[blk.vars[0]] += std::sqrt(dvv) * dw[blk.channel_base];
      }
      continue;
    }
    scratch.Dblk.resize(long(m), long(m));
    bool nonzero = false;
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < m; ++j) {
        cplx v = blk.entries[i * m + j].eval(vars);
        if (add && add->size() > 0) v += (*add)(long(i), long(j));
        scratch.Dblk(long(i), long(j)) = v;
        nonzero = nonzero || (v != cplx{0.0, 0.0});
      }
    }
    if (!nonzero) continue;
    complex_symmetric_factor(scratch.Dblk, scratch.factor, scratch.dblk);
    for (size_t j = 0; j < m; ++j) {
      double w = dw[blk.channel_base + j];
      if (w == 0.0) continue;
      for (size_t i = 0; i < m; ++i) {
        alpha[blk.vars[i]] += scratch.dblk(long(i), long(j)) * w;
      }
    }
  }
}

Eigen::MatrixXcd NoiseModel::dense_factor(
    const cplx* vars, size_t n_vars,
    const std::vector<Eigen::MatrixXcd>* extra) const {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(long(n_vars), long(n_channels_));
  NoiseScratch scratch;
  for (size_t b = 0; b < blocks_.size(); ++b) {
    const Block& blk = blocks_[b];
    const size_t m = blk.vars.size();
    if (blk.scalar) {
      cplx dvv = blk.entries[0].eval(vars);
      if (extra && (*extra)[b].size() > 0) dvv += (*extra)[b](0, 0);
      out(blk.vars[0], blk.channel_base) = std::sqrt(dvv);
      continue;
    }
    Eigen::MatrixXcd Dblk(m, m);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < m; ++j) {
        cplx v = blk.entries[i * m + j].eval(vars);
        if (extra && (*extra)[b].size() > 0) v += (*extra)[b](long(i), long(j));
        Dblk(long(i), long(j)) = v;
      }
    }
    complex_symmetric_factor(Dblk, scratch.factor, scratch.dblk);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < m; ++j) {
        out(blk.vars[i], blk.channel_base + j) = scratch.dblk(long(i), long(j));
      }
    }
  }
  return out;
}

double verify_noise_factor(const SdeSystem& sde,
                           const std::vector<std::vector<cplx>>& points,
                           double tol) {
  double worst = 0.0;
  for (const auto& pt : points) {
    if (pt.size() != sde.n_vars) {
      throw ConfigError("verify_noise_factor: point has wrong dimension");
    }
    Eigen::MatrixXcd d;
    try {
      d = sde.noise.dense_factor(pt.data(), sde.n_vars);
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "factor_diffusion failed at point (";
      for (size_t i = 0; i < pt.size(); ++i) {
        os << (i ? ", " : "") << pt[i].real() << (pt[i].imag() < 0 ? "-" : "+")
           << std::abs(pt[i].imag()) << "i";
      }
      os << "): " << e.what();
      throw NumericError(os.str());
    }
    Eigen::MatrixXcd DD = d * d.transpose();
    double resid = 0.0;
    for (size_t v = 0; v < sde.n_vars; ++v) {
      for (size_t w = 0; w < sde.n_vars; ++w) {
        const Poly* p = sde.diffusion.find(uint32_t(v), uint32_t(w));
        cplx expect = p ? p->eval(pt) : cplx{0.0, 0.0};
        resid = std::max(resid, std::abs(DD(long(v), long(w)) - expect));
      }
    }
    worst = std::max(worst, resid);
    if (resid > tol) {
      std::ostringstream os;
      os << "factor_diffusion residual " << resid << " at point (";
      for (size_t i = 0; i < pt.size(); ++i) {
        os << (i ? ", " : "") << pt[i].real() << (pt[i].imag() < 0 ? "-" : "+")
           << std::abs(pt[i].imag()) << "i";
      }
      os << ")";
      throw NumericError(os.str());
    }
  }
  return worst;
}

}  // namespace twpp
