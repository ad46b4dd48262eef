#include "twpp/runner.hpp"

#include "twpp/io.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace twpp {

namespace {

constexpr size_t kChunk = 64;

using nlohmann::json;

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// --- strict config parsing -------------------------------------------------

class Fields {
public:
  Fields(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) {
      errors_.push_back(path_ + ": expected an object");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.is_object() && j_.contains(key);
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  template <typename T>
  T req(const std::string& key, T fallback = T{}) {
    const json* v = get(key);
    if (!v) {
      errors_.push_back(path_ + ": missing required key '" + key + "'");
      return fallback;
    }
    return as<T>(*v, key, fallback);
  }

  template <typename T>
  T opt(const std::string& key, T fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    return as<T>(*v, key, fallback);
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, val] : j_.items()) {
      if (!seen_.count(key)) {
        errors_.push_back(path_ + ": unknown key '" + key + "'");
      }
    }
  }

  const json& raw() const { return j_; }

private:
  template <typename T>
  T as(const json& v, const std::string& key, T fallback) {
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      errors_.push_back(path_ + "." + key + ": wrong type");
      return fallback;
    }
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

std::vector<std::pair<double, double>> parse_pairs(
    const json* arr, const std::string& path,
    std::vector<std::string>& errors) {
  std::vector<std::pair<double, double>> out;
  if (!arr) return out;
  if (!arr->is_array()) {
    errors.push_back(path + ": expected an array of [r, s] pairs");
    return out;
  }
  for (const auto& e : *arr) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() ||
        !e[1].is_number()) {
      errors.push_back(path + ": entries must be [r, s] number pairs");
      return out;
    }
    out.emplace_back(e[0].get<double>(), e[1].get<double>());
  }
  return out;
}

PotentialProtocol parse_protocol(const json& j, double default_duration,
                                 std::vector<std::string>& errors) {
  Fields f(j, "protocol", errors);
  double sigma = f.opt<double>("sigma", 0.0);
  double half_sep = f.opt<double>("half_separation", 0.0);
  const json* stages_j = f.get("stages");
  f.finish();

  std::vector<Stage> stages;
  double max_barrier = 0.0;
  if (!stages_j || !stages_j->is_array() || stages_j->empty()) {
    errors.push_back("protocol.stages: required non-empty array");
  } else {
    for (size_t i = 0; i < stages_j->size(); ++i) {
      Fields sf((*stages_j)[i], "protocol.stages[" + std::to_string(i) + "]",
                errors);
      std::string family = sf.req<std::string>("family", "harmonic");
      Stage s;
      s.duration = sf.req<double>("duration", 1.0);
      std::string ramp =
          sf.opt<std::string>("ramp", i == 0 ? "hold" : "linear");
      try {
        s.ramp = ramp_from_string(ramp);
      } catch (const ConfigError& e) {
        errors.push_back(std::string("protocol.stages: ") + e.what());
      }
      if (family == "harmonic") {
        double omega = sf.opt<double>("omega", 1.0);
        s.a = omega * omega;
        s.b = 0.0;
        s.eps = 0.0;
      } else if (family == "double_well") {
        double omega = sf.opt<double>("omega", 1.0);
        s.a = omega * omega;
        s.b = sf.req<double>("barrier", 0.0);
        s.eps = sf.opt<double>("tilt", 0.0);
      } else {
        errors.push_back("protocol.stages[" + std::to_string(i) +
                         "].family: unknown family '" + family +
                         "' (harmonic|double_well)");
      }
      sf.finish();
      max_barrier = std::max(max_barrier, s.b);
      stages.push_back(s);
    }
  }
  if (!errors.empty()) {
    return PotentialProtocol::static_harmonic(1.0,
                                              std::max(default_duration, 1.0));
  }
  if (sigma > 0.0 && half_sep > 0.0) {
    errors.push_back("protocol: give either sigma or half_separation, not both");
  } else if (half_sep > 0.0) {
    if (max_barrier <= 0.0) {
      errors.push_back("protocol: half_separation needs a double_well stage");
    } else {
      sigma = sigma_from_half_separation(half_sep, max_barrier);
    }
  } else if (sigma <= 0.0) {
    sigma = 0.8;
  }
  if (!errors.empty()) {
    return PotentialProtocol::static_harmonic(1.0,
                                              std::max(default_duration, 1.0));
  }
  try {
    return PotentialProtocol(sigma, stages);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
    return PotentialProtocol::static_harmonic(1.0,
                                              std::max(default_duration, 1.0));
  }
}

}  // namespace

RunConfig parse_config_json(const json& j) {
  std::vector<std::string> errors;
  RunConfig c;

  Fields f(j, "config", errors);

  if (const json* g = f.get("grid")) {
    Fields gf(*g, "grid", errors);
    c.x_min = gf.req<double>("x_min", -8.0);
    c.x_max = gf.req<double>("x_max", 8.0);
    c.n_points = gf.req<size_t>("n_points", 257);
    gf.finish();
  } else {
    errors.push_back("config: missing required key 'grid'");
  }

  c.n_modes = f.opt<size_t>("n_modes", 12);
  c.g_strength = f.opt<double>("g_strength", 0.0);
  c.dt = f.opt<double>("dt", 1e-3);
  c.observation_times =
      f.req<std::vector<double>>("observation_times", {1.0});
  c.n_trajectories = f.req<size_t>("n_trajectories", 0);
  c.seed = f.opt<uint64_t>("seed", 1);
  c.output_dir = f.opt<std::string>("output", "out");
  c.workers = f.opt<size_t>("workers", 0);
  c.energy_gauge = f.opt<bool>("energy_gauge", false);
  if (f.has("divergence_cap")) {
    c.divergence_cap = f.raw().at("divergence_cap").get<double>();
  }

  if (const json* init = f.get("initial_state")) {
    Fields inf(*init, "initial_state", errors);
    const json* a0 = inf.get("alpha0");
    inf.finish();
    if (!a0 || !a0->is_array() || a0->size() > 2) {
      errors.push_back(
          "initial_state.alpha0: need up to 2 condensate [re, im] amplitudes");
    } else {
      for (const auto& e : *a0) {
        if (!e.is_array() || e.size() != 2) {
          errors.push_back("initial_state.alpha0: entries are [re, im] pairs");
          break;
        }
        c.alpha0.emplace_back(e[0].get<double>(), e[1].get<double>());
      }
    }
  } else {
    errors.push_back("config: missing required key 'initial_state'");
  }
  c.alpha0.resize(2, cplx{0.0, 0.0});

  double last_obs = c.observation_times.empty() ? 1.0
                                                : c.observation_times.back();
  if (const json* p = f.get("protocol")) {
    c.protocol = parse_protocol(*p, last_obs, errors);
  } else {
    c.protocol = PotentialProtocol::static_harmonic(1.0,
                                                    std::max(last_obs, 1.0));
  }

  if (const json* corr = f.get("correlations")) {
    Fields cf(*corr, "correlations", errors);
    c.correlations.occupations = cf.opt<bool>("occupations", true);
    c.correlations.g1_pairs =
        parse_pairs(cf.get("g1_pairs"), "correlations.g1_pairs", errors);
    c.correlations.g1_diagonal = cf.opt<bool>("g1_diagonal", false);
    c.correlations.g2_pairs =
        parse_pairs(cf.get("g2_pairs"), "correlations.g2_pairs", errors);
    if (const json* w = cf.get("visibility_window")) {
      json wrapped = json::array({*w});
      auto win =
          parse_pairs(&wrapped, "correlations.visibility_window", errors);
      if (!win.empty()) {
        c.correlations.visibility_window = win.front();
        c.correlations.g1_diagonal = true;
      }
    }
    cf.finish();
  }

  if (const json* o = f.get("oracle")) {
    Fields of(*o, "oracle", errors);
    c.oracle.enabled = of.opt<bool>("enabled", false);
    c.oracle.n_max = of.opt<size_t>("n_max", 0);
    of.finish();
  }

  if (const json* sw = f.get("sweep")) {
    Fields sf(*sw, "sweep", errors);
    SweepSpec spec;
    spec.tilt = sf.opt<std::vector<double>>("tilt", {});
    sf.finish();
    if (spec.tilt.empty()) {
      errors.push_back("sweep: needs a non-empty 'tilt' array");
    } else {
      c.sweep = spec;
    }
  }

  if (const json* fl = f.get("flags")) {
    Fields ff(*fl, "flags", errors);
    c.flags.dump_derivation = ff.opt<bool>("dump_derivation", false);
    c.flags.dump_trajectories = ff.opt<bool>("dump_trajectories", false);
    c.flags.deterministic_merge = ff.opt<bool>("deterministic_merge", true);
    ff.finish();
  }

  f.finish();

  // Value checks, collected rather than thrown one by one.
  if (c.n_trajectories == 0) {
    errors.push_back("n_trajectories: must be at least 1");
  }
  if (!(c.dt > 0.0)) errors.push_back("dt: must be positive");
  if (c.observation_times.empty()) {
    errors.push_back("observation_times: must be non-empty");
  } else {
    for (double t : c.observation_times) {
      if (t < 0.0) errors.push_back("observation_times: must be >= 0");
    }
    if (!std::is_sorted(c.observation_times.begin(),
                        c.observation_times.end())) {
      errors.push_back("observation_times: must be ascending");
    }
    if (c.protocol.total_duration() <
        c.observation_times.back() - 1e-9) {
      errors.push_back("protocol: spans " +
                       std::to_string(c.protocol.total_duration()) +
                       " but observations extend to " +
                       std::to_string(c.observation_times.back()));
    }
  }
  if (c.n_modes < 2) errors.push_back("n_modes: must be at least 2");

  if (!errors.empty()) {
    std::string msg = "configuration error:";
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig parse_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return parse_config_json(j);
}

json RunConfig::to_json() const {
  json j;
  j["grid"] = {{"x_min", x_min}, {"x_max", x_max}, {"n_points", n_points}};
  j["n_modes"] = n_modes;
  j["g_strength"] = g_strength;
  json stages = json::array();
  for (const Stage& s : protocol.stages()) {
    stages.push_back({{"duration", s.duration},
                      {"ramp", to_string(s.ramp)},
                      {"a", s.a},
                      {"b", s.b},
                      {"eps", s.eps}});
  }
  j["protocol"] = {{"sigma", protocol.sigma()}, {"stages", stages}};
  json a0 = json::array();
  for (const cplx& a : alpha0) a0.push_back({a.real(), a.imag()});
  j["initial_state"] = {{"alpha0", a0}};
  j["dt"] = dt;
  j["observation_times"] = observation_times;
  j["n_trajectories"] = n_trajectories;
  j["seed"] = seed;
  json corr;
  corr["occupations"] = correlations.occupations;
  json g1p = json::array();
  for (auto& [r, s] : correlations.g1_pairs) g1p.push_back({r, s});
  corr["g1_pairs"] = g1p;
  corr["g1_diagonal"] = correlations.g1_diagonal;
  json g2p = json::array();
  for (auto& [r, s] : correlations.g2_pairs) g2p.push_back({r, s});
  corr["g2_pairs"] = g2p;
  if (correlations.visibility_window) {
    corr["visibility_window"] = {correlations.visibility_window->first,
                                 correlations.visibility_window->second};
  }
  j["correlations"] = corr;
  j["oracle"] = {{"enabled", oracle.enabled}, {"n_max", oracle.n_max}};
  j["energy_gauge"] = energy_gauge;
  if (divergence_cap) j["divergence_cap"] = *divergence_cap;
  j["flags"] = {{"dump_derivation", flags.dump_derivation},
                {"dump_trajectories", flags.dump_trajectories},
                {"deterministic_merge", flags.deterministic_merge}};
  return j;
}

std::string RunConfig::hash() const {
  // workers and the output directory are execution details, not part of the
  // result identity; to_json() leaves both out.
  return hash_hex(fnv1a64(to_json().dump()));
}

// --- simulation setup --------------------------------------------------------

namespace {

std::vector<std::vector<cplx>> probe_points(size_t n_vars, double scale,
                                            size_t count, uint64_t key) {
  std::vector<std::vector<cplx>> pts(count);
  for (size_t p = 0; p < count; ++p) {
    pts[p].resize(n_vars);
    for (size_t v = 0; v < n_vars; ++v) {
      auto [z0, z1] = normal_pair(0x50524F4245ULL + p, v, key);
      pts[p][v] = cplx{z0, z1} * (0.5 * scale);
    }
  }
  return pts;
}

// Constant diffusion pattern attached to a single c_k^dag c_l Hamiltonian
// entry; empty for same-sector pairs.
std::map<std::pair<uint32_t, uint32_t>, cplx> hop_diffusion_pattern(
    size_t n_modes, size_t n_condensate, uint32_t k, uint32_t l) {
  std::vector<Sector> sectors(n_modes, Sector::PositiveP);
  for (size_t m = 0; m < n_condensate; ++m) sectors[m] = Sector::Wigner;
  OperatorTerm term;
  term.coeff = cplx{1.0, 0.0};
  term.factors = {{k, OpKind::Create}, {l, OpKind::Annihilate}};
  auto gen = apply_rules({term}, sectors);
  auto sde = extract_sde(gen, n_modes);
  std::map<std::pair<uint32_t, uint32_t>, cplx> pattern;
  for (const auto& [key, poly] : sde.diffusion.entries()) {
    if (poly.degree() != 0) {
      throw InternalError("hop diffusion pattern is not constant");
    }
    pattern[key] = poly.eval(std::vector<cplx>(2 * n_modes, cplx{}));
  }
  return pattern;
}

Eigen::MatrixXcd to_eigen(const std::vector<cplx>& h, size_t n) {
  const long ln = static_cast<long>(n);
  Eigen::MatrixXcd m(ln, ln);
  for (size_t k = 0; k < n; ++k) {
    for (size_t l = 0; l < n; ++l) m(long(k), long(l)) = h[k * n + l];
  }
  return m;
}

}  // namespace

SimulationSetup prepare_simulation(const RunConfig& config) {
  SimulationSetup s;
  s.grid = build_grid(config.x_min, config.x_max, config.n_points);
  std::vector<double> v0 = config.protocol.sample(s.grid, 0.0);
  s.basis = solve_modes(s.grid, v0, config.n_modes);
  s.tensors = compute_tensors(s.basis, v0, config.g_strength);
  s.schedule = make_schedule(config.dt, config.observation_times);
  s.time_dependent = config.protocol.time_dependent();
  s.energy_gauge = config.energy_gauge;
  if (config.energy_gauge) {
    const size_t n = config.n_modes;
    double c0 = 0.0;
    for (size_t k = 0; k < n; ++k) c0 += s.tensors.h[k * n + k].real();
    c0 /= double(n);
    for (size_t k = 0; k < n; ++k) s.tensors.h[k * n + k] -= c0;
  }

  s.initial.n_modes = config.n_modes;
  s.initial.n_condensate = config.n_condensate;
  s.initial.alpha0 = config.alpha0;

  double n0 = 0.0;
  for (const cplx& a : config.alpha0) n0 += std::norm(a);
  s.divergence_cap = config.divergence_cap
                         ? *config.divergence_cap
                         : 1e6 * std::max(n0, 1.0);

  s.sde = derive_sde(s.tensors, config.n_condensate);
  {
    json dump = derivation_to_json(s.sde);
    s.derivation_hash = hash_hex(fnv1a64(dump.dump()));
  }

  const size_t n = config.n_modes;
  const double scale = std::max(1.0, std::sqrt(n0));

  if (!s.time_dependent) {
    s.sde_run = s.sde;
    verify_noise_factor(s.sde_run, probe_points(s.sde.n_vars, scale, 100,
                                                mix_seed(config.seed, 0xFACE)));
    return s;
  }

  // Time-dependent protocol: step with the interaction-only derivation and
  // feed h(t) (and its constant diffusion pattern) per step.
  CouplingTensors gonly = s.tensors;
  std::fill(gonly.h.begin(), gonly.h.end(), cplx{0.0, 0.0});
  SdeSystem sde_g = derive_sde(gonly, config.n_condensate);

  // Per-entry diffusion patterns and their union support.
  std::vector<std::map<std::pair<uint32_t, uint32_t>, cplx>> patterns(n * n);
  std::vector<std::pair<uint32_t, uint32_t>> support;
  for (uint32_t k = 0; k < n; ++k) {
    for (uint32_t l = 0; l < n; ++l) {
      patterns[k * n + l] =
          hop_diffusion_pattern(n, config.n_condensate, k, l);
      for (const auto& [key, c] : patterns[k * n + l]) support.push_back(key);
    }
  }
  s.sde_run = sde_g;
  s.sde_run.noise = build_noise_model(sde_g.diffusion, support);

  // Mode-space pieces of h(t).
  Grid pseudo = s.grid;
  s.h_kin = to_eigen(kinetic_matrix(s.basis, pseudo), n);
  std::vector<double> fx2(s.grid.n_points), fg(s.grid.n_points),
      fx(s.grid.n_points);
  const double inv2s2 =
      1.0 / (2.0 * config.protocol.sigma() * config.protocol.sigma());
  for (size_t i = 0; i < s.grid.n_points; ++i) {
    double x = s.grid.x[i];
    fx2[i] = 0.5 * x * x;
    fg[i] = std::exp(-x * x * inv2s2);
    fx[i] = x;
  }
  s.Q2 = to_eigen(project_potential(s.basis, fx2), n);
  s.QG = to_eigen(project_potential(s.basis, fg), n);
  s.Q1 = to_eigen(project_potential(s.basis, fx), n);
  s.tr_kin = s.h_kin.real().trace();
  s.tr_Q2 = s.Q2.real().trace();
  s.tr_QG = s.QG.real().trace();
  s.tr_Q1 = s.Q1.real().trace();

  // Per-block constant diffusion for each h(t) building block.
  auto block_pattern = [&](const Eigen::MatrixXcd& M) {
    std::vector<Eigen::MatrixXcd> blocks;
    for (const auto& blk : s.sde_run.noise.blocks()) {
      const size_t m = blk.vars.size();
      Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(long(m), long(m));
      for (uint32_t k = 0; k < n; ++k) {
        for (uint32_t l = 0; l < n; ++l) {
          cplx w = M(long(k), long(l));
          if (w == cplx{0.0, 0.0}) continue;
          for (const auto& [key, c] : patterns[k * n + l]) {
            auto iv = std::lower_bound(blk.vars.begin(), blk.vars.end(),
                                       key.first);
            auto iw = std::lower_bound(blk.vars.begin(), blk.vars.end(),
                                       key.second);
            if (iv == blk.vars.end() || *iv != key.first) continue;
            if (iw == blk.vars.end() || *iw != key.second) continue;
            long bi = iv - blk.vars.begin();
            long bj = iw - blk.vars.begin();
            B(bi, bj) += w * c;
            if (bi != bj) B(bj, bi) += w * c;
          }
        }
      }
      blocks.push_back(std::move(B));
    }
    return blocks;
  };
  s.D_kin = block_pattern(s.h_kin);
  s.D_Q2 = block_pattern(s.Q2);
  s.D_QG = block_pattern(s.QG);
  s.D_Q1 = block_pattern(s.Q1);

  // Consistency of the split: full derivation at t=0 must equal the
  // interaction part plus the analytic linear action of h(0).
  auto pts = probe_points(s.sde.n_vars, scale, 20,
                          mix_seed(config.seed, 0xBEEF));
  Eigen::MatrixXcd h0 = to_eigen(s.tensors.h, n);
  for (const auto& pt : pts) {
    std::vector<cplx> a_full(s.sde.n_vars), a_g(s.sde.n_vars);
    s.sde.drift_eval(pt.data(), a_full.data());
    s.sde_run.drift_eval(pt.data(), a_g.data());
    double resid = 0.0, ref = 0.0;
    for (size_t k = 0; k < n; ++k) {
      cplx lin{0.0, 0.0}, linp{0.0, 0.0};
      for (size_t l = 0; l < n; ++l) {
        lin += h0(long(k), long(l)) * pt[l];
        linp += std::conj(h0(long(k), long(l))) * pt[n + l];
      }
      resid = std::max(resid,
                       std::abs(a_full[k] - (a_g[k] - I * lin)));
      resid = std::max(resid,
                       std::abs(a_full[n + k] - (a_g[n + k] + I * linp)));
      ref = std::max({ref, std::abs(a_full[k]), std::abs(a_full[n + k]), 1.0});
    }
    if (resid > 1e-9 * ref) {
      throw InternalError("time-dependent split: drift mismatch " +
                          std::to_string(resid));
    }
  }

  return s;
}

// --- trajectory ensemble ------------------------------------------------------

namespace {

// Per-worker provider: composes h(t) and the per-block diffusion additions
// into its own buffers at every step.
class ProtocolStepper : public StepProvider {
public:
  ProtocolStepper(const SimulationSetup& s, const PotentialProtocol& proto)
      : s_(s), proto_(proto) {
    h_.resize(s.h_kin.rows(), s.h_kin.cols());
    extra_.resize(s.D_kin.size());
    for (size_t b = 0; b < extra_.size(); ++b) {
      extra_[b].resizeLike(s.D_kin[b]);
    }
  }

  StepTerms at_step(size_t step) const override {
    TrapCoeffs c = proto_.coeffs(double(step) * s_.schedule.dt);
    h_ = s_.h_kin + c.a * s_.Q2 + c.b * s_.QG + c.eps * s_.Q1;
    double shift = s_.gauge_shift(c);
    if (shift != 0.0) h_.diagonal().array() -= shift;
    for (size_t b = 0; b < extra_.size(); ++b) {
      extra_[b] = s_.D_kin[b] + c.a * s_.D_Q2[b] + c.b * s_.D_QG[b] +
                  c.eps * s_.D_Q1[b];
    }
    return {&h_, &extra_};
  }

private:
  const SimulationSetup& s_;
  const PotentialProtocol& proto_;
  mutable Eigen::MatrixXcd h_;
  mutable std::vector<Eigen::MatrixXcd> extra_;
};

EnsembleAccumulator make_registry(const RunConfig& config) {
  EnsembleAccumulator acc(config.n_modes, config.observation_times.size());
  const size_t n_times = config.observation_times.size();
  for (uint32_t t = 0; t < n_times; ++t) {
    acc.register_mode_pairs(t);
    if (!config.correlations.g2_pairs.empty()) {
      acc.register_mode_quartics(t);
      // The ordering conversion can touch any sorted sub-product of a
      // quartic; pairs are covered above, so nothing else is needed: the
      // symmetric expansion only produces equal-or-lower even degrees.
    }
  }
  return acc;
}

struct WorkerError {
  std::mutex m;
  std::exception_ptr e;
  void capture() {
    std::lock_guard lock(m);
    if (!e) e = std::current_exception();
  }
};

void append_trajectory_record(std::string& buf, const TrajectoryResult& traj,
                              size_t n_modes, size_t n_times) {
  auto put = [&buf](const void* p, size_t n) {
    buf.append(reinterpret_cast<const char*>(p), n);
  };
  put(&traj.seed, 8);
  uint8_t status = traj.status == TrajectoryStatus::Completed ? 0 : 1;
  put(&status, 1);
  uint64_t dstep = traj.diverged_step;
  put(&dstep, 8);
  if (status == 0) {
    for (size_t t = 0; t < n_times; ++t) {
      for (size_t v = 0; v < 2 * n_modes; ++v) {
        double re = traj.samples[t].alpha[v].real();
        double im = traj.samples[t].alpha[v].imag();
        put(&re, 8);
        put(&im, 8);
      }
    }
  }
}

}  // namespace

EnsembleData run_trajectories(const RunConfig& config,
                              const SimulationSetup& setup) {
  EnsembleData data{make_registry(config), setup};
  EnsembleAccumulator& global = data.acc;
  const EnsembleAccumulator registry_template = global;

  const size_t n_traj = config.n_trajectories;
  const size_t n_chunks = (n_traj + kChunk - 1) / kChunk;
  size_t n_workers = config.workers == 0
                         ? std::max(1u, std::thread::hardware_concurrency())
                         : config.workers;
  n_workers = std::min(n_workers, n_chunks);

  std::atomic<size_t> next_chunk{0};
  std::mutex merge_mutex;
  std::condition_variable merge_cv;
  std::map<size_t, EnsembleAccumulator> pending;
  std::map<size_t, std::string> pending_dump;
  size_t merged_upto = 0;
  std::string dump_blob;
  double conjugacy_max = 0.0;
  WorkerError werr;

  const bool deterministic = config.flags.deterministic_merge;
  const bool dump = config.flags.dump_trajectories;
  const size_t n_times = config.observation_times.size();

  auto worker = [&]() {
    try {
      ProtocolStepper stepper(setup, config.protocol);
      const StepProvider* provider = setup.time_dependent ? &stepper : nullptr;
      for (;;) {
        size_t c = next_chunk.fetch_add(1);
        if (c >= n_chunks) break;
        EnsembleAccumulator local = registry_template;
        std::string local_dump;
        double local_conj = 0.0;
        const size_t begin = c * kChunk;
        const size_t end = std::min(begin + kChunk, n_traj);
        for (size_t idx = begin; idx < end; ++idx) {
          uint64_t tseed = mix_seed(config.seed, idx);
          PhasePoint initial = sample_initial(setup.initial, tseed);
          TrajectoryResult traj =
              evolve_trajectory(initial, setup.sde_run, provider,
                                setup.schedule, tseed, setup.divergence_cap);
          local.accumulate(traj);
          for (const PhasePoint& p : traj.samples) {
            const size_t nm = p.n_modes();
            for (size_t k = 0; k < config.n_condensate; ++k) {
              local_conj = std::max(
                  local_conj,
                  std::abs(p.alpha[nm + k] - std::conj(p.alpha[k])));
            }
          }
          if (dump) {
            append_trajectory_record(local_dump, traj, config.n_modes,
                                     n_times);
          }
        }
        std::unique_lock lock(merge_mutex);
        conjugacy_max = std::max(conjugacy_max, local_conj);
        if (deterministic) {
          pending.emplace(c, std::move(local));
          if (dump) pending_dump.emplace(c, std::move(local_dump));
          while (!pending.empty() && pending.begin()->first == merged_upto) {
            global.merge(pending.begin()->second);
            pending.erase(pending.begin());
            if (dump) {
              dump_blob += pending_dump.begin()->second;
              pending_dump.erase(pending_dump.begin());
            }
            ++merged_upto;
          }
        } else {
          global.merge(local);
          if (dump) dump_blob += local_dump;
        }
      }
    } catch (...) {
      werr.capture();
    }
  };

  std::vector<std::thread> threads;
  for (size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (werr.e) std::rethrow_exception(werr.e);
  if (deterministic && merged_upto != n_chunks) {
    throw InternalError("deterministic merge left unmerged chunks");
  }

  data.conjugacy_max = conjugacy_max;
  if (dump) {
    std::string header;
    header += "TWPPTRJ1";
    uint32_t nm = uint32_t(config.n_modes), nt = uint32_t(n_times);
    uint64_t ntr = n_traj;
    header.append(reinterpret_cast<const char*>(&nm), 4);
    header.append(reinterpret_cast<const char*>(&nt), 4);
    header.append(reinterpret_cast<const char*>(&ntr), 8);
    std::filesystem::create_directories(config.output_dir);
    write_text_file(config.output_dir + "/trajectories.bin",
                    header + dump_blob);
  }

  return data;
}

// --- exact oracle ---------------------------------------------------------------

OracleData run_oracle(const RunConfig& config, const SimulationSetup& setup) {
  if (config.n_modes > 4) {
    throw ConfigError("oracle: n_modes must be <= 4 (got " +
                      std::to_string(config.n_modes) + ")");
  }
  double n0 = 0.0;
  for (const cplx& a : config.alpha0) n0 += std::norm(a);
  size_t n_max = config.oracle.n_max;
  if (n_max == 0) {
    n_max = size_t(std::ceil(n0 + 6.0 * std::sqrt(n0) + 4.0));
  }

  OracleData out;
  out.fock = build_fock_basis(config.n_modes, n_max);

  std::vector<cplx> alpha(config.n_modes, cplx{0.0, 0.0});
  for (size_t k = 0; k < config.alpha0.size() && k < config.n_modes; ++k) {
    alpha[k] = config.alpha0[k];
  }
  FockState state = coherent_state(out.fock, alpha);

  HamiltonianApply H;
  if (!setup.time_dependent) {
    H = static_hamiltonian(build_hamiltonian_matrix(setup.tensors, out.fock));
  } else {
    // H(t) = [kinetic + interaction] + a(t) T2 + b(t) TG + eps(t) T1.
    CouplingTensors fixed = setup.tensors;
    const size_t n = config.n_modes;
    for (size_t k = 0; k < n; ++k) {
      for (size_t l = 0; l < n; ++l) {
        fixed.h[k * n + l] = setup.h_kin(long(k), long(l));
      }
    }
    auto Hfix = std::make_shared<SparseC>(
        build_hamiltonian_matrix(fixed, out.fock));
    auto term_matrix = [&](const Eigen::MatrixXcd& M) {
      SparseC T(long(out.fock.dim()), long(out.fock.dim()));
      for (size_t k = 0; k < n; ++k) {
        for (size_t l = 0; l < n; ++l) {
          cplx w = M(long(k), long(l));
          if (w == cplx{0.0, 0.0}) continue;
          T = T + SparseC(w * hop_matrix(out.fock, k, l));
        }
      }
      return std::make_shared<SparseC>(std::move(T));
    };
    auto T2 = term_matrix(setup.Q2);
    auto TG = term_matrix(setup.QG);
    auto T1 = term_matrix(setup.Q1);
    auto Nop = std::make_shared<SparseC>(SparseC(long(out.fock.dim()),
                                                 long(out.fock.dim())));
    {
      std::vector<Eigen::Triplet<cplx>> trips;
      for (size_t i = 0; i < out.fock.dim(); ++i) {
        double tot = 0.0;
        for (uint16_t occ : out.fock.state(i)) tot += double(occ);
        trips.emplace_back(long(i), long(i), cplx{tot, 0.0});
      }
      Nop->setFromTriplets(trips.begin(), trips.end());
    }
    const PotentialProtocol proto = config.protocol;
    const SimulationSetup* sp = &setup;
    H = [Hfix, T2, TG, T1, Nop, proto, sp](double t,
                                           const Eigen::VectorXcd& in,
                                           Eigen::VectorXcd& out_v) {
      TrapCoeffs c = proto.coeffs(t);
      out_v.noalias() = (*Hfix) * in;
      out_v.noalias() += c.a * ((*T2) * in);
      out_v.noalias() += c.b * ((*TG) * in);
      out_v.noalias() += c.eps * ((*T1) * in);
      double shift = sp->gauge_shift(c);
      if (shift != 0.0) out_v.noalias() -= shift * ((*Nop) * in);
    };
  }

  double prev = 0.0;
  for (double t_obs : config.observation_times) {
    state = evolve_exact(state, H, t_obs, config.dt);
    prev = t_obs;
    out.one_body.push_back(one_body_exact(state, out.fock));
  }
  (void)prev;
  out.final_state = std::move(state);
  return out;
}

// --- reports & outputs -------------------------------------------------------------

json RunReport::to_json() const {
  json j;
  j["config_hash"] = config_hash;
  j["derivation_hash"] = derivation_hash;
  j["n_trajectories"] = n_trajectories;
  j["diverged"] = diverged;
  j["diverged_fraction"] = diverged_fraction;
  j["condensate_conjugacy_max"] = condensate_conjugacy_max;
  j["wall_times_s"] = wall_times_s;
  j["files"] = files;
  if (fringe_visibility) {
    j["visibility"] = {{"value", fringe_visibility->value},
                       {"se", fringe_visibility->se}};
  }
  if (excitation) {
    j["excitation"] = {{"p_excited", excitation->p_excited},
                       {"se", excitation->p_excited_se},
                       {"total_number", excitation->total_number},
                       {"populations", excitation->populations},
                       {"population_errors", excitation->errors}};
  }
  if (!comparison.empty()) {
    json rows = json::array();
    for (const CompareRow& r : comparison) {
      rows.push_back({{"observable", r.observable},
                      {"time", r.time},
                      {"stochastic", r.stochastic},
                      {"se", r.se},
                      {"exact", r.exact},
                      {"z", r.z}});
    }
    j["comparison"] = rows;
    j["comparison_pass"] = comparison_pass;
    j["comparison_pass_fraction"] = comparison_pass_fraction;
  }
  j["exit_code"] = exit_code;
  return j;
}

namespace {

std::vector<std::pair<size_t, size_t>> to_index_pairs(
    const Grid& grid, const std::vector<std::pair<double, double>>& pos) {
  std::vector<std::pair<size_t, size_t>> out;
  out.reserve(pos.size());
  for (auto& [r, s] : pos) {
    out.emplace_back(grid.nearest_index(r), grid.nearest_index(s));
  }
  return out;
}

void write_outputs(const RunConfig& config, const SimulationSetup& setup,
                   const EnsembleAccumulator& acc, RunReport& report) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  const std::string& ch = report.config_hash;
  const std::string& dh = report.derivation_hash;
  const size_t n_times = config.observation_times.size();
  const bool have_stats = acc.count() > 0;

  if (config.correlations.occupations) {
    std::string csv = csv_header("t,mode,re,im,se,n_used,diverged_excluded",
                                 ch, dh, "stochastic");
    if (have_stats) {
      for (uint32_t t = 0; t < n_times; ++t) {
        OneBodyMatrix ob = one_body_density_matrix(acc, config.n_modes,
                                                   config.n_condensate, t);
        CorrelationResult res;
        res.n_used = ob.n_used;
        res.diverged_excluded = ob.diverged_excluded;
        for (size_t k = 0; k < config.n_modes; ++k) {
          res.coords.push_back({double(t), double(k)});
          res.values.push_back(ob.values(long(k), long(k)));
          res.errors.push_back(ob.errors(long(k), long(k)));
        }
        for (size_t i = 0; i < res.values.size(); ++i) {
          csv += format_double(config.observation_times[t]) + "," +
                 std::to_string(size_t(res.coords[i][1])) + "," +
                 format_double(res.values[i].real()) + "," +
                 format_double(res.values[i].imag()) + "," +
                 format_double(res.errors[i]) + "," +
                 std::to_string(res.n_used) + "," +
                 std::to_string(res.diverged_excluded) + "\n";
        }
      }
    }
    write_text_file(config.output_dir + "/occupations.csv", csv);
    report.files.push_back("occupations.csv");
  }

  if (!config.correlations.g1_pairs.empty()) {
    auto pairs = to_index_pairs(setup.grid, config.correlations.g1_pairs);
    std::string csv = csv_header("t,r,s,re,im,se,n_used,diverged_excluded",
                                 ch, dh, "stochastic");
    if (have_stats) {
      for (uint32_t t = 0; t < n_times; ++t) {
        CorrelationResult res = g1(acc, setup.basis, pairs, t);
        append_correlation_rows(csv, res, config.observation_times[t]);
      }
    }
    write_text_file(config.output_dir + "/g1_pairs.csv", csv);
    report.files.push_back("g1_pairs.csv");
  }

  if (config.correlations.g1_diagonal) {
    std::string csv = csv_header("t,r,s,re,im,se,n_used,diverged_excluded",
                                 ch, dh, "stochastic");
    uint32_t t_last = uint32_t(n_times - 1);
    if (have_stats) {
      std::vector<std::pair<size_t, size_t>> diag;
      for (size_t i = 0; i < setup.grid.n_points; ++i) diag.emplace_back(i, i);
      CorrelationResult res = g1(acc, setup.basis, diag, t_last);
      append_correlation_rows(csv, res, config.observation_times[t_last]);
      if (config.correlations.visibility_window) {
        size_t w0 =
            setup.grid.nearest_index(config.correlations.visibility_window->first);
        size_t w1 = setup.grid.nearest_index(
            config.correlations.visibility_window->second);
        report.fringe_visibility = visibility(res, std::min(w0, w1),
                                              std::max(w0, w1) + 1);
      }
    }
    write_text_file(config.output_dir + "/g1_diagonal.csv", csv);
    report.files.push_back("g1_diagonal.csv");
  }

  if (!config.correlations.g2_pairs.empty()) {
    auto pairs = to_index_pairs(setup.grid, config.correlations.g2_pairs);
    std::string csv = csv_header("t,r1,r2,re,im,se,n_used,diverged_excluded",
                                 ch, dh, "stochastic");
    if (have_stats) {
      for (uint32_t t = 0; t < n_times; ++t) {
        CorrelationResult res = g2(acc, setup.basis, pairs, t);
        append_correlation_rows(csv, res, config.observation_times[t]);
      }
    }
    write_text_file(config.output_dir + "/g2_pairs.csv", csv);
    report.files.push_back("g2_pairs.csv");
  }

  if (config.flags.dump_derivation) {
    json dump = derivation_to_json(setup.sde);
    dump["config_hash"] = ch;
    write_text_file(config.output_dir + "/derivation.json", dump.dump(2));
    report.files.push_back("derivation.json");
  }
  if (config.flags.dump_trajectories) {
    report.files.push_back("trajectories.bin");
  }
}

}  // namespace

namespace {

// Excited fraction relative to the final-trap eigenbasis at the last
// observation time; only meaningful for protocol (time-dependent) runs.
void attach_excitation(const RunConfig& config, const SimulationSetup& setup,
                       const EnsembleAccumulator& acc, RunReport& report) {
  if (!setup.time_dependent || acc.count() == 0) return;
  uint32_t t_last = uint32_t(config.observation_times.size() - 1);
  OneBodyMatrix ob = one_body_density_matrix(acc, config.n_modes,
                                             config.n_condensate, t_last);
  std::vector<double> v_final =
      config.protocol.sample(setup.grid, config.observation_times.back());
  ModeBasis final_basis = solve_modes(setup.grid, v_final, config.n_modes);
  ExcitationReport rep = excitation_probability(ob, setup.basis, final_basis);
  if (report.fringe_visibility) rep.fringe = report.fringe_visibility;
  report.excitation = std::move(rep);
}

}  // namespace

RunReport run_ensemble(const RunConfig& config) {
  RunReport report;
  report.config_hash = config.hash();

  double t0 = now_s();
  SimulationSetup setup = prepare_simulation(config);
  report.derivation_hash = setup.derivation_hash;
  report.wall_times_s["derive"] = now_s() - t0;

  t0 = now_s();
  EnsembleData data = run_trajectories(config, setup);
  report.wall_times_s["trajectories"] = now_s() - t0;

  report.n_trajectories = config.n_trajectories;
  report.diverged = data.acc.diverged();
  report.diverged_fraction =
      double(report.diverged) / double(config.n_trajectories);
  report.condensate_conjugacy_max = data.conjugacy_max;

  t0 = now_s();
  write_outputs(config, setup, data.acc, report);
  attach_excitation(config, setup, data.acc, report);
  if (report.diverged_fraction > 0.5) report.exit_code = 4;
  json rj = report.to_json();
  write_text_file(config.output_dir + "/report.json", rj.dump(2));
  report.wall_times_s["io"] = now_s() - t0;
  return report;
}

RunReport run_oracle_compare(const RunConfig& config) {
  RunReport report;
  report.config_hash = config.hash();

  double t0 = now_s();
  SimulationSetup setup = prepare_simulation(config);
  report.derivation_hash = setup.derivation_hash;
  report.wall_times_s["derive"] = now_s() - t0;

  t0 = now_s();
  EnsembleData data = run_trajectories(config, setup);
  report.wall_times_s["trajectories"] = now_s() - t0;
  report.n_trajectories = config.n_trajectories;
  report.diverged = data.acc.diverged();
  report.diverged_fraction =
      double(report.diverged) / double(config.n_trajectories);
  report.condensate_conjugacy_max = data.conjugacy_max;

  t0 = now_s();
  OracleData oracle = run_oracle(config, setup);
  report.wall_times_s["oracle"] = now_s() - t0;

  auto add_row = [&](const std::string& name, double time, double stoch,
                     double se, double exact) {
    CompareRow row;
    row.observable = name;
    row.time = time;
    row.stochastic = stoch;
    row.se = se;
    row.exact = exact;
    if (se > 1e-12) {
      row.z = (stoch - exact) / se;
    } else {
      row.z = std::abs(stoch - exact) < 1e-9 ? 0.0
                                             : std::numeric_limits<double>::infinity();
    }
    report.comparison.push_back(row);
  };

  const size_t n_times = config.observation_times.size();
  auto g1_pairs = to_index_pairs(setup.grid, config.correlations.g1_pairs);
  for (uint32_t t = 0; t < n_times; ++t) {
    double time = config.observation_times[t];
    OneBodyMatrix ob = one_body_density_matrix(data.acc, config.n_modes,
                                               config.n_condensate, t);
    const Eigen::MatrixXcd& ex = oracle.one_body[t];
    for (size_t k = 0; k < config.n_modes; ++k) {
      add_row("n_" + std::to_string(k + 1), time,
              ob.values(long(k), long(k)).real(),
              ob.errors(long(k), long(k)), ex(long(k), long(k)).real());
    }
    add_row("Re<c1+ c2>", time, ob.values(0, 1).real(), ob.errors(0, 1),
            ex(0, 1).real());
    add_row("Im<c1+ c2>", time, ob.values(0, 1).imag(), ob.errors(0, 1),
            ex(0, 1).imag());

    if (!g1_pairs.empty()) {
      CorrelationResult res = g1(data.acc, setup.basis, g1_pairs, t);
      for (size_t p = 0; p < g1_pairs.size(); ++p) {
        cplx exval{0.0, 0.0};
        for (size_t j = 0; j < config.n_modes; ++j) {
          for (size_t k = 0; k < config.n_modes; ++k) {
            exval += ex(long(j), long(k)) *
                     setup.basis.modes[j][g1_pairs[p].first] *
                     setup.basis.modes[k][g1_pairs[p].second];
          }
        }
        char tag[64];
        std::snprintf(tag, sizeof tag, "(r=%.4g; s=%.4g)", res.coords[p][0],
                      res.coords[p][1]);
        add_row(std::string("Re G1") + tag, time, res.values[p].real(),
                res.errors[p], exval.real());
        add_row(std::string("Im G1") + tag, time, res.values[p].imag(),
                res.errors[p], exval.imag());
      }
    }
  }

  size_t pass = 0;
  for (const CompareRow& r : report.comparison) {
    if (std::abs(r.z) <= 3.0) ++pass;
  }
  report.comparison_pass_fraction =
      report.comparison.empty()
          ? 1.0
          : double(pass) / double(report.comparison.size());
  report.comparison_pass = report.comparison_pass_fraction >= 0.95;

  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);

  // exact-side artifacts in the stochastic schema, zero SE
  {
    std::string occ = csv_header("t,mode,re,im,se,n_used,diverged_excluded",
                                 report.config_hash, report.derivation_hash,
                                 "exact");
    for (uint32_t t = 0; t < n_times; ++t) {
      for (size_t k = 0; k < config.n_modes; ++k) {
        occ += format_double(config.observation_times[t]) + "," +
               std::to_string(k) + "," +
               format_double(oracle.one_body[t](long(k), long(k)).real()) +
               "," +
               format_double(oracle.one_body[t](long(k), long(k)).imag()) +
               ",0,0,0\n";
      }
    }
    write_text_file(config.output_dir + "/exact_occupations.csv", occ);
    report.files.push_back("exact_occupations.csv");
  }
  if (!g1_pairs.empty()) {
    std::string g1csv = csv_header("t,r,s,re,im,se,n_used,diverged_excluded",
                                   report.config_hash,
                                   report.derivation_hash, "exact");
    for (uint32_t t = 0; t < n_times; ++t) {
      CorrelationResult ex;
      ex.n_used = 0;
      for (size_t p = 0; p < g1_pairs.size(); ++p) {
        cplx val{0.0, 0.0};
        for (size_t j = 0; j < config.n_modes; ++j) {
          for (size_t k = 0; k < config.n_modes; ++k) {
            val += oracle.one_body[t](long(j), long(k)) *
                   setup.basis.modes[j][g1_pairs[p].first] *
                   setup.basis.modes[k][g1_pairs[p].second];
          }
        }
        ex.coords.push_back(
            {setup.basis.x_min + setup.basis.dx * double(g1_pairs[p].first),
             setup.basis.x_min + setup.basis.dx * double(g1_pairs[p].second)});
        ex.values.push_back(val);
        ex.errors.push_back(0.0);
      }
      append_correlation_rows(g1csv, ex, config.observation_times[t]);
    }
    write_text_file(config.output_dir + "/exact_g1.csv", g1csv);
    report.files.push_back("exact_g1.csv");
  }

  std::string csv = csv_header("observable,t,stochastic,se,exact,z",
                               report.config_hash, report.derivation_hash,
                               "compare");
  for (const CompareRow& r : report.comparison) {
    csv += r.observable + "," + format_double(r.time) + "," +
           format_double(r.stochastic) + "," + format_double(r.se) + "," +
           format_double(r.exact) + "," + format_double(r.z) + "\n";
  }
  write_text_file(config.output_dir + "/oracle_compare.csv", csv);
  report.files.push_back("oracle_compare.csv");

  write_outputs(config, setup, data.acc, report);
  attach_excitation(config, setup, data.acc, report);
  if (report.diverged_fraction > 0.5) {
    report.exit_code = 4;
  } else if (!report.comparison_pass) {
    report.exit_code = 1;
  }
  json rj = report.to_json();
  write_text_file(config.output_dir + "/report.json", rj.dump(2));
  return report;
}

std::vector<RunReport> run_sweep(const RunConfig& config) {
  if (!config.sweep) {
    throw ConfigError("run_sweep: config has no sweep block");
  }
  std::vector<RunReport> reports;
  std::string summary = "tilt,p_excited,se,visibility,visibility_se,"
                        "diverged_fraction\n";
  for (double tilt : config.sweep->tilt) {
    RunConfig one = config;
    one.sweep.reset();
    std::vector<Stage> stages = config.protocol.stages();
    for (Stage& s : stages) {
      if (s.b > 0.0) s.eps = tilt;
    }
    one.protocol = PotentialProtocol(config.protocol.sigma(), stages);
    char tag[32];
    std::snprintf(tag, sizeof tag, "tilt_%g", tilt);
    one.output_dir = config.output_dir + "/" + tag;
    RunReport rep = run_ensemble(one);
    summary += format_double(tilt) + ",";
    if (rep.excitation) {
      summary += format_double(rep.excitation->p_excited) + "," +
                 format_double(rep.excitation->p_excited_se) + ",";
    } else {
      summary += ",,";
    }
    if (rep.fringe_visibility) {
      summary += format_double(rep.fringe_visibility->value) + "," +
                 format_double(rep.fringe_visibility->se) + ",";
    } else {
      summary += ",,";
    }
    summary += format_double(rep.diverged_fraction) + "\n";
    reports.push_back(std::move(rep));
  }
  std::filesystem::create_directories(config.output_dir);
  write_text_file(config.output_dir + "/sweep.csv", summary);
  return reports;
}

}  // namespace twpp
