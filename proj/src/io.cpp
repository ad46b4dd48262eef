#include "twpp/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace twpp {

uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

nlohmann::json poly_to_json(const Poly& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [mono, c] : p.terms()) {
    nlohmann::json idx = nlohmann::json::array();
    for (const auto& [var, exp] : mono.factors()) {
      idx.push_back({var, exp});
    }
    terms.push_back({{"monomial", idx}, {"re", c.real()}, {"im", c.imag()}});
  }
  return terms;
}

nlohmann::json multi_to_json(const MultiIndex& m) {
  nlohmann::json idx = nlohmann::json::array();
  for (const auto& [var, exp] : m.factors()) idx.push_back({var, exp});
  return idx;
}

}  // namespace

nlohmann::json derivation_to_json(const SdeSystem& sde) {
  nlohmann::json j;
  j["n_modes"] = sde.n_modes;
  j["n_vars"] = sde.n_vars;
  j["variable_order"] = "alpha_1..alpha_n, alpha_1^+..alpha_n^+";
  nlohmann::json drift = nlohmann::json::array();
  for (const Poly& p : sde.drift) drift.push_back(poly_to_json(p));
  j["drift"] = std::move(drift);
  nlohmann::json diff = nlohmann::json::array();
  for (const auto& [key, p] : sde.diffusion.entries()) {
    diff.push_back({{"row", key.first},
                    {"col", key.second},
                    {"poly", poly_to_json(p)}});
  }
  j["diffusion"] = std::move(diff);
  j["noise_channels"] = sde.noise.n_channels();
  nlohmann::json report = nlohmann::json::array();
  for (const auto& t : sde.report.dropped) {
    report.push_back({{"derivative", multi_to_json(t.deriv)},
                      {"monomial", multi_to_json(t.mono)},
                      {"re", t.coeff.real()},
                      {"im", t.coeff.imag()}});
  }
  j["truncation_report"] = std::move(report);
  j["truncation_max_abs_coeff"] = sde.report.max_abs_coeff();
  return j;
}

nlohmann::json basis_to_json(const ModeBasis& basis,
                             const CouplingTensors& tensors) {
  nlohmann::json j;
  j["n_modes"] = basis.n_modes;
  j["n_condensate"] = basis.n_condensate;
  j["dx"] = basis.dx;
  j["energies"] = basis.energies;
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& phi : basis.modes) modes.push_back(phi);
  j["modes"] = std::move(modes);
  nlohmann::json h = nlohmann::json::array();
  for (size_t k = 0; k < tensors.n_modes; ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (size_t l = 0; l < tensors.n_modes; ++l) {
      row.push_back({tensors.h_at(k, l).real(), tensors.h_at(k, l).imag()});
    }
    h.push_back(std::move(row));
  }
  j["h"] = std::move(h);
  j["g_strength"] = tensors.g_strength;
  j["g4_index_order"] = "k,l,m,n dense";
  j["g4"] = tensors.g4;
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << content;
  if (!f) throw NumericError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string csv_header(const std::string& columns,
                       const std::string& config_hash,
                       const std::string& derivation_hash,
                       const std::string& method) {
  std::string s = "# config_hash=" + config_hash +
                  " derivation_hash=" + derivation_hash + " method=" + method +
                  "\n";
  s += columns;
  s += "\n";
  return s;
}

void append_correlation_rows(std::string& csv, const CorrelationResult& res,
                             double time) {
  for (size_t i = 0; i < res.values.size(); ++i) {
    csv += format_double(time);
    csv += ",";
    csv += format_double(res.coords[i][0]);
    csv += ",";
    csv += format_double(res.coords[i][1]);
    csv += ",";
    csv += format_double(res.values[i].real());
    csv += ",";
    csv += format_double(res.values[i].imag());
    csv += ",";
    csv += format_double(res.errors[i]);
    csv += ",";
    csv += std::to_string(res.n_used);
    csv += ",";
    csv += std::to_string(res.diverged_excluded);
    csv += "\n";
  }
}

}  // namespace twpp
