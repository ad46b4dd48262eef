#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"

#include "twpp/correlators.hpp"
#include "twpp/ffpe.hpp"
#include "twpp/lattice.hpp"

namespace twpp {

uint64_t fnv1a64(std::string_view data);
std::string hash_hex(uint64_t h);

// Derivation dump: the machine-derived drift/diffusion polynomials as
// (multi-index, coefficient) lists plus the truncation report. Diffable
// across versions.
nlohmann::json derivation_to_json(const SdeSystem& sde);

// Lattice debug dump: mode values, energies, h, and g4 in dense k,l,m,n
// order.
nlohmann::json basis_to_json(const ModeBasis& basis,
                             const CouplingTensors& tensors);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// CSV with a `# key=value ...` provenance comment line, then a header row.
std::string csv_header(const std::string& columns,
                       const std::string& config_hash,
                       const std::string& derivation_hash,
                       const std::string& method);

void append_correlation_rows(std::string& csv, const CorrelationResult& res,
                             double time);

std::string format_double(double v);

}  // namespace twpp
