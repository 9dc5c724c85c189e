#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcuq/covariance.hpp"
#include "mcuq/mrp.hpp"

namespace mcuq {

// JSON ingestion/emission for model specs and reports, kept string-based so
// the public headers stay parser-agnostic.  All document schemas carry
// "schema": 1.

// {"kernel": [[...]], "initial": [...], "density_p": number|"inf"}
// initial defaults to uniform; density_p defaults to "inf".
ChainModel chain_from_json(const std::string& json_text);
ChainModel chain_from_file(const std::string& path);

// {"chain": {...}, "features": [[...]], "rewards": [...], "gamma": g}
// or {"random_mrp": {...}} handled by the harness; this parser takes the
// explicit form.
MrpModel mrp_from_json(const std::string& json_text);
MrpModel mrp_from_file(const std::string& path);

// {"schema","stationary","lambda","m","rho","tmix":{"0.25":t,...}}
std::string chain_analysis_json(const ChainModel& model,
                                const std::vector<double>& tmix_eps = {0.25, 0.1,
                                                                       0.05, 0.01});

// {"schema","gamma_tilde","lambda_star","lambda_T":{"1024":[[..]],...},
//  "lyap_X","truncation_K"}
std::string covariance_set_json(const CovarianceSet& set);

// Canonical content hash of a JSON document: FNV-1a over the sorted-key,
// whitespace-free dump.  Stable across key order and formatting.
uint64_t config_hash(const std::string& json_text);

// Writes via temp file + rename in the target directory, so readers never
// observe a partially written file at the final path.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

// Deterministic float formatting for reports (shortest round-trip form).
std::string format_double(double x);

} // namespace mcuq
