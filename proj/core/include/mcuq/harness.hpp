#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcuq/covariance.hpp"
#include "mcuq/mrp.hpp"

namespace mcuq {

// ---- random model generation -------------------------------------------------

// Garnet-style generator: sparse Dirichlet kernel rows with uniform
// smoothing, unit-ball feature rows, uniform rewards.
struct RandomMrpSpec {
    int n_states = 50;
    int branching = 5; // successors per kernel row before smoothing
    int dim = 4;
    double gamma = 0.9;
    double min_lambda0 = 1e-3; // feature-gram curvature floor
    double eps_mix = 1e-3;     // uniform smoothing mass per row
    uint64_t seed = 0;
};

// Draws until the model passes every MrpModel invariant (cap 100 attempts,
// then GenerationExhausted).  Deterministic in spec.seed.
MrpModel generate_random_mrp(const RandomMrpSpec& spec);

// ---- replication sweeps --------------------------------------------------------

// ||theta_bar_t - theta*|| for `replications` independent runs, recorded at
// each horizon in t_grid (one run per replication, horizon = max t_grid).
// result[i] holds the errors at t_grid[i] across replications, indexed by
// stream id, so output is independent of the worker count.
std::vector<std::vector<double>> td_error_sweep(const MrpModel& model,
                                                const TdConfig& base,
                                                const std::vector<long>& t_grid,
                                                int replications, uint64_t seed,
                                                int workers = 0);

// Running-average iterates themselves: samples[i] is replications x d with
// row r = theta_bar at t_grid[i] for stream r.
std::vector<Matrix> td_average_sweep(const MrpModel& model, const TdConfig& base,
                                     const std::vector<long>& t_grid,
                                     int replications, uint64_t seed,
                                     int workers = 0);

// ---- coverage ---------------------------------------------------------------------

struct CoverageRow {
    long horizon = 0;
    double nominal = 0.0;
    double coverage = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool below_threshold = false; // horizon below the curvature threshold
};

// Empirical coverage of the exact-asymptotic-covariance confidence
// ellipsoids {theta: T (theta_bar - theta)^T Lambda*^{-1} (theta_bar - theta)
// <= chi2_{d, nominal}} across horizons and nominal levels.
// Throws DegenerateGamma when the noise covariance is rank deficient.
std::vector<CoverageRow> coverage_table(const MrpModel& model,
                                        const Matrix& gamma_tilde_mat,
                                        const Matrix& lambda_star_mat,
                                        const TdConfig& base,
                                        const std::vector<long>& t_grid,
                                        const std::vector<double>& nominals,
                                        int replications, uint64_t seed,
                                        int workers = 0);

// ---- experiment front door -----------------------------------------------------

struct RunOverrides {
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
};

struct ExperimentOutcome {
    int exit_code = 0; // 0 pass, 2 strict bound violated
    std::string summary;
    std::string report_path;
    std::vector<std::string> table_paths;
};

// Parses an experiment config document, dispatches to the matching
// pipeline, writes report JSON + CSV tables atomically under the output
// directory, and returns a one-paragraph summary.  Throws on invalid
// configs; module errors propagate with experiment context attached.
ExperimentOutcome run_experiment(const std::string& config_text,
                                 const RunOverrides& overrides = {});

// Loads a model from the "model" stanza of a config: either an explicit MRP
// spec or {"random_mrp": {...}}.
MrpModel model_from_config_json(const std::string& model_json_text);

} // namespace mcuq
