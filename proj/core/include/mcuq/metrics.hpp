#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mcuq/chain.hpp"

namespace mcuq {

// ---- Gaussian total variation sandwich ---------------------------------------
//
// For N(mu, S1) vs N(mu, S2) with discrepancy Delta = ||S1^{-1/2} S2 S1^{-1/2} - I||_F:
//   min(1, Delta / 100) <= TV <= (3/2) Delta.
struct TvBounds {
    double lower = 0.0;
    double upper = 0.0;
    double delta = 0.0;
};

TvBounds gaussian_tv_bounds(const Matrix& cov1, const Matrix& cov2);

// ---- empirical-vs-Gaussian discrepancies -----------------------------------------

struct GaussianLaw {
    Vector mean;
    Matrix cov;
};

struct DiscrepancyEstimate {
    double value = 0.0;
    int n_directions = 0;
    int n_thresholds = 0;
};

// sup over sampled directions u and thresholds tau of
// | P_hat(u^T X <= tau) - Phi_{u}(tau) |, the half-space distance between an
// empirical cloud and an exact Gaussian law.  Thresholds are equispaced
// quantiles of the pooled projected data.  Deterministic in (seed, stream).
DiscrepancyEstimate halfspace_discrepancy(const Matrix& samples,
                                          const GaussianLaw& law,
                                          int n_directions, uint64_t seed,
                                          uint64_t stream_id = 0,
                                          int n_thresholds = 512);

// Exact empirical 1-Wasserstein distance between two scalar samples
// (sorted-difference form).  Unequal sizes are reconciled by seeded
// resampling with replacement up to the larger size.
double wasserstein_1d(std::vector<double> a, std::vector<double> b,
                      uint64_t seed = 0);

// Average over random directions of the 1-D Wasserstein distance between
// projected samples and an equal-size fresh Gaussian draw.
double sliced_wasserstein(const Matrix& samples, const GaussianLaw& law,
                          int n_directions, uint64_t seed,
                          uint64_t stream_id = 0);

// ---- rate fitting -----------------------------------------------------------------

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_lo = 0.0; // bootstrap 95% interval on the slope
    double ci_hi = 0.0;
    double r2 = 0.0;
};

// Least squares on (log T, log stat).  Needs >= 4 strictly increasing T
// values and positive statistics (DegenerateGrid otherwise).  The interval
// comes from a residual bootstrap.
RateFit fit_rate(const std::vector<long>& horizon, const std::vector<double>& stat,
                 int n_boot = 200, uint64_t seed = 0);

// Same, but the statistic at each T is the median of replicate values and
// the interval comes from bootstrapping replicates within each T.
RateFit fit_rate_replicates(const std::vector<long>& horizon,
                            const std::vector<std::vector<double>>& replicates,
                            int n_boot = 200, uint64_t seed = 0);

} // namespace mcuq
