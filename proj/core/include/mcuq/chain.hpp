#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "mcuq/rng.hpp"

namespace mcuq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Geometric mixing certificate: sup_s TV(P^t(s,.), mu) <= coeff * rate^t.
struct MixingBound {
    double coeff = 1.0; // m
    double rate = 0.5;  // rho, in (0,1)
};

// A validated finite-state Markov chain with everything downstream code
// needs precomputed: stationary law, contraction factor of the kernel on
// mean-zero functions in L2(mu), a geometric mixing envelope fitted from
// exact kernel powers, and sampling tables.
struct ChainModel {
    Matrix kernel;          // row-stochastic P, n x n
    Vector initial;         // nu, the law of s_0
    Vector stationary;      // mu, unique and strictly positive
    double lambda = 0.0;    // ||P - 1 mu^T||_{L2(mu)} operator norm
    MixingBound mixing;     // (m, rho)
    double density_p = 0.0; // p used for ||d nu / d mu||; inf encoded below
    bool density_p_inf = true;
    double density_norm = 1.0; // ||d nu / d mu||_{mu, p}
    Matrix row_cdf;            // cumulative kernel rows for inverse sampling

    int n_states() const { return static_cast<int>(kernel.rows()); }
};

struct Trajectory {
    std::vector<int> states; // s_0 .. s_T, so states.size() == length + 1
};

// Validates and analyzes a kernel.  Throws InvalidModel on malformed input,
// NotIrreducible / Periodic on structural failure, NoConvergence if the
// stationary solve stalls, SpectralGapViolation if no usable gap exists, and
// AbsoluteContinuityViolation if `initial` charges a null state of mu.
//
// density_p_inf selects the essential-sup norm for d nu / d mu; otherwise
// density_p must be > 1.  mixing_horizon bounds how many kernel powers the
// (m, rho) fit examines.
ChainModel build_chain(const Matrix& kernel,
                       const Vector& initial,
                       double density_p = 0.0,
                       bool density_p_inf = true,
                       int mixing_horizon = 512);

// Convenience: uniform initial law.
ChainModel build_chain(const Matrix& kernel,
                       double density_p = 0.0,
                       bool density_p_inf = true,
                       int mixing_horizon = 512);

// Unique stationary distribution of an (already validated) kernel: dense
// eigen-solve, power-iteration fallback, residual tolerance 1e-12,
// iteration cap 1e5.
Vector stationary_distribution(const Matrix& kernel);

// Operator norm of P - 1 mu^T on L2(mu):
// lambda = || D^{1/2} (P - 1 mu^T) D^{-1/2} ||_2 with D = diag(mu).
double spectral_expansion(const Matrix& kernel, const Vector& stationary);

// Fits m and rho from exact TV distances of kernel powers:
// rho = max_t TV_t^{1/t}, m = max_t TV_t / rho^t, over powers t where the
// worst-row TV is still above numerical noise.  A chain whose rows already
// equal mu gets the sentinel (m, rho) = (1e-12, 0.5).
MixingBound mixing_constants(const Matrix& kernel, const Vector& stationary,
                             int horizon = 512);

// Smallest t with sup_s TV(P^t(s,.), mu) <= eps, by exact powering.
// Throws HorizonExceeded past step_cap.
int mixing_time(const ChainModel& model, double eps, int step_cap = 100000);

// || d nu / d mu ||_{mu, p} = (sum_s mu(s) (nu(s)/mu(s))^p)^{1/p};
// p = inf gives max_s nu(s)/mu(s).
double density_norm(const Vector& nu, const Vector& mu, double p, bool p_inf);

// Samples s_0 ~ nu then `length` transitions.  Deterministic in
// (seed, stream_id) and independent of any threading at the call site.
Trajectory sample_trajectory(const ChainModel& model, int length,
                             uint64_t seed, uint64_t stream_id);

// Worst-row total variation distance to mu at a given power (t >= 1).
double tv_to_stationary(const Matrix& kernel_power_t, const Vector& stationary);

// Single draws against the model's sampling tables (inverse transform).
int sample_initial_state(const ChainModel& model, Rng& rng);
int sample_next_state(const ChainModel& model, int state, Rng& rng);

} // namespace mcuq
