#pragma once

#include <cstdint>
#include <vector>

#include "mcuq/chain.hpp"

namespace mcuq {

// ---- chain functionals as martingales -------------------------------------
//
// For a mean-zero function g on states, the centering solution
// U = (I - P + 1 mu^T)^{-1} g satisfies U - P U = g, and
// f(s, s') = U(s') - (P U)(s) is a martingale difference along the chain:
// partial sums of g and of f differ only by the boundary term
// (P U)(s_0) - (P U)(s_n).

struct MartingaleSpec {
    Matrix g;       // n x d, mu-mean-zero rows g(s)^T
    Matrix u;       // n x d, centering solution rows U(s)^T
    Matrix pu;      // n x d, rows (P U)(s)^T
    Matrix f_table; // n*n x d, row s*n+s' holds f(s, s')^T
    Matrix sigma_n; // E_{mu (x) P}[f f^T]
    double f_bound = 0.0; // F = max ||f(s,s')|| over kernel-positive pairs
    double m_bound = 0.0; // M = max ||sigma_n^{-1/2} f(s,s')|| over the same
    int dim() const { return static_cast<int>(g.cols()); }
};

// Builds the spec from per-state values.  Rows of g are centered to
// mu-mean zero first (the shift is exact).  Throws
// SingularFundamentalMatrix if the centering solve fails.
MartingaleSpec build_martingale(const ChainModel& chain, const Matrix& g_values);

// Same martingale expressed in coordinates where sigma_n is the identity.
// Throws SingularCovariance when sigma_n is numerically rank deficient.
MartingaleSpec normalize_martingale(const MartingaleSpec& spec);

// ---- closed-form tail bounds ------------------------------------------------

struct BernsteinBound {
    double term_sample = 0.0; // sqrt(Tr(sigma_n)/n * log(1/delta))
    double term_mixing = 0.0; // sqrt(q) F (1-lambda)^{-1/4} n^{-3/4} log^{3/4}(rho_nu/delta)
    double term_range = 0.0;  // F log(1/delta) / n
    double total = 0.0;
};

// Dimension-free tail level for ||(1/n) sum_i g(s_i)||, with unit constants
// on all three terms.  q is the conjugate of the chain's density exponent.
BernsteinBound bernstein_bound(const MartingaleSpec& spec,
                               const ChainModel& chain,
                               long n, double delta);

// Tail probability bound for ||(1/n) sum_i F_i(s_i)|| >= eps with symmetric
// matrix summands, ||F_i|| <= m_i:
//   2 d^{2 - pi/4} rho_nu exp( -((1-lambda)/(20 q)) (pi/4)^2 n^2 eps^2 / sum_i m_i^2 ).
double hoeffding_matrix_bound(const ChainModel& chain, long n, double eps,
                              double sum_m_sq, int dim);

// ---- Monte Carlo verification -------------------------------------------------

struct TailGridPoint {
    double level = 0.0;       // delta (scalar case) or eps (matrix case)
    double closed_form = 0.0; // bound evaluated at the grid point
    double empirical = 0.0;   // observed tail frequency
    double ci_lo = 0.0;       // Wilson interval for the tail frequency
    double ci_hi = 0.0;
    bool dominates = false; // CI upper edge consistent with the bound
};

struct BoundReport {
    std::vector<TailGridPoint> points;
    double c_star = 0.0; // scalar case: max_delta quantile_{1-delta} / bound(delta)
    long n = 0;
    int replications = 0;
    bool any_violation = false;
};

// Simulates `replications` independent partial sums of g along the chain
// (s_0 ~ nu) and compares ||sum/n|| tails against the Bernstein level at
// each delta.  Because the closed form carries unit constants it is reported
// with a calibration factor c_star rather than asserted; `dominates` per
// point is informational.
BoundReport verify_tail_bernstein(const ChainModel& chain,
                                  const MartingaleSpec& spec, long n,
                                  const std::vector<double>& delta_grid,
                                  int replications, uint64_t seed,
                                  int workers = 0);

// Simulates ||(1/n) sum F(s_i)|| for symmetric per-state matrices
// (mu-mean-zero; centered here if not) and checks the explicit tail bound
// dominates at every eps.  Violations at informative grid points
// (closed form < 1) set any_violation.
BoundReport verify_tail_hoeffding(const ChainModel& chain,
                                  const std::vector<Matrix>& f_per_state,
                                  long n, const std::vector<double>& eps_grid,
                                  int replications, uint64_t seed,
                                  int workers = 0);

// ---- martingale completion ------------------------------------------------------
//
// Extends one sampled martingale-difference path so the terminal predictable
// quadratic variation is exactly n (1 + kappa) sigma_n: stop at the exit
// time tau of the inflated budget, append deterministic-variance Rademacher
// pads along the remaining deficit's eigenvectors, then zero steps.

struct CompletionResult {
    long tau = 0;    // last step kept from the original path
    long n_pads = 0; // number of Rademacher pad steps
    long big_n = 0;  // deterministic completed length
    double kappa = 0.0;
    Matrix terminal_qv;  // predictable QV of the completed path
    Vector original_sum; // sum of f along the sampled path (all n steps)
    Vector completed_sum;
    Matrix original_qv;      // sum of per-step conditional covariances, all n
    double max_pad_norm_sq = 0.0;
};

// kappa <= 0 selects the closed form
//   (M^2 / sqrt(n)) sqrt((40 q / (1 - lambda)) log(2 d n rho_nu));
// m_cap <= 0 selects the spec's increment sup-norm bound F.
CompletionResult complete_martingale(const ChainModel& chain,
                                     const MartingaleSpec& spec, long n,
                                     double kappa, double m_cap,
                                     uint64_t seed, uint64_t stream_id);

// reps x d matrix of scaled partial sums S_n / sqrt(n) of the martingale
// differences, one independent trajectory per row (stream_id = base + row).
Matrix partial_sum_samples(const ChainModel& chain, const MartingaleSpec& spec,
                           long n, int replications, uint64_t seed,
                           uint64_t base_stream, int workers = 0);

} // namespace mcuq
