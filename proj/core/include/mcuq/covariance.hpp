#pragma once

#include <cstdint>
#include <vector>

#include "mcuq/mrp.hpp"

namespace mcuq {

// ---- long-run noise covariance -------------------------------------------
//
// The TD noise at the fixed point is e(s, s') = (A(s,s') theta* - b(s)),
// a function of one stationary transition.  Its long-run covariance
//   Gamma = E[e_1 e_1^T] + sum_{l>=1} E[e_1 e_{1+l}^T + e_{1+l} e_1^T]
// is computed exactly by iterating the kernel on the conditional mean of e,
// truncated once the geometric mixing envelope certifies the remaining tail
// is below tol.

struct GammaResult {
    Matrix gamma;     // d x d, symmetric PSD
    int truncation_k; // number of cross-covariance lags included
};

// tol <= 0 selects the default 1e-12 * (2 ||theta*|| + 1)^2.
GammaResult gamma_tilde(const MrpModel& model, double tol = 0.0,
                        int lag_cap = 1000000);

// Asymptotic covariance of the averaged iterate: A^{-1} Gamma A^{-T},
// computed via two linear solves (never an explicit inverse).
Matrix lambda_star(const MrpModel& model, const Matrix& gamma);

// ---- finite-horizon covariance ---------------------------------------------
//
// Q_t = eta_t sum_{j=t..T} prod_{k=t+1..j} (I - eta_k A), evaluated for all
// t by one backward recursion:
//   Q_T = eta_T I,  Q_t = eta_t I + (eta_t / eta_{t+1}) (I - eta_{t+1} A) Q_{t+1}.
// Lambda_T = (1/T) sum_t Q_t Gamma Q_t^T.

// All Q_t, t = 1..T (result[t-1] = Q_t).  Refuses to materialize more than
// budget_bytes (BudgetExceeded); use lambda_T_accumulate for large T.
std::vector<Matrix> q_family(const Matrix& steady_a, double eta0, double alpha,
                             long horizon,
                             size_t budget_bytes = size_t(1) << 31);

// (1/T) sum_t Q_t Gamma Q_t^T without storing the family.
Matrix lambda_T_accumulate(const Matrix& steady_a, const Matrix& gamma,
                           double eta0, double alpha, long horizon);

// Smallest horizon past which Lambda_T's curvature is guaranteed to be at
// least half of Gamma's smallest eigenvalue:
//   4 (2 / ((1-gamma) lambda0 eta0))^{1/(1-alpha)} (1-alpha)^{alpha/(1-alpha)}
//     * GammaFn(1/(1-alpha)) * cond(Gamma).
double lambda_T_threshold(const MrpModel& model, const Matrix& gamma,
                          double eta0, double alpha);

// ---- Lyapunov equation -------------------------------------------------------
//
// Solves A X + X A^T = E by the dense Kronecker route
// (I (+) A + A (+) I) vec(X) = vec(E).  Residual must close to 1e-10 ||E||;
// IllConditioned otherwise (or when the Kronecker matrix's condition number
// exceeds 1e12, checked exactly for d <= 32).
Matrix solve_lyapunov(const Matrix& steady_a, const Matrix& rhs);

// First-order finite-horizon correction X(Lambda*):
// eta0 (A X + X A^T) = Lambda*.
Matrix lyapunov_correction(const Matrix& steady_a, const Matrix& lambda_star_mat,
                           double eta0);

// ---- transition-level decomposition -----------------------------------------
//
// Solves the kernel's centering equation for the TD noise: w is the unique
// mu-mean-zero solution of (I - P) w = ebar on states (via the fundamental
// matrix I - P + 1 mu^T), and m(s, s') = e(s, s') + w(s') - ebar(s) - (P w)(s)
// is a martingale difference whose one-step covariance under the stationary
// transition law equals Gamma exactly.

struct PoissonTd {
    Matrix w;        // n x d, column-space solution per feature coordinate
    Matrix e_table;  // n*n x d, row s*n+s' holds e(s,s')^T
    Matrix m_table;  // n*n x d, row s*n+s' holds m(s,s')^T
    Matrix u_table;  // n*n x d, row s*n+s' holds U(s,s')^T = e(s,s') + w(s')
    double u_bound;  // certified sup-norm bound (2||theta*||+1)(1 + m/(1-rho))
};

PoissonTd poisson_td(const MrpModel& model);

// E[m m^T] under mu (x) P, restricted to transitions with positive kernel mass.
Matrix covariance_of_m(const MrpModel& model, const PoissonTd& poisson);

// ---- bundled exact covariance set ---------------------------------------------

struct CovarianceSet {
    GammaResult gamma;
    Matrix lambda_star_mat;
    Matrix lyap_x; // X with eta0 (A X + X A^T) = Lambda*
    std::vector<long> horizons;
    std::vector<Matrix> lambda_T; // one per horizon
    double eta0 = 0.0;
    double alpha = 0.0;
};

CovarianceSet covariance_set(const MrpModel& model, double eta0, double alpha,
                             const std::vector<long>& horizons);

} // namespace mcuq
