#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mcuq/chain.hpp"

namespace mcuq {

// Markov reward process with linear value features, plus every steady-state
// quantity the temporal-difference analysis needs.
struct MrpModel {
    ChainModel chain;
    Matrix features; // n x d, rows phi(s), each with ||phi(s)||_2 <= 1
    Vector rewards;  // r(s) in [0,1]
    double gamma = 0.0;

    Matrix sigma;       // E_mu[phi phi^T]
    Matrix steady_a;    // A = E[phi(s)(phi(s) - gamma phi(s'))^T]
    Vector steady_b;    // b = E[phi(s) r(s)]
    Vector theta_star;  // A^{-1} b
    double lambda0 = 0; // smallest eigenvalue of sigma
    double lambda_sigma = 0; // largest eigenvalue of sigma

    int dim() const { return static_cast<int>(features.cols()); }
};

// Polynomially decaying stepsizes eta_t = eta0 * t^{-alpha}, precomputed so
// the iteration loop never calls pow().
class EtaSchedule {
public:
    EtaSchedule(double eta0, double alpha, long horizon);
    double operator[](long t) const { return values_[static_cast<size_t>(t)]; }
    double eta0() const { return eta0_; }
    double alpha() const { return alpha_; }
    long horizon() const { return static_cast<long>(values_.size()) - 1; }

private:
    double eta0_, alpha_;
    std::vector<double> values_; // values_[t] = eta_t, t = 1..horizon; [0] unused
};

struct TdConfig {
    double eta0 = 0.0;   // 0 => default_eta0(model)
    double alpha = 0.75; // in (1/2, 1)
    long horizon = 0;    // T
    std::vector<long> checkpoints; // sorted times at which to record theta_bar
};

struct TdRunResult {
    Vector theta_final;               // theta_T
    Vector theta_bar;                 // (1/T) sum_{t=1..T} theta_t
    std::vector<long> checkpoints;    // echo of the recording schedule
    std::vector<Vector> theta_bar_at; // running average at each checkpoint
    std::vector<double> error_at;     // ||theta_bar_t - theta_star|| at each
};

// Validates features/rewards/discount against the chain and precomputes
// sigma, A, b, theta_star.  Throws InvalidModel for out-of-range input,
// DegenerateFeatures when lambda0 <= 1e-10, SingularA when A cannot be
// inverted reliably.
MrpModel build_mrp(const ChainModel& chain, const Matrix& features,
                   const Vector& rewards, double gamma);

// Largest default stepsize scale that keeps the iteration in the contract
// region: min(0.45 / lambda_sigma, 0.5).
double default_eta0(const MrpModel& model);

// One temporal-difference run with iterate averaging:
//   theta_t = theta_{t-1} - eta_t ((phi(s_{t-1}) - gamma phi(s_t))^T
//             theta_{t-1} - r(s_{t-1})) phi(s_{t-1}),  theta_0 = 0.
// The running mean is accumulated with compensated summation.  eta0 must lie
// in (0, 1/(2 lambda_sigma)) (InvalidModel otherwise); alpha in (1/2, 1).
// A NumericalOverflow guard trips if ||theta_t|| exceeds 1e6.
TdRunResult td_run(const MrpModel& model, const TdConfig& cfg,
                   uint64_t seed, uint64_t stream_id);

// Same iteration, but hands each checkpoint's running average to a callback
// instead of storing it; used by sweeps that only need summaries.
void td_run_collect(const MrpModel& model, const TdConfig& cfg,
                    uint64_t seed, uint64_t stream_id,
                    const std::function<void(long t, const Vector& theta_bar)>& on_checkpoint);

// ||theta_bar_t - theta_star|| along one run at the given checkpoints.
std::vector<double> td_error_trace(const MrpModel& model, const TdConfig& cfg,
                                   uint64_t seed, uint64_t stream_id);

} // namespace mcuq
