#include "mcuq/mrp.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "mcuq/errors.hpp"
#include "mcuq/stats.hpp"

namespace mcuq {

namespace {

constexpr double kOverflowNorm = 1e6;
constexpr long kOverflowCheckStride = 1024;

void check_spectral_sandwich(const MrpModel& m) {
    // A + A^T must sit between 2(1-gamma) Sigma and 2(1+gamma) Sigma.
    const Matrix sym = m.steady_a + m.steady_a.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> lo(sym - 2.0 * (1.0 - m.gamma) * m.sigma);
    Eigen::SelfAdjointEigenSolver<Matrix> hi(2.0 * (1.0 + m.gamma) * m.sigma - sym);
    if (lo.eigenvalues().minCoeff() < -1e-10 || hi.eigenvalues().minCoeff() < -1e-10)
        throw Error("steady-state matrix violates its curvature sandwich");
}

} // namespace

MrpModel build_mrp(const ChainModel& chain, const Matrix& features,
                   const Vector& rewards, double gamma) {
    const auto n = chain.kernel.rows();
    if (features.rows() != n) throw InvalidModel("feature matrix must have one row per state");
    if (features.cols() < 1) throw InvalidModel("feature dimension must be positive");
    if (rewards.size() != n) throw InvalidModel("rewards must have one entry per state");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidModel("discount must lie in [0,1)");
    for (Eigen::Index s = 0; s < n; ++s) {
        if (features.row(s).norm() > 1.0 + 1e-12)
            throw InvalidModel("feature rows must have norm at most 1");
        if (rewards[s] < 0.0 || rewards[s] > 1.0)
            throw InvalidModel("rewards must lie in [0,1]");
    }

    MrpModel m;
    m.chain = chain;
    m.features = features;
    m.rewards = rewards;
    m.gamma = gamma;

    const Matrix weighted = chain.stationary.asDiagonal() * features; // D Phi
    m.sigma = features.transpose() * weighted;
    m.sigma = 0.5 * (m.sigma + m.sigma.transpose());
    m.steady_a = features.transpose() *
                 (chain.stationary.asDiagonal() *
                  (features - gamma * (chain.kernel * features)));
    m.steady_b = features.transpose() * (chain.stationary.asDiagonal() * rewards);

    Eigen::SelfAdjointEigenSolver<Matrix> es(m.sigma);
    m.lambda0 = es.eigenvalues().minCoeff();
    m.lambda_sigma = es.eigenvalues().maxCoeff();
    if (m.lambda0 <= 1e-10)
        throw DegenerateFeatures("feature gram matrix is numerically rank deficient");

    Eigen::FullPivLU<Matrix> lu(m.steady_a);
    if (!lu.isInvertible()) throw SingularA("steady-state matrix is not invertible");
    m.theta_star = lu.solve(m.steady_b);
    const double resid = (m.steady_a * m.theta_star - m.steady_b).norm();
    if (resid > 1e-10 * std::max(1.0, m.steady_b.norm()))
        throw SingularA("fixed point solve residual exceeds 1e-10");

    check_spectral_sandwich(m);
    if (m.theta_star.norm() > 1.0 / (m.lambda0 * (1.0 - gamma)) + 1e-10)
        throw Error("fixed point exceeds its certified norm bound");
    return m;
}

double default_eta0(const MrpModel& model) {
    return std::min(0.45 / model.lambda_sigma, 0.5);
}

EtaSchedule::EtaSchedule(double eta0, double alpha, long horizon)
    : eta0_(eta0), alpha_(alpha) {
    if (horizon < 1) throw InvalidModel("stepsize horizon must be >= 1");
    values_.resize(static_cast<size_t>(horizon) + 1);
    values_[0] = 0.0;
    for (long t = 1; t <= horizon; ++t)
        values_[static_cast<size_t>(t)] =
            eta0 * std::pow(static_cast<double>(t), -alpha);
}

namespace {

struct TdLoopConfig {
    double eta0;
    double alpha;
    long horizon;
    std::vector<long> checkpoints; // sorted, unique, within [1, horizon]
};

TdLoopConfig prepare_config(const MrpModel& model, const TdConfig& cfg) {
    TdLoopConfig out;
    out.eta0 = cfg.eta0 > 0.0 ? cfg.eta0 : default_eta0(model);
    if (out.eta0 > 1.0 / (2.0 * model.lambda_sigma) + 1e-15)
        throw InvalidModel("eta0 outside the contraction range (0, 1/(2 lambdaSigma)]");
    out.alpha = cfg.alpha;
    if (!(out.alpha > 0.5 && out.alpha < 1.0))
        throw InvalidModel("stepsize exponent must lie in (1/2, 1)");
    out.horizon = cfg.horizon;
    if (out.horizon < 1) throw InvalidModel("horizon must be >= 1");
    out.checkpoints = cfg.checkpoints;
    std::sort(out.checkpoints.begin(), out.checkpoints.end());
    out.checkpoints.erase(std::unique(out.checkpoints.begin(), out.checkpoints.end()),
                          out.checkpoints.end());
    for (long t : out.checkpoints)
        if (t < 1 || t > out.horizon)
            throw InvalidModel("checkpoints must lie within [1, horizon]");
    return out;
}

// The TD iteration with running-mean averaging.  Row-major scratch copies of
// the features and sampling tables keep the per-step work contiguous;
// compensated summation keeps 1e6-step averages at full double precision.
template <typename Callback>
void td_core(const MrpModel& model, const TdLoopConfig& cfg, uint64_t seed,
             uint64_t stream_id, Vector* theta_out, Vector* mean_out,
             Callback&& on_checkpoint) {
    const int n = model.chain.n_states();
    const int d = model.dim();
    const double gamma = model.gamma;

    std::vector<double> feat(static_cast<size_t>(n) * static_cast<size_t>(d));
    for (int s = 0; s < n; ++s)
        for (int k = 0; k < d; ++k)
            feat[static_cast<size_t>(s) * static_cast<size_t>(d) + static_cast<size_t>(k)] =
                model.features(s, k);
    std::vector<double> cdf(static_cast<size_t>(n) * static_cast<size_t>(n));
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t)
            cdf[static_cast<size_t>(s) * static_cast<size_t>(n) + static_cast<size_t>(t)] =
                model.chain.row_cdf(s, t);
    std::vector<double> rew(static_cast<size_t>(n));
    for (int s = 0; s < n; ++s) rew[static_cast<size_t>(s)] = model.rewards[s];

    EtaSchedule eta(cfg.eta0, cfg.alpha, cfg.horizon);

    Rng rng(seed, stream_id);
    int s = n - 1;
    {
        const double u = rng.uniform();
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += model.chain.initial[i];
            if (u < acc) {
                s = i;
                break;
            }
        }
    }

    std::vector<double> theta(static_cast<size_t>(d), 0.0);
    std::vector<double> sum(static_cast<size_t>(d), 0.0);
    std::vector<double> comp(static_cast<size_t>(d), 0.0);

    size_t next_cp = 0;
    Vector mean_buffer(d);
    for (long t = 1; t <= cfg.horizon; ++t) {
        const double u = rng.uniform();
        const double* cdf_row = &cdf[static_cast<size_t>(s) * static_cast<size_t>(n)];
        int s2 = 0;
        while (u >= cdf_row[s2]) ++s2;

        const double* phi = &feat[static_cast<size_t>(s) * static_cast<size_t>(d)];
        const double* phi2 = &feat[static_cast<size_t>(s2) * static_cast<size_t>(d)];
        double v = 0.0, v2 = 0.0;
        for (int k = 0; k < d; ++k) {
            v += phi[k] * theta[static_cast<size_t>(k)];
            v2 += phi2[k] * theta[static_cast<size_t>(k)];
        }
        const double step = eta[t] * (v - gamma * v2 - rew[static_cast<size_t>(s)]);
        for (int k = 0; k < d; ++k) theta[static_cast<size_t>(k)] -= step * phi[k];

        for (int k = 0; k < d; ++k) {
            const double y = theta[static_cast<size_t>(k)] - comp[static_cast<size_t>(k)];
            const double tt = sum[static_cast<size_t>(k)] + y;
            comp[static_cast<size_t>(k)] = (tt - sum[static_cast<size_t>(k)]) - y;
            sum[static_cast<size_t>(k)] = tt;
        }
        s = s2;

        if ((t & (kOverflowCheckStride - 1)) == 0) {
            double norm_sq = 0.0;
            for (int k = 0; k < d; ++k)
                norm_sq += theta[static_cast<size_t>(k)] * theta[static_cast<size_t>(k)];
            if (norm_sq > kOverflowNorm * kOverflowNorm)
                throw NumericalOverflow("iterate norm exceeded 1e6");
        }
        if (next_cp < cfg.checkpoints.size() && t == cfg.checkpoints[next_cp]) {
            for (int k = 0; k < d; ++k)
                mean_buffer[k] = sum[static_cast<size_t>(k)] / static_cast<double>(t);
            on_checkpoint(t, mean_buffer);
            ++next_cp;
        }
    }

    if (theta_out) {
        theta_out->resize(d);
        for (int k = 0; k < d; ++k) (*theta_out)[k] = theta[static_cast<size_t>(k)];
    }
    if (mean_out) {
        mean_out->resize(d);
        for (int k = 0; k < d; ++k)
            (*mean_out)[k] = sum[static_cast<size_t>(k)] / static_cast<double>(cfg.horizon);
    }
}

} // namespace

TdRunResult td_run(const MrpModel& model, const TdConfig& cfg, uint64_t seed,
                   uint64_t stream_id) {
    const TdLoopConfig loop = prepare_config(model, cfg);
    TdRunResult result;
    result.checkpoints = loop.checkpoints;
    result.theta_bar_at.reserve(loop.checkpoints.size());
    result.error_at.reserve(loop.checkpoints.size());
    td_core(model, loop, seed, stream_id, &result.theta_final, &result.theta_bar,
            [&](long /*t*/, const Vector& mean) {
                result.theta_bar_at.push_back(mean);
                result.error_at.push_back((mean - model.theta_star).norm());
            });
    return result;
}

void td_run_collect(const MrpModel& model, const TdConfig& cfg, uint64_t seed,
                    uint64_t stream_id,
                    const std::function<void(long, const Vector&)>& on_checkpoint) {
    const TdLoopConfig loop = prepare_config(model, cfg);
    td_core(model, loop, seed, stream_id, nullptr, nullptr,
            [&](long t, const Vector& mean) { on_checkpoint(t, mean); });
}

std::vector<double> td_error_trace(const MrpModel& model, const TdConfig& cfg,
                                   uint64_t seed, uint64_t stream_id) {
    TdConfig with_final = cfg;
    if (std::find(with_final.checkpoints.begin(), with_final.checkpoints.end(),
                  cfg.horizon) == with_final.checkpoints.end())
        with_final.checkpoints.push_back(cfg.horizon);
    std::vector<double> errors;
    td_run_collect(model, with_final, seed, stream_id,
                   [&](long /*t*/, const Vector& mean) {
                       errors.push_back((mean - model.theta_star).norm());
                   });
    return errors;
}

} // namespace mcuq
