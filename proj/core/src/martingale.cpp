#include "mcuq/martingale.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>

#include "mcuq/errors.hpp"
#include "mcuq/parallel.hpp"
#include "mcuq/stats.hpp"

namespace mcuq {

namespace {

double conjugate_exponent(const ChainModel& chain) {
    if (chain.density_p_inf) return 1.0;
    return chain.density_p / (chain.density_p - 1.0);
}

double spectral_norm_sym(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return std::max(std::abs(es.eigenvalues().minCoeff()),
                    std::abs(es.eigenvalues().maxCoeff()));
}

// Inverse square root on the positive eigenspace; rank returned through
// is_full_rank.  Increments always live in range(sigma_n), so the
// pseudo-inverse form is exact for norm computations.
Matrix pinv_sqrt(const Matrix& sigma, bool* is_full_rank = nullptr) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
    const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
    const double floor = 1e-14 * std::max(top, 1e-300);
    Vector inv = Vector::Zero(sigma.rows());
    bool full = true;
    for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
        if (es.eigenvalues()[i] > floor)
            inv[i] = 1.0 / std::sqrt(es.eigenvalues()[i]);
        else
            full = false;
    }
    if (is_full_rank) *is_full_rank = full;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace

MartingaleSpec build_martingale(const ChainModel& chain, const Matrix& g_values) {
    const int n = chain.n_states();
    if (g_values.rows() != n)
        throw InvalidModel("per-state function must have one row per state");
    const int d = static_cast<int>(g_values.cols());

    MartingaleSpec spec;
    spec.g = g_values;
    const Vector mean = g_values.transpose() * chain.stationary;
    if (mean.cwiseAbs().maxCoeff() > 1e-12)
        std::fprintf(stderr,
                     "note: centering per-state function (stationary mean %.3e)\n",
                     mean.cwiseAbs().maxCoeff());
    spec.g.noalias() -= Vector::Ones(n) * mean.transpose();

    Matrix fundamental = Matrix::Identity(n, n) - chain.kernel +
                         Vector::Ones(n) * chain.stationary.transpose();
    Eigen::FullPivLU<Matrix> lu(fundamental);
    if (!lu.isInvertible())
        throw SingularFundamentalMatrix("centering solve matrix is not invertible");
    spec.u = lu.solve(spec.g);
    spec.pu = chain.kernel * spec.u;

    spec.f_table = Matrix(n * n, d);
    spec.sigma_n = Matrix::Zero(d, d);
    spec.f_bound = 0.0;
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t) {
            spec.f_table.row(s * n + t) = spec.u.row(t) - spec.pu.row(s);
            const double w = chain.stationary[s] * chain.kernel(s, t);
            if (w > 0.0) {
                spec.sigma_n.noalias() += w * spec.f_table.row(s * n + t).transpose() *
                                          spec.f_table.row(s * n + t);
                spec.f_bound = std::max(spec.f_bound, spec.f_table.row(s * n + t).norm());
            }
        }
    spec.sigma_n = 0.5 * (spec.sigma_n + spec.sigma_n.transpose());

    const Matrix whiten = pinv_sqrt(spec.sigma_n);
    spec.m_bound = 0.0;
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t)
            if (chain.kernel(s, t) > 0.0)
                spec.m_bound = std::max(
                    spec.m_bound, (whiten * spec.f_table.row(s * n + t).transpose()).norm());
    return spec;
}

MartingaleSpec normalize_martingale(const MartingaleSpec& spec) {
    bool full_rank = false;
    const Matrix whiten = pinv_sqrt(spec.sigma_n, &full_rank);
    if (!full_rank)
        throw SingularCovariance("stationary increment covariance is rank deficient");
    MartingaleSpec out = spec;
    out.g = spec.g * whiten; // rows become (W g(s))^T since W is symmetric
    out.u = spec.u * whiten;
    out.pu = spec.pu * whiten;
    out.f_table = spec.f_table * whiten;
    out.sigma_n = whiten * spec.sigma_n * whiten;
    out.sigma_n = 0.5 * (out.sigma_n + out.sigma_n.transpose());
    out.f_bound = 0.0;
    const int n = static_cast<int>(spec.u.rows());
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t)
            out.f_bound = std::max(out.f_bound, out.f_table.row(s * n + t).norm());
    out.m_bound = spec.m_bound; // sigma-normalized bound is coordinate-free
    return out;
}

BernsteinBound bernstein_bound(const MartingaleSpec& spec, const ChainModel& chain,
                               long n, double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidDelta("delta must lie in (0,1)");
    if (n < 1) throw InvalidModel("sample count must be >= 1");
    const double q = conjugate_exponent(chain);
    const double log_inv = std::log(1.0 / delta);
    const double nn = static_cast<double>(n);
    BernsteinBound b;
    b.term_sample = std::sqrt(spec.sigma_n.trace() / nn * log_inv);
    b.term_mixing = std::sqrt(q) * spec.f_bound /
                    (std::pow(1.0 - chain.lambda, 0.25) * std::pow(nn, 0.75)) *
                    std::pow(std::log(chain.density_norm / delta), 0.75);
    b.term_range = spec.f_bound / nn * log_inv;
    b.total = b.term_sample + b.term_mixing + b.term_range;
    return b;
}

double hoeffding_matrix_bound(const ChainModel& chain, long n, double eps,
                              double sum_m_sq, int dim) {
    if (!(eps >= 0.0)) throw InvalidModel("eps must be nonnegative");
    const double q = conjugate_exponent(chain);
    const double prefactor = 2.0 * std::pow(static_cast<double>(dim), 2.0 - M_PI / 4.0) *
                             chain.density_norm;
    if (sum_m_sq <= 0.0) return eps > 0.0 ? 0.0 : prefactor;
    const double quarter_pi_sq = (M_PI / 4.0) * (M_PI / 4.0);
    const double nn = static_cast<double>(n);
    const double exponent =
        -((1.0 - chain.lambda) / (20.0 * q)) * quarter_pi_sq * nn * nn * eps * eps /
        sum_m_sq;
    return prefactor * std::exp(exponent);
}

BoundReport verify_tail_bernstein(const ChainModel& chain, const MartingaleSpec& spec,
                                  long n, const std::vector<double>& delta_grid,
                                  int replications, uint64_t seed, int workers) {
    if (replications < 100) throw InvalidModel("tail verification needs >= 100 replications");
    std::vector<double> norms(static_cast<size_t>(replications));
    parallel_for(replications, workers, [&](long r) {
        Rng rng(seed, static_cast<uint64_t>(r));
        int s = sample_initial_state(chain, rng);
        Vector acc = spec.g.row(s).transpose();
        for (long i = 1; i < n; ++i) {
            s = sample_next_state(chain, s, rng);
            acc += spec.g.row(s).transpose();
        }
        norms[static_cast<size_t>(r)] = acc.norm() / static_cast<double>(n);
    });

    BoundReport report;
    report.n = n;
    report.replications = replications;
    for (double delta : delta_grid) {
        const BernsteinBound b = bernstein_bound(spec, chain, n, delta);
        long hits = 0;
        for (double v : norms)
            if (v >= b.total) ++hits;
        const WilsonInterval ci = wilson_interval(hits, replications);
        TailGridPoint pt;
        pt.level = delta;
        pt.closed_form = b.total;
        pt.empirical = ci.point;
        pt.ci_lo = ci.lo;
        pt.ci_hi = ci.hi;
        pt.dominates = ci.hi <= delta; // informational: tail mass vs its target level
        report.points.push_back(pt);

        const double emp_quantile = quantile_of(norms, 1.0 - delta);
        if (b.total > 0.0)
            report.c_star = std::max(report.c_star, emp_quantile / b.total);
        else if (emp_quantile > 0.0)
            report.c_star = std::numeric_limits<double>::infinity();
    }
    return report;
}

BoundReport verify_tail_hoeffding(const ChainModel& chain,
                                  const std::vector<Matrix>& f_per_state, long n,
                                  const std::vector<double>& eps_grid,
                                  int replications, uint64_t seed, int workers) {
    if (replications < 100) throw InvalidModel("tail verification needs >= 100 replications");
    const int n_states = chain.n_states();
    if (static_cast<int>(f_per_state.size()) != n_states)
        throw InvalidModel("need one matrix per state");
    const auto dim = f_per_state.front().rows();
    for (const Matrix& m : f_per_state)
        if (m.rows() != dim || m.cols() != dim ||
            (m - m.transpose()).norm() > 1e-12 * std::max(1.0, m.norm()))
            throw InvalidModel("matrix summands must be symmetric and equally sized");

    // Center to stationary mean zero.
    Matrix mean = Matrix::Zero(dim, dim);
    for (int s = 0; s < n_states; ++s) mean += chain.stationary[s] * f_per_state[s];
    std::vector<Matrix> centered(f_per_state.begin(), f_per_state.end());
    if (mean.norm() > 1e-12) {
        std::fprintf(stderr, "note: centering matrix summands (stationary mean %.3e)\n",
                     mean.norm());
        for (Matrix& m : centered) m -= mean;
    }
    double m_bound = 0.0;
    for (const Matrix& m : centered) m_bound = std::max(m_bound, spectral_norm_sym(m));
    const double sum_m_sq = static_cast<double>(n) * m_bound * m_bound;

    std::vector<double> stats(static_cast<size_t>(replications));
    parallel_for(replications, workers, [&](long r) {
        Rng rng(seed, static_cast<uint64_t>(r));
        int s = sample_initial_state(chain, rng);
        Matrix acc = centered[static_cast<size_t>(s)];
        for (long i = 1; i < n; ++i) {
            s = sample_next_state(chain, s, rng);
            acc += centered[static_cast<size_t>(s)];
        }
        stats[static_cast<size_t>(r)] = spectral_norm_sym(acc) / static_cast<double>(n);
    });

    BoundReport report;
    report.n = n;
    report.replications = replications;
    for (double eps : eps_grid) {
        const double bound =
            hoeffding_matrix_bound(chain, n, eps, sum_m_sq, static_cast<int>(dim));
        long hits = 0;
        for (double v : stats)
            if (v >= eps) ++hits;
        const WilsonInterval ci = wilson_interval(hits, replications);
        TailGridPoint pt;
        pt.level = eps;
        pt.closed_form = bound;
        pt.empirical = ci.point;
        pt.ci_lo = ci.lo;
        pt.ci_hi = ci.hi;
        pt.dominates = bound > 1.0 || ci.hi <= bound;
        if (!pt.dominates) report.any_violation = true;
        report.points.push_back(pt);
    }
    return report;
}

CompletionResult complete_martingale(const ChainModel& chain,
                                     const MartingaleSpec& spec, long n,
                                     double kappa, double m_cap, uint64_t seed,
                                     uint64_t stream_id) {
    const int n_states = chain.n_states();
    const int d = spec.dim();
    if (n < 1) throw InvalidModel("path length must be >= 1");
    if (kappa <= 0.0) {
        const double q = conjugate_exponent(chain);
        kappa = (spec.m_bound * spec.m_bound / std::sqrt(static_cast<double>(n))) *
                std::sqrt((40.0 * q / (1.0 - chain.lambda)) *
                          std::log(2.0 * d * static_cast<double>(n) * chain.density_norm));
    }
    if (m_cap <= 0.0) m_cap = spec.f_bound;

    // Per-state conditional covariance of the next increment.
    std::vector<Matrix> v_of(static_cast<size_t>(n_states), Matrix::Zero(d, d));
    for (int s = 0; s < n_states; ++s)
        for (int t = 0; t < n_states; ++t)
            if (chain.kernel(s, t) > 0.0)
                v_of[static_cast<size_t>(s)].noalias() +=
                    chain.kernel(s, t) * spec.f_table.row(s * n_states + t).transpose() *
                    spec.f_table.row(s * n_states + t);

    const Matrix target = static_cast<double>(n) * (1.0 + kappa) * spec.sigma_n;
    const double target_scale = std::max(target.norm(), 1e-300);

    CompletionResult res;
    res.kappa = kappa;
    res.original_sum = Vector::Zero(d);
    res.original_qv = Matrix::Zero(d, d);

    Rng rng(seed, stream_id);
    int s = sample_initial_state(chain, rng);
    Matrix cum = Matrix::Zero(d, d);
    Vector sum_tau = Vector::Zero(d);
    long tau = 0;
    bool stopped = false;
    for (long i = 1; i <= n; ++i) {
        const Matrix& v = v_of[static_cast<size_t>(s)];
        if (!stopped) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(target - (cum + v),
                                                     Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-12 * target_scale) {
                stopped = true;
                tau = i - 1;
            }
        }
        res.original_qv += v;
        const int s_next = sample_next_state(chain, s, rng);
        const Vector f = spec.f_table.row(s * n_states + s_next).transpose();
        res.original_sum += f;
        if (!stopped) {
            cum += v;
            sum_tau += f;
        }
        s = s_next;
    }
    if (!stopped) tau = n;
    res.tau = tau;

    Matrix deficit = target - cum;
    Eigen::SelfAdjointEigenSolver<Matrix> es(deficit);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, target_scale))
        throw DeficitNotPSD("remaining quadratic-variation budget is not PSD");
    Vector lam = es.eigenvalues().cwiseMax(0.0);

    const double tr_deficit = lam.sum();
    const double cap_sq = m_cap * m_cap;
    long n_pads = 0;
    Vector pad_sum = Vector::Zero(d);
    if (tr_deficit > 0.0) {
        if (cap_sq <= 0.0) throw InvalidModel("increment cap must be positive");
        n_pads = static_cast<long>(std::ceil(tr_deficit / cap_sq));
        const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(n_pads));
        const Vector sqrt_lam = lam.cwiseSqrt();
        for (long i = 0; i < n_pads; ++i) {
            Vector pad = Vector::Zero(d);
            for (int j = 0; j < d; ++j) {
                const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                pad += sign * sqrt_lam[j] * es.eigenvectors().col(j);
            }
            pad *= inv_sqrt_m;
            pad_sum += pad;
        }
        res.max_pad_norm_sq = tr_deficit / static_cast<double>(n_pads);
        res.terminal_qv = cum + deficit; // pads contribute deficit/m each, m times
    } else {
        res.terminal_qv = cum;
    }
    res.n_pads = n_pads;
    res.big_n = target.trace() > 0.0 && cap_sq > 0.0
                    ? static_cast<long>(std::ceil(target.trace() / cap_sq)) + n
                    : n;
    res.completed_sum = sum_tau + pad_sum;
    return res;
}

Matrix partial_sum_samples(const ChainModel& chain, const MartingaleSpec& spec,
                           long n, int replications, uint64_t seed,
                           uint64_t base_stream, int workers) {
    const int n_states = chain.n_states();
    const int d = spec.dim();
    Matrix out(replications, d);
    parallel_for(replications, workers, [&](long r) {
        Rng rng(seed, base_stream + static_cast<uint64_t>(r));
        int s = sample_initial_state(chain, rng);
        Vector acc = Vector::Zero(d);
        for (long i = 1; i <= n; ++i) {
            const int s_next = sample_next_state(chain, s, rng);
            acc += spec.f_table.row(s * n_states + s_next).transpose();
            s = s_next;
        }
        out.row(r) = acc.transpose() / std::sqrt(static_cast<double>(n));
    });
    return out;
}

} // namespace mcuq
