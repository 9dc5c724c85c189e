#include "mcuq/chain.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mcuq/errors.hpp"

namespace mcuq {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kStationaryTol = 1e-12;
constexpr int kStationaryIterCap = 100000;
// TV levels below this are numerical noise relative to the 1e-12 residual of
// the stationary solve; including them would corrupt the (m, rho) fit.
constexpr double kTvFloor = 1e-13;

void validate_kernel(const Matrix& kernel) {
    const auto n = kernel.rows();
    if (n < 1 || kernel.cols() != n) throw InvalidModel("kernel must be square and nonempty");
    for (Eigen::Index s = 0; s < n; ++s) {
        double row_sum = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double p = kernel(s, t);
            if (!(p >= -1e-15) || p > 1.0 + 1e-12)
                throw InvalidModel("kernel entries must lie in [0, 1]");
            row_sum += p;
        }
        if (std::abs(row_sum - 1.0) > kRowSumTol)
            throw InvalidModel("kernel rows must sum to 1 within 1e-12");
    }
}

void validate_distribution(const Vector& dist, Eigen::Index n, const char* name) {
    if (dist.size() != n) throw InvalidModel(std::string(name) + " has wrong length");
    double sum = 0.0;
    for (Eigen::Index s = 0; s < n; ++s) {
        if (!(dist[s] >= -1e-15)) throw InvalidModel(std::string(name) + " has negative mass");
        sum += dist[s];
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
        throw InvalidModel(std::string(name) + " must sum to 1 within 1e-12");
}

// Tarjan's strongly-connected-components algorithm (iterative) on the
// positive-entry digraph.  The chain is irreducible iff there is a single
// component covering every state.
int count_sccs(const Matrix& kernel) {
    const int n = static_cast<int>(kernel.rows());
    std::vector<std::vector<int>> adj(static_cast<size_t>(n));
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (kernel(u, v) > 0.0) adj[static_cast<size_t>(u)].push_back(v);

    std::vector<int> index(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0);
    std::vector<bool> on_stack(static_cast<size_t>(n), false);
    std::vector<int> stack;
    int next_index = 0, n_sccs = 0;

    struct Frame {
        int v;
        size_t child;
    };
    for (int root = 0; root < n; ++root) {
        if (index[static_cast<size_t>(root)] != -1) continue;
        std::vector<Frame> call_stack{{root, 0}};
        while (!call_stack.empty()) {
            Frame& fr = call_stack.back();
            const auto v = static_cast<size_t>(fr.v);
            if (fr.child == 0) {
                index[v] = low[v] = next_index++;
                stack.push_back(fr.v);
                on_stack[v] = true;
            }
            bool descended = false;
            while (fr.child < adj[v].size()) {
                const int w = adj[v][fr.child++];
                const auto wu = static_cast<size_t>(w);
                if (index[wu] == -1) {
                    call_stack.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[wu]) low[v] = std::min(low[v], index[wu]);
            }
            if (descended) continue;
            if (low[v] == index[v]) {
                ++n_sccs;
                for (;;) {
                    const int w = stack.back();
                    stack.pop_back();
                    on_stack[static_cast<size_t>(w)] = false;
                    if (w == fr.v) break;
                }
            }
            call_stack.pop_back();
            if (!call_stack.empty()) {
                const auto pu = static_cast<size_t>(call_stack.back().v);
                low[pu] = std::min(low[pu], low[v]);
            }
        }
    }
    return n_sccs;
}

// Period of an irreducible chain: gcd over all positive edges (u, v) of
// level(u) + 1 - level(v), where level is a BFS labeling from state 0.
int chain_period(const Matrix& kernel) {
    const int n = static_cast<int>(kernel.rows());
    std::vector<int> level(static_cast<size_t>(n), -1);
    std::vector<int> queue{0};
    level[0] = 0;
    for (size_t qi = 0; qi < queue.size(); ++qi) {
        const int u = queue[qi];
        for (int v = 0; v < n; ++v) {
            if (kernel(u, v) > 0.0 && level[static_cast<size_t>(v)] == -1) {
                level[static_cast<size_t>(v)] = level[static_cast<size_t>(u)] + 1;
                queue.push_back(v);
            }
        }
    }
    int g = 0;
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (kernel(u, v) > 0.0)
                g = std::gcd(g, std::abs(level[static_cast<size_t>(u)] + 1 -
                                         level[static_cast<size_t>(v)]));
    return g == 0 ? 1 : g;
}

double stationary_residual(const Matrix& kernel, const Vector& mu) {
    return (kernel.transpose() * mu - mu).cwiseAbs().maxCoeff();
}

} // namespace

Vector stationary_distribution(const Matrix& kernel) {
    validate_kernel(kernel);
    const auto n = kernel.rows();
    if (count_sccs(kernel) != 1)
        throw NotIrreducible("transition digraph is not strongly connected");
    if (chain_period(kernel) != 1) throw Periodic("chain period exceeds 1");

    // Dense eigen-solve on P^T, taking the eigenvector nearest eigenvalue 1.
    Vector mu;
    {
        Eigen::EigenSolver<Matrix> es(kernel.transpose());
        Eigen::Index best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dist = std::abs(es.eigenvalues()[i] - std::complex<double>(1.0, 0.0));
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        Vector candidate = es.eigenvectors().col(best).real();
        const double total = candidate.sum();
        if (std::abs(total) > 1e-12) {
            candidate /= total;
            if (candidate.minCoeff() > 0.0 &&
                stationary_residual(kernel, candidate) <= kStationaryTol)
                mu = candidate;
        }
    }

    if (mu.size() == 0) {
        // Power iteration fallback keeps iterates nonnegative by construction.
        Vector x = Vector::Constant(n, 1.0 / static_cast<double>(n));
        bool converged = false;
        for (int it = 0; it < kStationaryIterCap; ++it) {
            Vector next = kernel.transpose() * x;
            next /= next.sum();
            const double step = (next - x).cwiseAbs().maxCoeff();
            x = next;
            if (step <= kStationaryTol && stationary_residual(kernel, x) <= kStationaryTol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw NoConvergence("stationary distribution did not reach 1e-12 residual");
        mu = x;
    }

    if (mu.minCoeff() <= 0.0)
        throw NoConvergence("stationary solve produced nonpositive mass");
    return mu;
}

double spectral_expansion(const Matrix& kernel, const Vector& stationary) {
    const auto n = kernel.rows();
    const Vector sqrt_mu = stationary.cwiseSqrt();
    Matrix deflated = kernel - Vector::Ones(n) * stationary.transpose();
    // D^{1/2} (P - 1 mu^T) D^{-1/2}
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) deflated(i, j) *= sqrt_mu[i] / sqrt_mu[j];
    double lambda = 0.0;
    if (n > 1) {
        Eigen::BDCSVD<Matrix> svd(deflated);
        lambda = svd.singularValues()(0);
    }
    if (lambda >= 1.0 - 1e-12)
        throw SpectralGapViolation("transition operator has no usable spectral gap");
    return lambda;
}

double tv_to_stationary(const Matrix& kernel_power_t, const Vector& stationary) {
    double worst = 0.0;
    for (Eigen::Index s = 0; s < kernel_power_t.rows(); ++s) {
        const double tv =
            0.5 * (kernel_power_t.row(s).transpose() - stationary).cwiseAbs().sum();
        worst = std::max(worst, tv);
    }
    return worst;
}

MixingBound mixing_constants(const Matrix& kernel, const Vector& stationary,
                             int horizon) {
    Matrix power = kernel;
    std::vector<double> tvs;
    for (int t = 1; t <= horizon; ++t) {
        const double tv = tv_to_stationary(power, stationary);
        if (tv < kTvFloor) break; // mixed to numerical noise; deeper powers are junk
        tvs.push_back(tv);
        if (t < horizon) power *= kernel;
    }
    if (tvs.empty()) return MixingBound{1e-12, 0.5}; // rows already equal mu

    double rho = 0.0;
    for (size_t i = 0; i < tvs.size(); ++i) {
        const double t = static_cast<double>(i + 1);
        rho = std::max(rho, std::exp(std::log(tvs[i]) / t));
    }
    if (rho >= 1.0 - 1e-12)
        throw SpectralGapViolation("measured TV curve does not decay geometrically");
    double m = 0.0;
    const double log_rho = std::log(rho);
    for (size_t i = 0; i < tvs.size(); ++i) {
        const double t = static_cast<double>(i + 1);
        m = std::max(m, std::exp(std::log(tvs[i]) - t * log_rho));
    }
    return MixingBound{m, rho};
}

int mixing_time(const ChainModel& model, double eps, int step_cap) {
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidModel("mixing_time needs eps in (0,1)");
    Matrix power = model.kernel;
    for (int t = 1; t <= step_cap; ++t) {
        if (tv_to_stationary(power, model.stationary) <= eps) return t;
        power *= model.kernel;
    }
    throw HorizonExceeded("mixing time not reached within step cap");
}

double density_norm(const Vector& nu, const Vector& mu, double p, bool p_inf) {
    if (nu.size() != mu.size()) throw InvalidModel("distribution lengths differ");
    for (Eigen::Index s = 0; s < nu.size(); ++s)
        if (nu[s] > 1e-14 && mu[s] <= 1e-14)
            throw AbsoluteContinuityViolation(
                "initial law charges a state with no stationary mass");
    if (p_inf) {
        double worst = 0.0;
        for (Eigen::Index s = 0; s < nu.size(); ++s)
            if (mu[s] > 1e-14) worst = std::max(worst, nu[s] / mu[s]);
        return worst;
    }
    if (!(p > 1.0)) throw InvalidModel("density exponent must exceed 1");
    double acc = 0.0;
    for (Eigen::Index s = 0; s < nu.size(); ++s)
        if (mu[s] > 1e-14) acc += mu[s] * std::pow(nu[s] / mu[s], p);
    return std::pow(acc, 1.0 / p);
}

ChainModel build_chain(const Matrix& kernel, const Vector& initial,
                       double density_p, bool density_p_inf, int mixing_horizon) {
    validate_kernel(kernel);
    validate_distribution(initial, kernel.rows(), "initial distribution");
    if (!density_p_inf && !(density_p > 1.0))
        throw InvalidModel("density exponent must exceed 1 (or be inf)");

    ChainModel model;
    model.kernel = kernel;
    model.initial = initial;
    model.stationary = stationary_distribution(kernel);
    if (stationary_residual(kernel, model.stationary) > 1e-10)
        throw NoConvergence("stationary residual exceeds 1e-10");
    model.lambda = spectral_expansion(kernel, model.stationary);
    model.mixing = mixing_constants(kernel, model.stationary, mixing_horizon);
    model.density_p = density_p;
    model.density_p_inf = density_p_inf;
    model.density_norm = density_norm(initial, model.stationary, density_p, density_p_inf);

    const auto n = kernel.rows();
    model.row_cdf = Matrix(n, n);
    for (Eigen::Index s = 0; s < n; ++s) {
        double acc = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            acc += kernel(s, t);
            model.row_cdf(s, t) = acc;
        }
        model.row_cdf(s, n - 1) = 1.0; // guard the top bucket against rounding
    }
    return model;
}

ChainModel build_chain(const Matrix& kernel, double density_p, bool density_p_inf,
                       int mixing_horizon) {
    const Vector uniform =
        Vector::Constant(kernel.rows(), 1.0 / static_cast<double>(kernel.rows()));
    return build_chain(kernel, uniform, density_p, density_p_inf, mixing_horizon);
}

int sample_initial_state(const ChainModel& model, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (int s = 0; s < model.n_states(); ++s) {
        acc += model.initial[s];
        if (u < acc) return s;
    }
    return model.n_states() - 1;
}

int sample_next_state(const ChainModel& model, int state, Rng& rng) {
    const double u = rng.uniform();
    const auto n = model.row_cdf.cols();
    for (Eigen::Index t = 0; t < n; ++t)
        if (u < model.row_cdf(state, t)) return static_cast<int>(t);
    return static_cast<int>(n - 1);
}

Trajectory sample_trajectory(const ChainModel& model, int length, uint64_t seed,
                             uint64_t stream_id) {
    if (length < 1) throw InvalidModel("trajectory length must be >= 1");
    Rng rng(seed, stream_id);
    Trajectory traj;
    traj.states.resize(static_cast<size_t>(length) + 1);
    traj.states[0] = sample_initial_state(model, rng);
    for (int t = 1; t <= length; ++t)
        traj.states[static_cast<size_t>(t)] =
            sample_next_state(model, traj.states[static_cast<size_t>(t) - 1], rng);
    return traj;
}

} // namespace mcuq
