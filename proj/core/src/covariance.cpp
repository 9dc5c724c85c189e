#include "mcuq/covariance.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "mcuq/errors.hpp"

namespace mcuq {

namespace {

// TD noise at the fixed point for one transition, exploiting its rank-one
// structure e(s,s') = c(s,s') phi(s) with
// c(s,s') = (phi(s) - gamma phi(s'))^T theta* - r(s).
Matrix noise_scalars(const MrpModel& m) {
    const int n = m.chain.n_states();
    Matrix c(n, n);
    const Vector proj = m.features * m.theta_star; // phi(s)^T theta*
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t)
            c(s, t) = proj[s] - m.gamma * proj[t] - m.rewards[s];
    return c;
}

} // namespace

GammaResult gamma_tilde(const MrpModel& model, double tol, int lag_cap) {
    const int n = model.chain.n_states();
    const int d = model.dim();
    const double theta_scale = 2.0 * model.theta_star.norm() + 1.0;
    if (tol <= 0.0) tol = 1e-12 * theta_scale * theta_scale;

    // Truncation lag from the geometric mixing envelope: the lag-l cross
    // term is bounded by m rho^{l-1} (2||theta*||+1)^2.
    const double coeff = model.chain.mixing.coeff * theta_scale * theta_scale;
    const double rho = model.chain.mixing.rate;
    int k = 1;
    while (coeff * std::pow(rho, k - 1) > tol) {
        ++k;
        if (k > lag_cap)
            throw TruncationFailure("covariance series did not reach tolerance under lag cap");
    }

    const Matrix c = noise_scalars(model);
    const Matrix& p = model.chain.kernel;
    const Vector& mu = model.chain.stationary;

    // Lag 0: sum_{s,s'} mu(s) P(s,s') c^2 phi(s) phi(s)^T.
    Matrix gamma = Matrix::Zero(d, d);
    for (int s = 0; s < n; ++s) {
        double w = 0.0;
        for (int t = 0; t < n; ++t) w += p(s, t) * c(s, t) * c(s, t);
        gamma.noalias() += mu[s] * w * model.features.row(s).transpose() *
                           model.features.row(s);
    }

    // Conditional mean ebar(s) = E[e(s, s') | s] and the forward-weighted
    // start C(s') = sum_s mu(s) P(s,s') e(s,s').
    Matrix ebar(n, d);
    Matrix start(n, d);
    start.setZero();
    for (int s = 0; s < n; ++s) {
        double w = 0.0;
        for (int t = 0; t < n; ++t) w += p(s, t) * c(s, t);
        ebar.row(s) = w * model.features.row(s);
        for (int t = 0; t < n; ++t)
            start.row(t) += mu[s] * p(s, t) * c(s, t) * model.features.row(s);
    }

    // Lag l cross term: start^T P^{l-1} ebar, accumulated symmetrically.
    Matrix h = ebar;
    for (int lag = 1; lag <= k; ++lag) {
        const Matrix cross = start.transpose() * h;
        gamma.noalias() += cross + cross.transpose();
        if (lag < k) h = p * h;
    }

    GammaResult out;
    out.gamma = 0.5 * (gamma + gamma.transpose());
    out.truncation_k = k;
    return out;
}

Matrix lambda_star(const MrpModel& model, const Matrix& gamma) {
    Eigen::FullPivLU<Matrix> lu(model.steady_a);
    if (!lu.isInvertible()) throw SingularA("steady-state matrix is not invertible");
    const Matrix half = lu.solve(gamma);                    // A^{-1} Gamma
    const Matrix full = lu.solve(half.transpose()).transpose(); // A^{-1} Gamma A^{-T}
    return 0.5 * (full + full.transpose());
}

std::vector<Matrix> q_family(const Matrix& steady_a, double eta0, double alpha,
                             long horizon, size_t budget_bytes) {
    if (!(eta0 > 0.0)) throw InvalidModel("eta0 must be positive");
    if (horizon < 1) throw InvalidModel("horizon must be >= 1");
    const auto d = steady_a.rows();
    const size_t need = static_cast<size_t>(horizon) * static_cast<size_t>(d) *
                        static_cast<size_t>(d) * sizeof(double);
    if (need > budget_bytes)
        throw BudgetExceeded("materializing the weight family exceeds the memory budget");

    EtaSchedule eta(eta0, alpha, horizon);
    std::vector<Matrix> q(static_cast<size_t>(horizon));
    const Matrix eye = Matrix::Identity(d, d);
    q[static_cast<size_t>(horizon - 1)] = eta[horizon] * eye;
    for (long t = horizon - 1; t >= 1; --t) {
        const Matrix& next = q[static_cast<size_t>(t)];
        q[static_cast<size_t>(t - 1)] =
            eta[t] * eye +
            (eta[t] / eta[t + 1]) * (next - eta[t + 1] * (steady_a * next));
    }
    return q;
}

Matrix lambda_T_accumulate(const Matrix& steady_a, const Matrix& gamma,
                           double eta0, double alpha, long horizon) {
    if (!(eta0 > 0.0)) throw InvalidModel("eta0 must be positive");
    if (horizon < 1) throw InvalidModel("horizon must be >= 1");
    const auto d = steady_a.rows();
    EtaSchedule eta(eta0, alpha, horizon);
    const Matrix eye = Matrix::Identity(d, d);

    Matrix q = eta[horizon] * eye;
    Matrix acc = q * gamma * q.transpose();
    for (long t = horizon - 1; t >= 1; --t) {
        q = eta[t] * eye + (eta[t] / eta[t + 1]) * (q - eta[t + 1] * (steady_a * q));
        acc.noalias() += q * gamma * q.transpose();
    }
    acc /= static_cast<double>(horizon);
    return 0.5 * (acc + acc.transpose());
}

double lambda_T_threshold(const MrpModel& model, const Matrix& gamma,
                          double eta0, double alpha) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gamma);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    const double cond = hi / lo;
    const double s = 1.0 / (1.0 - alpha);
    const double base = 2.0 / ((1.0 - model.gamma) * model.lambda0 * eta0);
    return 4.0 * std::pow(base, s) * std::pow(1.0 - alpha, alpha * s) *
           boost::math::tgamma(s) * cond;
}

Matrix solve_lyapunov(const Matrix& steady_a, const Matrix& rhs) {
    const auto d = steady_a.rows();
    if (rhs.rows() != d || rhs.cols() != d)
        throw InvalidModel("Lyapunov right-hand side has wrong shape");
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return Matrix::Zero(d, d);

    // (I (x) A + A (x) I) vec(X) = vec(E), column-major vec.
    const auto dd = d * d;
    Matrix kron = Matrix::Zero(dd, dd);
    for (Eigen::Index j = 0; j < d; ++j)
        kron.block(j * d, j * d, d, d) += steady_a; // I (x) A
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index k = 0; k < d; ++k)
                kron(j * d + k, i * d + k) += steady_a(j, i); // A (x) I

    if (d <= 32) {
        Eigen::BDCSVD<Matrix> svd(kron);
        const double smin = svd.singularValues()(dd - 1);
        const double smax = svd.singularValues()(0);
        if (smin <= 0.0 || smax / smin > 1e12)
            throw IllConditioned("Lyapunov system condition number exceeds 1e12");
    }

    Eigen::FullPivLU<Matrix> lu(kron);
    if (!lu.isInvertible()) throw IllConditioned("Lyapunov system is singular");
    Vector vec_e(dd);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i) vec_e[j * d + i] = rhs(i, j);
    const Vector vec_x = lu.solve(vec_e);
    Matrix x(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i) x(i, j) = vec_x[j * d + i];

    if ((rhs - rhs.transpose()).norm() <= 1e-12 * rhs_norm)
        x = 0.5 * (x + x.transpose());
    if ((steady_a * x + x * steady_a.transpose() - rhs).norm() > 1e-10 * rhs_norm)
        throw IllConditioned("Lyapunov residual exceeds 1e-10 of the right-hand side");
    return x;
}

Matrix lyapunov_correction(const Matrix& steady_a, const Matrix& lambda_star_mat,
                           double eta0) {
    if (!(eta0 > 0.0)) throw InvalidModel("eta0 must be positive");
    return solve_lyapunov(steady_a, lambda_star_mat / eta0);
}

PoissonTd poisson_td(const MrpModel& model) {
    const int n = model.chain.n_states();
    const int d = model.dim();
    const Matrix c = noise_scalars(model);
    const Matrix& p = model.chain.kernel;
    const Vector& mu = model.chain.stationary;

    PoissonTd out;
    out.e_table = Matrix(n * n, d);
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t)
            out.e_table.row(s * n + t) = c(s, t) * model.features.row(s);

    Matrix ebar(n, d);
    for (int s = 0; s < n; ++s) {
        double w = 0.0;
        for (int t = 0; t < n; ++t) w += p(s, t) * c(s, t);
        ebar.row(s) = w * model.features.row(s);
    }
    // ebar is exactly mean zero under mu (it equals A theta* - b state-wise);
    // project the numerical residue away before the centering solve.
    ebar.noalias() -= Vector::Ones(n) * (mu.transpose() * ebar);

    Matrix fundamental = Matrix::Identity(n, n) - p + Vector::Ones(n) * mu.transpose();
    Eigen::FullPivLU<Matrix> lu(fundamental);
    if (!lu.isInvertible())
        throw SingularFundamentalMatrix("centering solve matrix is not invertible");
    out.w = lu.solve(ebar);

    const Matrix pw = p * out.w;
    out.u_table = Matrix(n * n, d);
    out.m_table = Matrix(n * n, d);
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t) {
            out.u_table.row(s * n + t) = out.e_table.row(s * n + t) + out.w.row(t);
            out.m_table.row(s * n + t) =
                out.u_table.row(s * n + t) - ebar.row(s) - pw.row(s);
        }

    const double theta_scale = 2.0 * model.theta_star.norm() + 1.0;
    out.u_bound = theta_scale * (1.0 + model.chain.mixing.coeff /
                                           (1.0 - model.chain.mixing.rate));
    return out;
}

Matrix covariance_of_m(const MrpModel& model, const PoissonTd& poisson) {
    const int n = model.chain.n_states();
    const int d = model.dim();
    Matrix acc = Matrix::Zero(d, d);
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t) {
            const double w = model.chain.stationary[s] * model.chain.kernel(s, t);
            if (w <= 0.0) continue;
            acc.noalias() += w * poisson.m_table.row(s * n + t).transpose() *
                             poisson.m_table.row(s * n + t);
        }
    return 0.5 * (acc + acc.transpose());
}

CovarianceSet covariance_set(const MrpModel& model, double eta0, double alpha,
                             const std::vector<long>& horizons) {
    CovarianceSet set;
    set.eta0 = eta0 > 0.0 ? eta0 : default_eta0(model);
    if (set.eta0 > 1.0 / (2.0 * model.lambda_sigma) + 1e-15)
        throw InvalidModel("eta0 outside the contraction range (0, 1/(2 lambdaSigma)]");
    set.alpha = alpha;
    set.gamma = gamma_tilde(model);
    set.lambda_star_mat = lambda_star(model, set.gamma.gamma);
    set.lyap_x = lyapunov_correction(model.steady_a, set.lambda_star_mat, set.eta0);
    set.horizons = horizons;
    set.lambda_T.reserve(horizons.size());
    for (long t : horizons)
        set.lambda_T.push_back(
            lambda_T_accumulate(model.steady_a, set.gamma.gamma, set.eta0, set.alpha, t));
    return set;
}

} // namespace mcuq
