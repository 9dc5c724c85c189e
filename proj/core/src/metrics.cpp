#include "mcuq/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "mcuq/errors.hpp"
#include "mcuq/rng.hpp"
#include "mcuq/stats.hpp"

namespace mcuq {

TvBounds gaussian_tv_bounds(const Matrix& cov1, const Matrix& cov2) {
    const auto d = cov1.rows();
    if (cov1.cols() != d || cov2.rows() != d || cov2.cols() != d)
        throw InvalidModel("covariance shapes must match");
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov1);
    const double top = es.eigenvalues().maxCoeff();
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(top, 1e-300))
        throw SingularCovariance("reference covariance must be positive definite");
    const Matrix whiten = es.eigenvectors() *
                          es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                          es.eigenvectors().transpose();
    TvBounds out;
    out.delta = (whiten * cov2 * whiten - Matrix::Identity(d, d)).norm();
    out.lower = std::min(1.0, out.delta / 100.0);
    out.upper = 1.5 * out.delta;
    return out;
}

namespace {

Vector random_direction(int d, Rng& rng) {
    Vector u(d);
    double norm_sq = 0.0;
    do {
        for (int i = 0; i < d; ++i) u[i] = rng.normal();
        norm_sq = u.squaredNorm();
    } while (norm_sq == 0.0);
    return u / std::sqrt(norm_sq);
}

// Right-continuous Gaussian CDF along a projection, degenerate case included.
double projected_gaussian_cdf(double tau, double mean, double sd) {
    if (sd <= 0.0) return tau >= mean ? 1.0 : 0.0;
    return normal_cdf((tau - mean) / sd);
}

} // namespace

DiscrepancyEstimate halfspace_discrepancy(const Matrix& samples, const GaussianLaw& law,
                                          int n_directions, uint64_t seed,
                                          uint64_t stream_id, int n_thresholds) {
    const auto n = samples.rows();
    const int d = static_cast<int>(samples.cols());
    if (n < 100) throw InvalidModel("discrepancy estimation needs >= 100 samples");
    if (law.mean.size() != d || law.cov.rows() != d || law.cov.cols() != d)
        throw InvalidModel("Gaussian law dimension mismatch");
    if (n_directions < 1 || n_thresholds < 2)
        throw InvalidModel("need at least one direction and two thresholds");

    Rng rng(seed, stream_id);
    double worst = 0.0;
    std::vector<double> proj(static_cast<size_t>(n));
    std::vector<double> pooled;
    for (int dir = 0; dir < n_directions; ++dir) {
        const Vector u = random_direction(d, rng);
        for (Eigen::Index i = 0; i < n; ++i) proj[static_cast<size_t>(i)] = samples.row(i).dot(u);
        std::sort(proj.begin(), proj.end());
        const double mean_u = law.mean.dot(u);
        const double var_u = u.dot(law.cov * u);
        const double sd_u = var_u > 0.0 ? std::sqrt(var_u) : 0.0;

        // Pool the projected sample with matching-resolution exact Gaussian
        // quantiles, then take equispaced quantiles of the pool as thresholds.
        pooled.assign(proj.begin(), proj.end());
        if (sd_u > 0.0) {
            for (int k = 0; k < n_thresholds; ++k) {
                const double p = (k + 0.5) / static_cast<double>(n_thresholds);
                pooled.push_back(mean_u + sd_u * normal_quantile(p));
            }
        } else {
            pooled.push_back(mean_u);
        }
        std::sort(pooled.begin(), pooled.end());

        for (int k = 0; k < n_thresholds; ++k) {
            const double p = (k + 0.5) / static_cast<double>(n_thresholds);
            size_t idx = static_cast<size_t>(p * static_cast<double>(pooled.size()));
            idx = std::min(idx, pooled.size() - 1);
            const double tau = pooled[idx];
            const double gauss = projected_gaussian_cdf(tau, mean_u, sd_u);
            const auto le = std::upper_bound(proj.begin(), proj.end(), tau) - proj.begin();
            const auto lt = std::lower_bound(proj.begin(), proj.end(), tau) - proj.begin();
            const double emp_le = static_cast<double>(le) / static_cast<double>(n);
            const double emp_lt = static_cast<double>(lt) / static_cast<double>(n);
            worst = std::max({worst, std::abs(emp_le - gauss), std::abs(emp_lt - gauss)});
        }
    }
    DiscrepancyEstimate out;
    out.value = std::clamp(worst, 0.0, 1.0);
    out.n_directions = n_directions;
    out.n_thresholds = n_thresholds;
    return out;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b, uint64_t seed) {
    if (a.empty() || b.empty()) throw InvalidModel("samples must be nonempty");
    if (a.size() != b.size()) {
        Rng rng(seed, 0);
        std::vector<double>& small = a.size() < b.size() ? a : b;
        const size_t want = std::max(a.size(), b.size());
        std::vector<double> grown(want);
        for (size_t i = 0; i < want; ++i)
            grown[i] = small[static_cast<size_t>(rng.below(small.size()))];
        small.swap(grown);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

double sliced_wasserstein(const Matrix& samples, const GaussianLaw& law,
                          int n_directions, uint64_t seed, uint64_t stream_id) {
    const auto n = samples.rows();
    const int d = static_cast<int>(samples.cols());
    if (n < 100) throw InvalidModel("discrepancy estimation needs >= 100 samples");
    if (law.mean.size() != d || law.cov.rows() != d || law.cov.cols() != d)
        throw InvalidModel("Gaussian law dimension mismatch");
    if (n_directions < 1) throw InvalidModel("need at least one direction");

    Rng rng(seed, stream_id);
    std::vector<double> proj(static_cast<size_t>(n)), gauss(static_cast<size_t>(n));
    double acc = 0.0;
    for (int dir = 0; dir < n_directions; ++dir) {
        const Vector u = random_direction(d, rng);
        for (Eigen::Index i = 0; i < n; ++i) proj[static_cast<size_t>(i)] = samples.row(i).dot(u);
        const double mean_u = law.mean.dot(u);
        const double var_u = u.dot(law.cov * u);
        const double sd_u = var_u > 0.0 ? std::sqrt(var_u) : 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            gauss[static_cast<size_t>(i)] = mean_u + sd_u * rng.normal();
        std::sort(proj.begin(), proj.end());
        std::sort(gauss.begin(), gauss.end());
        double w1 = 0.0;
        for (size_t i = 0; i < proj.size(); ++i) w1 += std::abs(proj[i] - gauss[i]);
        acc += w1 / static_cast<double>(n);
    }
    return acc / static_cast<double>(n_directions);
}

namespace {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    LineFit fit;
    const double denom = n * sxx - sx * sx;
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;
    const double ss_tot = syy - sy * sy / n;
    double ss_res = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (fit.intercept + fit.slope * x[i]);
        ss_res += r * r;
    }
    fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

void validate_grid(const std::vector<long>& horizon, size_t stat_count) {
    if (horizon.size() < 4) throw DegenerateGrid("rate fitting needs at least 4 horizons");
    if (horizon.size() != stat_count)
        throw DegenerateGrid("horizon and statistic counts differ");
    for (size_t i = 1; i < horizon.size(); ++i)
        if (horizon[i] <= horizon[i - 1])
            throw DegenerateGrid("horizons must be strictly increasing");
}

} // namespace

RateFit fit_rate(const std::vector<long>& horizon, const std::vector<double>& stat,
                 int n_boot, uint64_t seed) {
    validate_grid(horizon, stat.size());
    std::vector<double> x(horizon.size()), y(stat.size());
    for (size_t i = 0; i < horizon.size(); ++i) {
        if (!(stat[i] > 0.0)) throw DegenerateGrid("statistics must be positive");
        x[i] = std::log(static_cast<double>(horizon[i]));
        y[i] = std::log(stat[i]);
    }
    const LineFit fit = least_squares(x, y);

    std::vector<double> residuals(y.size());
    for (size_t i = 0; i < y.size(); ++i)
        residuals[i] = y[i] - (fit.intercept + fit.slope * x[i]);

    Rng rng(seed, 0);
    std::vector<double> slopes(static_cast<size_t>(std::max(n_boot, 1)));
    std::vector<double> yb(y.size());
    for (int b = 0; b < std::max(n_boot, 1); ++b) {
        for (size_t i = 0; i < y.size(); ++i)
            yb[i] = fit.intercept + fit.slope * x[i] +
                    residuals[static_cast<size_t>(rng.below(residuals.size()))];
        slopes[static_cast<size_t>(b)] = least_squares(x, yb).slope;
    }
    RateFit out;
    out.slope = fit.slope;
    out.intercept = fit.intercept;
    out.r2 = fit.r2;
    out.ci_lo = quantile_of(slopes, 0.025);
    out.ci_hi = quantile_of(slopes, 0.975);
    return out;
}

RateFit fit_rate_replicates(const std::vector<long>& horizon,
                            const std::vector<std::vector<double>>& replicates,
                            int n_boot, uint64_t seed) {
    validate_grid(horizon, replicates.size());
    std::vector<double> x(horizon.size()), medians(horizon.size());
    for (size_t i = 0; i < horizon.size(); ++i) {
        if (replicates[i].empty()) throw DegenerateGrid("empty replicate set");
        medians[i] = median_of(replicates[i]);
        if (!(medians[i] > 0.0)) throw DegenerateGrid("statistics must be positive");
        x[i] = std::log(static_cast<double>(horizon[i]));
    }
    std::vector<double> y(medians.size());
    for (size_t i = 0; i < medians.size(); ++i) y[i] = std::log(medians[i]);
    const LineFit fit = least_squares(x, y);

    Rng rng(seed, 0);
    std::vector<double> slopes(static_cast<size_t>(std::max(n_boot, 1)));
    std::vector<double> yb(y.size());
    std::vector<double> resample;
    for (int b = 0; b < std::max(n_boot, 1); ++b) {
        bool ok = true;
        for (size_t i = 0; i < replicates.size(); ++i) {
            resample.resize(replicates[i].size());
            for (size_t j = 0; j < resample.size(); ++j)
                resample[j] =
                    replicates[i][static_cast<size_t>(rng.below(replicates[i].size()))];
            const double med = median_of(resample);
            if (!(med > 0.0)) {
                ok = false;
                break;
            }
            yb[i] = std::log(med);
        }
        slopes[static_cast<size_t>(b)] = ok ? least_squares(x, yb).slope : fit.slope;
    }
    RateFit out;
    out.slope = fit.slope;
    out.intercept = fit.intercept;
    out.r2 = fit.r2;
    out.ci_lo = quantile_of(slopes, 0.025);
    out.ci_hi = quantile_of(slopes, 0.975);
    return out;
}

} // namespace mcuq
