#pragma once

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace mcuq {

// Wilson score interval for a binomial proportion.
struct WilsonInterval {
    double lo = 0.0;
    double hi = 1.0;
    double point = 0.0;
};

inline WilsonInterval wilson_interval(long successes, long trials,
                                      double confidence = 0.95) {
    WilsonInterval w;
    if (trials <= 0) return w;
    const boost::math::normal nd;
    const double z = boost::math::quantile(nd, 0.5 + confidence / 2.0);
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    w.point = p;
    w.lo = std::max(0.0, center - half);
    w.hi = std::min(1.0, center + half);
    return w;
}

inline double chi_squared_quantile(int dof, double prob) {
    const boost::math::chi_squared chi(dof);
    return boost::math::quantile(chi, prob);
}

inline double normal_quantile(double prob) {
    const boost::math::normal nd;
    return boost::math::quantile(nd, prob);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Order-statistic quantile (type-1, right-continuous inverse) on a copy.
inline double quantile_of(std::vector<double> xs, double prob) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const double rank = prob * static_cast<double>(xs.size());
    long idx = static_cast<long>(std::ceil(rank)) - 1;
    idx = std::clamp<long>(idx, 0, static_cast<long>(xs.size()) - 1);
    return xs[static_cast<size_t>(idx)];
}

inline double median_of(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    const size_t mid = xs.size() / 2;
    std::nth_element(xs.begin(), xs.begin() + static_cast<long>(mid), xs.end());
    double hi = xs[mid];
    if (xs.size() % 2 == 1) return hi;
    std::nth_element(xs.begin(), xs.begin() + static_cast<long>(mid) - 1, xs.end());
    return 0.5 * (hi + xs[mid - 1]);
}

// Compensated vector accumulator (Kahan) for long running means.
class KahanVector {
public:
    explicit KahanVector(int dim) : sum_(Eigen::VectorXd::Zero(dim)),
                                    comp_(Eigen::VectorXd::Zero(dim)) {}

    void add(const Eigen::VectorXd& x) {
        for (int i = 0; i < sum_.size(); ++i) {
            const double y = x[i] - comp_[i];
            const double t = sum_[i] + y;
            comp_[i] = (t - sum_[i]) - y;
            sum_[i] = t;
        }
    }

    Eigen::VectorXd mean(long count) const { return sum_ / static_cast<double>(count); }
    const Eigen::VectorXd& sum() const { return sum_; }

private:
    Eigen::VectorXd sum_;
    Eigen::VectorXd comp_;
};

} // namespace mcuq
