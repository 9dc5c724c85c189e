#pragma once

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

namespace mcuq {

// Scalar facts about products of decaying step factors (1 - beta k^{-alpha}),
// beta in (0,1), alpha in (1/2,1).  Everything is evaluated in log space so
// deep products never underflow.  These closed forms calibrate the matrix
// recursions: with beta = ((1-gamma)/2) lambda0 eta0 they control ||Q_t||.

// t^alpha * prod_{k=1..t} (1 - beta k^{-alpha})
inline double step_product_r1(double beta, double alpha, long t) {
    double log_prod = 0.0;
    for (long k = 1; k <= t; ++k)
        log_prod += std::log1p(-beta * std::pow(static_cast<double>(k), -alpha));
    return std::exp(alpha * std::log(static_cast<double>(t)) + log_prod);
}

// e (alpha/beta)^{alpha/(1-alpha)}
inline double step_product_r1_bound(double beta, double alpha) {
    return std::exp(1.0) * std::pow(alpha / beta, alpha / (1.0 - alpha));
}

// sum_{i=1..t} i^{-nu} prod_{k=i+1..t} (1 - beta k^{-alpha}),
// by the forward recursion S_i = (1 - beta i^{-alpha}) S_{i-1} + i^{-nu}.
inline double step_sum_weighted(double beta, double alpha, double nu, long t) {
    double s = 0.0;
    for (long i = 1; i <= t; ++i) {
        const double di = static_cast<double>(i);
        s = (1.0 - beta * std::pow(di, -alpha)) * s + std::pow(di, -nu);
    }
    return s;
}

// (1/(nu-1)) (2(nu-alpha)/beta)^{(nu-alpha)/(1-alpha)} t^{alpha-nu},
// valid for nu in (1, alpha+1].
inline double step_sum_weighted_bound(double beta, double alpha, double nu, long t) {
    return (1.0 / (nu - 1.0)) *
           std::pow(2.0 * (nu - alpha) / beta, (nu - alpha) / (1.0 - alpha)) *
           std::pow(static_cast<double>(t), alpha - nu);
}

// max_{1<=i<=t} i^{-alpha} prod_{k=i+1..t} (1 - beta k^{-alpha})
inline double step_max_weighted(double beta, double alpha, long t) {
    double running = 0.0; // max so far, propagated through the product
    for (long i = 1; i <= t; ++i) {
        const double di = static_cast<double>(i);
        const double factor = 1.0 - beta * std::pow(di, -alpha);
        running = std::max(running * factor, std::pow(di, -alpha));
    }
    return running;
}

// t^{-alpha} sum_{j=t..T} prod_{k=t+1..j} (1 - beta k^{-alpha}), for one t.
inline double step_resolvent_sum(double beta, double alpha, long t, long big_t) {
    double term = 1.0, total = 1.0;
    for (long j = t + 1; j <= big_t; ++j) {
        term *= 1.0 - beta * std::pow(static_cast<double>(j), -alpha);
        total += term;
    }
    return std::pow(static_cast<double>(t), -alpha) * total;
}

// max over all t in [1, T] of the quantity above, via one backward
// recursion S_t = 1 + (1 - beta (t+1)^{-alpha}) S_{t+1}.
inline double step_resolvent_sum_max(double beta, double alpha, long big_t) {
    double s = 1.0, worst = std::pow(static_cast<double>(big_t), -alpha);
    for (long t = big_t - 1; t >= 1; --t) {
        s = 1.0 + (1.0 - beta * std::pow(static_cast<double>(t) + 1.0, -alpha)) * s;
        worst = std::max(worst, std::pow(static_cast<double>(t), -alpha) * s);
    }
    return worst;
}

// 3 (2/beta)^{1/(1-alpha)}
inline double step_resolvent_bound(double beta, double alpha) {
    return 3.0 * std::pow(2.0 / beta, 1.0 / (1.0 - alpha));
}

// Enclosure of the infinite resolvent sum t^{-alpha} sum_{j>=t} prod(...):
// exact partial sum out to a cap, plus an analytic upper bound on the
// remainder via prod_{k<=j}(1-beta k^{-alpha}) <= exp(-beta (j^{1-alpha} -
// t^{1-alpha})/(1-alpha)) integrated with an upper incomplete gamma.
struct Enclosure {
    double lo = 0.0;
    double hi = 0.0;
};

inline Enclosure step_resolvent_tail(double beta, double alpha, long t,
                                     long cap = 10000000) {
    double term = 1.0, total = 1.0;
    long j = t;
    while (j < t + cap && term > 1e-18) {
        ++j;
        term *= 1.0 - beta * std::pow(static_cast<double>(j), -alpha);
        total += term;
    }
    const double scale = std::pow(static_cast<double>(t), -alpha);

    // Remainder bound: sum_{i > j} prod_{k=t+1..i}(1 - beta k^{-alpha})
    //   <= e^{c a} / (1 - alpha) * c^{-s} * GammaUpper(s, c j^{1-alpha}),
    // with c = beta/(1-alpha), a = (t+1)^{1-alpha}, s = 1/(1-alpha).
    const double c = beta / (1.0 - alpha);
    const double s = 1.0 / (1.0 - alpha);
    const double a = std::pow(static_cast<double>(t) + 1.0, 1.0 - alpha);
    const double x = c * std::pow(static_cast<double>(j), 1.0 - alpha);
    const double tail = std::exp(c * a) / (1.0 - alpha) * std::pow(c, -s) *
                        boost::math::tgamma(s, x);
    return Enclosure{scale * total, scale * (total + tail)};
}

// (1/beta)^{1/(1-alpha)} GammaFn(1/(1-alpha)) t^{alpha-1}: the certified
// scale of |t^{-alpha} sum_{j>=t} prod - 1/beta|.
inline double step_resolvent_tail_scale(double beta, double alpha, long t) {
    const double s = 1.0 / (1.0 - alpha);
    return std::pow(1.0 / beta, s) * boost::math::tgamma(s) *
           std::pow(static_cast<double>(t), alpha - 1.0);
}

} // namespace mcuq
