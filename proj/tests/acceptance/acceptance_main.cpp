// Acceptance suite: one pass/fail line per shipped guarantee.
//
// Each criterion exercises the library the way a downstream user would —
// through the public model builders, the covariance formulas, the tail
// verifiers, the experiment pipelines, and the installed CLI — and checks a
// quantitative property end to end.  The binary prints one line per
// criterion and exits with the number of failures.

#include <mcuq/covariance.hpp>
#include <mcuq/harness.hpp>
#include <mcuq/martingale.hpp>
#include <mcuq/mrp.hpp>
#include <mcuq/step_products.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>
#include <sys/wait.h>

using namespace mcuq;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::filesystem::path work_dir() {
    static const std::filesystem::path dir = [] {
        auto d = std::filesystem::temp_directory_path() / "mcuq_acceptance";
        std::filesystem::remove_all(d);
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream text;
    text << in.rdbuf();
    return text.str();
}

double min_eig_sym(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    return es.eigenvalues().minCoeff();
}

double spectral_norm(const Matrix& m) {
    return m.jacobiSvd().singularValues()(0);
}

MrpModel reference_mrp() {
    Matrix kernel(2, 2);
    kernel << 0.9, 0.1, 0.2, 0.8;
    Vector initial(2);
    initial << 1.0, 0.0;
    const ChainModel chain = build_chain(kernel, initial, 0.0, true);
    Matrix phi(2, 2);
    phi << 1.0 / std::sqrt(2.0), 0.0, 0.0, 1.0;
    Vector rewards(2);
    rewards << 1.0, 0.0;
    return build_mrp(chain, phi, rewards, 0.25);
}

Matrix random_psd(int d, uint64_t seed) {
    Rng rng(seed, 0);
    Matrix raw(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) raw(i, j) = 2.0 * rng.uniform() - 1.0;
    return raw * raw.transpose();
}

// ---- criterion 1: exact identities -------------------------------------------

Outcome criterion_identities() {
    const MrpModel m = reference_mrp();
    const int n = m.chain.n_states();
    double worst = 0.0;
    const auto track = [&worst](double rel) { worst = std::max(worst, rel); };

    // Telescoped sum of the finite-horizon weight family against the
    // steady-matrix inverse.
    {
        const double eta0 = 1.4999, alpha = 0.75;
        const long big_t = 2000;
        const auto family = q_family(m.steady_a, eta0, alpha, big_t);
        Matrix sum_q = Matrix::Zero(2, 2);
        for (const Matrix& q : family) sum_q += q;
        const Matrix a_inv = m.steady_a.inverse();
        Matrix prefix = Matrix::Identity(2, 2);
        Matrix sum_prefix = Matrix::Zero(2, 2);
        for (long j = 1; j <= big_t; ++j) {
            const double eta_j = eta0 * std::pow(static_cast<double>(j), -alpha);
            prefix = prefix * (Matrix::Identity(2, 2) - eta_j * m.steady_a);
            sum_prefix += prefix;
        }
        const Matrix expected =
            static_cast<double>(big_t) * a_inv - a_inv * sum_prefix;
        track((sum_q - expected).norm() /
              (static_cast<double>(big_t) * a_inv).norm());
    }

    // Lyapunov solver residual, plain and in the correction form.
    {
        const Matrix e = random_psd(2, 21);
        const Matrix x = solve_lyapunov(m.steady_a, e);
        track((m.steady_a * x + x * m.steady_a.transpose() - e).norm() /
              e.norm());

        const GammaResult g = gamma_tilde(m);
        const Matrix lam = lambda_star(m, g.gamma);
        const double eta0 = 1.4999;
        const Matrix corr = lyapunov_correction(m.steady_a, lam, eta0);
        track((eta0 * (m.steady_a * corr + corr * m.steady_a.transpose()) - lam)
                  .norm() /
              lam.norm());
    }

    // Poisson equation for the TD noise: (I - P) w = ebar, w centered.
    const PoissonTd poisson = poisson_td(m);
    Matrix ebar = Matrix::Zero(n, m.dim());
    for (int s = 0; s < n; ++s)
        for (int sp = 0; sp < n; ++sp)
            ebar.row(s) += m.chain.kernel(s, sp) * poisson.e_table.row(s * n + sp);
    {
        const Matrix resid =
            (Matrix::Identity(n, n) - m.chain.kernel) * poisson.w - ebar;
        track(resid.norm() / std::max(ebar.norm(), 1.0));
        track((m.chain.stationary.transpose() * poisson.w).norm() /
              std::max(poisson.w.norm(), 1.0));
    }

    // Path-level telescoping of the noise decomposition: the summed noise
    // equals the martingale total plus the boundary terms of w.
    {
        const Trajectory path = sample_trajectory(m.chain, 4000, 4, 0);
        Vector sum_e = Vector::Zero(m.dim());
        Vector sum_m = Vector::Zero(m.dim());
        for (size_t i = 1; i < path.states.size(); ++i) {
            const int row = path.states[i - 1] * n + path.states[i];
            sum_e += poisson.e_table.row(row).transpose();
            sum_m += poisson.m_table.row(row).transpose();
        }
        const Vector boundary =
            poisson.w.row(path.states.front()).transpose() -
            poisson.w.row(path.states.back()).transpose();
        track((sum_e - sum_m - boundary).norm() /
              std::max(1.0, sum_m.norm()));
    }

    // Same identity for a generic per-state value function.
    {
        Rng rng(31, 0);
        Matrix values(n, 2);
        for (int s = 0; s < n; ++s)
            for (int j = 0; j < 2; ++j) values(s, j) = 2.0 * rng.uniform() - 1.0;
        const MartingaleSpec spec = build_martingale(m.chain, values);
        const Trajectory path = sample_trajectory(m.chain, 4000, 5, 1);
        Vector sum_g = Vector::Zero(2);
        Vector sum_f = Vector::Zero(2);
        for (size_t i = 1; i < path.states.size(); ++i) {
            sum_g += spec.g.row(path.states[i]).transpose();
            sum_f += spec.f_table.row(path.states[i - 1] * n + path.states[i])
                         .transpose();
        }
        const Vector boundary =
            spec.pu.row(path.states.front()).transpose() -
            spec.pu.row(path.states.back()).transpose();
        track((sum_g - sum_f - boundary).norm() / std::max(1.0, sum_f.norm()));
    }

    Outcome out;
    out.pass = worst <= 1e-8;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max relative residual %.2e", worst);
    out.detail = buf;
    return out;
}

// ---- criterion 2: certified model and step-product facts ---------------------

Outcome criterion_certified_facts() {
    int checks = 0, failures = 0;
    const auto expect = [&](bool ok) {
        ++checks;
        if (!ok) ++failures;
    };

    // Spectral, fixed-point, Lyapunov, and weight-norm facts on 50 random
    // models from the generator.
    for (uint64_t seed = 1; seed <= 50; ++seed) {
        RandomMrpSpec spec;
        spec.seed = seed;
        const MrpModel m = generate_random_mrp(spec);
        const Matrix sym = m.steady_a + m.steady_a.transpose();

        expect(min_eig_sym(sym - 2.0 * (1.0 - m.gamma) * m.sigma) >= -1e-10);
        expect(min_eig_sym(2.0 * (1.0 + m.gamma) * m.sigma - sym) >= -1e-10);

        Eigen::EigenSolver<Matrix> es(m.steady_a);
        for (int i = 0; i < m.dim(); ++i)
            expect(es.eigenvalues()[i].real() >=
                   (1.0 - m.gamma) * m.lambda0 - 1e-10);

        // Exact second moment of the per-transition update matrix.
        const int n = m.chain.n_states();
        Matrix second = Matrix::Zero(m.dim(), m.dim());
        for (int s = 0; s < n; ++s)
            for (int sp = 0; sp < n; ++sp) {
                const double w = m.chain.stationary[s] * m.chain.kernel(s, sp);
                if (w == 0.0) continue;
                const Matrix a_t =
                    m.features.row(s).transpose() *
                    (m.features.row(s) - m.gamma * m.features.row(sp));
                second += w * a_t.transpose() * a_t;
            }
        expect(min_eig_sym(sym - second) >= -1e-10);
        expect(min_eig_sym(m.lambda_sigma * sym -
                           m.steady_a.transpose() * m.steady_a) >= -1e-10);

        const double cap = 1.0 / (2.0 * m.lambda_sigma);
        for (double frac : {0.05, 0.5, 1.0}) {
            const double eta = frac * cap;
            expect(spectral_norm(Matrix::Identity(m.dim(), m.dim()) -
                                 eta * m.steady_a) <=
                   1.0 - 0.5 * (1.0 - m.gamma) * m.lambda0 * eta + 1e-10);
        }

        expect(m.theta_star.norm() <=
               1.0 / (m.lambda0 * (1.0 - m.gamma)) + 1e-10);
        expect((m.steady_a * m.theta_star - m.steady_b).norm() <=
               1e-10 * (1.0 + m.steady_b.norm()));

        const Matrix e = random_psd(m.dim(), 1000 + seed);
        const Matrix x = solve_lyapunov(m.steady_a, e);
        expect((m.steady_a * x + x * m.steady_a.transpose() - e).norm() <=
               1e-10 * e.norm());
        const double denom = 2.0 * (1.0 - m.gamma) * m.lambda0;
        expect(x.trace() <= e.trace() / denom + 1e-10);
        expect(spectral_norm(x) <= spectral_norm(e) / denom + 1e-10);

        // Uniform norm caps on the finite-horizon weight family.
        const double eta0 = default_eta0(m);
        const double alpha = 0.75;
        const long big_t = 2048;
        const auto family = q_family(m.steady_a, eta0, alpha, big_t);
        const double q_cap = 3.0 *
                             std::pow(eta0, -alpha / (1.0 - alpha)) *
                             std::pow(4.0 * alpha /
                                          (m.lambda0 * (1.0 - m.gamma)),
                                      1.0 / (1.0 - alpha));
        const double beta =
            0.5 * (1.0 - m.gamma) * m.lambda0 * eta0;
        const double aq_scale =
            eta0 * std::pow(1.0 / beta, 1.0 / (1.0 - alpha)) *
            std::tgamma(1.0 / (1.0 - alpha));
        bool q_ok = true, aq_ok = true;
        for (long t = 1; t <= big_t; ++t) {
            const Matrix& q = family[static_cast<size_t>(t - 1)];
            if (spectral_norm(q) > q_cap) q_ok = false;
            if (spectral_norm(m.steady_a * q) >
                2.0 + aq_scale * std::pow(static_cast<double>(t), alpha - 1.0))
                aq_ok = false;
        }
        expect(q_ok);
        expect(aq_ok);
    }

    // Scalar decaying-step-product facts on the full parameter grid.
    for (double beta : {0.1, 0.5, 0.9})
        for (double alpha : {0.6, 0.75, 0.9}) {
            // running product cap at every t up to one million
            const double r1_cap = step_product_r1_bound(beta, alpha);
            double log_prod = 0.0;
            bool r1_ok = true;
            for (long t = 1; t <= 1000000; ++t) {
                log_prod += std::log1p(
                    -beta * std::pow(static_cast<double>(t), -alpha));
                if (std::exp(alpha * std::log(static_cast<double>(t)) +
                             log_prod) > r1_cap) {
                    r1_ok = false;
                    break;
                }
            }
            expect(r1_ok);

            for (long t : {1000L, 10000L, 100000L, 1000000L}) {
                for (double nu : {1.2, 0.5 * (1.2 + alpha + 1.0), alpha + 1.0})
                    expect(step_sum_weighted(beta, alpha, nu, t) <=
                           step_sum_weighted_bound(beta, alpha, nu, t));
                const Enclosure enc = step_resolvent_tail(beta, alpha, t);
                expect(enc.lo <= enc.hi);
                expect(std::abs(0.5 * (enc.lo + enc.hi) - 1.0 / beta) <=
                       step_resolvent_tail_scale(beta, alpha, t));
            }
            for (long t : {1000L, 1000000L})
                expect(step_max_weighted(beta, alpha, t) <=
                       step_product_r1_bound(beta, alpha) *
                           std::pow(static_cast<double>(t), -alpha));

            expect(step_resolvent_sum_max(beta, alpha, 1000000) <=
                   step_resolvent_bound(beta, alpha));

            // normalized weighted sum sits at or above its limiting value
            expect(beta * step_sum_weighted(beta, alpha, 2.0 * alpha, 1000000) *
                       std::pow(1e6, alpha) >=
                   0.99);
        }

    Outcome out;
    out.pass = failures == 0;
    out.detail = std::to_string(checks - failures) + "/" +
                 std::to_string(checks) + " facts hold";
    return out;
}

// ---- criteria 3-7: experiment pipelines --------------------------------------

ExperimentOutcome run_config_text(const std::string& text,
                                  const std::string& tag, int workers) {
    RunOverrides overrides;
    overrides.workers = workers;
    overrides.out_dir = (work_dir() / tag).string();
    return run_experiment(text, overrides);
}

ExperimentOutcome run_config_file(const std::string& name,
                                  const std::string& tag, int workers) {
    return run_config_text(slurp(std::filesystem::path(MCUQ_CONFIGS_DIR) / name),
                           tag, workers);
}

Outcome criterion_matrix_tail() {
    const char* cfg = R"({
      "experiment": "hoeffding",
      "seed": 1,
      "model": {"chain": {"kernel": [[0.9, 0.1], [0.2, 0.8]],
                           "initial": [1.0, 0.0], "density_p": "inf"}},
      "n": 4096,
      "replications": 2000
    })";
    const ExperimentOutcome run = run_config_text(cfg, "c3", 1);
    const json report = json::parse(slurp(run.report_path));
    const bool violated = report.at("any_violation").get<bool>();
    const int informative = report.at("informative_points").get<int>();

    Outcome out;
    out.pass = run.exit_code == 0 && !violated && informative >= 1;
    out.detail = "3 matrix functions, 2000 replications, " +
                 std::to_string(informative) +
                 " informative grid points, dominance " +
                 (violated ? "VIOLATED" : "holds");
    return out;
}

Outcome criterion_scalar_tail() {
    const char* cfg = R"({
      "experiment": "bernstein",
      "seed": 1,
      "model": {"chain": {"kernel": [[0.9, 0.1], [0.2, 0.8]],
                           "initial": [1.0, 0.0], "density_p": "inf"}}
    })";
    const ExperimentOutcome run = run_config_text(cfg, "c4", 1);
    const json report = json::parse(slurp(run.report_path));
    bool finite = true;
    double c_lo = 1e300, c_hi = 0.0;
    for (const auto& entry : report.at("calibration")) {
        const double c = entry.at("c_star").get<double>();
        if (!(std::isfinite(c) && c > 0.0)) finite = false;
        c_lo = std::min(c_lo, c);
        c_hi = std::max(c_hi, c);
    }
    const bool stable = report.at("c_star_stable_2x").get<bool>();

    Outcome out;
    out.pass = run.exit_code == 0 && finite && stable;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "c* in [%.3f, %.3f] across n in {1e3,1e4,1e5} (spread %.3fx)",
                  c_lo, c_hi, report.at("c_star_spread").get<double>());
    out.detail = buf;
    return out;
}

Outcome criterion_rate() {
    const ExperimentOutcome run =
        run_config_file("td_rate_reference.json", "c5", 1);
    const json report = json::parse(slurp(run.report_path));
    const bool band = report.at("slope_in_band").get<bool>();
    const bool near = report.at("median_within_3x_of_theory").get<bool>();

    Outcome out;
    out.pass = run.exit_code == 0 && band && near;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "slope %.4f (band [-0.6,-0.4]), median/theory at T=1e6: %.3f",
                  report.at("slope").get<double>(),
                  report.at("median_over_theory_at_max").get<double>());
    out.detail = buf;
    return out;
}

Outcome criterion_coverage() {
    const ExperimentOutcome run =
        run_config_file("td_coverage_reference.json", "c6", 1);
    const json report = json::parse(slurp(run.report_path));
    double coverage = -1.0, lo = 0.0, hi = 0.0;
    for (const auto& row : report.at("coverage"))
        if (row.at("T").get<long>() == 1000000 &&
            std::abs(row.at("nominal").get<double>() - 0.9) < 1e-12) {
            coverage = row.at("coverage").get<double>();
            lo = row.at("ci")[0].get<double>();
            hi = row.at("ci")[1].get<double>();
        }

    Outcome out;
    out.pass = run.exit_code == 0 && coverage >= 0.87 && coverage <= 0.93;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "90%% ellipsoid coverage at T=1e6: %.4f (CI [%.4f, %.4f]), "
                  "target 0.90 +/- 0.03",
                  coverage, lo, hi);
    out.detail = buf;
    return out;
}

Outcome criterion_gaussian_trend() {
    const ExperimentOutcome run =
        run_config_file("td_berry_esseen_reference.json", "c7", 1);
    const json report = json::parse(slurp(run.report_path));
    const bool monotone =
        report.at("halfspace_monotone_nonincreasing").get<bool>();
    const bool negative =
        report.at("halfspace_slope_negative_ci_excludes_zero").get<bool>();
    const auto medians = report.at("halfspace_median");

    Outcome out;
    out.pass = run.exit_code == 0 && monotone && negative;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "halfspace medians %.3f -> %.3f over T=1e3..1e6, slope %.3f, "
                  "CI [%.3f, %.3f]; monotone %s",
                  medians.front().get<double>(), medians.back().get<double>(),
                  report.at("halfspace_slope").get<double>(),
                  report.at("halfspace_slope_ci")[0].get<double>(),
                  report.at("halfspace_slope_ci")[1].get<double>(),
                  monotone ? "yes" : "NO");
    out.detail = buf;
    return out;
}

// ---- criterion 8: finite-horizon expansion band -------------------------------

Outcome criterion_expansion_band() {
    // Random models in the strongly contracting regime, stepsize at the
    // admissible cap, so the first-order expansion is active on the grid.
    const double alpha = 0.6;
    std::vector<long> horizons;
    for (int p = 10; p <= 20; ++p) horizons.push_back(1L << p);

    double worst_band = 0.0;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        RandomMrpSpec spec;
        spec.n_states = 20;
        spec.branching = 4;
        spec.dim = 2;
        spec.gamma = 0.2;
        spec.min_lambda0 = 0.10;
        spec.seed = seed;
        const MrpModel m = generate_random_mrp(spec);
        const double eta0 = 1.0 / (2.0 * m.lambda_sigma);

        const GammaResult g = gamma_tilde(m);
        const Matrix lam = lambda_star(m, g.gamma);
        const Matrix x = lyapunov_correction(m.steady_a, lam, eta0);
        const double g_norm = spectral_norm(g.gamma);

        double lo = 1e300, hi = 0.0;
        for (long big_t : horizons) {
            const Matrix lt =
                lambda_T_accumulate(m.steady_a, g.gamma, eta0, alpha, big_t);
            const double tcorr =
                std::pow(static_cast<double>(big_t), alpha - 1.0);
            const double ratio = spectral_norm(lt - lam - tcorr * x) /
                                 (tcorr * tcorr * g_norm);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        worst_band = std::max(worst_band, hi / lo);
    }

    Outcome out;
    out.pass = worst_band <= 4.0;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "normalized expansion residual over T=2^10..2^20 on 10 "
                  "random models: worst band %.2fx (limit 4x)",
                  worst_band);
    out.detail = buf;
    return out;
}

// ---- criterion 9: worker-count determinism ------------------------------------

Outcome criterion_determinism() {
    const auto dir_a = work_dir() / "c9_w1";
    const auto dir_b = work_dir() / "c9_w3";
    const auto cfg =
        std::filesystem::path(MCUQ_CONFIGS_DIR) / "td_rate_reference.json";
    const auto log = work_dir() / "c9.log";

    const auto run = [&](const std::filesystem::path& out, int workers) {
        const std::string cmd = std::string(MCUQ_CLI_PATH) + " sweep " +
                                cfg.string() + " --workers " +
                                std::to_string(workers) + " --out " +
                                out.string() + " >> " + log.string() + " 2>&1";
        const int raw = std::system(cmd.c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    const int code_a = run(dir_a, 1);
    const int code_b = run(dir_b, 3);

    const std::string csv_a = slurp(dir_a / "td_rate.csv");
    const std::string csv_b = slurp(dir_b / "td_rate.csv");

    Outcome out;
    out.pass = code_a == 0 && code_b == 0 && !csv_a.empty() && csv_a == csv_b;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "full sweep at 1 vs 3 workers: exits %d/%d, tables %s "
                  "(%zu bytes)",
                  code_a, code_b,
                  csv_a == csv_b ? "byte-identical" : "DIFFER", csv_a.size());
    out.detail = buf;
    return out;
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"exact identities", criterion_identities},
        {"certified model and step-product facts", criterion_certified_facts},
        {"matrix tail dominance", criterion_matrix_tail},
        {"scalar tail calibration", criterion_scalar_tail},
        {"averaged-iterate error rate", criterion_rate},
        {"confidence-ellipsoid coverage", criterion_coverage},
        {"gaussian-approximation trend", criterion_gaussian_trend},
        {"finite-horizon expansion band", criterion_expansion_band},
        {"worker-count determinism", criterion_determinism},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].fn();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          start)
                .count();
        if (!out.pass) ++failures;
        std::printf("[%s] %zu. %s — %s (%.1f s)\n",
                    out.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                    out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("acceptance: %zu/%zu criteria passed\n",
                criteria.size() - static_cast<size_t>(failures),
                criteria.size());
    return failures;
}
