#include "mcuq/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <numeric>

#include "mcuq/errors.hpp"
#include "mcuq/json_io.hpp"
#include "mcuq/martingale.hpp"
#include "mcuq/metrics.hpp"
#include "mcuq/parallel.hpp"
#include "mcuq/rng.hpp"
#include "mcuq/stats.hpp"

namespace mcuq {

namespace {

using nlohmann::json;

// Stream tags reserved for harness-level draws; replication streams use ids
// 0..R-1, so tags live far above any realistic replication count.
constexpr uint64_t kStreamModelGen = 0x6d6f64656cULL;   // model generation
constexpr uint64_t kStreamNoiseFn = 0x66756e6373ULL;    // random g / matrix fns
constexpr uint64_t kStreamDirections = 0x64697265ULL;   // projection directions
constexpr uint64_t kStreamSliced = 0x736c696365ULL;     // sliced-W1 draws
constexpr uint64_t kStreamBootstrap = 0x626f6f74ULL;    // CI resampling

} // namespace

// ---- random model generation -------------------------------------------------

MrpModel generate_random_mrp(const RandomMrpSpec& spec) {
    const int n = spec.n_states;
    if (n < 1) throw InvalidModel("random MRP needs at least one state");
    if (spec.branching < 1 || spec.branching > n)
        throw InvalidModel("branching must lie in [1, n_states]");
    if (spec.dim < 1 || spec.dim > n)
        throw InvalidModel("feature dimension must lie in [1, n_states]");
    if (!(spec.gamma >= 0.0 && spec.gamma < 1.0))
        throw InvalidModel("discount must lie in [0, 1)");

    std::string last_failure = "none";
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(spec.seed, kStreamModelGen + static_cast<uint64_t>(attempt));

        // Kernel: `branching` successors per row (partial Fisher-Yates pick),
        // Dirichlet(1) weights, then uniform smoothing for irreducibility.
        Matrix kernel = Matrix::Zero(n, n);
        std::vector<int> pool(static_cast<size_t>(n));
        for (int row = 0; row < n; ++row) {
            std::iota(pool.begin(), pool.end(), 0);
            for (int k = 0; k < spec.branching; ++k) {
                const uint64_t pick =
                    k + rng.below(static_cast<uint64_t>(n - k));
                std::swap(pool[static_cast<size_t>(k)], pool[pick]);
            }
            double total = 0.0;
            std::vector<double> weight(static_cast<size_t>(spec.branching));
            for (int k = 0; k < spec.branching; ++k) {
                weight[static_cast<size_t>(k)] = -std::log(rng.uniform_pos());
                total += weight[static_cast<size_t>(k)];
            }
            for (int k = 0; k < spec.branching; ++k)
                kernel(row, pool[static_cast<size_t>(k)]) =
                    weight[static_cast<size_t>(k)] / total;
        }
        if (spec.eps_mix > 0.0) {
            const double floor_mass = spec.eps_mix / static_cast<double>(n);
            kernel.array() += floor_mass;
            kernel /= (1.0 + spec.eps_mix);
        }

        // Features: rows uniform in the unit ball (direction x radius).
        Matrix features(n, spec.dim);
        for (int s = 0; s < n; ++s) {
            Vector dir(spec.dim);
            double norm_sq = 0.0;
            do {
                for (int j = 0; j < spec.dim; ++j) dir[j] = rng.normal();
                norm_sq = dir.squaredNorm();
            } while (norm_sq <= 0.0);
            const double radius =
                std::pow(rng.uniform_pos(), 1.0 / static_cast<double>(spec.dim));
            features.row(s) = (radius / std::sqrt(norm_sq)) * dir.transpose();
        }

        Vector rewards(n);
        for (int s = 0; s < n; ++s) rewards[s] = rng.uniform();

        try {
            ChainModel chain = build_chain(kernel);
            MrpModel model = build_mrp(chain, features, rewards, spec.gamma);
            if (model.lambda0 < spec.min_lambda0)
                throw DegenerateFeatures(fmt::format(
                    "feature curvature {} below floor {}", model.lambda0,
                    spec.min_lambda0));
            return model;
        } catch (const Error& e) {
            last_failure = e.what();
        }
    }
    throw GenerationExhausted(
        fmt::format("no valid model in 100 attempts (last failure: {})",
                    last_failure));
}

// ---- replication sweeps --------------------------------------------------------

namespace {

void validate_t_grid(const std::vector<long>& t_grid) {
    if (t_grid.empty()) throw InvalidModel("horizon grid must be nonempty");
    long prev = 0;
    for (long t : t_grid) {
        if (t <= prev)
            throw InvalidModel("horizon grid must be strictly increasing and positive");
        prev = t;
    }
}

TdConfig grid_config(const TdConfig& base, const std::vector<long>& t_grid) {
    TdConfig cfg = base;
    cfg.horizon = t_grid.back();
    cfg.checkpoints = t_grid;
    return cfg;
}

} // namespace

std::vector<std::vector<double>> td_error_sweep(const MrpModel& model,
                                                const TdConfig& base,
                                                const std::vector<long>& t_grid,
                                                int replications, uint64_t seed,
                                                int workers) {
    validate_t_grid(t_grid);
    if (replications < 1) throw InvalidModel("need at least one replication");
    const TdConfig cfg = grid_config(base, t_grid);
    std::vector<std::vector<double>> errors(
        t_grid.size(), std::vector<double>(static_cast<size_t>(replications)));
    parallel_for(replications, workers, [&](long r) {
        const std::vector<double> trace =
            td_error_trace(model, cfg, seed, static_cast<uint64_t>(r));
        for (size_t i = 0; i < t_grid.size(); ++i)
            errors[i][static_cast<size_t>(r)] = trace[i];
    });
    return errors;
}

std::vector<Matrix> td_average_sweep(const MrpModel& model, const TdConfig& base,
                                     const std::vector<long>& t_grid,
                                     int replications, uint64_t seed,
                                     int workers) {
    validate_t_grid(t_grid);
    if (replications < 1) throw InvalidModel("need at least one replication");
    const TdConfig cfg = grid_config(base, t_grid);
    std::vector<Matrix> samples(t_grid.size());
    for (auto& m : samples) m = Matrix::Zero(replications, model.dim());
    parallel_for(replications, workers, [&](long r) {
        td_run_collect(model, cfg, seed, static_cast<uint64_t>(r),
                       [&](long t, const Vector& theta_bar) {
                           const auto it = std::lower_bound(t_grid.begin(),
                                                            t_grid.end(), t);
                           if (it == t_grid.end() || *it != t) return;
                           const auto i =
                               static_cast<size_t>(it - t_grid.begin());
                           samples[i].row(r) = theta_bar.transpose();
                       });
    });
    return samples;
}

// ---- coverage ---------------------------------------------------------------------

std::vector<CoverageRow> coverage_table(const MrpModel& model,
                                        const Matrix& gamma_tilde_mat,
                                        const Matrix& lambda_star_mat,
                                        const TdConfig& base,
                                        const std::vector<long>& t_grid,
                                        const std::vector<double>& nominals,
                                        int replications, uint64_t seed,
                                        int workers) {
    validate_t_grid(t_grid);
    if (nominals.empty()) throw InvalidModel("need at least one nominal level");
    for (double q : nominals)
        if (!(q > 0.0 && q < 1.0))
            throw InvalidModel("nominal levels must lie in (0, 1)");

    Eigen::SelfAdjointEigenSolver<Matrix> gamma_eig(gamma_tilde_mat);
    if (gamma_eig.eigenvalues().minCoeff() <= 1e-10)
        throw DegenerateGamma("noise covariance is numerically rank deficient");

    Eigen::LLT<Matrix> lambda_chol(lambda_star_mat);
    if (lambda_chol.info() != Eigen::Success)
        throw SingularCovariance("asymptotic covariance is not positive definite");

    const double eta0 =
        base.eta0 > 0.0 ? base.eta0 : default_eta0(model);
    const double horizon_floor =
        lambda_T_threshold(model, gamma_tilde_mat, eta0, base.alpha);

    const std::vector<Matrix> samples =
        td_average_sweep(model, base, t_grid, replications, seed, workers);

    const int d = model.dim();
    std::vector<CoverageRow> rows;
    rows.reserve(t_grid.size() * nominals.size());
    for (size_t i = 0; i < t_grid.size(); ++i) {
        const double t = static_cast<double>(t_grid[i]);
        std::vector<double> stat(static_cast<size_t>(replications));
        for (int r = 0; r < replications; ++r) {
            const Vector diff =
                samples[i].row(r).transpose() - model.theta_star;
            stat[static_cast<size_t>(r)] =
                t * diff.dot(lambda_chol.solve(diff));
        }
        for (double q : nominals) {
            const double radius = chi_squared_quantile(d, q);
            long hits = 0;
            for (double s : stat)
                if (s <= radius) ++hits;
            const WilsonInterval ci = wilson_interval(hits, replications);
            CoverageRow row;
            row.horizon = t_grid[i];
            row.nominal = q;
            row.coverage = ci.point;
            row.ci_lo = ci.lo;
            row.ci_hi = ci.hi;
            row.below_threshold = t < horizon_floor;
            rows.push_back(row);
        }
    }
    return rows;
}

// ---- experiment front door -----------------------------------------------------

namespace {

// -- small CSV builder (deterministic: shortest round-trip doubles, \n rows) --

class CsvBuilder {
public:
    explicit CsvBuilder(std::string header) { text_ = std::move(header) += '\n'; }

    CsvBuilder& field(const std::string& s) { return raw(s); }
    CsvBuilder& field(const char* s) { return raw(s); }
    CsvBuilder& field(double x) { return raw(format_double(x)); }
    CsvBuilder& field(long x) { return raw(std::to_string(x)); }
    CsvBuilder& field(int x) { return raw(std::to_string(x)); }
    CsvBuilder& field(uint64_t x) { return raw(std::to_string(x)); }
    CsvBuilder& field(bool b) { return raw(b ? "true" : "false"); }

    void end_row() {
        text_ += '\n';
        row_open_ = false;
    }

    const std::string& text() const { return text_; }

private:
    CsvBuilder& raw(std::string s) {
        if (row_open_) text_ += ',';
        text_ += std::move(s);
        row_open_ = true;
        return *this;
    }

    std::string text_;
    bool row_open_ = false;
};

struct ExperimentContext {
    std::string kind;
    json config;
    uint64_t seed = 1;
    int workers = 0;
    std::string out_dir = "out";
    std::string hash_hex;   // config hash excluding workers/out_dir
    std::string file_stem;  // kind with '-' -> '_'
};

json effective_config(const std::string& config_text,
                      const RunOverrides& overrides) {
    json cfg = json::parse(config_text, nullptr, true, /*ignore_comments=*/true);
    if (!cfg.is_object()) throw InvalidModel("experiment config must be a JSON object");
    if (overrides.seed) cfg["seed"] = *overrides.seed;
    if (overrides.workers) cfg["workers"] = *overrides.workers;
    if (overrides.out_dir) cfg["out_dir"] = *overrides.out_dir;
    return cfg;
}

ExperimentContext make_context(json cfg) {
    ExperimentContext ctx;
    if (!cfg.contains("experiment") || !cfg.at("experiment").is_string())
        throw InvalidModel("experiment config needs an \"experiment\" kind");
    ctx.kind = cfg.at("experiment").get<std::string>();
    ctx.seed = cfg.value("seed", uint64_t{1});
    ctx.workers = cfg.value("workers", 0);
    ctx.out_dir = cfg.value("out_dir", std::string("out"));

    // A random model stanza without its own seed inherits the master seed,
    // pinned here so the hash reflects the model actually used.
    if (cfg.contains("model") && cfg.at("model").is_object() &&
        cfg.at("model").contains("random_mrp") &&
        cfg.at("model").at("random_mrp").is_object() &&
        !cfg.at("model").at("random_mrp").contains("seed"))
        cfg["model"]["random_mrp"]["seed"] = ctx.seed;

    // Worker count and output location must not influence any emitted byte.
    json hash_basis = cfg;
    hash_basis.erase("workers");
    hash_basis.erase("out_dir");
    ctx.hash_hex = fmt::format("{:016x}", config_hash(hash_basis.dump()));

    ctx.file_stem = ctx.kind;
    std::replace(ctx.file_stem.begin(), ctx.file_stem.end(), '-', '_');
    ctx.config = std::move(cfg);
    return ctx;
}

std::string table_path(const ExperimentContext& ctx) {
    return (std::filesystem::path(ctx.out_dir) / (ctx.file_stem + ".csv")).string();
}

std::string report_path(const ExperimentContext& ctx) {
    return (std::filesystem::path(ctx.out_dir) / (ctx.file_stem + "_report.json"))
        .string();
}

json report_skeleton(const ExperimentContext& ctx) {
    json doc;
    doc["schema"] = 1;
    doc["experiment"] = ctx.kind;
    doc["seed"] = ctx.seed;
    doc["config_hash"] = ctx.hash_hex;
    return doc;
}

MrpModel model_from_stanza(const json& cfg, uint64_t master_seed) {
    if (!cfg.contains("model") || !cfg.at("model").is_object())
        throw InvalidModel("experiment config needs a \"model\" stanza");
    const json& model = cfg.at("model");
    if (model.contains("random_mrp")) {
        const json& rm = model.at("random_mrp");
        RandomMrpSpec spec;
        spec.n_states = rm.value("n_states", spec.n_states);
        spec.branching = rm.value("branching", spec.branching);
        spec.dim = rm.value("dim", spec.dim);
        spec.gamma = rm.value("gamma", spec.gamma);
        spec.min_lambda0 = rm.value("min_lambda0", spec.min_lambda0);
        spec.eps_mix = rm.value("eps_mix", spec.eps_mix);
        spec.seed = rm.value("seed", master_seed);
        return generate_random_mrp(spec);
    }
    if (model.contains("chain")) return mrp_from_json(model.dump());
    throw InvalidModel("model stanza needs \"chain\" or \"random_mrp\"");
}

ChainModel chain_from_stanza(const json& cfg) {
    if (!cfg.contains("model") || !cfg.at("model").is_object())
        throw InvalidModel("experiment config needs a \"model\" stanza");
    const json& model = cfg.at("model");
    if (model.contains("kernel")) return chain_from_json(model.dump());
    if (model.contains("chain")) return chain_from_json(model.at("chain").dump());
    throw InvalidModel("martingale experiments need a chain model (\"kernel\")");
}

std::vector<long> long_grid(const json& cfg, const char* key,
                            std::vector<long> fallback) {
    if (!cfg.contains(key)) {
        validate_t_grid(fallback);
        return fallback;
    }
    std::vector<long> grid;
    for (const auto& v : cfg.at(key)) grid.push_back(v.get<long>());
    validate_t_grid(grid);
    return grid;
}

std::vector<double> double_grid(const json& cfg, const char* key,
                                std::vector<double> fallback) {
    if (!cfg.contains(key)) return fallback;
    std::vector<double> grid;
    for (const auto& v : cfg.at(key)) grid.push_back(v.get<double>());
    if (grid.empty()) throw InvalidModel(fmt::format("{} must be nonempty", key));
    return grid;
}

TdConfig td_config_from(const json& cfg) {
    TdConfig base;
    base.eta0 = cfg.value("eta0", 0.0);
    base.alpha = cfg.value("alpha", 0.75);
    return base;
}

// Per-state vector-valued g for martingale experiments: explicit table or a
// seeded uniform [-1, 1] draw.
Matrix g_values_from(const json& cfg, const ChainModel& chain, uint64_t seed) {
    const int n = chain.n_states();
    if (cfg.contains("g")) {
        const json& rows = cfg.at("g");
        if (!rows.is_array() || static_cast<int>(rows.size()) != n)
            throw InvalidModel("g must have one row per state");
        const int d = static_cast<int>(rows.front().size());
        Matrix g(n, d);
        for (int s = 0; s < n; ++s) {
            if (static_cast<int>(rows[static_cast<size_t>(s)].size()) != d)
                throw InvalidModel("g rows must have equal lengths");
            for (int j = 0; j < d; ++j)
                g(s, j) = rows[static_cast<size_t>(s)][static_cast<size_t>(j)]
                              .get<double>();
        }
        return g;
    }
    const int d = cfg.value("g_dim", 3);
    if (d < 1) throw InvalidModel("g_dim must be positive");
    Rng rng(seed, kStreamNoiseFn);
    Matrix g(n, d);
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < d; ++j) g(s, j) = 2.0 * rng.uniform() - 1.0;
    return g;
}

// Random symmetric per-state matrix functions for the matrix-tail experiment.
std::vector<std::vector<Matrix>> matrix_functions_from(const json& cfg,
                                                       const ChainModel& chain,
                                                       uint64_t seed) {
    const int n = chain.n_states();
    if (cfg.contains("functions")) {
        std::vector<std::vector<Matrix>> fns;
        for (const auto& fn : cfg.at("functions")) {
            if (!fn.is_array() || static_cast<int>(fn.size()) != n)
                throw InvalidModel("each matrix function needs one matrix per state");
            std::vector<Matrix> per_state;
            for (const auto& rows : fn) {
                const int d = static_cast<int>(rows.size());
                Matrix m(d, d);
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j)
                        m(i, j) = rows[static_cast<size_t>(i)]
                                      [static_cast<size_t>(j)].get<double>();
                per_state.push_back(std::move(m));
            }
            fns.push_back(std::move(per_state));
        }
        if (fns.empty()) throw InvalidModel("functions must be nonempty");
        return fns;
    }
    const int count = cfg.value("n_functions", 3);
    const int d = cfg.value("function_dim", 2);
    if (count < 1 || d < 1)
        throw InvalidModel("n_functions and function_dim must be positive");
    std::vector<std::vector<Matrix>> fns;
    fns.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) {
        Rng rng(seed, kStreamNoiseFn + 1 + static_cast<uint64_t>(k));
        std::vector<Matrix> per_state;
        per_state.reserve(static_cast<size_t>(n));
        for (int s = 0; s < n; ++s) {
            Matrix raw(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) raw(i, j) = 2.0 * rng.uniform() - 1.0;
            per_state.push_back(0.5 * (raw + raw.transpose()));
        }
        fns.push_back(std::move(per_state));
    }
    return fns;
}

// Percentile-bootstrap interval for the median of a small replicate set.
std::pair<double, double> bootstrap_median_ci(const std::vector<double>& values,
                                              uint64_t seed, uint64_t stream) {
    if (values.size() < 2) {
        const double v = values.empty() ? 0.0 : values.front();
        return {v, v};
    }
    constexpr int kDraws = 400;
    Rng rng(seed, stream);
    std::vector<double> medians(kDraws);
    std::vector<double> draw(values.size());
    for (int b = 0; b < kDraws; ++b) {
        for (auto& x : draw)
            x = values[rng.below(static_cast<uint64_t>(values.size()))];
        medians[static_cast<size_t>(b)] = median_of(draw);
    }
    return {quantile_of(medians, 0.025), quantile_of(medians, 0.975)};
}

// Batched discrepancy estimates between an empirical cloud and a Gaussian
// law.  Batches reuse the same stream ids across horizons so the direction
// sets are shared, which keeps the per-horizon estimates positively
// correlated (a variance-reduction choice for trend fitting).
struct BatchedDiscrepancy {
    std::vector<double> halfspace; // one value per batch
    std::vector<double> sliced;
};

BatchedDiscrepancy batched_discrepancy(const Matrix& samples,
                                       const GaussianLaw& law, int batches,
                                       int per_batch, uint64_t seed) {
    BatchedDiscrepancy out;
    out.halfspace.resize(static_cast<size_t>(batches));
    out.sliced.resize(static_cast<size_t>(batches));
    for (int b = 0; b < batches; ++b) {
        const auto tag = static_cast<uint64_t>(b);
        out.halfspace[static_cast<size_t>(b)] =
            halfspace_discrepancy(samples, law, per_batch, seed,
                                  kStreamDirections + tag)
                .value;
        out.sliced[static_cast<size_t>(b)] =
            sliced_wasserstein(samples, law, per_batch, seed,
                               kStreamSliced + tag);
    }
    return out;
}

struct PipelineResult {
    int exit_code = 0;
    std::string summary;
    std::string csv_text;
    json report;
};

// -- td-rate: median error decay across horizons + theory comparison ---------

PipelineResult run_td_rate(const ExperimentContext& ctx) {
    const json& cfg = ctx.config;
    const MrpModel model = model_from_stanza(cfg, ctx.seed);
    const std::vector<long> grid =
        long_grid(cfg, "t_grid", {1000, 10000, 100000, 1000000});
    if (grid.size() < 4)
        throw InvalidModel("rate experiments need at least 4 horizons");
    const int replications = cfg.value("replications", 500);
    const TdConfig base = td_config_from(cfg);

    const auto errors =
        td_error_sweep(model, base, grid, replications, ctx.seed, ctx.workers);
    const RateFit fit = fit_rate_replicates(grid, errors, 200, ctx.seed);

    const GammaResult gamma = gamma_tilde(model);
    const Matrix lam_star = lambda_star(model, gamma.gamma);
    const double theory_rmse =
        std::sqrt(lam_star.trace() / static_cast<double>(grid.back()));
    const double median_at_max = median_of(errors.back());
    const double ratio = theory_rmse > 0.0 ? median_at_max / theory_rmse : 0.0;

    CsvBuilder csv("seed,config_hash,stream_id,T,error_bar" + [&] {
        std::string extra;
        for (long t : grid) extra += fmt::format(",err_t{}", t);
        return extra;
    }());
    for (int r = 0; r < replications; ++r) {
        csv.field(ctx.seed)
            .field(ctx.hash_hex)
            .field(static_cast<long>(r))
            .field(grid.back())
            .field(errors.back()[static_cast<size_t>(r)]);
        for (size_t i = 0; i < grid.size(); ++i)
            csv.field(errors[i][static_cast<size_t>(r)]);
        csv.end_row();
    }

    json report = report_skeleton(ctx);
    report["replications"] = replications;
    report["t_grid"] = grid;
    json medians = json::object();
    for (size_t i = 0; i < grid.size(); ++i)
        medians[std::to_string(grid[i])] = median_of(errors[i]);
    report["median_error"] = std::move(medians);
    report["slope"] = fit.slope;
    report["slope_ci"] = {fit.ci_lo, fit.ci_hi};
    report["intercept"] = fit.intercept;
    report["r2"] = fit.r2;
    report["theory_rmse_at_max"] = theory_rmse;
    report["median_over_theory_at_max"] = ratio;
    const bool slope_ok = fit.slope >= -0.6 && fit.slope <= -0.4;
    const bool ratio_ok = ratio <= 3.0 && ratio >= 1.0 / 3.0;
    report["slope_in_band"] = slope_ok;
    report["median_within_3x_of_theory"] = ratio_ok;

    PipelineResult res;
    res.csv_text = csv.text();
    res.report = std::move(report);
    res.summary = fmt::format(
        "td-rate: slope {:.4f} (95% CI [{:.4f}, {:.4f}]), median error at T={} "
        "is {:.6g} vs theory {:.6g} (ratio {:.3f}); slope band {}, ratio band {}.",
        fit.slope, fit.ci_lo, fit.ci_hi, grid.back(), median_at_max, theory_rmse,
        ratio, slope_ok ? "pass" : "FAIL", ratio_ok ? "pass" : "FAIL");
    return res;
}

// -- td-coverage: ellipsoid coverage table ------------------------------------

PipelineResult run_td_coverage(const ExperimentContext& ctx) {
    const json& cfg = ctx.config;
    const MrpModel model = model_from_stanza(cfg, ctx.seed);
    const std::vector<long> grid = long_grid(cfg, "t_grid", {1000000});
    const std::vector<double> nominals =
        double_grid(cfg, "nominals", {0.8, 0.9, 0.95});
    const int replications = cfg.value("replications", 2000);
    const TdConfig base = td_config_from(cfg);

    const GammaResult gamma = gamma_tilde(model);
    const Matrix lam_star = lambda_star(model, gamma.gamma);
    const auto rows = coverage_table(model, gamma.gamma, lam_star, base, grid,
                                     nominals, replications, ctx.seed,
                                     ctx.workers);

    CsvBuilder csv("seed,config_hash,T,nominal,coverage,ci_lo,ci_hi,below_threshold");
    for (const auto& row : rows) {
        csv.field(ctx.seed)
            .field(ctx.hash_hex)
            .field(row.horizon)
            .field(row.nominal)
            .field(row.coverage)
            .field(row.ci_lo)
            .field(row.ci_hi)
            .field(row.below_threshold);
        csv.end_row();
    }

    json report = report_skeleton(ctx);
    report["replications"] = replications;
    report["t_grid"] = grid;
    report["nominals"] = nominals;
    json table = json::array();
    for (const auto& row : rows) {
        json r;
        r["T"] = row.horizon;
        r["nominal"] = row.nominal;
        r["coverage"] = row.coverage;
        r["ci"] = {row.ci_lo, row.ci_hi};
        r["below_threshold"] = row.below_threshold;
        table.push_back(std::move(r));
    }
    report["coverage"] = std::move(table);

    // Headline figure: coverage of the 0.9 ellipsoid at the largest horizon
    // (when that level is present).
    std::string headline = "n/a";
    for (const auto& row : rows)
        if (row.horizon == grid.back() && std::abs(row.nominal - 0.9) < 1e-12)
            headline = fmt::format("{:.4f} (CI [{:.4f}, {:.4f}])", row.coverage,
                                   row.ci_lo, row.ci_hi);

    PipelineResult res;
    res.csv_text = csv.text();
    res.report = std::move(report);
    res.summary = fmt::format(
        "td-coverage: {} replications; 90% ellipsoid coverage at T={}: {}.",
        replications, grid.back(), headline);
    return res;
}

// -- td-berry-esseen: Gaussian-approximation trend over horizons --------------

PipelineResult run_td_berry_esseen(const ExperimentContext& ctx) {
    const json& cfg = ctx.config;
    const MrpModel model = model_from_stanza(cfg, ctx.seed);
    const std::vector<long> grid =
        long_grid(cfg, "t_grid", {1000, 10000, 100000, 1000000});
    if (grid.size() < 4)
        throw InvalidModel("trend experiments need at least 4 horizons");
    const int replications = cfg.value("replications", 2000);
    const int batches = cfg.value("direction_batches", 10);
    const int per_batch = cfg.value("directions_per_batch", 32);
    if (batches < 2 || per_batch < 1)
        throw InvalidModel("need at least 2 direction batches of >= 1 direction");
    const TdConfig base = td_config_from(cfg);

    const GammaResult gamma = gamma_tilde(model);
    const Matrix lam_star = lambda_star(model, gamma.gamma);
    GaussianLaw law;
    law.mean = Vector::Zero(model.dim());
    law.cov = lam_star;

    const auto samples =
        td_average_sweep(model, base, grid, replications, ctx.seed, ctx.workers);

    std::vector<std::vector<double>> half_batches(grid.size());
    std::vector<std::vector<double>> sliced_batches(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        const double scale = std::sqrt(static_cast<double>(grid[i]));
        Matrix cloud = samples[i];
        cloud.rowwise() -= model.theta_star.transpose();
        cloud *= scale;
        const BatchedDiscrepancy est =
            batched_discrepancy(cloud, law, batches, per_batch, ctx.seed);
        half_batches[i] = est.halfspace;
        sliced_batches[i] = est.sliced;
    }

    const RateFit half_fit =
        fit_rate_replicates(grid, half_batches, 200, ctx.seed);
    const RateFit sliced_fit =
        fit_rate_replicates(grid, sliced_batches, 200, ctx.seed);

    CsvBuilder csv("seed,config_hash,T,estimator_kind,value,ci_lo,ci_hi");
    std::vector<double> half_medians, sliced_medians;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double hm = median_of(half_batches[i]);
        const auto hci = bootstrap_median_ci(half_batches[i], ctx.seed,
                                             kStreamBootstrap + i);
        csv.field(ctx.seed)
            .field(ctx.hash_hex)
            .field(grid[i])
            .field("halfspace")
            .field(hm)
            .field(hci.first)
            .field(hci.second);
        csv.end_row();
        half_medians.push_back(hm);

        const double sm = median_of(sliced_batches[i]);
        const auto sci = bootstrap_median_ci(sliced_batches[i], ctx.seed,
                                             kStreamBootstrap + 64 + i);
        csv.field(ctx.seed)
            .field(ctx.hash_hex)
            .field(grid[i])
            .field("sliced_w1")
            .field(sm)
            .field(sci.first)
            .field(sci.second);
        csv.end_row();
        sliced_medians.push_back(sm);
    }

    bool monotone = true;
    for (size_t i = 1; i < half_medians.size(); ++i)
        if (half_medians[i] > half_medians[i - 1]) monotone = false;

    json report = report_skeleton(ctx);
    report["replications"] = replications;
    report["t_grid"] = grid;
    report["direction_batches"] = batches;
    report["directions_per_batch"] = per_batch;
    report["halfspace_median"] = half_medians;
    report["sliced_w1_median"] = sliced_medians;
    report["halfspace_slope"] = half_fit.slope;
    report["halfspace_slope_ci"] = {half_fit.ci_lo, half_fit.ci_hi};
    report["sliced_w1_slope"] = sliced_fit.slope;
    report["sliced_w1_slope_ci"] = {sliced_fit.ci_lo, sliced_fit.ci_hi};
    report["halfspace_monotone_nonincreasing"] = monotone;
    report["halfspace_slope_negative_ci_excludes_zero"] = half_fit.ci_hi < 0.0;

    PipelineResult res;
    res.csv_text = csv.text();
    res.report = std::move(report);
    res.summary = fmt::format(
        "td-berry-esseen: halfspace medians {} -> {} over T {}..{} "
        "(slope {:.4f}, CI [{:.4f}, {:.4f}]); monotone {}, CI excludes zero {}.",
        half_medians.front(), half_medians.back(), grid.front(), grid.back(),
        half_fit.slope, half_fit.ci_lo, half_fit.ci_hi,
        monotone ? "yes" : "NO", half_fit.ci_hi < 0.0 ? "yes" : "NO");
    return res;
}

// -- bernstein: scalar tail calibration across sample sizes --------------------

PipelineResult run_bernstein(const ExperimentContext& ctx) {
    const json& cfg = ctx.config;
    const ChainModel chain = chain_from_stanza(cfg);
    const Matrix g = g_values_from(cfg, chain, ctx.seed);
    const MartingaleSpec spec = build_martingale(chain, g);
    const std::vector<long> n_grid =
        long_grid(cfg, "n_grid", {1000, 10000, 100000});
    const std::vector<double> delta_grid =
        double_grid(cfg, "delta_grid", {0.5, 0.2, 0.1, 0.05, 0.02, 0.01});
    const int replications = cfg.value("replications", 2000);
    if (replications < 100)
        throw InvalidModel("tail experiments need >= 100 replications");

    CsvBuilder csv(
        "seed,config_hash,n,grid_point,closed_form,empirical,ci_lo,ci_hi,verdict");
    json per_n = json::array();
    std::vector<double> c_stars;
    for (long n : n_grid) {
        const BoundReport report = verify_tail_bernstein(
            chain, spec, n, delta_grid, replications, ctx.seed, ctx.workers);
        for (const auto& pt : report.points) {
            csv.field(ctx.seed)
                .field(ctx.hash_hex)
                .field(n)
                .field(pt.level)
                .field(pt.closed_form)
                .field(pt.empirical)
                .field(pt.ci_lo)
                .field(pt.ci_hi)
                .field(pt.dominates ? "pass" : "fail");
            csv.end_row();
        }
        json entry;
        entry["n"] = n;
        entry["c_star"] = report.c_star;
        per_n.push_back(std::move(entry));
        c_stars.push_back(report.c_star);
    }

    const double c_min = *std::min_element(c_stars.begin(), c_stars.end());
    const double c_max = *std::max_element(c_stars.begin(), c_stars.end());
    const double spread = c_min > 0.0 ? c_max / c_min
                                      : std::numeric_limits<double>::infinity();
    const bool stable = std::isfinite(spread) && spread < 2.0;

    json report = report_skeleton(ctx);
    report["replications"] = replications;
    report["n_grid"] = n_grid;
    report["delta_grid"] = delta_grid;
    report["calibration"] = std::move(per_n);
    report["c_star_spread"] = spread;
    report["c_star_stable_2x"] = stable;

    PipelineResult res;
    res.csv_text = csv.text();
    res.report = std::move(report);
    res.summary = fmt::format(
        "bernstein: calibration factor c* in [{:.4f}, {:.4f}] across n grid "
        "(spread {:.3f}x, stable-within-2x {}); the closed form carries unit "
        "constants and is reported, not asserted.",
        c_min, c_max, spread, stable ? "pass" : "FAIL");
    return res;
}

// -- hoeffding: strict matrix-tail dominance -----------------------------------

PipelineResult run_hoeffding(const ExperimentContext& ctx) {
    const json& cfg = ctx.config;
    const ChainModel chain = chain_from_stanza(cfg);
    const auto functions = matrix_functions_from(cfg, chain, ctx.seed);
    const long n = cfg.value("n", 4096L);
    const std::vector<double> eps_grid = double_grid(
        cfg, "eps_grid", {0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45});
    const int replications = cfg.value("replications", 2000);
    if (replications < 100)
        throw InvalidModel("tail experiments need >= 100 replications");

    CsvBuilder csv("seed,config_hash,function_id,n,grid_point,closed_form,"
                   "empirical,ci_lo,ci_hi,verdict");
    bool any_violation = false;
    int informative_points = 0;
    for (size_t k = 0; k < functions.size(); ++k) {
        const BoundReport report = verify_tail_hoeffding(
            chain, functions[k], n, eps_grid, replications, ctx.seed,
            ctx.workers);
        any_violation = any_violation || report.any_violation;
        for (const auto& pt : report.points) {
            if (pt.closed_form <= 1.0) ++informative_points;
            csv.field(ctx.seed)
                .field(ctx.hash_hex)
                .field(static_cast<long>(k))
                .field(n)
                .field(pt.level)
                .field(pt.closed_form)
                .field(pt.empirical)
                .field(pt.ci_lo)
                .field(pt.ci_hi)
                .field(pt.dominates ? "pass" : "fail");
            csv.end_row();
        }
    }

    json report = report_skeleton(ctx);
    report["replications"] = replications;
    report["n"] = n;
    report["eps_grid"] = eps_grid;
    report["n_functions"] = functions.size();
    report["informative_points"] = informative_points;
    report["any_violation"] = any_violation;

    PipelineResult res;
    res.exit_code = any_violation ? 2 : 0;
    res.csv_text = csv.text();
    res.report = std::move(report);
    res.summary = fmt::format(
        "hoeffding: {} matrix functions, n={}, {} informative grid points; "
        "strict dominance {}.",
        functions.size(), n, informative_points,
        any_violation ? "VIOLATED" : "holds");
    return res;
}

// -- mtg-berry-esseen: martingale CLT trend over sample sizes -----------------

PipelineResult run_mtg_berry_esseen(const ExperimentContext& ctx) {
    const json& cfg = ctx.config;
    const ChainModel chain = chain_from_stanza(cfg);
    const Matrix g = g_values_from(cfg, chain, ctx.seed);
    const MartingaleSpec spec = build_martingale(chain, g);
    const std::vector<long> grid =
        long_grid(cfg, "n_grid", {1000, 4000, 16000, 64000});
    if (grid.size() < 4)
        throw InvalidModel("trend experiments need at least 4 sample sizes");
    const int replications = cfg.value("replications", 2000);
    const int batches = cfg.value("direction_batches", 10);
    const int per_batch = cfg.value("directions_per_batch", 32);
    if (batches < 2 || per_batch < 1)
        throw InvalidModel("need at least 2 direction batches of >= 1 direction");

    GaussianLaw law;
    law.mean = Vector::Zero(spec.dim());
    law.cov = spec.sigma_n;

    std::vector<std::vector<double>> half_batches(grid.size());
    std::vector<std::vector<double>> sliced_batches(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        const Matrix sums = partial_sum_samples(chain, spec, grid[i],
                                                replications, ctx.seed, 0,
                                                ctx.workers);
        const BatchedDiscrepancy est =
            batched_discrepancy(sums, law, batches, per_batch, ctx.seed);
        half_batches[i] = est.halfspace;
        sliced_batches[i] = est.sliced;
    }

    const RateFit half_fit =
        fit_rate_replicates(grid, half_batches, 200, ctx.seed);

    CsvBuilder csv("seed,config_hash,T,estimator_kind,value,ci_lo,ci_hi");
    std::vector<double> half_medians;
    for (size_t i = 0; i < grid.size(); ++i) {
        const double hm = median_of(half_batches[i]);
        const auto hci = bootstrap_median_ci(half_batches[i], ctx.seed,
                                             kStreamBootstrap + i);
        csv.field(ctx.seed)
            .field(ctx.hash_hex)
            .field(grid[i])
            .field("halfspace")
            .field(hm)
            .field(hci.first)
            .field(hci.second);
        csv.end_row();
        half_medians.push_back(hm);

        const double sm = median_of(sliced_batches[i]);
        const auto sci = bootstrap_median_ci(sliced_batches[i], ctx.seed,
                                             kStreamBootstrap + 64 + i);
        csv.field(ctx.seed)
            .field(ctx.hash_hex)
            .field(grid[i])
            .field("sliced_w1")
            .field(sm)
            .field(sci.first)
            .field(sci.second);
        csv.end_row();
    }

    bool monotone = true;
    for (size_t i = 1; i < half_medians.size(); ++i)
        if (half_medians[i] > half_medians[i - 1]) monotone = false;

    json report = report_skeleton(ctx);
    report["replications"] = replications;
    report["n_grid"] = grid;
    report["halfspace_median"] = half_medians;
    report["halfspace_slope"] = half_fit.slope;
    report["halfspace_slope_ci"] = {half_fit.ci_lo, half_fit.ci_hi};
    report["halfspace_monotone_nonincreasing"] = monotone;

    PipelineResult res;
    res.csv_text = csv.text();
    res.report = std::move(report);
    res.summary = fmt::format(
        "mtg-berry-esseen: halfspace medians {} -> {} over n {}..{} "
        "(slope {:.4f}); monotone {}.",
        half_medians.front(), half_medians.back(), grid.front(), grid.back(),
        half_fit.slope, monotone ? "yes" : "NO");
    return res;
}

} // namespace

ExperimentOutcome run_experiment(const std::string& config_text,
                                 const RunOverrides& overrides) {
    const ExperimentContext ctx =
        make_context(effective_config(config_text, overrides));

    PipelineResult pipeline;
    try {
        if (ctx.kind == "td-rate") pipeline = run_td_rate(ctx);
        else if (ctx.kind == "td-coverage") pipeline = run_td_coverage(ctx);
        else if (ctx.kind == "td-berry-esseen") pipeline = run_td_berry_esseen(ctx);
        else if (ctx.kind == "bernstein") pipeline = run_bernstein(ctx);
        else if (ctx.kind == "hoeffding") pipeline = run_hoeffding(ctx);
        else if (ctx.kind == "mtg-berry-esseen") pipeline = run_mtg_berry_esseen(ctx);
        else
            throw InvalidModel(fmt::format(
                "unknown experiment kind \"{}\" (expected td-rate, td-coverage, "
                "td-berry-esseen, bernstein, hoeffding, or mtg-berry-esseen)",
                ctx.kind));
    } catch (const Error& e) {
        throw Error(fmt::format("experiment {}: {}", ctx.kind, e.what()));
    }

    ExperimentOutcome outcome;
    outcome.exit_code = pipeline.exit_code;
    outcome.summary = pipeline.summary;
    outcome.report_path = report_path(ctx);
    const std::string csv_path = table_path(ctx);
    outcome.table_paths.push_back(csv_path);

    pipeline.report["exit_code"] = pipeline.exit_code;
    pipeline.report["tables"] = outcome.table_paths;
    atomic_write_text(csv_path, pipeline.csv_text);
    atomic_write_text(outcome.report_path, pipeline.report.dump(2) + "\n");
    return outcome;
}

MrpModel model_from_config_json(const std::string& model_json_text) {
    json model = json::parse(model_json_text, nullptr, true,
                             /*ignore_comments=*/true);
    json wrapper;
    wrapper["model"] = std::move(model);
    return model_from_stanza(wrapper, 0);
}

} // namespace mcuq
