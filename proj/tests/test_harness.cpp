#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcuq/covariance.hpp"
#include "mcuq/errors.hpp"
#include "mcuq/harness.hpp"
#include "mcuq/json_io.hpp"
#include "mcuq/mrp.hpp"
#include "test_helpers.hpp"

using namespace mcuq;
using nlohmann::json;
using test_helpers::two_state_mrp;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

int line_count(const std::string& text) {
    int lines = 0;
    for (char ch : text)
        if (ch == '\n') ++lines;
    return lines;
}

std::filesystem::path fresh_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("mcuq_harness_" + tag);
    std::filesystem::remove_all(dir);
    return dir;
}

std::string fixture_model_stanza() {
    return R"({
      "chain": {
        "kernel": [[0.9, 0.1], [0.2, 0.8]],
        "initial": [1.0, 0.0],
        "density_p": "inf"
      },
      "features": [[0.7071067811865476, 0.0], [0.0, 1.0]],
      "rewards": [1.0, 0.0],
      "gamma": 0.25
    })";
}

std::string tiny_rate_config() {
    return std::string(R"({
      "experiment": "td-rate",
      "seed": 3,
      "model": )") +
           fixture_model_stanza() + R"(,
      "eta0": 1.4999,
      "alpha": 0.75,
      "replications": 24,
      "t_grid": [500, 1000, 2000, 4000]
    })";
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("random model generator is deterministic and honors its contract") {
    for (uint64_t seed = 1; seed <= 30; ++seed) {
        RandomMrpSpec spec;
        spec.n_states = 12;
        spec.branching = 4;
        spec.dim = 3;
        spec.seed = seed;
        const MrpModel m = generate_random_mrp(spec);

        REQUIRE(m.chain.kernel.rows() == spec.n_states);
        REQUIRE(m.features.rows() == spec.n_states);
        REQUIRE(m.features.cols() == spec.dim);
        CHECK(m.gamma == spec.gamma);
        for (int s = 0; s < spec.n_states; ++s) {
            CHECK(std::abs(m.chain.kernel.row(s).sum() - 1.0) <= 1e-12);
            CHECK(m.chain.kernel.row(s).minCoeff() > 0.0); // smoothing mass
            CHECK(m.features.row(s).norm() <= 1.0 + 1e-12);
            CHECK(m.rewards[s] >= 0.0);
            CHECK(m.rewards[s] <= 1.0);
            CHECK(m.chain.stationary[s] > 0.0);
        }
        CHECK(m.lambda0 >= spec.min_lambda0);
    }

    // same seed, same model; different seed, different model
    RandomMrpSpec spec;
    spec.seed = 7;
    const MrpModel a = generate_random_mrp(spec);
    const MrpModel b = generate_random_mrp(spec);
    CHECK((a.chain.kernel - b.chain.kernel).norm() == 0.0);
    CHECK((a.features - b.features).norm() == 0.0);
    CHECK((a.rewards - b.rewards).norm() == 0.0);
    spec.seed = 8;
    CHECK((a.chain.kernel - generate_random_mrp(spec).chain.kernel).norm() > 0.0);

    // fully dense branching is admissible
    RandomMrpSpec dense;
    dense.n_states = 6;
    dense.branching = 6;
    dense.dim = 2;
    dense.seed = 3;
    CHECK(generate_random_mrp(dense).chain.kernel.minCoeff() > 0.0);
}

TEST_CASE("error sweep is worker-invariant and matches single runs") {
    const MrpModel m = two_state_mrp();
    TdConfig base;
    base.eta0 = 1.4999;
    base.alpha = 0.75;
    const std::vector<long> grid = {500, 2000};
    const int reps = 8;

    const auto lone = td_error_sweep(m, base, grid, reps, 13, 1);
    const auto wide = td_error_sweep(m, base, grid, reps, 13, 3);
    REQUIRE(lone.size() == grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(lone[i].size() == static_cast<size_t>(reps));
        for (int r = 0; r < reps; ++r)
            CHECK(lone[i][static_cast<size_t>(r)] ==
                  wide[i][static_cast<size_t>(r)]);
    }

    // each replication is one plain run recorded at the grid checkpoints
    TdConfig single = base;
    single.horizon = grid.back();
    single.checkpoints = grid;
    for (uint64_t r : {0, 3, 7}) {
        const std::vector<double> trace = td_error_trace(m, single, 13, r);
        REQUIRE(trace.size() == grid.size());
        for (size_t i = 0; i < grid.size(); ++i)
            CHECK(lone[i][static_cast<size_t>(r)] == trace[i]);
    }
}

TEST_CASE("average sweep rows norm to the error sweep") {
    const MrpModel m = two_state_mrp();
    TdConfig base;
    base.eta0 = 1.4999;
    base.alpha = 0.75;
    const std::vector<long> grid = {500, 2000};
    const int reps = 8;

    const auto errors = td_error_sweep(m, base, grid, reps, 13);
    const auto averages = td_average_sweep(m, base, grid, reps, 13);
    REQUIRE(averages.size() == grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        REQUIRE(averages[i].rows() == reps);
        for (int r = 0; r < reps; ++r) {
            const double err =
                (averages[i].row(r).transpose() - m.theta_star).norm();
            CHECK(err == doctest::Approx(
                             errors[i][static_cast<size_t>(r)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("coverage rows are internally consistent") {
    const MrpModel m = two_state_mrp();
    TdConfig base;
    base.eta0 = 1.4999;
    base.alpha = 0.75;
    const GammaResult g = gamma_tilde(m);
    const Matrix lam = lambda_star(m, g.gamma);
    const std::vector<long> grid = {256, 50000};
    const std::vector<double> nominals = {0.8, 0.9, 0.95};
    const auto rows =
        coverage_table(m, g.gamma, lam, base, grid, nominals, 300, 11);
    REQUIRE(rows.size() == grid.size() * nominals.size());

    const double threshold = lambda_T_threshold(m, g.gamma, base.eta0, base.alpha);
    for (const CoverageRow& row : rows) {
        CHECK(row.ci_lo >= 0.0);
        CHECK(row.ci_lo <= row.coverage);
        CHECK(row.coverage <= row.ci_hi);
        CHECK(row.ci_hi <= 1.0);
        CHECK(row.below_threshold ==
              (static_cast<double>(row.horizon) < threshold));
        if (row.horizon == 50000 && row.nominal == 0.9) {
            CHECK(row.coverage >= 0.80);
            CHECK(row.coverage <= 0.97);
        }
    }
    // nested ellipsoids: coverage nondecreasing in the nominal level
    for (long t : grid) {
        double prev = -1.0;
        for (double nominal : nominals) {
            for (const CoverageRow& row : rows)
                if (row.horizon == t && row.nominal == nominal) {
                    CHECK(row.coverage >= prev);
                    prev = row.coverage;
                }
        }
    }

    // a noise-free model has no ellipsoid to calibrate
    Matrix kernel(1, 1), features(1, 1);
    kernel << 1.0;
    features << 0.8;
    Vector rewards(1);
    rewards << 0.3;
    const MrpModel flat = build_mrp(build_chain(kernel), features, rewards, 0.5);
    CHECK_THROWS_AS(coverage_table(flat, Matrix::Zero(1, 1), Matrix::Zero(1, 1),
                                   base, {100}, {0.9}, 10, 1),
                    DegenerateGamma);
}

TEST_CASE("experiment front door writes a coherent bundle") {
    const auto dir1 = fresh_dir("w1");
    RunOverrides over;
    over.seed = 17;
    over.workers = 1;
    over.out_dir = dir1.string();
    const ExperimentOutcome out = run_experiment(tiny_rate_config(), over);

    CHECK(out.exit_code == 0);
    CHECK_FALSE(out.summary.empty());
    REQUIRE(out.table_paths.size() == 1);
    CHECK(std::filesystem::path(out.report_path).filename() ==
          "td_rate_report.json");
    CHECK(std::filesystem::path(out.table_paths[0]).filename() == "td_rate.csv");

    const std::string csv = slurp(out.table_paths[0]);
    CHECK(line_count(csv) == 1 + 24); // header plus one row per replication
    CHECK(csv.rfind("seed,config_hash,stream_id,T,error_bar", 0) == 0);

    const json report = json::parse(slurp(out.report_path));
    CHECK(report.at("schema") == 1);
    CHECK(report.at("experiment") == "td-rate");
    CHECK(report.at("seed") == 17);
    CHECK(report.at("exit_code") == 0);
    const std::string hash = report.at("config_hash");
    CHECK(hash.size() == 16);
    CHECK(hash.find_first_not_of("0123456789abcdef") == std::string::npos);
    for (const char* key : {"replications", "t_grid", "median_error", "slope",
                            "slope_ci", "r2", "theory_rmse_at_max",
                            "median_over_theory_at_max", "slope_in_band",
                            "median_within_3x_of_theory", "tables"})
        CHECK(report.contains(key));

    // every CSV row carries the master seed and the config hash
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line); // header
    while (std::getline(lines, line))
        CHECK(line.rfind("17," + hash + ",", 0) == 0);

    // a different worker count must not change a single byte of the data
    const auto dir2 = fresh_dir("w3");
    over.workers = 3;
    over.out_dir = dir2.string();
    const ExperimentOutcome out3 = run_experiment(tiny_rate_config(), over);
    CHECK(slurp(out3.table_paths[0]) == csv);
    json r1 = json::parse(slurp(out.report_path));
    json r3 = json::parse(slurp(out3.report_path));
    r1.erase("tables"); // the only path-bearing (out-dir dependent) field
    r3.erase("tables");
    CHECK(r1.dump() == r3.dump());

    std::filesystem::remove_all(dir1);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("config errors are rejected with context") {
    const auto dir = fresh_dir("bad");
    RunOverrides over;
    over.out_dir = dir.string();

    CHECK_THROWS_AS(run_experiment("{ not json ", over), std::exception);
    CHECK_THROWS_WITH_AS(
        run_experiment(R"({"experiment": "unknown-kind", "model": {}})", over),
        doctest::Contains("unknown experiment kind"), Error);
    CHECK_THROWS_AS(run_experiment(R"({"experiment": "td-rate"})", over),
                    Error); // missing model stanza
    std::filesystem::remove_all(dir);
}

TEST_CASE("model stanza loader accepts explicit and random forms") {
    const MrpModel fixture = two_state_mrp();
    const MrpModel explicit_form = model_from_config_json(fixture_model_stanza());
    CHECK((explicit_form.steady_a - fixture.steady_a).norm() <= 1e-15);
    CHECK((explicit_form.theta_star - fixture.theta_star).norm() <= 1e-15);
    CHECK(explicit_form.gamma == fixture.gamma);

    const MrpModel random_form = model_from_config_json(
        R"({"random_mrp": {"seed": 5, "n_states": 12, "branching": 4, "dim": 3}})");
    RandomMrpSpec spec;
    spec.seed = 5;
    spec.n_states = 12;
    spec.branching = 4;
    spec.dim = 3;
    const MrpModel direct = generate_random_mrp(spec);
    CHECK((random_form.chain.kernel - direct.chain.kernel).norm() == 0.0);
    CHECK((random_form.features - direct.features).norm() == 0.0);

    CHECK_THROWS_AS(model_from_config_json(R"({"neither": 1})"), InvalidModel);
}

} // TEST_SUITE
