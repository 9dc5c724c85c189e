// mcuq: Markov-chain uncertainty quantification workbench.
//
// Subcommands:
//   chain analyze <spec.json>   stationary/mixing/spectral summary as JSON
//   td run <cfg.json>           temporal-difference runs -> error CSV
//   sweep <cfg.json>            full experiment dispatch (any kind)
//   verify-bounds <cfg.json>    closed-form tail-bound verification
//   coverage <cfg.json>         confidence-ellipsoid coverage table
//
// Exit codes: 0 all verdicts pass, 2 a strict bound was violated,
// 1 operational error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "mcuq/errors.hpp"
#include "mcuq/harness.hpp"
#include "mcuq/json_io.hpp"
#include "mcuq/mrp.hpp"

namespace {

using nlohmann::json;

struct GlobalFlags {
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
};

mcuq::RunOverrides overrides_from(const GlobalFlags& flags) {
    mcuq::RunOverrides o;
    o.seed = flags.seed;
    o.workers = flags.workers;
    o.out_dir = flags.out;
    return o;
}

int emit_outcome(const mcuq::ExperimentOutcome& outcome) {
    fmt::print("{}\n", outcome.summary);
    fmt::print("report: {}\n", outcome.report_path);
    for (const auto& p : outcome.table_paths) fmt::print("table: {}\n", p);
    return outcome.exit_code;
}

int cmd_chain_analyze(const std::string& spec_path, const GlobalFlags& flags) {
    const mcuq::ChainModel model = mcuq::chain_from_file(spec_path);
    const std::string doc = mcuq::chain_analysis_json(model);
    if (flags.out) {
        mcuq::atomic_write_text(*flags.out, doc);
        fmt::print("analysis: {}\n", *flags.out);
    } else {
        fmt::print("{}", doc);
    }
    return 0;
}

// One-off TD runs: {"model": {...}, "horizon": T, "checkpoints": [...],
// "alpha": a, "eta0": e, "replications": R}.  Emits one CSV row per
// replication: stream id, final horizon, final error, then the error at
// each checkpoint.
int cmd_td_run(const std::string& cfg_path, const GlobalFlags& flags) {
    json cfg = json::parse(mcuq::read_text_file(cfg_path), nullptr, true, true);
    if (!cfg.is_object()) throw mcuq::InvalidModel("config must be a JSON object");
    if (flags.seed) cfg["seed"] = *flags.seed;
    const uint64_t seed = cfg.value("seed", uint64_t{1});
    const int workers = flags.workers ? *flags.workers : cfg.value("workers", 0);
    const std::string out_dir =
        flags.out ? *flags.out : cfg.value("out_dir", std::string("out"));

    if (!cfg.contains("model")) throw mcuq::InvalidModel("config needs a \"model\"");
    if (cfg.at("model").is_object() && cfg.at("model").contains("random_mrp") &&
        !cfg.at("model").at("random_mrp").contains("seed"))
        cfg["model"]["random_mrp"]["seed"] = seed;
    const mcuq::MrpModel model =
        mcuq::model_from_config_json(cfg.at("model").dump());

    const long horizon = cfg.value("horizon", 100000L);
    std::vector<long> grid;
    if (cfg.contains("checkpoints"))
        for (const auto& v : cfg.at("checkpoints")) grid.push_back(v.get<long>());
    if (grid.empty() || grid.back() != horizon) grid.push_back(horizon);
    const int replications = cfg.value("replications", 1);

    mcuq::TdConfig base;
    base.alpha = cfg.value("alpha", 0.75);
    base.eta0 = cfg.value("eta0", 0.0);

    json hash_basis = cfg;
    hash_basis.erase("workers");
    hash_basis.erase("out_dir");
    const std::string hash_hex =
        fmt::format("{:016x}", mcuq::config_hash(hash_basis.dump()));

    const auto errors =
        mcuq::td_error_sweep(model, base, grid, replications, seed, workers);

    std::string csv = "seed,config_hash,stream_id,T,error_bar";
    for (long t : grid) csv += fmt::format(",err_t{}", t);
    csv += '\n';
    for (int r = 0; r < replications; ++r) {
        csv += fmt::format("{},{},{},{},{}", seed, hash_hex, r, grid.back(),
                           mcuq::format_double(errors.back()[size_t(r)]));
        for (size_t i = 0; i < grid.size(); ++i)
            csv += fmt::format(",{}", mcuq::format_double(errors[i][size_t(r)]));
        csv += '\n';
    }
    const std::string csv_path =
        (std::filesystem::path(out_dir) / "td_run.csv").string();
    mcuq::atomic_write_text(csv_path, csv);
    fmt::print("td run: {} replication(s) to T={}, final error (stream 0) {}\n",
               replications, grid.back(),
               mcuq::format_double(errors.back()[0]));
    fmt::print("table: {}\n", csv_path);
    return 0;
}

int cmd_experiment(const std::string& cfg_path, const GlobalFlags& flags,
                   const std::vector<std::string>& allowed_kinds,
                   const std::string& default_kind) {
    json cfg = json::parse(mcuq::read_text_file(cfg_path), nullptr, true, true);
    if (!cfg.is_object()) throw mcuq::InvalidModel("config must be a JSON object");
    if (!cfg.contains("experiment") && !default_kind.empty())
        cfg["experiment"] = default_kind;
    if (!allowed_kinds.empty()) {
        const std::string kind = cfg.value("experiment", std::string());
        bool ok = false;
        for (const auto& k : allowed_kinds) ok = ok || k == kind;
        if (!ok)
            throw mcuq::InvalidModel(fmt::format(
                "experiment kind \"{}\" is not valid for this subcommand", kind));
    }
    return emit_outcome(mcuq::run_experiment(cfg.dump(), overrides_from(flags)));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markov-chain uncertainty quantification workbench"};
    app.require_subcommand(1);

    GlobalFlags flags;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", flags.seed, "master seed override");
        cmd->add_option("--workers", flags.workers,
                        "worker thread count (0 = hardware)");
        cmd->add_option("--out", flags.out,
                        "output directory (or file path for chain analyze)");
    };

    std::string spec_path;

    CLI::App* chain = app.add_subcommand("chain", "chain-level analysis");
    CLI::App* analyze = chain->add_subcommand("analyze", "summarize a chain spec");
    analyze->add_option("spec", spec_path, "chain spec JSON")->required();
    add_common(analyze);

    CLI::App* td = app.add_subcommand("td", "temporal-difference runs");
    CLI::App* td_run = td->add_subcommand("run", "run TD with iterate averaging");
    td_run->add_option("config", spec_path, "run config JSON")->required();
    add_common(td_run);

    CLI::App* sweep = app.add_subcommand("sweep", "full experiment dispatch");
    sweep->add_option("config", spec_path, "experiment config JSON")->required();
    add_common(sweep);

    CLI::App* verify =
        app.add_subcommand("verify-bounds", "closed-form tail-bound verification");
    verify->add_option("config", spec_path, "experiment config JSON")->required();
    add_common(verify);

    CLI::App* coverage =
        app.add_subcommand("coverage", "confidence-ellipsoid coverage");
    coverage->add_option("config", spec_path, "experiment config JSON")->required();
    add_common(coverage);

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed()) return cmd_chain_analyze(spec_path, flags);
        if (td_run->parsed()) return cmd_td_run(spec_path, flags);
        if (sweep->parsed()) return cmd_experiment(spec_path, flags, {}, "");
        if (verify->parsed())
            return cmd_experiment(spec_path, flags, {"bernstein", "hoeffding"},
                                  "hoeffding");
        if (coverage->parsed())
            return cmd_experiment(spec_path, flags, {"td-coverage"}, "td-coverage");
        std::fprintf(stderr, "error: no subcommand selected\n");
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
