// Command-line front end: price, hedge, oracle-check, simulate-dump.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bermudan/errors.hpp"
#include "bermudan/experiment.hpp"

namespace fs = std::filesystem;
using namespace bermudan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;

struct CommonOptions {
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::string scale;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_file, "JSON experiment configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "master seed (overrides the file)");
    cmd->add_option("--scale", o.scale, "hyperparameter preset")->check(CLI::IsMember({"desk", "full"}));
    cmd->add_option("--out", o.out, "output directory (overrides the file)");
}

ExperimentConfig resolve(const CommonOptions& o) {
    std::optional<Scale> scale;
    if (!o.scale.empty()) scale = parse_scale(o.scale);
    ExperimentConfig config = o.config_file.empty() ? preset(scale.value_or(Scale::desk)) : load_config(o.config_file, scale);
    if (o.seed) config.set_seed(*o.seed);
    if (!o.out.empty()) config.output_dir = o.out;
    config.validate();
    return config;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void print_price(const PriceRun& run) {
    const auto& e = run.estimate;
    std::printf("L_hat  %.6f  (sd %.4f, K_L %zu, %.1f s)\n", e.l_hat, e.sigma_l, e.lower_paths, run.t_lower_seconds);
    std::printf("U_hat  %.6f  (sd %.4f, K_U %zu x J %zu, %.1f s)\n", e.u_hat, e.sigma_u, e.outer_paths, e.inner_paths,
                run.t_upper_seconds);
    std::printf("V_hat  %.6f  CI [%.6f, %.6f]\n", e.v_hat, e.ci_low, e.ci_high);
}

int price_command(const ExperimentConfig& config) {
    const fs::path dir = config.output_dir;
    write_manifest(dir, config, "price");
    const PriceRun run = run_price(config);
    write_file(dir / "prices.csv", price_csv_header() + "\n" + price_csv_row(config, run) + "\n");
    print_price(run);
    return kExitOk;
}

int hedge_command(const ExperimentConfig& config, HedgeMode mode) {
    const fs::path dir = config.output_dir;
    write_manifest(dir, config, mode == HedgeMode::full ? "hedge --mode full" : "hedge --mode interval");
    const PriceRun price = run_price(config);
    print_price(price);
    const HedgeRun run = run_hedge(config, mode, price.policy, price.estimate.v_hat);
    if (run.status == HedgeStatus::nothing_to_hedge) {
        std::printf("exercised at time 0: immediate value %.6f, nothing to hedge\n", run.immediate_value);
        write_file(dir / "hedge.csv", hedge_csv_header() + "\n");
        return kExitOk;
    }
    write_file(dir / "hedge.csv", hedge_csv_header() + "\n" + hedge_csv_row(config, run) + "\n");
    if (run.interval)
        std::printf("IHE %.6f (se %.6f)  IHS %.6f  IHS/V %.4f  (%.1f s)\n", run.interval->mean, run.interval->mean_se,
                    run.interval->shortfall, run.interval->shortfall / run.v_hat, run.t1_seconds);
    if (run.total)
        std::printf("HE  %.6f (se %.6f)  HS  %.6f  HS/V  %.4f  (%.1f s)\n", run.total->mean, run.total->mean_se,
                    run.total->shortfall, run.total->shortfall / run.v_hat, run.t2_seconds);
    if (run.histogram) {
        const fs::path file = dir / ("hist_" + histogram_tag(config) + ".csv");
        write_file(file, histogram_csv(*run.histogram));
        std::printf("histogram written to %s\n", file.string().c_str());
    }
    return kExitOk;
}

int oracle_command(const ExperimentConfig& config) {
    bool ok = true;
    for (const auto& check : run_oracle_suite(config)) {
        std::printf("%-22s %s  %s\n", check.name.c_str(), check.passed ? "PASS" : "FAIL", check.detail.c_str());
        ok = ok && check.passed;
    }
    return ok ? kExitOk : kExitValidation;
}

int dump_command(const ExperimentConfig& config, std::size_t paths, const std::string& grid) {
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    const GbmModel model(config.model);
    const GridKind kind = grid == "hedge" ? GridKind::hedge : GridKind::exercise;
    const PathBatch batch = model.simulate(kind, paths, {StreamFamily::train, config.seed, 0});
    write_file(dir / "paths.csv", paths_csv(batch));
    std::printf("%zu paths x %zu steps written to %s\n", batch.n_paths, batch.n_steps + 1,
                (dir / "paths.csv").string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bermudan max-call pricing and hedging with neural continuation values"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    CommonOptions price_opts, hedge_opts, oracle_opts, dump_opts;
    auto* price = app.add_subcommand("price", "train the stopping rule and compute lower and upper bounds");
    add_common(price, price_opts);

    auto* hedge = app.add_subcommand("hedge", "train and evaluate a hedging strategy");
    add_common(hedge, hedge_opts);
    std::string mode = "interval";
    hedge->add_option("--mode", mode, "interval: [0, t_1]; full: up to exercise")
        ->check(CLI::IsMember({"interval", "full"}));

    auto* oracle = app.add_subcommand("oracle-check", "run closed-form, lattice and duality self-checks");
    add_common(oracle, oracle_opts);

    auto* dump = app.add_subcommand("simulate-dump", "write simulated paths as CSV");
    add_common(dump, dump_opts);
    std::size_t dump_paths = 10;
    std::string grid = "exercise";
    dump->add_option("--paths", dump_paths, "number of paths")->check(CLI::PositiveNumber);
    dump->add_option("--grid", grid, "exercise or hedge grid")->check(CLI::IsMember({"exercise", "hedge"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*price) return price_command(resolve(price_opts));
        if (*hedge) return hedge_command(resolve(hedge_opts), mode == "full" ? HedgeMode::full : HedgeMode::interval);
        if (*oracle) return oracle_command(resolve(oracle_opts));
        if (*dump) return dump_command(resolve(dump_opts), dump_paths, grid);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return kExitConfig;
    } catch (const NotPositiveSemiDefinite& e) {
        std::fprintf(stderr, "configuration error: model.correlation: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitFailure;
}
