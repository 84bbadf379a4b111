#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>

#include "bermudan/errors.hpp"
#include "bermudan/experiment.hpp"

using namespace bermudan;

namespace {

std::string golden(const std::string& name) {
    std::ifstream in(std::string(GOLDEN_DIR) + "/" + name);
    std::string line;
    std::getline(in, line);
    return line;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::string error_key(const std::string& json) {
    try {
        parse_config(json);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

ExperimentConfig tiny() {
    auto c = parse_config(R"({
      "version": 1,
      "seed": 11,
      "model": {"assets": 2, "exercise_dates": 3, "maturity": 1.0, "rebalances": 2},
      "train": {"paths": 2048, "batch_size": 128, "steps_first": 60, "steps_rest": 30, "step_sizes": [0.01, 0.001]},
      "pricing": {"lower_paths": 4000, "outer_paths": 8, "inner_paths": 16},
      "hedge": {"train_paths": 1024, "eval_paths": 2000, "batch_size": 64, "steps_first": 20, "steps_rest": 10,
                "histogram_bins": 10}
    })");
    return c;
}

}  // namespace

TEST_CASE("csv headers match the golden files") {
    CHECK(price_csv_header() == golden("prices_header.csv"));
    CHECK(hedge_csv_header() == golden("hedge_header.csv"));
    Histogram h;
    h.edges = {0.0, 1.0};
    h.counts = {3};
    CHECK(first_line(histogram_csv(h)) == golden("histogram_header.csv"));
    PathBatch b(1, 1, 3, GridKind::exercise);
    CHECK(first_line(paths_csv(b)) == golden("paths_header.csv"));
}

TEST_CASE("presets carry the documented hyperparameters") {
    const auto desk = preset(Scale::desk);
    CHECK(desk.train.paths == 400'000);
    CHECK(desk.train.batch_size == 1024);
    CHECK(desk.train.steps_first == 1500);
    CHECK(desk.train.steps_rest == 750);
    CHECK(desk.lower_paths == 500'000);
    CHECK(desk.dual.outer_paths == 512);
    CHECK(desk.dual.inner_paths == 512);
    CHECK(desk.hedge.train_paths == 200'000);
    CHECK(desk.hedge.eval_paths == 500'000);
    CHECK(desk.hedge.steps_first == 2000);
    CHECK(desk.hedge.steps_rest == 600);
    const auto full = preset(Scale::full);
    CHECK(full.train.batch_size == 8192);
    CHECK(full.train.steps_first == 6000);
    CHECK(full.train.steps_rest == 3500);
    CHECK(full.lower_paths == 4'096'000);
    CHECK(full.dual.outer_paths == 2048);
    CHECK(full.dual.inner_paths == 2048);
    CHECK(full.hedge.eval_paths == 4'096'000);
    CHECK(full.hedge.steps_first == 10'000);
    CHECK(full.hedge.steps_rest == 3000);
    for (const auto& c : {desk, full}) {
        CHECK(c.model.assets() == 5);
        CHECK(c.model.exercise_intervals == 9);
        CHECK(c.model.maturity == 3.0);
        CHECK(c.train.step_sizes == std::vector<double>{1e-1, 1e-2, 1e-3, 1e-4});
        CHECK_NOTHROW(c.validate());
    }
}

TEST_CASE("configuration overlays the preset and propagates the seed") {
    const auto c = parse_config(R"({"version": 1, "scale": "full", "seed": 9,
        "model": {"assets": 3, "s0": [90, 100, 110], "correlation": 0.3},
        "train": {"steps_first": 10}})");
    CHECK(c.scale == Scale::full);
    CHECK(c.model.s0 == std::vector<double>{90.0, 100.0, 110.0});
    CHECK(c.model.sigma == std::vector<double>(3, 0.2));
    CHECK(c.model.rho(2, 0) == 0.3);
    CHECK(c.model.rho(1, 1) == 1.0);
    CHECK(c.train.steps_first == 10);
    CHECK(c.train.steps_rest == 3500);
    CHECK(c.train.seed == 9);
    CHECK(c.dual.seed == 9);
    CHECK(c.hedge.seed == 9);
    CHECK(parse_config(R"({"version": 1, "scale": "full"})", Scale::desk).train.paths == 400'000);
}

TEST_CASE("configuration errors name the key") {
    CHECK(error_key(R"({"scale": "desk"})") == "version");
    CHECK(error_key(R"({"version": 2})") == "version");
    CHECK(error_key(R"({"version": 1, "colour": 1})") == "colour");
    CHECK(error_key(R"({"version": 1, "train": {"paths": -5}})") == "train.paths");
    CHECK(error_key(R"({"version": 1, "train": {"warm_start": 1}})") == "train.warm_start");
    CHECK(error_key(R"({"version": 1, "model": {"s0": [1, 2]}})") == "model.s0");
    CHECK(error_key(R"({"version": 1, "hedge": {"batch_size": 1}})") == "hedge");
    CHECK(error_key(R"({"version": 1, "pricing": {"alpha": 1.5}})") == "pricing.alpha");
    CHECK(error_key(R"({"version": 1, "scale": "huge"})") == "scale");
    try {
        parse_config("{\n  \"version\": 1,\n  \"seed\": ,\n}");
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"version": 1, "model": {"assets": 2, "correlation": [[1, 2], [2, 1]]}})"),
                    NotPositiveSemiDefinite);
}

TEST_CASE("config hash tracks every setting") {
    const auto a = preset(Scale::desk);
    auto b = a;
    CHECK(config_hash(a) == config_hash(b));
    b.hedge.histogram_bins = 99;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.set_seed(1);
    CHECK(config_hash(a) != config_hash(b));
    CHECK(parse_config(config_json(a)).train.paths == a.train.paths);
    CHECK(config_hash(parse_config(config_json(a))) == config_hash(a));
}

TEST_CASE("pricing run is reproducible apart from timing") {
    const auto config = tiny();
    const auto a = run_price(config);
    const auto b = run_price(config);
    auto strip_timing = [](const std::string& row) {
        std::stringstream in(row);
        std::string cell, out;
        for (int col = 0; std::getline(in, cell, ','); ++col)
            if (col != 3 && col != 5) out += cell + ",";
        return out;
    };
    CHECK(strip_timing(price_csv_row(config, a)) == strip_timing(price_csv_row(config, b)));
    CHECK(a.estimate.ci_low <= a.estimate.l_hat);
    CHECK(a.estimate.ci_high >= a.estimate.u_hat);
    CHECK(a.estimate.v_hat == doctest::Approx(0.5 * (a.estimate.l_hat + a.estimate.u_hat)));
    CHECK(a.t_lower_seconds > 0.0);

    const auto hedge = run_hedge(config, HedgeMode::full, a.policy, a.estimate.v_hat);
    REQUIRE(hedge.status == HedgeStatus::hedged);
    REQUIRE(hedge.interval);
    REQUIRE(hedge.total);
    REQUIRE(hedge.histogram);
    CHECK(hedge.histogram->total() == config.hedge.eval_paths);
    const auto row = hedge_csv_row(config, hedge);
    CHECK(std::count(row.begin(), row.end(), ',') == 10);
    const auto interval_only = run_hedge(config, HedgeMode::interval, a.policy, a.estimate.v_hat);
    CHECK(!interval_only.total);
    CHECK(interval_only.interval->mean == hedge.interval->mean);
    const auto r2 = hedge_csv_row(config, interval_only);
    CHECK(r2.substr(r2.size() - 4) == ",,,,");
}

TEST_CASE("nothing to hedge is a reported status") {
    auto config = tiny();
    config.model = ModelParams::symmetric(1, 300.0, 0.05, 0.10, 0.20, 0.0, 100.0, 1.0, 3, 2);
    const auto price = run_price(config);
    const auto run = run_hedge(config, HedgeMode::interval, price.policy, price.estimate.v_hat);
    CHECK(run.status == HedgeStatus::nothing_to_hedge);
    CHECK(run.immediate_value == doctest::Approx(200.0));
}

TEST_CASE("oracle suite passes on the default configuration") {
    for (const auto& check : run_oracle_suite(preset(Scale::desk))) {
        INFO(check.name << ": " << check.detail);
        CHECK(check.passed);
    }
}

TEST_CASE("histogram csv lists overflow rows") {
    Histogram h;
    h.edges = {0.0, 0.5, 1.0};
    h.counts = {2, 3};
    h.underflow = 1;
    h.overflow = 4;
    CHECK(histogram_csv(h) == "edge_low,edge_high,count\n-inf,0,1\n0,0.5,2\n0.5,1,3\n1,inf,4\n");
}
