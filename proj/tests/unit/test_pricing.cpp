#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bermudan/market.hpp"
#include "bermudan/oracle.hpp"
#include "bermudan/pricing.hpp"
#include "bermudan/stats.hpp"
#include "toy.hpp"

using namespace bermudan;

namespace {

TrainConfig quick_config(std::size_t paths) {
    TrainConfig c;
    c.paths = paths;
    c.batch_size = 256;
    c.steps_first = 200;
    c.steps_rest = 100;
    c.step_sizes = {1e-2, 1e-3};
    return c;
}

}  // namespace

TEST_CASE("critical values") {
    CHECK(critical_value(0.05) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK(critical_value(0.01) == doctest::Approx(2.575829).epsilon(1e-6));
    CHECK(critical_value(1.0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS(critical_value(0.0));
    CHECK(one_sided_ci(10.0, 2.0, 400, 0.05) == doctest::Approx(10.0 - 1.959964 * 0.1).epsilon(1e-7));
}

TEST_CASE("point estimate and interval arithmetic") {
    const BoundEstimate lower{26.156, 10.0, 4'096'000};
    const BoundEstimate upper{26.152, 0.5, 2048};
    const auto est = point_and_interval(lower, upper, 2048, 0.05);
    // Midpoint of the reported lower and upper bounds of the d = 5, s0 = 100 max-call.
    CHECK(est.v_hat == doctest::Approx(26.154).epsilon(1e-12));
    CHECK(est.ci_low == doctest::Approx(26.156 - 1.959964 * 10.0 / std::sqrt(4'096'000.0)).epsilon(1e-9));
    CHECK(est.ci_high == doctest::Approx(26.152 + 1.959964 * 0.5 / std::sqrt(2048.0)).epsilon(1e-9));
    CHECK(est.outer_paths == 2048);
    CHECK(est.inner_paths == 2048);
}

TEST_CASE("exact continuation values give exact duality on the binomial toy") {
    const auto spec = half_tree();
    const oracle::BinomialProcess process(spec, put_payoff, true);
    const auto solution = oracle::solve_tree(spec, [](std::size_t, double s) { return put_payoff(s); });
    const auto policy = exact_tree_policy(process, solution);
    const auto result = upper_bound(policy, process, DualConfig{64, 2, 1});
    for (double v : result.dual_max) CHECK(std::abs(v - solution.price) < 1e-12);
    CHECK(std::abs(result.estimate.mean - solution.price) < 1e-12);
    CHECK(result.estimate.sd < 1e-12);

    const auto paths = process.enumerate_paths(1);
    for (std::size_t k = 0; k < paths.n_paths; ++k) {
        const auto dual = dual_martingale_path(policy, process, paths, k, 2, {StreamFamily::upper_inner, 0, k});
        CHECK(dual.martingale[0] == 0.0);
        // Martingale part of the discounted value process: sum of V_n - E[V_n | F_{n-1}].
        double expected = 0.0;
        for (std::size_t n = 1; n <= spec.steps; ++n) {
            const std::size_t node = spec.node_of(n, paths.at(k, n, 0));
            const std::size_t prev = spec.node_of(n - 1, paths.at(k, n - 1, 0));
            expected += std::pow(spec.discount(), static_cast<double>(n)) * solution.value[n][node] -
                        std::pow(spec.discount(), static_cast<double>(n - 1)) * solution.continuation[n - 1][prev];
            CHECK(dual.martingale[n] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("bounds bracket the tree price for a suboptimal rule") {
    const auto spec = half_tree();
    const oracle::BinomialProcess process(spec, put_payoff, true);
    const double price = oracle::crr_bermudan(spec, [](std::size_t, double s) { return put_payoff(s); });
    // Exercise whenever the put is at least 5 in the money.
    const auto policy = StoppingPolicy::from_function(
        spec.steps, 1, 1e9, [](std::size_t n, std::span<const double>) { return n == 0 ? 1e9 : 5.0; },
        process.payoff());
    const auto exact = process.enumerate_paths(1);
    const auto payoffs = stopped_payoffs(policy, exact, 0);
    const double lower = std::accumulate(payoffs.begin(), payoffs.end(), 0.0) / static_cast<double>(payoffs.size());
    const auto upper = upper_bound(policy, process, DualConfig{2000, 2, 0});
    CHECK(lower < price);
    CHECK(upper.estimate.mean + 3 * upper.estimate.standard_error() > price);
    CHECK(upper.estimate.mean - 3 * upper.estimate.standard_error() > lower);
}

TEST_CASE("lower bound is chunk-independent and reproducible") {
    const GbmModel model(ModelParams::symmetric(2, 100.0, 0.05, 0.10, 0.20, 0.0, 100.0, 1.0, 3));
    const auto batch = extend_state(model.exercise_paths(2048, {StreamFamily::train, 0, 0}), model.payoff());
    const auto policy = train_policy(batch, model.payoff(), quick_config(2048));
    const auto a = lower_bound(policy, model, 40'000, 5);
    const auto b = lower_bound(policy, model, 40'000, 5);
    CHECK(a.mean == b.mean);
    CHECK(a.sd == b.sd);
    const auto paths = model.exercise_paths(40'000, {StreamFamily::lower, 5, 0});
    const auto direct = summarize(stopped_payoffs(policy, paths, 0));
    CHECK(a.mean == doctest::Approx(direct.mean()).epsilon(1e-12));
    CHECK(a.sd == doctest::Approx(direct.sd()).epsilon(1e-10));
}

TEST_CASE("dual increments have zero mean and the bounds are ordered") {
    const GbmModel model(ModelParams::symmetric(2, 100.0, 0.05, 0.10, 0.20, 0.0, 100.0, 1.0, 3));
    const auto batch = extend_state(model.exercise_paths(4096, {StreamFamily::train, 2, 0}), model.payoff());
    const auto policy = train_policy(batch, model.payoff(), quick_config(4096));
    const auto lower = lower_bound(policy, model, 50'000, 2);
    const auto upper = upper_bound(policy, model, DualConfig{200, 64, 2});
    REQUIRE(upper.increments.size() == 4);
    for (std::size_t n = 1; n <= 3; ++n) {
        INFO("date " << n);
        CHECK(std::abs(upper.increments[n].mean()) <= 3.0 * upper.increments[n].standard_error());
    }
    CHECK(upper.estimate.mean + 3 * upper.estimate.standard_error() >=
          lower.mean - 3 * lower.standard_error());
    CHECK(upper.dual_max.size() == 200);
}

TEST_CASE("single exercise date reduces to the European price") {
    const GbmModel model(ModelParams::symmetric(1, 100.0, 0.05, 0.0, 0.20, 0.0, 100.0, 1.0, 1));
    const auto batch = extend_state(model.exercise_paths(1000, {StreamFamily::train, 0, 0}), model.payoff());
    const auto policy = train_policy(batch, model.payoff(), quick_config(1000));
    const auto lower = lower_bound(policy, model, 200'000, 0);
    const double bs = oracle::bs_european(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, oracle::OptionType::call).price;
    CHECK(std::abs(lower.mean - bs) < 4.0 * lower.standard_error());
}

TEST_CASE("dual configuration validation") {
    CHECK_THROWS(DualConfig{1, 10, 0}.validate());
    CHECK_THROWS(DualConfig{10, 1, 0}.validate());
    CHECK_NOTHROW(DualConfig{2, 2, 0}.validate());
}
