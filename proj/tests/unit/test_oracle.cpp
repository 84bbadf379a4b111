#include <doctest.h>

#include <cmath>
#include <random>

#include "bermudan/errors.hpp"
#include "bermudan/oracle.hpp"
#include "toy.hpp"

using namespace bermudan;
using namespace bermudan::oracle;

TEST_CASE("black-scholes reference values") {
    const auto call = bs_european(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, OptionType::call);
    CHECK(call.price == doctest::Approx(10.450583572185565).epsilon(1e-12));
    CHECK(call.delta == doctest::Approx(0.6368306511756191).epsilon(1e-12));
    const auto put = bs_european(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, OptionType::put);
    CHECK(put.price == doctest::Approx(5.573526022256971).epsilon(1e-12));
}

TEST_CASE("put-call parity with dividends") {
    for (double s : {70.0, 100.0, 135.0}) {
        const auto c = bs_european(s, 100.0, 0.04, 0.03, 0.25, 2.0, OptionType::call);
        const auto p = bs_european(s, 100.0, 0.04, 0.03, 0.25, 2.0, OptionType::put);
        CHECK(c.price - p.price == doctest::Approx(s * std::exp(-0.06) - 100.0 * std::exp(-0.08)).epsilon(1e-12));
        CHECK(c.delta - p.delta == doctest::Approx(std::exp(-0.06)).epsilon(1e-12));
    }
}

TEST_CASE("black-scholes delta matches a price difference") {
    const double h = 1e-4;
    const double up = bs_european(100.0 + h, 95.0, 0.05, 0.02, 0.3, 0.7, OptionType::call).price;
    const double down = bs_european(100.0 - h, 95.0, 0.05, 0.02, 0.3, 0.7, OptionType::call).price;
    CHECK(bs_european(100.0, 95.0, 0.05, 0.02, 0.3, 0.7, OptionType::call).delta ==
          doctest::Approx((up - down) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("one-step tree by hand") {
    TreeSpec spec;
    spec.s0 = 100.0;
    spec.steps = 1;
    spec.dt = 1.0;
    spec.rate = 0.05;
    spec.up = 1.2;
    spec.down = 0.9;
    const double p = (std::exp(0.05) - 0.9) / 0.3;
    CHECK(spec.prob() == doctest::Approx(p).epsilon(1e-14));
    const double v = crr_bermudan(spec, [](std::size_t, double s) { return std::max(s - 100.0, 0.0); });
    CHECK(v == doctest::Approx(std::exp(-0.05) * p * 20.0).epsilon(1e-14));
}

TEST_CASE("european tree converges to black-scholes") {
    const auto spec = TreeSpec::crr(100.0, 4000, 1.0, 0.05, 0.0, 0.2, {});
    const double v = crr_bermudan(spec, [](std::size_t, double s) { return std::max(s - 100.0, 0.0); });
    CHECK(std::abs(v - 10.450583572185565) < 1e-3);
}

TEST_CASE("early exercise adds value to a put only") {
    const auto euro = TreeSpec::crr(100.0, 200, 1.0, 0.06, 0.0, 0.2, {});
    const auto amer = TreeSpec::crr(100.0, 200, 1.0, 0.06, 0.0, 0.2, TreeSpec::all_levels(200));
    const TreePayoff put = [](std::size_t, double s) { return std::max(100.0 - s, 0.0); };
    const TreePayoff call = [](std::size_t, double s) { return std::max(s - 100.0, 0.0); };
    CHECK(crr_bermudan(amer, put) > crr_bermudan(euro, put) + 0.1);
    CHECK(crr_bermudan(amer, call) == doctest::Approx(crr_bermudan(euro, call)).epsilon(1e-12));
}

TEST_CASE("enumeration over stopping rules equals backward induction") {
    std::mt19937_64 gen(123);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 30; ++t) {
        const std::size_t steps = 1 + gen() % 5;
        std::vector<std::size_t> levels;
        for (std::size_t l = 0; l < steps; ++l)
            if (levels.size() < 3 && u(gen) < 0.6) levels.push_back(l);
        const auto spec = TreeSpec::crr(80.0 + 40.0 * u(gen), steps, 0.5 + u(gen), 0.08 * u(gen), 0.05 * u(gen),
                                        0.1 + 0.3 * u(gen), levels);
        const double k = 90.0 + 20.0 * u(gen);
        const TreePayoff f = [k](std::size_t level, double s) { return std::max(k - s, 0.0) + 0.01 * level; };
        INFO("tree " << t);
        CHECK(std::abs(exhaustive_optimal_stop(spec, f) - crr_bermudan(spec, f)) <= 1e-12);
    }
}

TEST_CASE("enumeration refuses oversized trees") {
    const auto spec = TreeSpec::crr(100.0, 12, 1.0, 0.05, 0.0, 0.2, TreeSpec::all_levels(12));
    CHECK_THROWS_AS(exhaustive_optimal_stop(spec, [](std::size_t, double s) { return s; }), TooLarge);
}

TEST_CASE("tree validation") {
    auto spec = TreeSpec::crr(100.0, 3, 1.0, 0.05, 0.0, 0.2, {});
    CHECK_NOTHROW(spec.validate());
    spec.up = 1.0;
    CHECK_THROWS(spec.validate());
    spec = TreeSpec::crr(100.0, 3, 1.0, 0.05, 0.0, 0.2, {3});
    CHECK_THROWS(spec.validate());
}

TEST_CASE("binomial process") {
    const auto spec = half_tree();
    CHECK(spec.prob() == doctest::Approx(0.5).epsilon(1e-14));
    const BinomialProcess process(spec, put_payoff, true);
    const auto all = process.enumerate_paths(2);
    CHECK(all.n_paths == 32);
    for (std::size_t k = 0; k < 16; ++k)
        for (std::size_t s = 0; s <= 4; ++s) CHECK(all.at(k, s, 0) == all.at(k + 16, s, 0));
    const auto br = process.branch(2, std::vector<double>{spec.spot(2, 1)}, 5, {StreamFamily::upper_inner, 0, 0});
    CHECK(br.n_paths == 4);
    CHECK(br.start_index == 2);
    const auto sampled = process.exercise_paths(7, {StreamFamily::lower, 0, 0});
    CHECK(sampled.n_paths == 7);
    for (std::size_t s = 1; s <= 4; ++s) {
        const double ratio = sampled.at(3, s, 0) / sampled.at(3, s - 1, 0);
        CHECK((std::abs(ratio - spec.up) < 1e-12 || std::abs(ratio - spec.down) < 1e-12));
    }
    CHECK(process.payoff()(2, std::vector<double>{90.0}) == doctest::Approx(10.0 * std::exp(-0.03 * 0.5)));
    CHECK_THROWS(BinomialProcess(TreeSpec::crr(100.0, 3, 1.0, 0.05, 0.0, 0.2, {}), put_payoff, true));
}
