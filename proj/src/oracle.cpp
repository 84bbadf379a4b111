#include "bermudan/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bermudan/errors.hpp"
#include "bermudan/stats.hpp"

namespace bermudan::oracle {

BlackScholes bs_european(double s0, double strike, double rate, double dividend, double sigma,
                         double maturity, OptionType type) {
    if (!(sigma > 0.0) || !(maturity > 0.0))
        throw std::invalid_argument("Black-Scholes needs sigma > 0 and T > 0");
    const double fwd_disc = std::exp(-dividend * maturity);
    const double disc = std::exp(-rate * maturity);
    if (strike <= 0.0) {
        if (type == OptionType::call) return {s0 * fwd_disc, fwd_disc};
        return {0.0, 0.0};
    }
    const double vol = sigma * std::sqrt(maturity);
    const double d1 = (std::log(s0 / strike) + (rate - dividend + 0.5 * sigma * sigma) * maturity) / vol;
    const double d2 = d1 - vol;
    if (type == OptionType::call)
        return {s0 * fwd_disc * normal_cdf(d1) - strike * disc * normal_cdf(d2), fwd_disc * normal_cdf(d1)};
    return {strike * disc * normal_cdf(-d2) - s0 * fwd_disc * normal_cdf(-d1), -fwd_disc * normal_cdf(-d1)};
}

TreeSpec TreeSpec::crr(double s0, std::size_t steps, double maturity, double rate, double dividend,
                       double sigma, std::vector<std::size_t> exercise_levels) {
    TreeSpec t;
    t.s0 = s0;
    t.steps = steps;
    t.dt = maturity / static_cast<double>(steps);
    t.rate = rate;
    t.dividend = dividend;
    t.up = std::exp(sigma * std::sqrt(t.dt));
    t.down = 1.0 / t.up;
    t.exercise_levels = std::move(exercise_levels);
    return t;
}

std::vector<std::size_t> TreeSpec::all_levels(std::size_t steps) {
    std::vector<std::size_t> levels(steps);
    for (std::size_t l = 0; l < steps; ++l) levels[l] = l;
    return levels;
}

double TreeSpec::prob() const {
    return (std::exp((rate - dividend) * dt) - down) / (up - down);
}

double TreeSpec::discount() const { return std::exp(-rate * dt); }

double TreeSpec::spot(std::size_t level, std::size_t node) const {
    return s0 * std::pow(up, static_cast<double>(node)) *
           std::pow(down, static_cast<double>(level - node));
}

std::size_t TreeSpec::node_of(std::size_t level, double x) const {
    const double j = std::log(x / (s0 * std::pow(down, static_cast<double>(level)))) / std::log(up / down);
    const double r = std::round(j);
    if (r < 0.0 || r > static_cast<double>(level)) throw std::out_of_range("spot is not on the tree");
    return static_cast<std::size_t>(r);
}

bool TreeSpec::exercisable(std::size_t level) const {
    return level == steps ||
           std::find(exercise_levels.begin(), exercise_levels.end(), level) != exercise_levels.end();
}

void TreeSpec::validate() const {
    if (steps < 1) throw std::invalid_argument("tree needs at least one step");
    if (!(dt > 0.0) || !(s0 > 0.0)) throw std::invalid_argument("tree needs dt > 0 and s0 > 0");
    const double growth = std::exp((rate - dividend) * dt);
    if (!(0.0 < down && down < growth && growth < up))
        throw std::invalid_argument("tree needs 0 < down < e^{(r-delta)dt} < up");
    for (auto l : exercise_levels)
        if (l >= steps) throw std::invalid_argument("early exercise levels must precede maturity");
}

TreeSolution solve_tree(const TreeSpec& spec, const TreePayoff& payoff) {
    spec.validate();
    const double p = spec.prob();
    const double disc = spec.discount();
    TreeSolution sol;
    sol.value.resize(spec.steps + 1);
    sol.continuation.resize(spec.steps + 1);
    for (std::size_t j = 0; j <= spec.steps; ++j) {
        sol.value[spec.steps].push_back(payoff(spec.steps, spec.spot(spec.steps, j)));
        sol.continuation[spec.steps].push_back(0.0);
    }
    for (std::size_t level = spec.steps; level-- > 0;) {
        const bool early = spec.exercisable(level);
        for (std::size_t j = 0; j <= level; ++j) {
            const double cont =
                disc * (p * sol.value[level + 1][j + 1] + (1.0 - p) * sol.value[level + 1][j]);
            sol.continuation[level].push_back(cont);
            sol.value[level].push_back(early ? std::max(payoff(level, spec.spot(level, j)), cont) : cont);
        }
    }
    sol.price = sol.value[0][0];
    return sol;
}

double crr_bermudan(const TreeSpec& spec, const TreePayoff& payoff) {
    return solve_tree(spec, payoff).price;
}

double exhaustive_optimal_stop(const TreeSpec& spec, const TreePayoff& payoff, std::size_t max_rules) {
    spec.validate();
    // One stop/continue bit per early-exercisable node.
    std::vector<std::vector<std::size_t>> bit(spec.steps + 1);
    std::size_t labels = 0;
    for (std::size_t level = 0; level < spec.steps; ++level)
        if (spec.exercisable(level))
            for (std::size_t j = 0; j <= level; ++j) bit[level].push_back(labels++);
    if (labels >= 63 || (std::size_t{1} << labels) > max_rules)
        throw TooLarge("stopping-rule enumeration exceeds the configured bound");

    const double p = spec.prob();
    const double disc = spec.discount();
    std::vector<std::vector<double>> intrinsic(spec.steps + 1);
    for (std::size_t level = 0; level <= spec.steps; ++level)
        for (std::size_t j = 0; j <= level; ++j) intrinsic[level].push_back(payoff(level, spec.spot(level, j)));

    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> next(spec.steps + 1), current(spec.steps + 1);
    const std::size_t rules = std::size_t{1} << labels;
    for (std::size_t rule = 0; rule < rules; ++rule) {
        next.assign(intrinsic[spec.steps].begin(), intrinsic[spec.steps].end());
        for (std::size_t level = spec.steps; level-- > 0;) {
            for (std::size_t j = 0; j <= level; ++j) {
                const bool stop = !bit[level].empty() && ((rule >> bit[level][j]) & 1u);
                current[j] = stop ? intrinsic[level][j] : disc * (p * next[j + 1] + (1.0 - p) * next[j]);
            }
            std::copy(current.begin(), current.begin() + static_cast<std::ptrdiff_t>(level + 1), next.begin());
        }
        best = std::max(best, next[0]);
    }
    return best;
}

BinomialProcess::BinomialProcess(TreeSpec spec, std::function<double(double)> payoff, bool enumerate_branches)
    : spec_(std::move(spec)), payoff_(std::move(payoff)), enumerate_(enumerate_branches) {
    spec_.validate();
    if (enumerate_ && std::abs(spec_.prob() - 0.5) > 1e-12)
        throw std::invalid_argument("branch enumeration needs an up probability of 1/2");
}

PayoffFn BinomialProcess::payoff() const {
    return [f = payoff_, rate = spec_.rate, dt = spec_.dt](std::size_t date, std::span<const double> x) {
        return std::exp(-rate * dt * static_cast<double>(date)) * f(x[0]);
    };
}

PathBatch BinomialProcess::exercise_paths(std::size_t n_paths, const RngStreamKey& key) const {
    return walk(0, spec_.s0, n_paths, key, false);
}

PathBatch BinomialProcess::branch(std::size_t date, std::span<const double> state, std::size_t n_paths,
                                  const RngStreamKey& key) const {
    return walk(date, state[0], n_paths, key, enumerate_);
}

PathBatch BinomialProcess::walk(std::size_t date, double spot, std::size_t n_paths, const RngStreamKey& key,
                                bool enumerate) const {
    const std::size_t steps = spec_.steps - date;
    const std::size_t node = spec_.node_of(date, spot);
    if (enumerate) n_paths = std::size_t{1} << steps;
    PathBatch out(n_paths, steps, 1, GridKind::exercise);
    out.start_index = date;
    for (std::size_t s = 0; s <= steps; ++s) out.times[s] = spec_.dt * static_cast<double>(date + s);
    const double p = spec_.prob();
    for (std::size_t k = 0; k < n_paths; ++k) {
        const RandomStream stream(key.offset(k));
        std::size_t j = node;
        out.at(k, 0, 0) = spot;
        for (std::size_t s = 1; s <= steps; ++s) {
            const bool up = enumerate ? ((k >> (s - 1)) & 1u) : stream.uniform(s - 1) < p;
            j += up ? 1 : 0;
            out.at(k, s, 0) = spec_.spot(date + s, j);
        }
    }
    return out;
}

PathBatch BinomialProcess::enumerate_paths(std::size_t copies) const {
    const std::size_t steps = spec_.steps;
    const std::size_t distinct = std::size_t{1} << steps;
    PathBatch out(distinct * copies, steps, 1, GridKind::exercise);
    for (std::size_t s = 0; s <= steps; ++s) out.times[s] = spec_.dt * static_cast<double>(s);
    for (std::size_t k = 0; k < out.n_paths; ++k) {
        const std::size_t pattern = k % distinct;
        std::size_t j = 0;
        out.at(k, 0, 0) = spec_.s0;
        for (std::size_t s = 1; s <= steps; ++s) {
            j += (pattern >> (s - 1)) & 1u;
            out.at(k, s, 0) = spec_.spot(s, j);
        }
    }
    return out;
}

}  // namespace bermudan::oracle
