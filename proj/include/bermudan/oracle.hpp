#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "bermudan/market.hpp"

namespace bermudan::oracle {

enum class OptionType { call, put };

struct BlackScholes {
    double price = 0.0;
    double delta = 0.0;  // d price / d spot
};

/// European price and spot delta with continuous dividend yield.
BlackScholes bs_european(double s0, double strike, double rate, double dividend, double sigma,
                         double maturity, OptionType type);

/// Recombining single-asset binomial tree. Node j of level L has spot s0 up^j down^(L-j).
struct TreeSpec {
    double s0 = 100.0;
    std::size_t steps = 1;
    double dt = 1.0;
    double rate = 0.0;
    double dividend = 0.0;
    double up = 1.1;
    double down = 0.9;
    // Levels (< steps) where early exercise is allowed; the last level always pays out.
    std::vector<std::size_t> exercise_levels;

    /// u = e^{sigma sqrt(dt)}, d = 1/u.
    static TreeSpec crr(double s0, std::size_t steps, double maturity, double rate, double dividend,
                        double sigma, std::vector<std::size_t> exercise_levels);
    /// Every level exercisable.
    static std::vector<std::size_t> all_levels(std::size_t steps);

    /// Risk-neutral up probability for drift r - dividend.
    double prob() const;
    double discount() const;
    double spot(std::size_t level, std::size_t node) const;
    /// Node index of `spot` at `level` (nearest lattice point).
    std::size_t node_of(std::size_t level, double spot) const;
    bool exercisable(std::size_t level) const;
    /// 0 < down < e^{(r - dividend) dt} < up
    void validate() const;
};

/// Undiscounted payoff at a tree node.
using TreePayoff = std::function<double(std::size_t level, double spot)>;

struct TreeSolution {
    double price = 0.0;
    std::vector<std::vector<double>> value;         // per level and node, undiscounted to that level
    std::vector<std::vector<double>> continuation;  // expected discounted next value; 0 at maturity
};

/// Backward induction with early exercise at spec.exercise_levels.
TreeSolution solve_tree(const TreeSpec& spec, const TreePayoff& payoff);
double crr_bermudan(const TreeSpec& spec, const TreePayoff& payoff);

/// Best expected payoff over every stop/continue labelling of the exercisable nodes.
/// Throws TooLarge when the number of rules exceeds `max_rules`.
double exhaustive_optimal_stop(const TreeSpec& spec, const TreePayoff& payoff,
                               std::size_t max_rules = std::size_t{1} << 22);

/// The tree as a state process with one exercise date per level and
/// g(n, x) = e^{-r n dt} f(x). With enumerate_branches, branch() ignores the requested
/// count and returns every continuation path once (exact conditional averages; requires prob() == 1/2).
class BinomialProcess final : public StateProcess {
public:
    BinomialProcess(TreeSpec spec, std::function<double(double)> payoff, bool enumerate_branches = false);

    const TreeSpec& spec() const { return spec_; }
    std::size_t assets() const override { return 1; }
    std::size_t exercise_intervals() const override { return spec_.steps; }
    PayoffFn payoff() const override;

    PathBatch exercise_paths(std::size_t n_paths, const RngStreamKey& key) const override;
    PathBatch branch(std::size_t date, std::span<const double> state, std::size_t n_paths,
                     const RngStreamKey& key) const override;

    /// Each of the 2^N up/down paths `copies` times; an exact sample when prob() == 1/2.
    PathBatch enumerate_paths(std::size_t copies) const;

private:
    PathBatch walk(std::size_t date, double spot, std::size_t n_paths, const RngStreamKey& key, bool enumerate) const;

    TreeSpec spec_;
    std::function<double(double)> payoff_;
    bool enumerate_;
};

}  // namespace bermudan::oracle
