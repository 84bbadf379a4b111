#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bermudan/market.hpp"
#include "bermudan/nn.hpp"
#include "bermudan/stopping.hpp"

namespace bermudan {

struct HedgeConfig {
    std::size_t train_paths = 200'000;  // K_H
    std::size_t eval_paths = 500'000;   // K_E
    std::size_t batch_size = 1024;
    std::size_t steps_first = 2000;     // Adam steps for the nets of the first interval
    std::size_t steps_rest = 600;       // later intervals, warm-started from lambda_{m-M}
    bool warm_start = true;
    std::vector<double> step_sizes = nn::kDefaultStepSizes;
    std::size_t hidden_layers = 2;
    std::size_t hidden_width = 0;       // 0 selects d + 50
    bool batch_norm = true;
    double bn_epsilon = 1e-6;
    double bn_momentum = 0.99;
    std::size_t histogram_bins = 100;
    double histogram_half_width_sd = 5.0;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class HedgeMode { interval, full };

/// Holdings networks h_m: R^d -> R^d evaluated on the discounted instrument prices P_{u_m}.
struct HedgeStrategy {
    HedgeMode mode = HedgeMode::interval;
    std::size_t rebalances = 1;  // M
    std::size_t assets = 0;
    std::vector<nn::Mlp> nets;   // M nets (interval) or N*M nets (full)

    /// Holdings at rebalancing index m for prices given column-wise (d x B).
    nn::Matrix holdings(std::size_t m, const nn::Matrix& prices) const;
};

struct Histogram {
    std::vector<double> edges;         // bins + 1 edges
    std::vector<std::size_t> counts;   // bins
    std::size_t underflow = 0;
    std::size_t overflow = 0;

    std::size_t total() const;
};

/// Equal-width bins over mean +- half_width_sd sample SDs plus two overflow bins.
Histogram make_histogram(std::span<const double> values, std::size_t bins, double half_width_sd);

/// Mean error and mean negative part (shortfall) with their standard errors.
struct HedgeErrorStats {
    double mean = 0.0;
    double mean_se = 0.0;
    double shortfall = 0.0;
    double shortfall_se = 0.0;
    std::size_t samples = 0;
};

HedgeErrorStats summarize_errors(std::span<const double> errors);

struct HedgeReport {
    double v_hat = 0.0;
    std::optional<HedgeErrorStats> intermediate;  // [0, t_1]
    std::optional<HedgeErrorStats> total;         // [0, tau]
    std::optional<Histogram> histogram;           // of total errors
    std::vector<double> errors;                   // per evaluation path

    double ihs_over_v() const;
    double hs_over_v() const;
};

/// v(n, x) = g(n, x) v c(n, x) for n <= N-1, g(N, x) at n = N.
double target_value(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices);
Eigen::VectorXd target_value(const StoppingPolicy& policy, std::size_t date, const nn::Matrix& prices);

/// C(n, x) = 0 v c(n, x), n <= N-1.
double clipped_continuation(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices);
Eigen::VectorXd clipped_continuation(const StoppingPolicy& policy, std::size_t date, const nn::Matrix& prices);

/// sum_{j=from}^{to-1} h_j(P_j) . (P_{j+1} - P_j) along one path of a discounted-price batch.
/// `from` and `to` are rebalancing indices.
double gains(const HedgeStrategy& strategy, const PathBatch& prices, std::size_t path,
             std::size_t from, std::size_t to);

struct HedgeTrainingTrace {
    std::vector<double> final_loss;  // last mini-batch loss per trained interval
};

/// Nets lambda_0..lambda_{M-1} trained jointly so that V-hat plus gains replicates v(1, X_1).
/// Throws NothingToHedge when the policy exercises at time 0.
HedgeStrategy train_interval_hedge(const StoppingPolicy& policy, double v_hat, const GbmModel& model,
                                   const HedgeConfig& config, HedgeTrainingTrace* trace = nullptr);

/// All N*M nets; interval n replicates v(n, X_n) from capital C(n-1, X_{n-1}), with C(0) = max(0, theta_0).
HedgeStrategy train_full_hedge(const StoppingPolicy& policy, const GbmModel& model,
                               const HedgeConfig& config, HedgeTrainingTrace* trace = nullptr);

/// Errors V-hat + gains over [0, t_1] - v(1, X_1) on fresh HEDGE_EVAL paths.
HedgeReport evaluate_interval(const HedgeStrategy& strategy, const StoppingPolicy& policy, double v_hat,
                              const GbmModel& model, std::size_t eval_paths, std::uint64_t seed);

/// Errors V-hat + gains up to tau*M - g(tau, X_tau) on fresh HEDGE_EVAL paths, with histogram.
HedgeReport evaluate_full(const HedgeStrategy& strategy, const StoppingPolicy& policy, double v_hat,
                          const GbmModel& model, std::size_t eval_paths, std::uint64_t seed,
                          std::size_t histogram_bins = 100, double histogram_half_width_sd = 5.0);

}  // namespace bermudan
