#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "bermudan/market.hpp"
#include "bermudan/nn.hpp"

namespace bermudan {

/// Hyperparameters of the backward-induction regression.
struct TrainConfig {
    std::size_t paths = 400'000;     // K
    std::size_t batch_size = 1024;
    std::size_t steps_first = 1500;  // Adam steps at date N-1
    std::size_t steps_rest = 750;    // Adam steps at dates N-2..1
    bool warm_start = true;          // start date n from the trained net of date n+1
    bool extended_state = true;      // append g(n, x) to the network input
    std::vector<double> step_sizes = nn::kDefaultStepSizes;
    std::size_t hidden_layers = 2;
    std::size_t hidden_width = 0;    // 0 selects d + 50
    bool batch_norm = true;
    bool input_batch_norm = false;
    double bn_epsilon = 1e-6;
    double bn_momentum = 0.99;
    std::uint64_t seed = 0;

    void validate() const;
};

/// theta_0 plus one continuation network per date 1..N-1; stops at the first date with
/// g(n, X_n) >= c(n, X_n), and at N if that never happens.
class StoppingPolicy {
public:
    using ContinuationFn = std::function<double(std::size_t date, std::span<const double> prices)>;

    StoppingPolicy(std::size_t dates, std::size_t assets, bool extended_state, double theta0,
                   std::vector<nn::Mlp> nets, PayoffFn payoff);

    /// Policy driven by a given continuation function (exact or synthetic policies).
    static StoppingPolicy from_function(std::size_t dates, std::size_t assets, double theta0,
                                        ContinuationFn continuation, PayoffFn payoff);

    std::size_t dates() const { return dates_; }
    std::size_t assets() const { return assets_; }
    bool extended_state() const { return extended_; }
    double theta0() const { return theta0_; }
    const std::vector<nn::Mlp>& nets() const { return nets_; }
    const PayoffFn& payoff() const { return payoff_; }
    bool has_networks() const { return !function_; }

    /// Network input for prices given column-wise (d x B).
    nn::Matrix features(std::size_t date, const nn::Matrix& prices) const;
    /// c(n, x) for every column of `prices`; theta_0 at n = 0 and 0 at n = N.
    Eigen::VectorXd continuation(std::size_t date, const nn::Matrix& prices) const;

private:
    std::size_t dates_;
    std::size_t assets_;
    bool extended_;
    double theta0_;
    std::vector<nn::Mlp> nets_;
    PayoffFn payoff_;
    ContinuationFn function_;
};

/// Per-date record of a training run.
struct TrainingTrace {
    // labels[n][k] = s^k_n for n = 1..N (labels[0] unused).
    std::vector<std::vector<std::uint32_t>> labels;
    std::vector<double> final_loss;  // last mini-batch loss per date
};

/// Neural Longstaff-Schwartz backward induction over the paths of `batch`
/// (exercise grid; extended state when config.extended_state).
StoppingPolicy train_policy(const PathBatch& batch, const PayoffFn& payoff, const TrainConfig& config,
                            TrainingTrace* trace = nullptr);

Eigen::VectorXd continuation_value(const StoppingPolicy& policy, std::size_t date,
                                   const nn::Matrix& prices);
double continuation_value(const StoppingPolicy& policy, std::size_t date,
                          std::span<const double> prices);

/// g(n, x) >= c(n, x); always true at n = N.
bool stop_decision(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices);

/// First date with a stop decision along path `path` of an exercise-grid batch.
std::size_t apply_policy(const StoppingPolicy& policy, const PathBatch& batch, std::size_t path);

/// Stopping dates of all paths, considering decisions from `first_date` on
/// (batch.start_index <= first_date <= N).
std::vector<std::size_t> stopping_dates(const StoppingPolicy& policy, const PathBatch& batch,
                                        std::size_t first_date);

/// Discounted payoff g(tau, X_tau) at the policy's stopping date for every path.
std::vector<double> stopped_payoffs(const StoppingPolicy& policy, const PathBatch& batch,
                                    std::size_t first_date);

void save_policy(std::ostream& out, const StoppingPolicy& policy);
StoppingPolicy load_policy(std::istream& in, PayoffFn payoff);

}  // namespace bermudan
