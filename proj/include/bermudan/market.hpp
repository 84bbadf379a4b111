#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bermudan/rng.hpp"

namespace bermudan {

/// Market and contract description for a Bermudan max-call on correlated GBM assets.
struct ModelParams {
    std::vector<double> s0;     // initial prices
    double rate = 0.0;          // risk-free rate per year
    std::vector<double> delta;  // dividend yields
    std::vector<double> sigma;  // volatilities
    Eigen::MatrixXd rho;        // instantaneous correlations
    double strike = 0.0;
    double maturity = 1.0;
    std::size_t exercise_intervals = 1;  // N
    std::size_t rebalances = 1;          // M, hedge steps per exercise interval
    // Optional exercise dates t_0 = 0 < ... < t_N = T; uniform nT/N when empty.
    std::vector<double> exercise_times;
    // Test hook: permits sigma == 0 for deterministic paths.
    bool allow_zero_volatility = false;

    static ModelParams symmetric(std::size_t d, double s0, double rate, double delta, double sigma,
                                 double correlation, double strike, double maturity,
                                 std::size_t exercise_intervals, std::size_t rebalances = 1);

    std::size_t assets() const { return s0.size(); }
    void validate() const;
    double exercise_time(std::size_t n) const;
    /// u_m on the rebalancing grid; u_{nM} is exactly t_n.
    double hedge_time(std::size_t m) const;
};

enum class GridKind { exercise, hedge };

/// Simulated paths stored row-major as [path][step][coordinate].
struct PathBatch {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;      // steps per path; each path holds n_steps + 1 states
    std::size_t dim = 0;
    std::size_t start_index = 0;  // grid index of step 0 (non-zero for branched or interval batches)
    GridKind kind = GridKind::exercise;
    std::vector<double> times;    // n_steps + 1 grid times
    std::vector<double> values;

    PathBatch() = default;
    PathBatch(std::size_t paths, std::size_t steps, std::size_t dimension, GridKind grid);

    double& at(std::size_t path, std::size_t step, std::size_t coord) {
        return values[(path * (n_steps + 1) + step) * dim + coord];
    }
    double at(std::size_t path, std::size_t step, std::size_t coord) const {
        return values[(path * (n_steps + 1) + step) * dim + coord];
    }
    std::span<double> state(std::size_t path, std::size_t step) {
        return {values.data() + (path * (n_steps + 1) + step) * dim, dim};
    }
    std::span<const double> state(std::size_t path, std::size_t step) const {
        return {values.data() + (path * (n_steps + 1) + step) * dim, dim};
    }
};

/// Discounted payoff g(n, x), evaluated on the asset-price coordinates of a state.
using PayoffFn = std::function<double(std::size_t date, std::span<const double> prices)>;

/// A Markov state process observed on exercise dates 0..N together with its payoff.
class StateProcess {
public:
    virtual ~StateProcess() = default;

    virtual std::size_t assets() const = 0;
    virtual std::size_t exercise_intervals() const = 0;
    virtual PayoffFn payoff() const = 0;

    /// Paths on the exercise grid starting from the initial state; path k uses stream key.offset(k).
    virtual PathBatch exercise_paths(std::size_t n_paths, const RngStreamKey& key) const = 0;

    /// Paths started from `state` at exercise date `date` and run to date N.
    virtual PathBatch branch(std::size_t date, std::span<const double> state, std::size_t n_paths,
                             const RngStreamKey& key) const = 0;
};

/// Lower-triangular L with L L^T = rho. Zero pivots are accepted (semidefinite input).
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& rho);

/// e^{-r t_n} (max_i x_i - K)^+
double max_call_payoff(const ModelParams& params, std::size_t date, std::span<const double> prices);

class GbmModel final : public StateProcess {
public:
    explicit GbmModel(ModelParams params);

    const ModelParams& params() const { return params_; }
    const Eigen::MatrixXd& correlation_factor() const { return chol_; }

    std::size_t assets() const override { return params_.assets(); }
    std::size_t exercise_intervals() const override { return params_.exercise_intervals; }
    PayoffFn payoff() const override;

    PathBatch exercise_paths(std::size_t n_paths, const RngStreamKey& key) const override;
    PathBatch branch(std::size_t date, std::span<const double> state, std::size_t n_paths,
                     const RngStreamKey& key) const override;

    /// Exercise grid (N steps) or rebalancing grid (N*M steps) from the same Brownian draws.
    PathBatch simulate(GridKind grid, std::size_t n_paths, const RngStreamKey& key) const;

    /// Rebalancing-grid segment [t_{n-1}, t_n] (M steps) for exercise interval n in 1..N.
    PathBatch simulate_hedge_interval(std::size_t interval, std::size_t n_paths,
                                      const RngStreamKey& key) const;

private:
    // Brownian values at every exercise date, d per date, for one path.
    void exercise_brownian(const RandomStream& stream, std::span<double> w) const;
    void fill_interval(const RandomStream& stream, std::span<const double> w, std::size_t interval,
                       PathBatch& out, std::size_t path, std::size_t first_step) const;
    double log_drift(std::size_t asset) const;
    double price(std::size_t asset, double t, double brownian) const;

    ModelParams params_;
    Eigen::MatrixXd chol_;
};

PathBatch simulate_paths(const ModelParams& params, GridKind grid, std::size_t n_paths,
                         const RngStreamKey& key);

/// Appends X^{d+1}_n = g(n, X_n) to every state of an exercise-grid batch.
PathBatch extend_state(const PathBatch& batch, const PayoffFn& payoff);

/// Dividend-adjusted discounted prices P^i_u = e^{-(r - delta_i) u} S^i_u on a rebalancing-grid batch.
PathBatch hedge_instrument_prices(const PathBatch& batch, const ModelParams& params);

/// Restriction of a rebalancing-grid batch to the exercise dates {0, M, 2M, ...}.
PathBatch exercise_restriction(const PathBatch& hedge_batch, std::size_t rebalances);

}  // namespace bermudan
