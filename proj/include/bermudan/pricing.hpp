#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bermudan/market.hpp"
#include "bermudan/stats.hpp"
#include "bermudan/stopping.hpp"

namespace bermudan {

struct BoundEstimate {
    double mean = 0.0;  // L-hat or U-hat
    double sd = 0.0;    // sample standard deviation, 1/(K-1) normalization
    std::size_t samples = 0;

    double standard_error() const;
};

struct DualConfig {
    std::size_t outer_paths = 512;  // K_U
    std::size_t inner_paths = 512;  // J, per (outer path, date)
    std::uint64_t seed = 0;

    void validate() const;
};

/// Low-biased estimate from fresh LOWER-family paths stopped by the policy.
BoundEstimate lower_bound(const StoppingPolicy& policy, const StateProcess& process,
                          std::size_t paths, std::uint64_t seed);

/// z_{alpha/2}, the 1 - alpha/2 standard normal quantile (0 for alpha = 1).
double critical_value(double alpha);

/// Lower end of the one-sided interval [L - z sigma_L / sqrt(K_L), inf).
double one_sided_ci(double l_hat, double sigma_l, std::size_t paths, double alpha);

/// Dual quantities along one outer path.
struct DualPath {
    std::vector<double> martingale;    // m_0 .. m_N
    std::vector<double> continuation;  // nested estimates C-hat_0 .. C-hat_{N-1}
    std::vector<double> payoff;        // g(n, x_n)
    double dual_max = 0.0;             // max_n (g(n, x_n) - m_n)
};

/// Nested-simulation martingale along `path` of an exercise-grid batch:
/// m_n - m_{n-1} = f_n g(n, x_n) + (1 - f_n) C-hat_n - C-hat_{n-1}, f_n the stop decision,
/// C-hat_n the mean of g at the policy's stopping date over `inner_paths` fresh paths
/// branched from x_n. `inner_key.index` identifies the outer path.
DualPath dual_martingale_path(const StoppingPolicy& policy, const StateProcess& process,
                              const PathBatch& batch, std::size_t path, std::size_t inner_paths,
                              const RngStreamKey& inner_key);

struct UpperBoundResult {
    BoundEstimate estimate;
    std::vector<RunningStats> increments;  // m_n - m_{n-1} across outer paths, n = 1..N (index 0 unused)
    std::vector<double> dual_max;          // per outer path
};

/// High-biased estimate averaged over UPPER_OUTER paths with UPPER_INNER branches.
UpperBoundResult upper_bound(const StoppingPolicy& policy, const StateProcess& process,
                             const DualConfig& config);

struct PriceEstimate {
    double l_hat = 0.0, sigma_l = 0.0;
    double u_hat = 0.0, sigma_u = 0.0;
    double v_hat = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    std::size_t lower_paths = 0, outer_paths = 0, inner_paths = 0;
    double alpha = 0.05;
};

/// V-hat = (L + U) / 2 and [L - z sigma_L / sqrt(K_L), U + z sigma_U / sqrt(K_U)].
PriceEstimate point_and_interval(const BoundEstimate& lower, const BoundEstimate& upper,
                                 std::size_t inner_paths, double alpha);

}  // namespace bermudan
