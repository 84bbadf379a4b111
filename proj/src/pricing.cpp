#include "bermudan/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bermudan/parallel.hpp"

namespace bermudan {

namespace {
constexpr std::size_t kLowerChunk = 16384;
constexpr std::size_t kOuterChunk = 4;
}  // namespace

double BoundEstimate::standard_error() const {
    return samples == 0 ? 0.0 : sd / std::sqrt(static_cast<double>(samples));
}

void DualConfig::validate() const {
    if (outer_paths < 2) throw std::invalid_argument("upper bound needs at least two outer paths");
    if (inner_paths < 2) throw std::invalid_argument("upper bound needs at least two inner paths");
}

BoundEstimate lower_bound(const StoppingPolicy& policy, const StateProcess& process,
                          std::size_t paths, std::uint64_t seed) {
    if (paths < 2) throw std::invalid_argument("lower bound needs at least two paths");
    std::vector<double> payoff(paths);
    const std::size_t chunks = (paths + kLowerChunk - 1) / kLowerChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kLowerChunk;
        const std::size_t count = std::min(paths, begin + kLowerChunk) - begin;
        const PathBatch batch = process.exercise_paths(count, {StreamFamily::lower, seed, begin});
        const auto values = stopped_payoffs(policy, batch, 0);
        std::copy(values.begin(), values.end(), payoff.begin() + static_cast<std::ptrdiff_t>(begin));
    });
    const RunningStats stats = summarize(payoff);
    return {stats.mean(), stats.sd(), paths};
}

double critical_value(double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("alpha must lie in (0, 1]");
    return normal_quantile(1.0 - alpha / 2.0);
}

double one_sided_ci(double l_hat, double sigma_l, std::size_t paths, double alpha) {
    return l_hat - critical_value(alpha) * sigma_l / std::sqrt(static_cast<double>(paths));
}

DualPath dual_martingale_path(const StoppingPolicy& policy, const StateProcess& process,
                              const PathBatch& batch, std::size_t path, std::size_t inner_paths,
                              const RngStreamKey& inner_key) {
    const std::size_t N = policy.dates();
    if (batch.start_index != 0 || batch.n_steps != N)
        throw std::invalid_argument("dual martingale needs a full exercise-grid path");
    DualPath out;
    out.payoff.resize(N + 1);
    out.continuation.resize(N);
    out.martingale.assign(N + 1, 0.0);
    for (std::size_t n = 0; n <= N; ++n) out.payoff[n] = policy.payoff()(n, batch.state(path, n));
    for (std::size_t n = 0; n < N; ++n) {
        const RngStreamKey key{inner_key.family, inner_key.seed,
                               (inner_key.index * N + n) * inner_paths};
        const PathBatch inner = process.branch(n, batch.state(path, n), inner_paths, key);
        const auto values = stopped_payoffs(policy, inner, n + 1);
        double sum = 0.0;
        for (double v : values) sum += v;
        out.continuation[n] = sum / static_cast<double>(values.size());
    }
    double best = out.payoff[0];
    for (std::size_t n = 1; n <= N; ++n) {
        const bool stop = n == N || stop_decision(policy, n, batch.state(path, n));
        const double value_n = stop ? out.payoff[n] : out.continuation[n];
        out.martingale[n] = out.martingale[n - 1] + value_n - out.continuation[n - 1];
        best = std::max(best, out.payoff[n] - out.martingale[n]);
    }
    out.dual_max = best;
    return out;
}

UpperBoundResult upper_bound(const StoppingPolicy& policy, const StateProcess& process,
                             const DualConfig& config) {
    config.validate();
    const std::size_t N = policy.dates();
    const std::size_t K = config.outer_paths;
    const PathBatch outer = process.exercise_paths(K, {StreamFamily::upper_outer, config.seed, 0});
    std::vector<DualPath> paths(K);
    const std::size_t chunks = (K + kOuterChunk - 1) / kOuterChunk;
    parallel_for(chunks, [&](std::size_t c) {
        for (std::size_t k = c * kOuterChunk; k < std::min(K, (c + 1) * kOuterChunk); ++k)
            paths[k] = dual_martingale_path(policy, process, outer, k, config.inner_paths,
                                            {StreamFamily::upper_inner, config.seed, k});
    });
    UpperBoundResult result;
    result.increments.assign(N + 1, RunningStats{});
    result.dual_max.resize(K);
    RunningStats stats;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t n = 1; n <= N; ++n)
            result.increments[n].add(paths[k].martingale[n] - paths[k].martingale[n - 1]);
        result.dual_max[k] = paths[k].dual_max;
        stats.add(paths[k].dual_max);
    }
    result.estimate = {stats.mean(), stats.sd(), K};
    return result;
}

PriceEstimate point_and_interval(const BoundEstimate& lower, const BoundEstimate& upper,
                                 std::size_t inner_paths, double alpha) {
    const double z = critical_value(alpha);
    PriceEstimate p;
    p.l_hat = lower.mean;
    p.sigma_l = lower.sd;
    p.u_hat = upper.mean;
    p.sigma_u = upper.sd;
    p.v_hat = 0.5 * (lower.mean + upper.mean);
    p.ci_low = lower.mean - z * lower.sd / std::sqrt(static_cast<double>(lower.samples));
    p.ci_high = upper.mean + z * upper.sd / std::sqrt(static_cast<double>(upper.samples));
    p.lower_paths = lower.samples;
    p.outer_paths = upper.samples;
    p.inner_paths = inner_paths;
    p.alpha = alpha;
    return p;
}

}  // namespace bermudan
