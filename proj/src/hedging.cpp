#include "bermudan/hedging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bermudan/errors.hpp"
#include "bermudan/parallel.hpp"
#include "bermudan/stats.hpp"

namespace bermudan {

namespace {

using nn::Matrix;
using Eigen::Index;

constexpr std::size_t kEvalChunk = 4096;
constexpr std::size_t kCalibrationSamples = 65536;
// Separates hedge-net init and sampling streams from the continuation-net ones.
constexpr std::uint64_t kHedgeStreamOffset = std::uint64_t{1} << 32;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// Column j holds the state of path rows[j] at `step`.
Matrix gather(const PathBatch& batch, std::size_t step, std::span<const std::size_t> rows) {
    Matrix out(ix(batch.dim), ix(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto x = batch.state(rows[j], step);
        for (std::size_t i = 0; i < batch.dim; ++i) out(ix(i), ix(j)) = x[i];
    }
    return out;
}

Matrix gather_all(const PathBatch& batch, std::size_t step, std::size_t begin, std::size_t count) {
    Matrix out(ix(batch.dim), ix(count));
    for (std::size_t j = 0; j < count; ++j) {
        const auto x = batch.state(begin + j, step);
        for (std::size_t i = 0; i < batch.dim; ++i) out(ix(i), ix(j)) = x[i];
    }
    return out;
}

nn::MlpSpec hedge_spec(std::size_t assets, const HedgeConfig& config) {
    nn::MlpSpec spec;
    const std::size_t width = config.hidden_width ? config.hidden_width : assets + 50;
    spec.widths.push_back(assets);
    for (std::size_t l = 0; l < config.hidden_layers; ++l) spec.widths.push_back(width);
    spec.widths.push_back(assets);
    spec.batch_norm = config.batch_norm;
    spec.bn_epsilon = config.bn_epsilon;
    spec.bn_momentum = config.bn_momentum;
    return spec;
}

void require_alive_at_zero(const StoppingPolicy& policy, const ModelParams& params) {
    const double g0 = policy.payoff()(0, params.s0);
    if (g0 >= policy.theta0()) throw NothingToHedge(g0);
}

// Trains the M nets of exercise interval `interval` against `target` from `capital`.
// `nets` holds the previous interval's nets on entry when warm-starting.
std::vector<nn::Mlp> train_segment(std::size_t interval, const StoppingPolicy& policy,
                                   const GbmModel& model, const HedgeConfig& config,
                                   const std::vector<nn::Mlp>& previous,
                                   const std::function<Eigen::VectorXd(const Matrix&)>& capital_of,
                                   double* final_loss) {
    const ModelParams& params = model.params();
    const std::size_t M = params.rebalances;
    const std::size_t d = params.assets();
    const std::size_t K = config.train_paths;
    const PathBatch states =
        model.simulate_hedge_interval(interval, K, {StreamFamily::hedge_train, config.seed, 0});
    const PathBatch prices = hedge_instrument_prices(states, params);

    Eigen::VectorXd capital(ix(K)), target(ix(K));
    for (std::size_t begin = 0; begin < K; begin += kEvalChunk) {
        const std::size_t count = std::min(K, begin + kEvalChunk) - begin;
        capital.segment(ix(begin), ix(count)) = capital_of(gather_all(states, 0, begin, count));
        target.segment(ix(begin), ix(count)) =
            target_value(policy, interval, gather_all(states, M, begin, count));
    }

    const nn::MlpSpec spec = hedge_spec(d, config);
    const std::size_t first_m = (interval - 1) * M;
    std::vector<nn::Mlp> nets;
    std::vector<nn::AdamState> adam;
    const std::size_t steps = interval == 1 ? config.steps_first : config.steps_rest;
    for (std::size_t j = 0; j < M; ++j) {
        if (config.warm_start && previous.size() == M)
            nets.push_back(previous[j]);
        else
            nets.push_back(nn::init_xavier(
                spec, {StreamFamily::network_init, config.seed, kHedgeStreamOffset + first_m + j}));
        adam.emplace_back(nets.back().parameter_count(),
                          nn::StepSchedule::equal_parts(steps, config.step_sizes));
    }

    const std::size_t B = config.batch_size;
    const RandomStream sampler({StreamFamily::minibatch, config.seed, kHedgeStreamOffset + interval});
    std::vector<std::size_t> rows(B);
    std::vector<Matrix> inputs(M), increments(M), outputs(M);
    std::vector<nn::ForwardCache> caches(M);
    Eigen::RowVectorXd err(ix(B));
    double loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t j = 0; j < B; ++j) rows[j] = sampler.below(step * B + j, K);
        for (std::size_t j = 0; j < B; ++j) err(ix(j)) = capital(ix(rows[j])) - target(ix(rows[j]));
        Matrix next = gather(prices, 0, rows);
        for (std::size_t j = 0; j < M; ++j) {
            inputs[j] = std::move(next);
            next = gather(prices, j + 1, rows);
            increments[j] = next - inputs[j];
            outputs[j] = nets[j].forward(inputs[j], nn::Mode::train, &caches[j]);
            err += outputs[j].cwiseProduct(increments[j]).colwise().sum();
        }
        loss = err.squaredNorm() / static_cast<double>(B);
        const Eigen::RowVectorXd scaled = err * (2.0 / static_cast<double>(B));
        for (std::size_t j = 0; j < M; ++j) {
            const Matrix grad_out = (increments[j].array().rowwise() * scaled.array()).matrix();
            const nn::Vector grad = nets[j].backward(caches[j], grad_out);
            nn::adam_step(nets[j].parameters(), grad, adam[j]);
        }
    }
    if (final_loss) *final_loss = loss;
    if (spec.batch_norm) {
        std::vector<std::size_t> sample(std::min(K, kCalibrationSamples));
        for (std::size_t j = 0; j < sample.size(); ++j) sample[j] = j;
        for (std::size_t j = 0; j < M; ++j) nets[j].calibrate_statistics(gather(prices, j, sample));
    }
    return nets;
}

}  // namespace

void HedgeConfig::validate() const {
    if (train_paths < 2 || eval_paths < 2) throw std::invalid_argument("hedging needs at least two paths");
    if (batch_size < 2 || batch_size > train_paths)
        throw std::invalid_argument("hedge batch_size must lie in 2..train_paths");
    if (steps_first < 1 || steps_rest < 1) throw std::invalid_argument("Adam step counts must be >= 1");
    if (step_sizes.empty()) throw std::invalid_argument("step-size schedule is empty");
    if (histogram_bins < 1 || !(histogram_half_width_sd > 0.0))
        throw std::invalid_argument("histogram needs bins >= 1 and a positive width");
}

Matrix HedgeStrategy::holdings(std::size_t m, const Matrix& prices) const {
    if (m >= nets.size()) throw DateOutOfRange("no hedge network for this rebalancing index");
    return nets[m].predict(prices);
}

std::size_t Histogram::total() const {
    std::size_t n = underflow + overflow;
    for (auto c : counts) n += c;
    return n;
}

Histogram make_histogram(std::span<const double> values, std::size_t bins, double half_width_sd) {
    const RunningStats stats = summarize(values);
    double half = half_width_sd * stats.sd();
    if (!(half > 0.0)) half = 1e-9 * std::max(1.0, std::abs(stats.mean()));
    const double lo = stats.mean() - half;
    const double width = 2.0 * half / static_cast<double>(bins);
    Histogram h;
    h.counts.assign(bins, 0);
    for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + width * static_cast<double>(b));
    h.edges.back() = stats.mean() + half;
    for (double v : values) {
        if (v < h.edges.front()) {
            ++h.underflow;
        } else if (v >= h.edges.back()) {
            ++h.overflow;
        } else {
            auto b = static_cast<std::size_t>((v - lo) / width);
            b = std::min(b, bins - 1);
            // Guard the rounding at bin boundaries.
            while (b > 0 && v < h.edges[b]) --b;
            while (b + 1 < bins && v >= h.edges[b + 1]) ++b;
            ++h.counts[b];
        }
    }
    return h;
}

HedgeErrorStats summarize_errors(std::span<const double> errors) {
    RunningStats e, s;
    for (double x : errors) {
        e.add(x);
        s.add(x < 0.0 ? -x : 0.0);
    }
    return {e.mean(), e.standard_error(), s.mean(), s.standard_error(), errors.size()};
}

double HedgeReport::ihs_over_v() const {
    return intermediate ? intermediate->shortfall / v_hat : 0.0;
}

double HedgeReport::hs_over_v() const { return total ? total->shortfall / v_hat : 0.0; }

double target_value(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices) {
    const double g = policy.payoff()(date, prices);
    if (date == policy.dates()) return g;
    return std::max(g, continuation_value(policy, date, prices));
}

Eigen::VectorXd target_value(const StoppingPolicy& policy, std::size_t date, const Matrix& prices) {
    if (date < 1 || date > policy.dates()) throw DateOutOfRange("target value needs 1 <= n <= N");
    Eigen::VectorXd out = policy.continuation(date, prices);
    const bool maturity = date == policy.dates();
    for (Index k = 0; k < prices.cols(); ++k) {
        const double g = policy.payoff()(date, {prices.col(k).data(), policy.assets()});
        out(k) = maturity ? g : std::max(g, out(k));
    }
    return out;
}

double clipped_continuation(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices) {
    if (date >= policy.dates()) throw DateOutOfRange("clipped continuation needs n <= N-1");
    return std::max(0.0, continuation_value(policy, date, prices));
}

Eigen::VectorXd clipped_continuation(const StoppingPolicy& policy, std::size_t date, const Matrix& prices) {
    if (date >= policy.dates()) throw DateOutOfRange("clipped continuation needs n <= N-1");
    return policy.continuation(date, prices).cwiseMax(0.0);
}

double gains(const HedgeStrategy& strategy, const PathBatch& prices, std::size_t path,
             std::size_t from, std::size_t to) {
    if (from < prices.start_index || to > prices.start_index + prices.n_steps || from > to)
        throw std::out_of_range("gains: rebalancing range outside the price batch");
    double total = 0.0;
    for (std::size_t m = from; m < to; ++m) {
        const auto p0 = prices.state(path, m - prices.start_index);
        const auto p1 = prices.state(path, m + 1 - prices.start_index);
        const Matrix x = Eigen::Map<const Eigen::VectorXd>(p0.data(), ix(prices.dim));
        const Matrix h = strategy.holdings(m, x);
        for (std::size_t i = 0; i < prices.dim; ++i) total += h(ix(i), 0) * (p1[i] - p0[i]);
    }
    return total;
}

HedgeStrategy train_interval_hedge(const StoppingPolicy& policy, double v_hat, const GbmModel& model,
                                   const HedgeConfig& config, HedgeTrainingTrace* trace) {
    config.validate();
    require_alive_at_zero(policy, model.params());
    HedgeStrategy strategy;
    strategy.mode = HedgeMode::interval;
    strategy.rebalances = model.params().rebalances;
    strategy.assets = model.params().assets();
    double loss = 0.0;
    strategy.nets = train_segment(
        1, policy, model, config, {},
        [v_hat](const Matrix& x) { return Eigen::VectorXd::Constant(x.cols(), v_hat); }, &loss);
    if (trace) trace->final_loss = {loss};
    return strategy;
}

HedgeStrategy train_full_hedge(const StoppingPolicy& policy, const GbmModel& model,
                               const HedgeConfig& config, HedgeTrainingTrace* trace) {
    config.validate();
    const std::size_t N = policy.dates();
    HedgeStrategy strategy;
    strategy.mode = HedgeMode::full;
    strategy.rebalances = model.params().rebalances;
    strategy.assets = model.params().assets();
    if (trace) trace->final_loss.assign(N, 0.0);
    std::vector<nn::Mlp> previous;
    for (std::size_t n = 1; n <= N; ++n) {
        double loss = 0.0;
        auto capital = [&](const Matrix& x) { return clipped_continuation(policy, n - 1, x); };
        auto nets = train_segment(n, policy, model, config, previous, capital, &loss);
        if (trace) trace->final_loss[n - 1] = loss;
        strategy.nets.insert(strategy.nets.end(), nets.begin(), nets.end());
        previous = std::move(nets);
    }
    return strategy;
}

HedgeReport evaluate_interval(const HedgeStrategy& strategy, const StoppingPolicy& policy, double v_hat,
                              const GbmModel& model, std::size_t eval_paths, std::uint64_t seed) {
    const ModelParams& params = model.params();
    const std::size_t M = params.rebalances;
    if (strategy.nets.size() < M) throw std::invalid_argument("strategy lacks first-interval nets");
    HedgeReport report;
    report.v_hat = v_hat;
    report.errors.resize(eval_paths);
    const std::size_t chunks = (eval_paths + kEvalChunk - 1) / kEvalChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kEvalChunk;
        const std::size_t count = std::min(eval_paths, begin + kEvalChunk) - begin;
        const PathBatch states =
            model.simulate_hedge_interval(1, count, {StreamFamily::hedge_eval, seed, begin});
        const PathBatch prices = hedge_instrument_prices(states, params);
        Eigen::RowVectorXd gain = Eigen::RowVectorXd::Zero(ix(count));
        Matrix next = gather_all(prices, 0, 0, count);
        for (std::size_t m = 0; m < M; ++m) {
            const Matrix current = std::move(next);
            next = gather_all(prices, m + 1, 0, count);
            gain += strategy.holdings(m, current).cwiseProduct(next - current).colwise().sum();
        }
        const Eigen::VectorXd target = target_value(policy, 1, gather_all(states, M, 0, count));
        for (std::size_t j = 0; j < count; ++j)
            report.errors[begin + j] = v_hat + gain(ix(j)) - target(ix(j));
    });
    report.intermediate = summarize_errors(report.errors);
    return report;
}

HedgeReport evaluate_full(const HedgeStrategy& strategy, const StoppingPolicy& policy, double v_hat,
                          const GbmModel& model, std::size_t eval_paths, std::uint64_t seed,
                          std::size_t histogram_bins, double histogram_half_width_sd) {
    const ModelParams& params = model.params();
    const std::size_t M = params.rebalances;
    const std::size_t N = params.exercise_intervals;
    if (strategy.nets.size() != N * M) throw std::invalid_argument("evaluate_full needs a full strategy");
    HedgeReport report;
    report.v_hat = v_hat;
    report.errors.resize(eval_paths);
    const std::size_t chunks = (eval_paths + kEvalChunk - 1) / kEvalChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kEvalChunk;
        const std::size_t count = std::min(eval_paths, begin + kEvalChunk) - begin;
        const PathBatch states =
            model.simulate(GridKind::hedge, count, {StreamFamily::hedge_eval, seed, begin});
        const PathBatch prices = hedge_instrument_prices(states, params);
        const PathBatch exercise = exercise_restriction(states, M);
        const auto tau = stopping_dates(policy, exercise, 0);
        std::vector<double> gain(count, 0.0);
        std::vector<std::size_t> alive;
        for (std::size_t m = 0; m < N * M; ++m) {
            alive.clear();
            for (std::size_t j = 0; j < count; ++j)
                if (tau[j] * M > m) alive.push_back(j);
            if (alive.empty()) break;
            const Matrix current = gather(prices, m, alive);
            const Matrix change = gather(prices, m + 1, alive) - current;
            const Eigen::RowVectorXd g = strategy.holdings(m, current).cwiseProduct(change).colwise().sum();
            for (std::size_t a = 0; a < alive.size(); ++a) gain[alive[a]] += g(ix(a));
        }
        for (std::size_t j = 0; j < count; ++j)
            report.errors[begin + j] =
                v_hat + gain[j] - policy.payoff()(tau[j], exercise.state(j, tau[j]));
    });
    report.total = summarize_errors(report.errors);
    report.histogram = make_histogram(report.errors, histogram_bins, histogram_half_width_sd);
    return report;
}

}  // namespace bermudan
