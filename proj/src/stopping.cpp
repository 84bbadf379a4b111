#include "bermudan/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bermudan/errors.hpp"
#include "bermudan/parallel.hpp"

namespace bermudan {

namespace {

constexpr std::size_t kCalibrationSamples = 65536;

using nn::Matrix;
using Eigen::Index;

constexpr std::size_t kPolicyChunk = 8192;

Matrix gather_prices(const PathBatch& batch, std::size_t step, std::size_t assets,
                     std::span<const std::size_t> rows) {
    Matrix out(static_cast<Index>(assets), static_cast<Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto x = batch.state(rows[j], step);
        for (std::size_t i = 0; i < assets; ++i) out(static_cast<Index>(i), static_cast<Index>(j)) = x[i];
    }
    return out;
}

nn::MlpSpec continuation_spec(std::size_t inputs, std::size_t assets, const TrainConfig& config) {
    nn::MlpSpec spec;
    const std::size_t width = config.hidden_width ? config.hidden_width : assets + 50;
    spec.widths.push_back(inputs);
    for (std::size_t l = 0; l < config.hidden_layers; ++l) spec.widths.push_back(width);
    spec.widths.push_back(1);
    spec.batch_norm = config.batch_norm;
    spec.bn_epsilon = config.bn_epsilon;
    spec.bn_momentum = config.bn_momentum;
    spec.input_batch_norm = config.input_batch_norm;
    return spec;
}

std::string hex(double v) {
    std::ostringstream os;
    os << std::hexfloat << v;
    return os.str();
}

}  // namespace

void TrainConfig::validate() const {
    if (paths < 1) throw std::invalid_argument("training needs at least one path");
    if (batch_size < 1 || batch_size > paths)
        throw std::invalid_argument("batch_size must lie in 1..paths");
    if (steps_first < 1 || steps_rest < 1) throw std::invalid_argument("Adam step counts must be >= 1");
    if (step_sizes.empty()) throw std::invalid_argument("step-size schedule is empty");
    if (batch_norm && batch_size < 2 && hidden_layers > 0)
        throw std::invalid_argument("batch normalization needs batch_size >= 2");
}

StoppingPolicy::StoppingPolicy(std::size_t dates, std::size_t assets, bool extended_state,
                               double theta0, std::vector<nn::Mlp> nets, PayoffFn payoff)
    : dates_(dates), assets_(assets), extended_(extended_state), theta0_(theta0),
      nets_(std::move(nets)), payoff_(std::move(payoff)) {
    if (dates_ < 1) throw std::invalid_argument("policy needs N >= 1");
    if (nets_.size() != dates_ - 1) throw std::invalid_argument("policy needs N - 1 networks");
    for (const auto& net : nets_)
        if (net.spec().inputs() != assets_ + (extended_ ? 1 : 0) || net.spec().outputs() != 1)
            throw std::invalid_argument("continuation network has the wrong input/output width");
}

StoppingPolicy StoppingPolicy::from_function(std::size_t dates, std::size_t assets, double theta0,
                                             ContinuationFn continuation, PayoffFn payoff) {
    StoppingPolicy p(1, assets, false, theta0, {}, std::move(payoff));
    p.dates_ = dates;
    p.function_ = std::move(continuation);
    return p;
}

Matrix StoppingPolicy::features(std::size_t date, const Matrix& prices) const {
    if (!extended_) return prices;
    Matrix out(prices.rows() + 1, prices.cols());
    out.topRows(prices.rows()) = prices;
    for (Index k = 0; k < prices.cols(); ++k)
        out(prices.rows(), k) = payoff_(date, {prices.col(k).data(), assets_});
    return out;
}

Eigen::VectorXd StoppingPolicy::continuation(std::size_t date, const Matrix& prices) const {
    if (date > dates_) throw DateOutOfRange("continuation value requested after maturity");
    if (date == dates_) return Eigen::VectorXd::Zero(prices.cols());
    if (date == 0) return Eigen::VectorXd::Constant(prices.cols(), theta0_);
    if (function_) {
        Eigen::VectorXd out(prices.cols());
        for (Index k = 0; k < prices.cols(); ++k) out(k) = function_(date, {prices.col(k).data(), assets_});
        return out;
    }
    return nets_[date - 1].predict(features(date, prices)).row(0).transpose();
}

Eigen::VectorXd continuation_value(const StoppingPolicy& policy, std::size_t date, const Matrix& prices) {
    return policy.continuation(date, prices);
}

double continuation_value(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices) {
    const Matrix x = Eigen::Map<const Eigen::VectorXd>(prices.data(), static_cast<Index>(policy.assets()));
    return policy.continuation(date, x)(0);
}

bool stop_decision(const StoppingPolicy& policy, std::size_t date, std::span<const double> prices) {
    if (date == policy.dates()) return true;
    return policy.payoff()(date, prices) >= continuation_value(policy, date, prices);
}

std::vector<std::size_t> stopping_dates(const StoppingPolicy& policy, const PathBatch& batch,
                                        std::size_t first_date) {
    const std::size_t N = policy.dates();
    if (first_date < batch.start_index || first_date > N || batch.start_index + batch.n_steps != N)
        throw DateOutOfRange("stopping_dates: batch does not cover dates first_date..N");
    std::vector<std::size_t> tau(batch.n_paths, N);
    const std::size_t chunks = (batch.n_paths + kPolicyChunk - 1) / kPolicyChunk;
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<std::size_t> alive;
        for (std::size_t k = c * kPolicyChunk; k < std::min(batch.n_paths, (c + 1) * kPolicyChunk); ++k)
            alive.push_back(k);
        std::vector<std::size_t> next;
        for (std::size_t date = first_date; date < N && !alive.empty(); ++date) {
            const std::size_t step = date - batch.start_index;
            const Matrix prices = gather_prices(batch, step, policy.assets(), alive);
            const Eigen::VectorXd cont = policy.continuation(date, prices);
            next.clear();
            for (std::size_t j = 0; j < alive.size(); ++j) {
                const double g = policy.payoff()(date, batch.state(alive[j], step));
                if (g >= cont(static_cast<Index>(j))) tau[alive[j]] = date;
                else next.push_back(alive[j]);
            }
            alive.swap(next);
        }
    });
    return tau;
}

std::vector<double> stopped_payoffs(const StoppingPolicy& policy, const PathBatch& batch,
                                    std::size_t first_date) {
    const auto tau = stopping_dates(policy, batch, first_date);
    std::vector<double> out(batch.n_paths);
    for (std::size_t k = 0; k < batch.n_paths; ++k)
        out[k] = policy.payoff()(tau[k], batch.state(k, tau[k] - batch.start_index));
    return out;
}

std::size_t apply_policy(const StoppingPolicy& policy, const PathBatch& batch, std::size_t path) {
    for (std::size_t date = batch.start_index; date < policy.dates(); ++date)
        if (stop_decision(policy, date, batch.state(path, date - batch.start_index))) return date;
    return policy.dates();
}

StoppingPolicy train_policy(const PathBatch& batch, const PayoffFn& payoff, const TrainConfig& config,
                            TrainingTrace* trace) {
    config.validate();
    if (batch.kind != GridKind::exercise || batch.start_index != 0)
        throw std::invalid_argument("training needs exercise-grid paths starting at date 0");
    const std::size_t N = batch.n_steps;
    const std::size_t K = batch.n_paths;
    const std::size_t assets = config.extended_state ? batch.dim - 1 : batch.dim;
    const std::size_t inputs = batch.dim;
    if (config.batch_size > K) throw std::invalid_argument("batch_size exceeds the number of paths");

    // stop_value[k] = g(s^k_{n+1}, x^k_{s^k_{n+1}}), the regression target at date n.
    std::vector<double> stop_value(K);
    std::vector<std::uint32_t> label(K, static_cast<std::uint32_t>(N));
    for (std::size_t k = 0; k < K; ++k) stop_value[k] = payoff(N, batch.state(k, N).first(assets));
    if (trace) {
        trace->labels.assign(N + 1, {});
        trace->labels[N] = label;
        trace->final_loss.assign(N, 0.0);
    }

    const nn::MlpSpec spec = continuation_spec(inputs, assets, config);
    std::vector<nn::Mlp> nets(N > 0 ? N - 1 : 0);
    const Index B = static_cast<Index>(config.batch_size);

    for (std::size_t n = N - 1; n >= 1; --n) {
        Matrix features(static_cast<Index>(inputs), static_cast<Index>(K));
        for (std::size_t k = 0; k < K; ++k) {
            const auto x = batch.state(k, n);
            for (std::size_t i = 0; i < inputs; ++i) features(static_cast<Index>(i), static_cast<Index>(k)) = x[i];
        }
        const bool first = n == N - 1;
        nn::Mlp net = (!first && config.warm_start)
                          ? nets[n]
                          : nn::init_xavier(spec, {StreamFamily::network_init, config.seed, n});
        const std::size_t steps = first ? config.steps_first : config.steps_rest;
        nn::AdamState adam(net.parameter_count(), nn::StepSchedule::equal_parts(steps, config.step_sizes));
        const RandomStream sampler({StreamFamily::minibatch, config.seed, n});
        Matrix xb(static_cast<Index>(inputs), B);
        Eigen::RowVectorXd yb(B);
        nn::ForwardCache cache;
        double loss = 0.0;
        for (std::size_t step = 0; step < steps; ++step) {
            for (Index j = 0; j < B; ++j) {
                const auto k = static_cast<Index>(
                    sampler.below(step * config.batch_size + static_cast<std::size_t>(j), K));
                xb.col(j) = features.col(k);
                yb(j) = stop_value[static_cast<std::size_t>(k)];
            }
            const Matrix out = net.forward(xb, nn::Mode::train, &cache);
            const Eigen::RowVectorXd residual = out.row(0) - yb;
            loss = residual.squaredNorm() / static_cast<double>(B);
            const Matrix grad_out = residual * (2.0 / static_cast<double>(B));
            const nn::Vector grad = net.backward(cache, grad_out);
            nn::adam_step(net.parameters(), grad, adam);
        }
        if (trace) trace->final_loss[n] = loss;
        if (spec.batch_norm || spec.input_batch_norm)
            net.calibrate_statistics(features.leftCols(static_cast<Index>(std::min(K, kCalibrationSamples))));

        // s^k_n = n where g(n, x^k_n) >= c(x^k_n), else unchanged.
        const std::size_t chunks = (K + kPolicyChunk - 1) / kPolicyChunk;
        parallel_for(chunks, [&](std::size_t c) {
            const Index begin = static_cast<Index>(c * kPolicyChunk);
            const Index count = static_cast<Index>(std::min(K, (c + 1) * kPolicyChunk)) - begin;
            const Matrix cont = net.predict(features.middleCols(begin, count));
            for (Index j = 0; j < count; ++j) {
                const auto k = static_cast<std::size_t>(begin + j);
                const double g = payoff(n, batch.state(k, n).first(assets));
                if (g >= cont(0, j)) {
                    stop_value[k] = g;
                    label[k] = static_cast<std::uint32_t>(n);
                }
            }
        });
        if (trace) trace->labels[n] = label;
        nets[n - 1] = std::move(net);
    }

    double sum = 0.0;
    for (double v : stop_value) sum += v;
    const double theta0 = sum / static_cast<double>(K);
    return StoppingPolicy(N, assets, config.extended_state, theta0, std::move(nets), payoff);
}

void save_policy(std::ostream& out, const StoppingPolicy& policy) {
    if (!policy.has_networks()) throw std::invalid_argument("only network policies can be saved");
    out << "stopping_policy 1\ndates " << policy.dates() << "\nassets " << policy.assets()
        << "\nextended_state " << policy.extended_state() << "\ntheta0 " << hex(policy.theta0()) << '\n';
    for (std::size_t n = 1; n < policy.dates(); ++n) {
        out << "net " << n << '\n';
        nn::save_mlp(out, policy.nets()[n - 1]);
    }
    out << "end_policy\n";
}

StoppingPolicy load_policy(std::istream& in, PayoffFn payoff) {
    auto field = [&](const std::string& name) {
        std::string key, value;
        if (!(in >> key >> value) || key != name)
            throw std::runtime_error("policy snapshot: expected '" + name + "'");
        return value;
    };
    if (field("stopping_policy") != "1") throw std::runtime_error("policy snapshot: unsupported version");
    const std::size_t dates = std::stoul(field("dates"));
    const std::size_t assets = std::stoul(field("assets"));
    const bool extended = field("extended_state") == "1";
    const double theta0 = std::strtod(field("theta0").c_str(), nullptr);
    std::vector<nn::Mlp> nets;
    for (std::size_t n = 1; n < dates; ++n) {
        if (std::stoul(field("net")) != n) throw std::runtime_error("policy snapshot: nets out of order");
        nets.push_back(nn::load_mlp(in));
    }
    std::string tail;
    if (!(in >> tail) || tail != "end_policy") throw std::runtime_error("policy snapshot: missing end_policy");
    return StoppingPolicy(dates, assets, extended, theta0, std::move(nets), std::move(payoff));
}

}  // namespace bermudan
