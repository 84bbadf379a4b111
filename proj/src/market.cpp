#include "bermudan/market.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "bermudan/errors.hpp"

namespace bermudan {

namespace {

// Counter offset separating bridge draws from exercise-date increments.
constexpr std::uint64_t kBridgeCounterOffset = std::uint64_t{1} << 40;

void correlate(const Eigen::MatrixXd& chol, std::span<const double> z, std::span<double> out) {
    const auto d = static_cast<Eigen::Index>(z.size());
    for (Eigen::Index i = 0; i < d; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) acc += chol(i, j) * z[j];
        out[i] = acc;
    }
}

}  // namespace

ModelParams ModelParams::symmetric(std::size_t d, double s0, double rate, double delta,
                                   double sigma, double correlation, double strike,
                                   double maturity, std::size_t exercise_intervals,
                                   std::size_t rebalances) {
    ModelParams p;
    p.s0.assign(d, s0);
    p.rate = rate;
    p.delta.assign(d, delta);
    p.sigma.assign(d, sigma);
    p.rho = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d),
                                      correlation);
    p.rho.diagonal().setOnes();
    p.strike = strike;
    p.maturity = maturity;
    p.exercise_intervals = exercise_intervals;
    p.rebalances = rebalances;
    return p;
}

void ModelParams::validate() const {
    const std::size_t d = assets();
    if (d == 0) throw std::invalid_argument("model needs at least one asset");
    if (delta.size() != d || sigma.size() != d)
        throw std::invalid_argument("s0, delta and sigma must have the same length");
    if (static_cast<std::size_t>(rho.rows()) != d || static_cast<std::size_t>(rho.cols()) != d)
        throw std::invalid_argument("rho must be d x d");
    for (std::size_t i = 0; i < d; ++i) {
        if (!(s0[i] > 0.0)) throw std::invalid_argument("s0 must be positive");
        if (!(delta[i] >= 0.0)) throw std::invalid_argument("dividend yields must be non-negative");
        if (allow_zero_volatility ? !(sigma[i] >= 0.0) : !(sigma[i] > 0.0))
            throw std::invalid_argument("volatilities must be positive");
    }
    if (!(strike >= 0.0)) throw std::invalid_argument("strike must be non-negative");
    if (!(maturity > 0.0)) throw std::invalid_argument("maturity must be positive");
    if (exercise_intervals < 1) throw std::invalid_argument("need at least one exercise interval");
    if (rebalances < 1) throw std::invalid_argument("need at least one rebalancing step per interval");
    if (!exercise_times.empty()) {
        if (exercise_times.size() != exercise_intervals + 1)
            throw std::invalid_argument("exercise_times must hold N + 1 dates");
        if (exercise_times.front() != 0.0 || exercise_times.back() != maturity)
            throw std::invalid_argument("exercise_times must run from 0 to the maturity");
        for (std::size_t n = 1; n < exercise_times.size(); ++n)
            if (!(exercise_times[n] > exercise_times[n - 1]))
                throw std::invalid_argument("exercise_times must be strictly increasing");
    }
    cholesky_factor(rho);
}

double ModelParams::exercise_time(std::size_t n) const {
    if (!exercise_times.empty()) return exercise_times.at(n);
    if (n == exercise_intervals) return maturity;
    return static_cast<double>(n) * maturity / static_cast<double>(exercise_intervals);
}

double ModelParams::hedge_time(std::size_t m) const {
    const std::size_t n = m / rebalances;
    const std::size_t j = m % rebalances;
    const double start = exercise_time(n);
    if (j == 0) return start;
    const double end = exercise_time(n + 1);
    return start + (end - start) * static_cast<double>(j) / static_cast<double>(rebalances);
}

PathBatch::PathBatch(std::size_t paths, std::size_t steps, std::size_t dimension, GridKind grid)
    : n_paths(paths), n_steps(steps), dim(dimension), kind(grid), times(steps + 1, 0.0),
      values(paths * (steps + 1) * dimension, 0.0) {}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& rho) {
    const Eigen::Index d = rho.rows();
    if (rho.cols() != d) throw NotPositiveSemiDefinite("correlation matrix is not square");
    constexpr double tol = 1e-12;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::abs(rho(i, i) - 1.0) > tol)
            throw NotPositiveSemiDefinite("correlation matrix must have unit diagonal");
        for (Eigen::Index j = 0; j < i; ++j)
            if (std::abs(rho(i, j) - rho(j, i)) > tol)
                throw NotPositiveSemiDefinite("correlation matrix must be symmetric");
    }
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        double pivot = rho(j, j);
        for (Eigen::Index k = 0; k < j; ++k) pivot -= L(j, k) * L(j, k);
        if (pivot < -1e-10)
            throw NotPositiveSemiDefinite("correlation matrix is not positive semi-definite (pivot " +
                                          std::to_string(pivot) + " at column " +
                                          std::to_string(j) + ")");
        if (pivot <= 1e-14) {
            // Column is linearly dependent on earlier ones; the remaining entries must vanish too.
            for (Eigen::Index i = j + 1; i < d; ++i) {
                double r = rho(i, j);
                for (Eigen::Index k = 0; k < j; ++k) r -= L(i, k) * L(j, k);
                if (std::abs(r) > 1e-8)
                    throw NotPositiveSemiDefinite("correlation matrix is not positive semi-definite");
            }
            continue;
        }
        const double diag = std::sqrt(pivot);
        L(j, j) = diag;
        for (Eigen::Index i = j + 1; i < d; ++i) {
            double r = rho(i, j);
            for (Eigen::Index k = 0; k < j; ++k) r -= L(i, k) * L(j, k);
            L(i, j) = r / diag;
        }
    }
    return L;
}

double max_call_payoff(const ModelParams& params, std::size_t date, std::span<const double> prices) {
    double best = prices[0];
    for (std::size_t i = 1; i < params.assets(); ++i) best = std::max(best, prices[i]);
    const double intrinsic = best - params.strike;
    if (!(intrinsic > 0.0)) return 0.0;
    return std::exp(-params.rate * params.exercise_time(date)) * intrinsic;
}

GbmModel::GbmModel(ModelParams params) : params_(std::move(params)) {
    params_.validate();
    chol_ = cholesky_factor(params_.rho);
}

PayoffFn GbmModel::payoff() const {
    return [p = params_](std::size_t date, std::span<const double> x) {
        return max_call_payoff(p, date, x);
    };
}

double GbmModel::log_drift(std::size_t i) const {
    return params_.rate - params_.delta[i] - 0.5 * params_.sigma[i] * params_.sigma[i];
}

// Single evaluation site for S^i_t so both grids produce bitwise-equal prices.
double GbmModel::price(std::size_t i, double t, double w) const {
    if (t == 0.0) return params_.s0[i];
    return params_.s0[i] * std::exp(log_drift(i) * t + params_.sigma[i] * w);
}

void GbmModel::exercise_brownian(const RandomStream& stream, std::span<double> w) const {
    const std::size_t d = assets();
    const std::size_t N = params_.exercise_intervals;
    std::vector<double> z(d), dw(d);
    std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(d), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        stream.normals(n * d, z);
        correlate(chol_, z, dw);
        const double scale = std::sqrt(params_.exercise_time(n + 1) - params_.exercise_time(n));
        for (std::size_t i = 0; i < d; ++i) w[(n + 1) * d + i] = w[n * d + i] + scale * dw[i];
    }
}

// Writes the M + 1 rebalancing states of `interval` starting at out step `first_step`.
// Endpoints use the exercise-date Brownian values so they match the exercise grid bitwise.
void GbmModel::fill_interval(const RandomStream& stream, std::span<const double> w,
                             std::size_t interval, PathBatch& out, std::size_t path,
                             std::size_t first_step) const {
    const std::size_t d = assets();
    const std::size_t M = params_.rebalances;
    const std::size_t n0 = interval - 1;
    const double t_start = params_.exercise_time(n0);
    const double t_end = params_.exercise_time(interval);
    std::vector<double> w_prev(w.begin() + static_cast<std::ptrdiff_t>(n0 * d),
                               w.begin() + static_cast<std::ptrdiff_t>((n0 + 1) * d));
    std::vector<double> z(d), dz(d);
    auto write = [&](std::size_t step, double t, std::span<const double> wt) {
        auto s = out.state(path, step);
        for (std::size_t i = 0; i < d; ++i) {
            s[i] = price(i, t, wt[i]);
        }
    };
    write(first_step, t_start, w_prev);
    double u_prev = t_start;
    const std::span<const double> w_end = w.subspan(interval * d, d);
    for (std::size_t j = 1; j < M; ++j) {
        const std::size_t m = n0 * M + j;
        const double u = params_.hedge_time(m);
        stream.normals(kBridgeCounterOffset + m * d, z);
        correlate(chol_, z, dz);
        const double frac = (u - u_prev) / (t_end - u_prev);
        const double sd = std::sqrt((u - u_prev) * (t_end - u) / (t_end - u_prev));
        for (std::size_t i = 0; i < d; ++i)
            w_prev[i] = w_prev[i] + frac * (w_end[i] - w_prev[i]) + sd * dz[i];
        write(first_step + j, u, w_prev);
        u_prev = u;
    }
    write(first_step + M, t_end, w_end);
}

PathBatch GbmModel::simulate(GridKind grid, std::size_t n_paths, const RngStreamKey& key) const {
    if (n_paths < 1) throw std::invalid_argument("n_paths must be at least 1");
    const std::size_t d = assets();
    const std::size_t N = params_.exercise_intervals;
    const std::size_t M = params_.rebalances;
    const std::size_t steps = grid == GridKind::exercise ? N : N * M;
    PathBatch out(n_paths, steps, d, grid);
    for (std::size_t s = 0; s <= steps; ++s)
        out.times[s] = grid == GridKind::exercise ? params_.exercise_time(s) : params_.hedge_time(s);
    std::vector<double> w((N + 1) * d);
    for (std::size_t k = 0; k < n_paths; ++k) {
        const RandomStream stream(key.offset(k));
        exercise_brownian(stream, w);
        if (grid == GridKind::exercise) {
            for (std::size_t n = 0; n <= N; ++n) {
                auto s = out.state(k, n);
                const double t = params_.exercise_time(n);
                for (std::size_t i = 0; i < d; ++i) s[i] = price(i, t, w[n * d + i]);
            }
        } else {
            for (std::size_t n = 1; n <= N; ++n) fill_interval(stream, w, n, out, k, (n - 1) * M);
        }
    }
    return out;
}

PathBatch GbmModel::simulate_hedge_interval(std::size_t interval, std::size_t n_paths,
                                            const RngStreamKey& key) const {
    if (interval < 1 || interval > params_.exercise_intervals)
        throw DateOutOfRange("hedge interval must lie in 1..N");
    if (n_paths < 1) throw std::invalid_argument("n_paths must be at least 1");
    const std::size_t d = assets();
    const std::size_t M = params_.rebalances;
    PathBatch out(n_paths, M, d, GridKind::hedge);
    out.start_index = (interval - 1) * M;
    for (std::size_t j = 0; j <= M; ++j) out.times[j] = params_.hedge_time(out.start_index + j);
    std::vector<double> w((params_.exercise_intervals + 1) * d);
    for (std::size_t k = 0; k < n_paths; ++k) {
        const RandomStream stream(key.offset(k));
        exercise_brownian(stream, w);
        fill_interval(stream, w, interval, out, k, 0);
    }
    return out;
}

PathBatch GbmModel::exercise_paths(std::size_t n_paths, const RngStreamKey& key) const {
    return simulate(GridKind::exercise, n_paths, key);
}

PathBatch GbmModel::branch(std::size_t date, std::span<const double> state, std::size_t n_paths,
                           const RngStreamKey& key) const {
    const std::size_t N = params_.exercise_intervals;
    if (date > N) throw DateOutOfRange("branch date beyond maturity");
    const std::size_t d = assets();
    const std::size_t steps = N - date;
    PathBatch out(n_paths, steps, d, GridKind::exercise);
    out.start_index = date;
    for (std::size_t s = 0; s <= steps; ++s) out.times[s] = params_.exercise_time(date + s);
    std::vector<double> z(d), dw(d), w(d);
    for (std::size_t k = 0; k < n_paths; ++k) {
        const RandomStream stream(key.offset(k));
        std::fill(w.begin(), w.end(), 0.0);
        std::copy(state.begin(), state.begin() + static_cast<std::ptrdiff_t>(d),
                  out.state(k, 0).begin());
        const double t0 = out.times[0];
        for (std::size_t s = 1; s <= steps; ++s) {
            stream.normals((s - 1) * d, z);
            correlate(chol_, z, dw);
            const double scale = std::sqrt(out.times[s] - out.times[s - 1]);
            auto x = out.state(k, s);
            for (std::size_t i = 0; i < d; ++i) {
                w[i] += scale * dw[i];
                x[i] = state[i] * std::exp(log_drift(i) * (out.times[s] - t0) + params_.sigma[i] * w[i]);
            }
        }
    }
    return out;
}

PathBatch simulate_paths(const ModelParams& params, GridKind grid, std::size_t n_paths,
                         const RngStreamKey& key) {
    return GbmModel(params).simulate(grid, n_paths, key);
}

PathBatch extend_state(const PathBatch& batch, const PayoffFn& payoff) {
    PathBatch out(batch.n_paths, batch.n_steps, batch.dim + 1, batch.kind);
    out.start_index = batch.start_index;
    out.times = batch.times;
    for (std::size_t k = 0; k < batch.n_paths; ++k) {
        for (std::size_t s = 0; s <= batch.n_steps; ++s) {
            const auto src = batch.state(k, s);
            auto dst = out.state(k, s);
            std::copy(src.begin(), src.end(), dst.begin());
            dst[batch.dim] = payoff(batch.start_index + s, src);
        }
    }
    return out;
}

PathBatch hedge_instrument_prices(const PathBatch& batch, const ModelParams& params) {
    PathBatch out = batch;
    const std::size_t d = params.assets();
    std::vector<double> factor(d);
    for (std::size_t s = 0; s <= batch.n_steps; ++s) {
        const double u = batch.times[s];
        for (std::size_t i = 0; i < d; ++i) factor[i] = std::exp(-(params.rate - params.delta[i]) * u);
        for (std::size_t k = 0; k < batch.n_paths; ++k) {
            auto p = out.state(k, s);
            for (std::size_t i = 0; i < d; ++i) p[i] *= factor[i];
        }
    }
    return out;
}

PathBatch exercise_restriction(const PathBatch& hedge_batch, std::size_t rebalances) {
    if (hedge_batch.start_index % rebalances != 0 || hedge_batch.n_steps % rebalances != 0)
        throw std::invalid_argument("hedge batch does not align with exercise dates");
    const std::size_t steps = hedge_batch.n_steps / rebalances;
    PathBatch out(hedge_batch.n_paths, steps, hedge_batch.dim, GridKind::exercise);
    out.start_index = hedge_batch.start_index / rebalances;
    for (std::size_t n = 0; n <= steps; ++n) out.times[n] = hedge_batch.times[n * rebalances];
    for (std::size_t k = 0; k < hedge_batch.n_paths; ++k)
        for (std::size_t n = 0; n <= steps; ++n) {
            const auto src = hedge_batch.state(k, n * rebalances);
            std::copy(src.begin(), src.end(), out.state(k, n).begin());
        }
    return out;
}

}  // namespace bermudan
