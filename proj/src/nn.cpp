#include "bermudan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "bermudan/errors.hpp"

namespace bermudan::nn {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

// tanh through the vectorized exp; absolute error within a few ulp of 1.
Matrix activate(const Matrix& z) {
    return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

// Batch statistics over columns: returns mean and biased variance per row.
void row_moments(const Matrix& z, Vector& mean, Vector& var) {
    const double inv_b = 1.0 / static_cast<double>(z.cols());
    mean = z.rowwise().sum() * inv_b;
    var = (z.colwise() - mean).array().square().rowwise().sum().matrix() * inv_b;
}

// Backward through y = gamma * (z - mu) / sqrt(var + eps) + beta with batch statistics.
Matrix norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& inv_std,
                     Eigen::Map<const Vector> gamma, double* dgamma, double* dbeta) {
    const Index q = dy.rows();
    const double b = static_cast<double>(dy.cols());
    Eigen::Map<Vector>(dgamma, q) = dy.cwiseProduct(xhat).rowwise().sum();
    Eigen::Map<Vector>(dbeta, q) = dy.rowwise().sum();
    const Matrix dxhat = gamma.asDiagonal() * dy;
    const Vector sum_dxhat = dxhat.rowwise().sum();
    const Vector sum_dxhat_xhat = dxhat.cwiseProduct(xhat).rowwise().sum();
    Matrix dz = (dxhat * b).colwise() - sum_dxhat;
    dz -= (xhat.array().colwise() * sum_dxhat_xhat.array()).matrix();
    return (inv_std / b).asDiagonal() * dz;
}

std::string hex(double v) {
    std::ostringstream os;
    os << std::hexfloat << v;
    return os.str();
}

double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
        throw std::runtime_error("malformed number in network snapshot: " + token);
    return v;
}

}  // namespace

std::size_t MlpSpec::affine_parameter_count() const {
    std::size_t q = 0;
    for (std::size_t i = 1; i < widths.size(); ++i) q += widths[i] * (widths[i - 1] + 1);
    return q;
}

std::size_t MlpSpec::norm_parameter_count() const {
    std::size_t q = 0;
    if (input_batch_norm) q += 2 * widths.front();
    if (batch_norm)
        for (std::size_t i = 1; i + 1 < widths.size(); ++i) q += 2 * widths[i];
    return q;
}

void MlpSpec::validate() const {
    if (widths.size() < 2) throw std::invalid_argument("network needs depth I >= 1");
    for (auto w : widths)
        if (w == 0) throw std::invalid_argument("layer widths must be positive");
    if (!(bn_epsilon > 0.0)) throw std::invalid_argument("batch-norm epsilon must be positive");
    if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
        throw std::invalid_argument("batch-norm momentum must lie in [0, 1)");
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    layout();
}

void Mlp::layout() {
    const std::size_t I = spec_.depth();
    std::size_t offset = 0;
    affine_.assign(I + 1, {});
    for (std::size_t i = 1; i <= I; ++i) {
        affine_[i].weight = offset;
        offset += spec_.widths[i] * spec_.widths[i - 1];
        affine_[i].bias = offset;
        offset += spec_.widths[i];
    }
    norm_slot_.assign(I, -1);
    norm_offset_.clear();
    norm_width_.clear();
    auto add_slot = [&](std::size_t position) {
        norm_slot_[position] = static_cast<int>(norm_offset_.size());
        norm_offset_.push_back(offset);
        norm_width_.push_back(spec_.widths[position]);
        offset += 2 * spec_.widths[position];
    };
    if (spec_.input_batch_norm) add_slot(0);
    if (spec_.batch_norm)
        for (std::size_t i = 1; i < I; ++i) add_slot(i);
    params_ = Vector::Zero(idx(offset));
    running_mean_.clear();
    running_var_.clear();
    for (std::size_t s = 0; s < norm_offset_.size(); ++s) {
        params_.segment(idx(norm_offset_[s]), idx(norm_width_[s])).setOnes();
        running_mean_.push_back(Vector::Zero(idx(norm_width_[s])));
        running_var_.push_back(Vector::Ones(idx(norm_width_[s])));
    }
}

int Mlp::slot(std::size_t position) const {
    return position < norm_slot_.size() ? norm_slot_[position] : -1;
}

bool Mlp::normalizes(std::size_t position) const { return slot(position) >= 0; }

Eigen::Map<Matrix> Mlp::weight(std::size_t i) {
    return {params_.data() + affine_.at(i).weight, idx(spec_.widths[i]), idx(spec_.widths[i - 1])};
}
Eigen::Map<const Matrix> Mlp::weight(std::size_t i) const {
    return {params_.data() + affine_.at(i).weight, idx(spec_.widths[i]), idx(spec_.widths[i - 1])};
}
Eigen::Map<Vector> Mlp::bias(std::size_t i) {
    return {params_.data() + affine_.at(i).bias, idx(spec_.widths[i])};
}
Eigen::Map<const Vector> Mlp::bias(std::size_t i) const {
    return {params_.data() + affine_.at(i).bias, idx(spec_.widths[i])};
}

Eigen::Map<Vector> Mlp::gamma(std::size_t p) {
    const auto s = static_cast<std::size_t>(slot(p));
    return {params_.data() + norm_offset_.at(s), idx(norm_width_[s])};
}
Eigen::Map<const Vector> Mlp::gamma(std::size_t p) const {
    const auto s = static_cast<std::size_t>(slot(p));
    return {params_.data() + norm_offset_.at(s), idx(norm_width_[s])};
}
Eigen::Map<Vector> Mlp::beta(std::size_t p) {
    const auto s = static_cast<std::size_t>(slot(p));
    return {params_.data() + norm_offset_.at(s) + norm_width_[s], idx(norm_width_[s])};
}
Eigen::Map<const Vector> Mlp::beta(std::size_t p) const {
    const auto s = static_cast<std::size_t>(slot(p));
    return {params_.data() + norm_offset_.at(s) + norm_width_[s], idx(norm_width_[s])};
}
Vector& Mlp::running_mean(std::size_t p) { return running_mean_.at(static_cast<std::size_t>(slot(p))); }
const Vector& Mlp::running_mean(std::size_t p) const {
    return running_mean_.at(static_cast<std::size_t>(slot(p)));
}
Vector& Mlp::running_var(std::size_t p) { return running_var_.at(static_cast<std::size_t>(slot(p))); }
const Vector& Mlp::running_var(std::size_t p) const {
    return running_var_.at(static_cast<std::size_t>(slot(p)));
}

Matrix Mlp::forward(const Matrix& input, Mode mode, ForwardCache* cache) {
    if (mode == Mode::infer) return predict(input);
    const std::size_t I = depth();
    const Index B = input.cols();
    if (input.rows() != idx(spec_.inputs()))
        throw std::invalid_argument("network input has the wrong number of rows");
    if (B < 1) throw BatchTooSmall("empty batch");
    if (B < 2 && !norm_offset_.empty())
        throw BatchTooSmall("batch normalization in train mode needs at least 2 samples");

    if (cache) {
        cache->batch = static_cast<std::size_t>(B);
        cache->layer_inputs.assign(I + 1, Matrix());
        cache->activations.assign(I, Matrix());
        cache->normalized.assign(norm_offset_.size(), Matrix());
        cache->inv_std.assign(norm_offset_.size(), Vector());
    }
    const double m = spec_.bn_momentum;
    const double unbias = static_cast<double>(B) / static_cast<double>(std::max<Index>(B - 1, 1));

    // Normalizes z in place and returns x-hat stored in the cache slot.
    auto normalize = [&](std::size_t position, Matrix& z) {
        const auto s = static_cast<std::size_t>(slot(position));
        Vector mean, var;
        row_moments(z, mean, var);
        const Vector inv_std = (var.array() + spec_.bn_epsilon).rsqrt().matrix();
        Matrix xhat = inv_std.asDiagonal() * (z.colwise() - mean);
        z = (gamma(position).asDiagonal() * xhat).colwise() + Vector(beta(position));
        running_mean_[s] = m * running_mean_[s] + (1.0 - m) * mean;
        running_var_[s] = m * running_var_[s] + (1.0 - m) * unbias * var;
        if (cache) {
            cache->normalized[s] = std::move(xhat);
            cache->inv_std[s] = inv_std;
        }
    };

    Matrix a = input;
    if (normalizes(0)) normalize(0, a);
    for (std::size_t i = 1; i <= I; ++i) {
        Matrix z = weight(i) * a;
        z.colwise() += bias(i);
        if (cache) cache->layer_inputs[i] = std::move(a);
        if (i == I) return z;
        if (normalizes(i)) normalize(i, z);
        a = activate(z);
        if (cache) cache->activations[i] = a;
    }
    return a;
}

void Mlp::calibrate_statistics(const Matrix& input) {
    const std::size_t I = depth();
    if (input.rows() != idx(spec_.inputs()))
        throw std::invalid_argument("network input has the wrong number of rows");
    if (input.cols() < 2) throw BatchTooSmall("calibration needs at least 2 samples");
    auto normalize = [&](std::size_t position, Matrix& z) {
        const auto s = static_cast<std::size_t>(slot(position));
        Vector mean, var;
        row_moments(z, mean, var);
        running_mean_[s] = mean;
        running_var_[s] = var;
        const Vector scale =
            gamma(position).cwiseProduct((running_var_[s].array() + spec_.bn_epsilon).rsqrt().matrix());
        z = (scale.asDiagonal() * (z.colwise() - mean)).colwise() + Vector(beta(position));
    };
    Matrix a = input;
    if (normalizes(0)) normalize(0, a);
    for (std::size_t i = 1; i < I; ++i) {
        Matrix z = weight(i) * a;
        z.colwise() += bias(i);
        if (normalizes(i)) normalize(i, z);
        a = activate(z);
    }
}

Matrix Mlp::predict(const Matrix& input) const {
    const std::size_t I = depth();
    if (input.rows() != idx(spec_.inputs()))
        throw std::invalid_argument("network input has the wrong number of rows");
    auto normalize = [&](std::size_t position, Matrix& z) {
        const auto s = static_cast<std::size_t>(slot(position));
        const Vector scale =
            gamma(position).cwiseProduct((running_var_[s].array() + spec_.bn_epsilon).rsqrt().matrix());
        const Vector shift = Vector(beta(position)) - scale.cwiseProduct(running_mean_[s]);
        z = (scale.asDiagonal() * z).colwise() + shift;
    };
    Matrix a = input;
    if (normalizes(0)) normalize(0, a);
    for (std::size_t i = 1; i <= I; ++i) {
        Matrix z = weight(i) * a;
        z.colwise() += bias(i);
        if (i == I) return z;
        if (normalizes(i)) normalize(i, z);
        a = activate(z);
    }
    return a;
}

Vector Mlp::backward(const ForwardCache& cache, const Matrix& output_grad) const {
    const std::size_t I = depth();
    Vector grad = Vector::Zero(params_.size());
    Matrix g = output_grad;
    for (std::size_t i = I; i >= 1; --i) {
        Matrix dz;
        if (i == I) {
            dz = std::move(g);
        } else {
            const Matrix& act = cache.activations[i];
            Matrix dy = g.cwiseProduct((1.0 - act.array().square()).matrix());
            if (normalizes(i)) {
                const auto s = static_cast<std::size_t>(slot(i));
                dz = norm_backward(dy, cache.normalized[s], cache.inv_std[s], gamma(i),
                                   grad.data() + norm_offset_[s],
                                   grad.data() + norm_offset_[s] + norm_width_[s]);
            } else {
                dz = std::move(dy);
            }
        }
        const Matrix& a_prev = cache.layer_inputs[i];
        Eigen::Map<Matrix>(grad.data() + affine_[i].weight, idx(spec_.widths[i]),
                           idx(spec_.widths[i - 1])) = dz * a_prev.transpose();
        Eigen::Map<Vector>(grad.data() + affine_[i].bias, idx(spec_.widths[i])) = dz.rowwise().sum();
        if (i > 1 || normalizes(0)) g = weight(i).transpose() * dz;
    }
    if (normalizes(0)) {
        const auto s = static_cast<std::size_t>(slot(0));
        norm_backward(g, cache.normalized[s], cache.inv_std[s], gamma(0),
                      grad.data() + norm_offset_[s], grad.data() + norm_offset_[s] + norm_width_[s]);
    }
    return grad;
}

Mlp init_xavier(const MlpSpec& spec, const RngStreamKey& key) {
    Mlp net(spec);
    const RandomStream stream(key);
    std::uint64_t counter = 0;
    for (std::size_t i = 1; i <= spec.depth(); ++i) {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.widths[i - 1] + spec.widths[i]));
        auto w = net.weight(i);
        for (Index c = 0; c < w.cols(); ++c)
            for (Index r = 0; r < w.rows(); ++r) w(r, c) = limit * (2.0 * stream.uniform(counter++) - 1.0);
    }
    return net;
}

Vector numerical_gradient(const Mlp& net, const Matrix& input, const Matrix& output_weights, double h) {
    Mlp probe = net;
    auto loss = [&]() { return probe.forward(input, Mode::train).cwiseProduct(output_weights).sum(); };
    Vector grad(probe.parameters().size());
    for (Index i = 0; i < grad.size(); ++i) {
        const double saved = probe.parameters()[i];
        probe.parameters()[i] = saved + h;
        const double up = loss();
        probe.parameters()[i] = saved - h;
        const double down = loss();
        probe.parameters()[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(const Vector& a, const Vector& b, double floor) {
    if (a.size() != b.size()) throw std::invalid_argument("vectors differ in size");
    double worst = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

StepSchedule StepSchedule::equal_parts(std::size_t total_steps, const std::vector<double>& rates) {
    if (rates.empty()) throw std::invalid_argument("step-size schedule needs at least one rate");
    StepSchedule s;
    const std::size_t parts = rates.size();
    for (std::size_t k = 0; k < parts; ++k) {
        const std::size_t end = (k + 1 == parts) ? total_steps : (total_steps * (k + 1)) / parts;
        s.segments.emplace_back(end, rates[k]);
    }
    return s;
}

StepSchedule StepSchedule::constant(double rate) {
    StepSchedule s;
    s.segments.emplace_back(static_cast<std::size_t>(-1), rate);
    return s;
}

double StepSchedule::rate(std::size_t step) const {
    for (const auto& [end, alpha] : segments)
        if (step < end) return alpha;
    return segments.back().second;
}

AdamState::AdamState(std::size_t size, StepSchedule step_sizes)
    : first_moment(Vector::Zero(idx(size))), second_moment(Vector::Zero(idx(size))),
      schedule(std::move(step_sizes)) {}

void adam_step(Vector& params, const Vector& grad, AdamState& state) {
    if (grad.size() != params.size() || state.first_moment.size() != params.size())
        throw std::invalid_argument("Adam: parameter, gradient and state sizes differ");
    const double alpha = state.schedule.rate(state.step);
    ++state.step;
    const double t = static_cast<double>(state.step);
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
    state.second_moment =
        state.beta2 * state.second_moment + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    params.array() -= alpha * (state.first_moment.array() / c1) /
                      ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void save_mlp(std::ostream& out, const Mlp& net) {
    const MlpSpec& spec = net.spec();
    out << "mlp 1\nwidths";
    for (auto w : spec.widths) out << ' ' << w;
    out << "\nbatch_norm " << spec.batch_norm << "\ninput_batch_norm " << spec.input_batch_norm
        << "\nbn_epsilon " << hex(spec.bn_epsilon) << "\nbn_momentum " << hex(spec.bn_momentum)
        << '\n';
    auto tensor = [&](std::size_t position, const char* name, const auto& m) {
        out << "tensor " << position << ' ' << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Index r = 0; r < m.rows(); ++r) {
            for (Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << hex(m(r, c));
            out << '\n';
        }
    };
    for (std::size_t i = 1; i <= net.depth(); ++i) {
        tensor(i, "weight", net.weight(i));
        tensor(i, "bias", net.bias(i));
    }
    for (std::size_t p = 0; p < net.depth(); ++p) {
        if (!net.normalizes(p)) continue;
        tensor(p, "gamma", net.gamma(p));
        tensor(p, "beta", net.beta(p));
        tensor(p, "running_mean", net.running_mean(p));
        tensor(p, "running_var", net.running_var(p));
    }
    out << "end\n";
}

Mlp load_mlp(std::istream& in) {
    auto expect = [&](const std::string& word) {
        std::string token;
        if (!(in >> token) || token != word)
            throw std::runtime_error("network snapshot: expected '" + word + "', got '" + token + "'");
    };
    auto read_token = [&] {
        std::string token;
        if (!(in >> token)) throw std::runtime_error("network snapshot: unexpected end of input");
        return token;
    };
    expect("mlp");
    if (read_token() != "1") throw std::runtime_error("network snapshot: unsupported version");
    expect("widths");
    MlpSpec spec;
    std::string line;
    std::getline(in, line);
    std::istringstream widths(line);
    for (std::size_t w; widths >> w;) spec.widths.push_back(w);
    expect("batch_norm");
    spec.batch_norm = read_token() == "1";
    expect("input_batch_norm");
    spec.input_batch_norm = read_token() == "1";
    expect("bn_epsilon");
    spec.bn_epsilon = parse_double(read_token());
    expect("bn_momentum");
    spec.bn_momentum = parse_double(read_token());
    Mlp net(spec);
    for (std::string token = read_token(); token != "end"; token = read_token()) {
        if (token != "tensor") throw std::runtime_error("network snapshot: expected 'tensor'");
        const std::size_t position = std::stoul(read_token());
        const std::string name = read_token();
        const Index rows = std::stol(read_token());
        const Index cols = std::stol(read_token());
        Matrix values(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c) values(r, c) = parse_double(read_token());
        auto assign = [&](auto&& target) {
            if (target.rows() != rows || target.cols() != cols)
                throw std::runtime_error("network snapshot: shape mismatch for " + name);
            target = values;
        };
        if (name == "weight") assign(net.weight(position));
        else if (name == "bias") assign(net.bias(position));
        else if (name == "gamma") assign(net.gamma(position));
        else if (name == "beta") assign(net.beta(position));
        else if (name == "running_mean") assign(net.running_mean(position));
        else if (name == "running_var") assign(net.running_var(position));
        else throw std::runtime_error("network snapshot: unknown tensor " + name);
    }
    return net;
}

}  // namespace bermudan::nn
