#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bermudan/rng.hpp"

namespace bermudan::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Feedforward tanh network a_I o tanh o a_{I-1} o ... o tanh o a_1.
/// Batch normalization, when enabled, sits between each hidden affine map and its tanh.
struct MlpSpec {
    std::vector<std::size_t> widths;  // q_0, ..., q_I
    bool batch_norm = true;
    bool input_batch_norm = false;    // also normalize the raw inputs (affine, no activation)
    double bn_epsilon = 1e-6;
    double bn_momentum = 0.99;

    std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
    std::size_t inputs() const { return widths.front(); }
    std::size_t outputs() const { return widths.back(); }
    /// sum_i q_i (q_{i-1} + 1)
    std::size_t affine_parameter_count() const;
    /// 2 * (normalized widths): one scale and one shift per normalized node
    std::size_t norm_parameter_count() const;
    void validate() const;

    bool operator==(const MlpSpec&) const = default;
};

enum class Mode { train, infer };

/// Activations kept by a train-mode forward pass for the backward pass.
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<Matrix> layer_inputs;  // input of affine map i, i = 1..I
    std::vector<Matrix> activations;   // tanh output of hidden layer i
    std::vector<Matrix> normalized;    // x-hat per normalization slot
    std::vector<Vector> inv_std;       // 1/sqrt(var + eps) per normalization slot
};

class Mlp {
public:
    Mlp() = default;
    /// All-zero parameters, unit batch-norm scales, running statistics (0, 1).
    explicit Mlp(MlpSpec spec);

    const MlpSpec& spec() const { return spec_; }
    std::size_t depth() const { return spec_.depth(); }

    /// Trainable parameters (affine weights and biases, then batch-norm scales and shifts).
    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::Map<Matrix> weight(std::size_t layer);
    Eigen::Map<const Matrix> weight(std::size_t layer) const;
    Eigen::Map<Vector> bias(std::size_t layer);
    Eigen::Map<const Vector> bias(std::size_t layer) const;

    /// Normalization at position p: 0 is the input, 1..I-1 the hidden layers.
    bool normalizes(std::size_t position) const;
    Eigen::Map<Vector> gamma(std::size_t position);
    Eigen::Map<const Vector> gamma(std::size_t position) const;
    Eigen::Map<Vector> beta(std::size_t position);
    Eigen::Map<const Vector> beta(std::size_t position) const;
    Vector& running_mean(std::size_t position);
    const Vector& running_mean(std::size_t position) const;
    Vector& running_var(std::size_t position);
    const Vector& running_var(std::size_t position) const;

    /// Columns of `input` are samples (q_0 x B). Train mode uses batch statistics,
    /// fills `cache` when given and updates the running statistics.
    Matrix forward(const Matrix& input, Mode mode, ForwardCache* cache = nullptr);
    /// Infer-mode forward; deterministic and independent of how inputs are batched.
    Matrix predict(const Matrix& input) const;
    /// Sets the running statistics to the moments of `input` under the current parameters.
    void calibrate_statistics(const Matrix& input);

    /// Gradient of a scalar loss with respect to parameters(), given dLoss/dOutput for
    /// the batch that produced `cache`. Flows through the batch statistics.
    Vector backward(const ForwardCache& cache, const Matrix& output_grad) const;

private:
    struct Offsets {
        std::size_t weight = 0, bias = 0;
    };
    int slot(std::size_t position) const;
    void layout();

    MlpSpec spec_;
    Vector params_;
    std::vector<Offsets> affine_;           // per layer 1..I (index 0 unused)
    std::vector<int> norm_slot_;            // position -> slot or -1
    std::vector<std::size_t> norm_offset_;  // per slot: gamma offset, beta follows
    std::vector<std::size_t> norm_width_;
    std::vector<Vector> running_mean_, running_var_;
};

/// A_i entries uniform on [-sqrt(6/(q_{i-1}+q_i)), +sqrt(6/(q_{i-1}+q_i))]; biases 0; gamma 1, beta 0.
Mlp init_xavier(const MlpSpec& spec, const RngStreamKey& key);

/// Piecewise-constant Adam step sizes; segment k covers steps [end_{k-1}, end_k).
struct StepSchedule {
    std::vector<std::pair<std::size_t, double>> segments;  // (end step exclusive, alpha)

    /// Spreads the rates over equal shares of `total_steps`.
    static StepSchedule equal_parts(std::size_t total_steps, const std::vector<double>& rates);
    static StepSchedule constant(double rate);
    double rate(std::size_t step) const;
};

inline const std::vector<double> kDefaultStepSizes = {1e-1, 1e-2, 1e-3, 1e-4};

struct AdamState {
    Vector first_moment;
    Vector second_moment;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    StepSchedule schedule = StepSchedule::constant(1e-3);

    AdamState() = default;
    AdamState(std::size_t size, StepSchedule step_sizes);
};

/// One bias-corrected Adam update with the step size scheduled for the current step.
void adam_step(Vector& params, const Vector& grad, AdamState& state);

/// Central differences of sum(output_weights .* forward(input, train)) in every parameter.
Vector numerical_gradient(const Mlp& net, const Matrix& input, const Matrix& output_weights, double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const Vector& a, const Vector& b, double floor);

/// Text snapshot: header, then one `tensor <position> <name> <rows> <cols>` block per
/// tensor with row-major hexadecimal floats. Reloads bit-exactly.
void save_mlp(std::ostream& out, const Mlp& net);
Mlp load_mlp(std::istream& in);

}  // namespace bermudan::nn
