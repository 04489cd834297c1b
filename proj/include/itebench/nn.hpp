#pragma once

// Dense feed-forward networks with exact backprop, SGD + weight decay,
// step-decay learning rate and inverted dropout. Batches are column-major:
// an input matrix is [in_dim x batch], one sample per column.

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include <json.hpp>

namespace itebench::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Activation { Tanh, Elu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct Layer {
    Matrix weight;  // [out x in]
    Vector bias;    // [out]
};

struct MlpParams {
    std::vector<Layer> layers;
    Activation hidden_activation = Activation::Tanh;
    // Representation networks (phi, psi) activate their last layer; regression
    // heads keep it linear. Dropout never follows the last layer either way.
    bool activate_output = false;
    double dropout_rate = 0.0;

    Index input_dim() const;
    Index output_dim() const;
    std::size_t parameter_count() const;

    // Throws ShapeError / NumericError when an invariant is broken.
    void validate() const;
};

// Same shape as the differentiated MlpParams, plus d(loss)/d(input).
struct Gradients {
    std::vector<Layer> layers;
    Matrix input_gradient;  // [in_dim x batch]
};

struct ForwardMode {
    bool train = false;
    std::uint64_t seed = 0;

    static ForwardMode eval() { return {}; }
    static ForwardMode training(std::uint64_t seed) { return {true, seed}; }
};

struct ForwardCache {
    std::vector<Matrix> inputs;       // input seen by layer l (after dropout of l-1)
    std::vector<Matrix> pre;          // W x + b of layer l
    std::vector<Matrix> masks;        // scaled keep-mask applied to layer l output, or empty
};

struct ForwardResult {
    Matrix output;  // [out_dim x batch]
    ForwardCache cache;
};

ForwardResult mlp_forward(const MlpParams& params, const Matrix& input, ForwardMode mode);

// Single-sample convenience wrapper.
Vector mlp_forward(const MlpParams& params, const Vector& input, ForwardMode mode);

// upstream: d(loss)/d(output), [out_dim x batch]. Parameter gradients are
// summed over the batch columns.
Gradients mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream);

Gradients zero_gradients(const MlpParams& params);

// w <- w - lr * (g + weight_decay * w); biases are not decayed.
MlpParams sgd_step(const MlpParams& params, const Gradients& grads, double lr, double weight_decay);

struct OptimState {
    double base_lr = 0.1;
    double lr_decay = 0.1;
    int scheduler_step = 10;
    double weight_decay = 1e-4;
    int epoch = 0;

    void validate() const;
};

double lr_at(const OptimState& state, int epoch);

enum class Init { Glorot, Zeros };

struct MlpShape {
    Index input_dim = 1;
    std::vector<Index> widths;  // output width of every layer, last entry is the output dim
    Activation activation = Activation::Tanh;
    bool activate_output = false;
    double dropout_rate = 0.0;
};

MlpParams make_mlp(const MlpShape& shape, Init init, std::mt19937_64& rng);

nlohmann::json to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& doc);

}  // namespace itebench::nn
