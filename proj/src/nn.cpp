#include "itebench/nn.hpp"

#include <cmath>
#include <string>

#include "itebench/errors.hpp"

namespace itebench::nn {

namespace {

constexpr double kEluAlpha = 1.0;

Matrix activate(Activation a, const Matrix& z) {
    switch (a) {
    case Activation::Tanh:
        return z.array().tanh().matrix();
    case Activation::Elu:
        return z.unaryExpr([](double v) { return v > 0.0 ? v : kEluAlpha * std::expm1(v); });
    }
    return z;
}

Matrix activation_derivative(Activation a, const Matrix& z) {
    switch (a) {
    case Activation::Tanh:
        return z.unaryExpr([](double v) {
            const double t = std::tanh(v);
            return 1.0 - t * t;
        });
    case Activation::Elu:
        return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kEluAlpha * std::exp(v); });
    }
    return Matrix::Ones(z.rows(), z.cols());
}

bool is_activated(const MlpParams& p, std::size_t layer) {
    return layer + 1 < p.layers.size() || p.activate_output;
}

bool has_dropout(const MlpParams& p, std::size_t layer) {
    return layer + 1 < p.layers.size() && p.dropout_rate > 0.0;
}

}  // namespace

const char* to_string(Activation a) {
    return a == Activation::Tanh ? "tanh" : "elu";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh" || name == "Tanh") return Activation::Tanh;
    if (name == "elu" || name == "ELU" || name == "Elu") return Activation::Elu;
    throw ConfigError("unknown activation '" + name + "' (expected tanh or elu)");
}

Index MlpParams::input_dim() const {
    return layers.empty() ? 0 : layers.front().weight.cols();
}

Index MlpParams::output_dim() const {
    return layers.empty() ? 0 : layers.back().weight.rows();
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

void MlpParams::validate() const {
    if (layers.empty()) throw ShapeError("mlp has no layers");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ShapeError("dropout_rate must lie in [0, 1)");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.bias.size() != layer.weight.rows())
            throw ShapeError("layer " + std::to_string(l) + ": bias length != weight rows");
        if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
            throw ShapeError("layer " + std::to_string(l) + ": input dim does not chain");
        if (!layer.weight.allFinite() || !layer.bias.allFinite())
            throw NumericError("layer " + std::to_string(l) + ": non-finite parameter");
    }
}

ForwardResult mlp_forward(const MlpParams& params, const Matrix& input, ForwardMode mode) {
    if (params.layers.empty()) throw ShapeError("mlp has no layers");
    if (input.rows() != params.input_dim())
        throw ShapeError("mlp_forward: input has " + std::to_string(input.rows()) +
                         " rows, network expects " + std::to_string(params.input_dim()));
    if (!input.allFinite()) throw NumericError("mlp_forward: non-finite input");

    const std::size_t n_layers = params.layers.size();
    ForwardResult out;
    out.cache.inputs.reserve(n_layers);
    out.cache.pre.reserve(n_layers);
    out.cache.masks.resize(n_layers);

    std::mt19937_64 rng(mode.seed);
    std::bernoulli_distribution keep(1.0 - params.dropout_rate);
    const double scale = 1.0 / (1.0 - params.dropout_rate);

    Matrix h = input;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = params.layers[l];
        Matrix z = layer.weight * h;
        z.colwise() += layer.bias;
        out.cache.inputs.push_back(std::move(h));
        h = is_activated(params, l) ? activate(params.hidden_activation, z) : z;
        out.cache.pre.push_back(std::move(z));
        if (mode.train && has_dropout(params, l)) {
            Matrix mask(h.rows(), h.cols());
            for (Index c = 0; c < mask.cols(); ++c)
                for (Index r = 0; r < mask.rows(); ++r) mask(r, c) = keep(rng) ? scale : 0.0;
            h = h.cwiseProduct(mask);
            out.cache.masks[l] = std::move(mask);
        }
    }
    out.output = std::move(h);
    return out;
}

Vector mlp_forward(const MlpParams& params, const Vector& input, ForwardMode mode) {
    Matrix in = input;
    return mlp_forward(params, in, mode).output.col(0);
}

Gradients mlp_backward(const MlpParams& params, const ForwardCache& cache, const Matrix& upstream) {
    const std::size_t n_layers = params.layers.size();
    if (cache.pre.size() != n_layers || cache.inputs.size() != n_layers || cache.masks.size() != n_layers)
        throw ShapeError("mlp_backward: cache depth does not match params");
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (cache.pre[l].rows() != params.layers[l].weight.rows() ||
            cache.inputs[l].rows() != params.layers[l].weight.cols())
            throw ShapeError("mlp_backward: cache shape mismatch at layer " + std::to_string(l));
    }
    if (upstream.rows() != params.output_dim() || upstream.cols() != cache.pre.back().cols())
        throw ShapeError("mlp_backward: upstream gradient shape mismatch");

    Gradients grads;
    grads.layers.resize(n_layers);
    Matrix g = upstream;
    for (std::size_t idx = n_layers; idx-- > 0;) {
        if (cache.masks[idx].size() != 0) g = g.cwiseProduct(cache.masks[idx]);
        if (is_activated(params, idx))
            g = g.cwiseProduct(activation_derivative(params.hidden_activation, cache.pre[idx]));
        grads.layers[idx].weight = g * cache.inputs[idx].transpose();
        grads.layers[idx].bias = g.rowwise().sum();
        g = params.layers[idx].weight.transpose() * g;
    }
    grads.input_gradient = std::move(g);
    return grads;
}

Gradients zero_gradients(const MlpParams& params) {
    Gradients grads;
    grads.layers.reserve(params.layers.size());
    for (const auto& l : params.layers)
        grads.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    grads.input_gradient = Matrix::Zero(params.input_dim(), 0);
    return grads;
}

MlpParams sgd_step(const MlpParams& params, const Gradients& grads, double lr, double weight_decay) {
    if (grads.layers.size() != params.layers.size()) throw ShapeError("sgd_step: layer count mismatch");
    MlpParams next = params;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& g = grads.layers[l];
        auto& layer = next.layers[l];
        if (g.weight.rows() != layer.weight.rows() || g.weight.cols() != layer.weight.cols() ||
            g.bias.size() != layer.bias.size())
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        if (!g.weight.allFinite() || !g.bias.allFinite())
            throw NumericError("sgd_step: non-finite gradient at layer " + std::to_string(l));
        layer.weight -= lr * (g.weight + weight_decay * layer.weight);
        layer.bias -= lr * g.bias;
    }
    return next;
}

void OptimState::validate() const {
    if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (scheduler_step < 1) throw ConfigError("scheduler_step must be >= 1");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be nonnegative");
}

double lr_at(const OptimState& state, int epoch) {
    const int drops = epoch / state.scheduler_step;
    return state.base_lr * std::pow(state.lr_decay, drops);
}

MlpParams make_mlp(const MlpShape& shape, Init init, std::mt19937_64& rng) {
    if (shape.input_dim < 1 || shape.widths.empty()) throw ShapeError("make_mlp: empty shape");
    MlpParams p;
    p.hidden_activation = shape.activation;
    p.activate_output = shape.activate_output;
    p.dropout_rate = shape.dropout_rate;
    Index in = shape.input_dim;
    for (Index out : shape.widths) {
        if (out < 1) throw ShapeError("make_mlp: layer width must be positive");
        Layer layer{Matrix::Zero(out, in), Vector::Zero(out)};
        if (init == Init::Glorot) {
            const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
            std::uniform_real_distribution<double> u(-limit, limit);
            for (Index r = 0; r < out; ++r)
                for (Index c = 0; c < in; ++c) layer.weight(r, c) = u(rng);
        }
        p.layers.push_back(std::move(layer));
        in = out;
    }
    p.validate();
    return p;
}

nlohmann::json to_json(const MlpParams& params) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : params.layers) {
        nlohmann::json w = nlohmann::json::array();
        for (Index r = 0; r < l.weight.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (Index c = 0; c < l.weight.cols(); ++c) row.push_back(l.weight(r, c));
            w.push_back(std::move(row));
        }
        nlohmann::json b = nlohmann::json::array();
        for (Index r = 0; r < l.bias.size(); ++r) b.push_back(l.bias(r));
        layers.push_back({{"w", std::move(w)}, {"b", std::move(b)}});
    }
    return {{"layers", std::move(layers)},
            {"activation", to_string(params.hidden_activation)},
            {"activate_output", params.activate_output},
            {"dropout_rate", params.dropout_rate}};
}

MlpParams mlp_from_json(const nlohmann::json& doc) {
    MlpParams p;
    try {
        p.hidden_activation = activation_from_string(doc.at("activation").get<std::string>());
        p.activate_output = doc.value("activate_output", false);
        p.dropout_rate = doc.at("dropout_rate").get<double>();
        for (const auto& jl : doc.at("layers")) {
            const auto& w = jl.at("w");
            const auto& b = jl.at("b");
            const auto rows = static_cast<Index>(w.size());
            const auto cols = rows == 0 ? Index{0} : static_cast<Index>(w.at(0).size());
            Layer layer{Matrix(rows, cols), Vector(static_cast<Index>(b.size()))};
            for (Index r = 0; r < rows; ++r) {
                if (static_cast<Index>(w.at(r).size()) != cols) throw DataError("ragged weight matrix");
                for (Index c = 0; c < cols; ++c) layer.weight(r, c) = w.at(r).at(c).get<double>();
            }
            for (Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = b.at(r).get<double>();
            p.layers.push_back(std::move(layer));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed network checkpoint: ") + e.what());
    }
    try {
        p.validate();
    } catch (const ShapeError& e) {
        throw DataError(std::string("invalid network checkpoint: ") + e.what());
    }
    return p;
}

}  // namespace itebench::nn
