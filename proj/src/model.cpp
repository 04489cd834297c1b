#include "itebench/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "itebench/rng.hpp"

namespace itebench::model {

namespace {

enum Stream : std::uint64_t {
    kInit = 11,
    kShuffle = 12,
    kDropout = 13,
};

constexpr std::uint64_t kPhiNet = 0;
constexpr std::uint64_t kPsiNet = 1;
constexpr std::uint64_t head_net(int t) { return 2 + static_cast<std::uint64_t>(t); }

nn::ForwardMode sub_mode(nn::ForwardMode mode, std::uint64_t net) {
    return mode.train ? nn::ForwardMode::training(derive_seed(mode.seed, net)) : mode;
}

void check_treatment(const NiceModel& m, int t) {
    if (t < 0 || t >= m.k())
        throw ShapeError("treatment index " + std::to_string(t + 1) + " outside 1.." + std::to_string(m.k()));
}

template <typename T>
T field(const nlohmann::json& doc, const char* key, T fallback, const std::string& path) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + "." + key + ": " + e.what());
    }
}

}  // namespace

const char* to_string(Variant v) {
    return v == Variant::Nice ? "nice" : "tarnet";
}

Variant variant_from_string(const std::string& s) {
    if (s == "nice") return Variant::Nice;
    if (s == "tarnet" || s == "baseline") return Variant::TarnetBaseline;
    throw ConfigError("unknown variant '" + s + "' (expected nice or tarnet)");
}

Index ModelShape::head_input_dim() const {
    return variant == Variant::Nice ? Index{phi_nodes} + Index{psi_nodes} : Index{phi_nodes};
}

void ModelShape::validate() const {
    if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
    if (variant == Variant::Nice && treatment_dim < 1) throw ConfigError("model.treatment_dim must be >= 1");
    if (k < 1) throw ConfigError("model.k must be >= 1");
    if (phi_layers < 1 || phi_nodes < 1) throw ConfigError("model: phi needs >= 1 layer of >= 1 node");
    if (variant == Variant::Nice && (psi_layers < 1 || psi_nodes < 1))
        throw ConfigError("model: psi needs >= 1 layer of >= 1 node");
    if (head_layers < 0 || head_nodes < 1) throw ConfigError("model: head layers must be >= 0, nodes >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
}

void NiceModel::validate() const {
    phi.validate();
    if (heads.empty()) throw ShapeError("model has no treatment heads");
    Index head_in = phi.output_dim();
    if (variant == Variant::Nice) {
        if (!psi) throw ShapeError("nice variant requires a psi network");
        psi->validate();
        head_in += psi->output_dim();
    } else if (psi) {
        throw ShapeError("baseline variant must not carry a psi network");
    }
    for (const auto& h : heads) {
        h.validate();
        if (h.input_dim() != head_in) throw ShapeError("head input dim does not match representation width");
        if (h.output_dim() != 1) throw ShapeError("treatment heads must output a scalar");
    }
}

NiceModel init_model(const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    auto rng_for = [seed](std::uint64_t net) { return std::mt19937_64(derive_seed(seed, kInit, net)); };
    NiceModel m;
    m.variant = shape.variant;

    nn::MlpShape phi{shape.input_dim, std::vector<Index>(static_cast<std::size_t>(shape.phi_layers), shape.phi_nodes),
                     shape.activation, true, shape.dropout_rate};
    auto rng = rng_for(kPhiNet);
    m.phi = nn::make_mlp(phi, shape.init, rng);

    if (shape.variant == Variant::Nice) {
        nn::MlpShape psi{shape.treatment_dim,
                         std::vector<Index>(static_cast<std::size_t>(shape.psi_layers), shape.psi_nodes),
                         shape.activation, true, shape.dropout_rate};
        rng = rng_for(kPsiNet);
        m.psi = nn::make_mlp(psi, shape.init, rng);
    }

    nn::MlpShape head{shape.head_input_dim(),
                      std::vector<Index>(static_cast<std::size_t>(shape.head_layers), shape.head_nodes),
                      shape.activation, false, shape.dropout_rate};
    head.widths.push_back(1);
    for (int t = 0; t < shape.k; ++t) {
        rng = rng_for(head_net(t));
        m.heads.push_back(nn::make_mlp(head, shape.init, rng));
    }
    return m;
}

void TrainConfig::validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("train: alpha and beta must be nonnegative");
    if (!(alpha + beta > 0.0)) throw ConfigError("train: alpha + beta must be positive");
    if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
    if (epochs_max < 0) throw ConfigError("train.epochs_max must be >= 0");
    if (early_stopping_patience < 1) throw ConfigError("train.patience must be >= 1");
    optim.validate();
    kernel.validate();
}

double nice_forward(const NiceModel& model, const Vector& x, const Vector& t_feature, int t, nn::ForwardMode mode) {
    check_treatment(model, t);
    const Vector rep = nn::mlp_forward(model.phi, x, sub_mode(mode, kPhiNet));
    Vector joint = rep;
    if (model.variant == Variant::Nice) {
        const Vector trep = nn::mlp_forward(*model.psi, t_feature, sub_mode(mode, kPsiNet));
        joint.resize(rep.size() + trep.size());
        joint << rep, trep;
    }
    return nn::mlp_forward(model.heads[static_cast<std::size_t>(t)], joint, sub_mode(mode, head_net(t)))(0);
}

Batch make_batch(const sim::Dataset& ds, const std::vector<Index>& rows) {
    Batch b;
    const auto n = static_cast<Index>(rows.size());
    b.x.resize(ds.d(), n);
    b.t_feature.resize(ds.T_emb.cols(), n);
    b.t.resize(rows.size());
    b.y.resize(n);
    for (Index j = 0; j < n; ++j) {
        const Index r = rows[static_cast<std::size_t>(j)];
        const int t = ds.t_obs[static_cast<std::size_t>(r)];
        b.x.col(j) = ds.X.row(r).transpose();
        b.t_feature.col(j) = ds.T_emb.row(t).transpose();
        b.t[static_cast<std::size_t>(j)] = t;
        b.y(j) = ds.y_factual(r);
    }
    return b;
}

BatchLoss batch_loss(const NiceModel& model, const Batch& batch, const TrainConfig& cfg, nn::ForwardMode mode) {
    const Index n = batch.x.cols();
    if (n < 1) throw ShapeError("batch_loss: empty batch");
    if (batch.y.size() != n || static_cast<Index>(batch.t.size()) != n)
        throw ShapeError("batch_loss: batch fields disagree in length");
    for (int t : batch.t) check_treatment(model, t);
    const bool nice = model.variant == Variant::Nice;
    if (nice && batch.t_feature.cols() != n) throw ShapeError("batch_loss: missing treatment features");

    auto phi_fwd = nn::mlp_forward(model.phi, batch.x, sub_mode(mode, kPhiNet));
    const Index d1 = phi_fwd.output.rows();
    std::optional<nn::ForwardResult> psi_fwd;
    Matrix joint;
    if (nice) {
        psi_fwd = nn::mlp_forward(*model.psi, batch.t_feature, sub_mode(mode, kPsiNet));
        joint.resize(d1 + psi_fwd->output.rows(), n);
        joint << phi_fwd.output, psi_fwd->output;
    } else {
        joint = phi_fwd.output;
    }

    BatchLoss out;
    out.grads.heads.reserve(model.heads.size());
    out.grads.head_used.assign(model.heads.size(), false);
    Matrix joint_grad = Matrix::Zero(joint.rows(), n);
    const double inv_n = 1.0 / static_cast<double>(n);
    double sse = 0.0;

    for (int t = 0; t < model.k(); ++t) {
        std::vector<Index> cols;
        for (Index j = 0; j < n; ++j)
            if (batch.t[static_cast<std::size_t>(j)] == t) cols.push_back(j);
        const auto& head = model.heads[static_cast<std::size_t>(t)];
        if (cols.empty()) {
            out.grads.heads.push_back(nn::zero_gradients(head));
            continue;
        }
        Matrix in(joint.rows(), static_cast<Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) in.col(static_cast<Index>(c)) = joint.col(cols[c]);
        auto fwd = nn::mlp_forward(head, in, sub_mode(mode, head_net(t)));
        Matrix upstream(1, in.cols());
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const double r = fwd.output(0, static_cast<Index>(c)) - batch.y(cols[c]);
            sse += r * r;
            upstream(0, static_cast<Index>(c)) = cfg.alpha * 2.0 * r * inv_n;
        }
        auto g = nn::mlp_backward(head, fwd.cache, upstream);
        for (std::size_t c = 0; c < cols.size(); ++c) joint_grad.col(cols[c]) += g.input_gradient.col(static_cast<Index>(c));
        out.grads.heads.push_back(std::move(g));
        out.grads.head_used[static_cast<std::size_t>(t)] = true;
    }
    out.l1 = sse * inv_n;

    if (nice) {
        mmd::GroupedEmbeddings groups{joint, batch.t, model.k()};
        auto reg = mmd::treatment_regularization_loss(groups, cfg.kernel);
        out.l2 = reg.value;
        out.l2_degenerate = reg.degenerate;
        if (cfg.beta != 0.0) joint_grad += cfg.beta * reg.gradient;
    }
    out.total = cfg.alpha * out.l1 + cfg.beta * out.l2;
    if (!std::isfinite(out.total)) throw NumericError("batch_loss: non-finite loss");

    out.grads.phi = nn::mlp_backward(model.phi, phi_fwd.cache, joint_grad.topRows(d1));
    if (nice) out.grads.psi = nn::mlp_backward(*model.psi, psi_fwd->cache, joint_grad.bottomRows(joint.rows() - d1));
    return out;
}

NiceModel apply_update(const NiceModel& model, const ModelGradients& grads, double lr, double weight_decay) {
    NiceModel next = model;
    next.phi = nn::sgd_step(model.phi, grads.phi, lr, weight_decay);
    if (model.psi) next.psi = nn::sgd_step(*model.psi, *grads.psi, lr, weight_decay);
    for (std::size_t t = 0; t < model.heads.size(); ++t)
        if (grads.head_used[t]) next.heads[t] = nn::sgd_step(model.heads[t], grads.heads[t], lr, weight_decay);
    return next;
}

Matrix predict_outcomes(const NiceModel& model, const Matrix& X, const Matrix& T_emb) {
    if (X.cols() != model.input_dim()) throw ShapeError("predict: covariate dimension mismatch");
    if (T_emb.rows() != model.k()) throw ShapeError("predict: treatment feature rows != k");
    const auto eval = nn::ForwardMode::eval();
    const Matrix rep = nn::mlp_forward(model.phi, Matrix(X.transpose()), eval).output;
    Matrix trep;
    if (model.variant == Variant::Nice) {
        if (T_emb.cols() != model.treatment_dim()) throw ShapeError("predict: treatment feature dimension mismatch");
        trep = nn::mlp_forward(*model.psi, Matrix(T_emb.transpose()), eval).output;
    }
    Matrix out(X.rows(), model.k());
    for (int t = 0; t < model.k(); ++t) {
        Matrix joint;
        if (model.variant == Variant::Nice) {
            joint.resize(rep.rows() + trep.rows(), rep.cols());
            joint.topRows(rep.rows()) = rep;
            joint.bottomRows(trep.rows()) = trep.col(t).replicate(1, rep.cols());
        } else {
            joint = rep;
        }
        out.col(t) = nn::mlp_forward(model.heads[static_cast<std::size_t>(t)], joint, eval).output.row(0).transpose();
    }
    return out;
}

Matrix predict_all_outcomes(const NiceModel& model, const sim::Dataset& ds) {
    return predict_outcomes(model, ds.X, ds.T_emb);
}

Vector predict_factual(const NiceModel& model, const sim::Dataset& ds, const std::vector<Index>& rows) {
    Matrix X(static_cast<Index>(rows.size()), ds.d());
    for (std::size_t r = 0; r < rows.size(); ++r) X.row(static_cast<Index>(r)) = ds.X.row(rows[r]);
    const Matrix all = predict_outcomes(model, X, ds.T_emb);
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        out(static_cast<Index>(r)) = all(static_cast<Index>(r), ds.t_obs[static_cast<std::size_t>(rows[r])]);
    return out;
}

double factual_mse(const NiceModel& model, const sim::Dataset& ds, const std::vector<Index>& rows) {
    if (rows.empty()) return 0.0;
    const Vector pred = predict_factual(model, ds, rows);
    double sse = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double e = pred(static_cast<Index>(r)) - ds.y_factual(rows[r]);
        sse += e * e;
    }
    return sse / static_cast<double>(rows.size());
}

TrainedModel train(const sim::Dataset& ds, const ModelShape& shape, const TrainConfig& cfg) {
    return train_on_rows(ds, ds.split.train, ds.split.val, shape, cfg);
}

TrainedModel train_on_rows(const sim::Dataset& ds, const std::vector<Index>& train_rows,
                           const std::vector<Index>& val_rows, const ModelShape& shape, const TrainConfig& cfg) {
    cfg.validate();
    if (shape.k != ds.k()) throw DataError("model k does not match dataset k");
    if (shape.input_dim != ds.d()) throw DataError("model input_dim does not match dataset d");
    if (shape.variant == Variant::Nice && shape.treatment_dim != ds.T_emb.cols())
        throw DataError("model treatment_dim does not match dataset treatment features");
    if (train_rows.empty()) throw DataError("empty training split");
    if (val_rows.empty()) throw DataError("empty validation split");

    TrainedModel tm;
    tm.shape = shape;
    tm.config = cfg;
    tm.model = init_model(shape, cfg.seed);
    tm.head_updates.assign(static_cast<std::size_t>(shape.k), 0);
    tm.initial_val_l1 = factual_mse(tm.model, ds, val_rows);

    NiceModel current = tm.model;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<Index> order = train_rows;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kShuffle, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const double lr = nn::lr_at(cfg.optim, epoch);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++batches) {
            const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
            const auto batch = make_batch(ds, rows);
            const auto mode = nn::ForwardMode::training(
                derive_seed(cfg.seed, kDropout, (static_cast<std::uint64_t>(epoch) << 32) | static_cast<std::uint64_t>(batches)));
            try {
                const auto loss = batch_loss(current, batch, cfg, mode);
                current = apply_update(current, loss.grads, lr, cfg.optim.weight_decay);
                for (std::size_t t = 0; t < tm.head_updates.size(); ++t)
                    if (loss.grads.head_used[t]) ++tm.head_updates[t];
                rec.loss += loss.total;
                rec.l1 += loss.l1;
                rec.l2 += loss.l2;
            } catch (const NumericError& e) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(batches) + ": " + e.what(),
                                      epoch, batches, tm.history);
            }
        }
        rec.loss /= batches;
        rec.l1 /= batches;
        rec.l2 /= batches;
        rec.val_l1 = factual_mse(current, ds, val_rows);
        if (!std::isfinite(rec.val_l1))
            throw DivergenceError("validation loss non-finite at epoch " + std::to_string(epoch), epoch, batches,
                                  tm.history);
        tm.history.push_back(rec);

        if (rec.val_l1 < best_val) {
            best_val = rec.val_l1;
            tm.best_epoch = epoch;
            tm.model = current;
            since_best = 0;
        } else if (++since_best >= cfg.early_stopping_patience) {
            break;
        }
    }
    return tm;
}

nlohmann::json to_json(const ModelShape& s) {
    return {{"input_dim", s.input_dim},     {"treatment_dim", s.treatment_dim},
            {"k", s.k},                     {"phi_layers", s.phi_layers},
            {"phi_nodes", s.phi_nodes},     {"psi_layers", s.psi_layers},
            {"psi_nodes", s.psi_nodes},     {"head_layers", s.head_layers},
            {"head_nodes", s.head_nodes},   {"activation", nn::to_string(s.activation)},
            {"dropout", s.dropout_rate},    {"variant", to_string(s.variant)},
            {"init", s.init == nn::Init::Glorot ? "glorot" : "zeros"}};
}

ModelShape model_shape_from_json(const nlohmann::json& doc, const std::string& path) {
    if (!doc.is_object()) throw ConfigError(path + ": expected an object");
    ModelShape s;
    s.input_dim = field<Index>(doc, "input_dim", s.input_dim, path);
    s.treatment_dim = field<Index>(doc, "treatment_dim", s.treatment_dim, path);
    s.k = field<int>(doc, "k", s.k, path);
    s.phi_layers = field<int>(doc, "phi_layers", s.phi_layers, path);
    s.phi_nodes = field<int>(doc, "phi_nodes", s.phi_nodes, path);
    s.psi_layers = field<int>(doc, "psi_layers", s.psi_layers, path);
    s.psi_nodes = field<int>(doc, "psi_nodes", s.psi_nodes, path);
    s.head_layers = field<int>(doc, "head_layers", s.head_layers, path);
    s.head_nodes = field<int>(doc, "head_nodes", s.head_nodes, path);
    s.activation = nn::activation_from_string(field<std::string>(doc, "activation", nn::to_string(s.activation), path));
    s.dropout_rate = field<double>(doc, "dropout", s.dropout_rate, path);
    s.variant = variant_from_string(field<std::string>(doc, "variant", to_string(s.variant), path));
    const auto init = field<std::string>(doc, "init", "glorot", path);
    if (init == "glorot") s.init = nn::Init::Glorot;
    else if (init == "zeros") s.init = nn::Init::Zeros;
    else throw ConfigError(path + ".init: expected 'glorot' or 'zeros'");
    return s;
}

nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json kernel;
    if (c.kernel.mode == mmd::KernelSpec::Bandwidth::Fixed) kernel = c.kernel.bandwidth;
    else kernel = "median";
    return {{"alpha", c.alpha},
            {"beta", c.beta},
            {"batch_size", c.batch_size},
            {"epochs_max", c.epochs_max},
            {"patience", c.early_stopping_patience},
            {"lr", c.optim.base_lr},
            {"lr_decay", c.optim.lr_decay},
            {"scheduler_step", c.optim.scheduler_step},
            {"weight_decay", c.optim.weight_decay},
            {"bandwidth", kernel},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& path) {
    if (!doc.is_object()) throw ConfigError(path + ": expected an object");
    TrainConfig c;
    c.alpha = field<double>(doc, "alpha", c.alpha, path);
    c.beta = field<double>(doc, "beta", c.beta, path);
    c.batch_size = field<int>(doc, "batch_size", c.batch_size, path);
    c.epochs_max = field<int>(doc, "epochs_max", c.epochs_max, path);
    c.early_stopping_patience = field<int>(doc, "patience", c.early_stopping_patience, path);
    c.optim.base_lr = field<double>(doc, "lr", c.optim.base_lr, path);
    c.optim.lr_decay = field<double>(doc, "lr_decay", c.optim.lr_decay, path);
    c.optim.scheduler_step = field<int>(doc, "scheduler_step", c.optim.scheduler_step, path);
    c.optim.weight_decay = field<double>(doc, "weight_decay", c.optim.weight_decay, path);
    if (doc.contains("bandwidth")) {
        const auto& bw = doc.at("bandwidth");
        if (bw.is_string() && bw.get<std::string>() == "median") c.kernel = mmd::KernelSpec::median();
        else if (bw.is_number()) c.kernel = mmd::KernelSpec::fixed(bw.get<double>());
        else throw ConfigError(path + ".bandwidth: expected \"median\" or a positive number");
    }
    c.seed = field<std::uint64_t>(doc, "seed", c.seed, path);
    return c;
}

nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch}, {"lr", r.lr}, {"L", r.loss}, {"L1", r.l1}, {"L2", r.l2}, {"val_L1", r.val_l1}};
}

nlohmann::json checkpoint_json(const TrainedModel& tm) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : tm.model.heads) heads.push_back(nn::to_json(h));
    nlohmann::json doc = {
        {"schema_version", "1"},
        {"variant", to_string(tm.model.variant)},
        {"k", tm.model.k()},
        {"dims",
         {{"input_dim", tm.model.input_dim()},
          {"treatment_dim", tm.model.treatment_dim()},
          {"d1", tm.model.phi.output_dim()},
          {"d2", tm.model.psi ? tm.model.psi->output_dim() : 0}}},
        {"shape", to_json(tm.shape)},
        {"train_config", to_json(tm.config)},
        {"best_epoch", tm.best_epoch},
        {"phi", nn::to_json(tm.model.phi)},
        {"heads", std::move(heads)},
    };
    if (tm.model.psi) doc["psi"] = nn::to_json(*tm.model.psi);
    return doc;
}

TrainedModel checkpoint_from_json(const nlohmann::json& doc) {
    TrainedModel tm;
    try {
        tm.model.variant = variant_from_string(doc.at("variant").get<std::string>());
        tm.model.phi = nn::mlp_from_json(doc.at("phi"));
        if (doc.contains("psi")) tm.model.psi = nn::mlp_from_json(doc.at("psi"));
        for (const auto& h : doc.at("heads")) tm.model.heads.push_back(nn::mlp_from_json(h));
        if (doc.contains("shape")) tm.shape = model_shape_from_json(doc.at("shape"), "checkpoint.shape");
        if (doc.contains("train_config")) tm.config = train_config_from_json(doc.at("train_config"), "checkpoint.train_config");
        tm.best_epoch = doc.value("best_epoch", -1);
        if (doc.at("k").get<int>() != tm.model.k()) throw DataError("checkpoint k disagrees with head count");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
    try {
        tm.model.validate();
    } catch (const ShapeError& e) {
        throw DataError(std::string("inconsistent checkpoint: ") + e.what());
    }
    return tm;
}

nlohmann::json history_json(const TrainedModel& tm) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : tm.history) rows.push_back(to_json(r));
    nlohmann::json updates = tm.head_updates;
    return {{"schema_version", "1"},
            {"alpha", tm.config.alpha},
            {"beta", tm.config.beta},
            {"best_epoch", tm.best_epoch},
            {"initial_val_L1", tm.initial_val_l1},
            {"head_updates", std::move(updates)},
            {"epochs", std::move(rows)}};
}

}  // namespace itebench::model
