#pragma once

// Outcome model with a covariate representation network phi, a treatment
// representation network psi and one regression head per treatment:
//
//     yhat_t(x) = head_t([phi(x); psi(f_t)])
//
// where f_t is the feature vector of treatment t. The treatment-blind
// baseline drops psi and feeds phi(x) alone to every head.
//
// Training minimises alpha * L1 + beta * L2 with L1 the factual MSE through
// each sample's observed head and L2 the mean pairwise MMD between the joint
// embeddings of the observed-treatment groups in the mini-batch.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "itebench/errors.hpp"
#include "itebench/mmd.hpp"
#include "itebench/nn.hpp"
#include "itebench/simulator.hpp"

namespace itebench::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Variant { Nice, TarnetBaseline };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelShape {
    Index input_dim = 1;      // covariate dimension d
    Index treatment_dim = 1;  // treatment feature dimension
    int k = 2;
    int phi_layers = 2;
    int phi_nodes = 32;  // also the representation width d1
    int psi_layers = 2;
    int psi_nodes = 32;  // d2
    int head_layers = 2;  // hidden layers before the linear regression layer
    int head_nodes = 32;
    nn::Activation activation = nn::Activation::Elu;
    double dropout_rate = 0.0;
    Variant variant = Variant::Nice;
    nn::Init init = nn::Init::Glorot;

    Index head_input_dim() const;
    void validate() const;
};

struct NiceModel {
    Variant variant = Variant::Nice;
    nn::MlpParams phi;
    std::optional<nn::MlpParams> psi;  // empty for the baseline
    std::vector<nn::MlpParams> heads;

    int k() const { return static_cast<int>(heads.size()); }
    Index input_dim() const { return phi.input_dim(); }
    Index treatment_dim() const { return psi ? psi->input_dim() : 0; }
    void validate() const;
};

NiceModel init_model(const ModelShape& shape, std::uint64_t seed);

struct TrainConfig {
    double alpha = 1.0;
    double beta = 0.5;
    int batch_size = 256;
    int epochs_max = 100;
    int early_stopping_patience = 10;
    nn::OptimState optim;
    mmd::KernelSpec kernel = mmd::KernelSpec::median();
    std::uint64_t seed = 0;

    void validate() const;
};

// Predicted outcome of treatment t (0-based). The baseline ignores t_feature.
double nice_forward(const NiceModel& model, const Vector& x, const Vector& t_feature, int t, nn::ForwardMode mode);

struct Batch {
    Matrix x;             // [d x B]
    Matrix t_feature;     // [treatment_dim x B], feature of each sample's observed treatment
    std::vector<int> t;   // observed treatment per column
    Vector y;             // factual outcome per column
};

Batch make_batch(const sim::Dataset& ds, const std::vector<Index>& rows);

struct ModelGradients {
    nn::Gradients phi;
    std::optional<nn::Gradients> psi;
    std::vector<nn::Gradients> heads;
    std::vector<bool> head_used;  // head received at least one sample
};

struct BatchLoss {
    double total = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    bool l2_degenerate = false;  // fewer than two treatment groups in the batch
    ModelGradients grads;
};

BatchLoss batch_loss(const NiceModel& model, const Batch& batch, const TrainConfig& cfg, nn::ForwardMode mode);

// Applies one SGD step to phi, psi and every head that saw a sample.
NiceModel apply_update(const NiceModel& model, const ModelGradients& grads, double lr, double weight_decay);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;  // batch means of L, L1, L2
    double l1 = 0.0;
    double l2 = 0.0;
    double val_l1 = 0.0;
};

struct TrainedModel {
    NiceModel model;  // snapshot at best_epoch (initial model when no epoch ran)
    ModelShape shape;
    TrainConfig config;
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double initial_val_l1 = 0.0;
    std::vector<long> head_updates;  // SGD steps applied to each head
};

struct DivergenceError : NumericError {
    DivergenceError(const std::string& what, int epoch, int batch, std::vector<EpochRecord> history)
        : NumericError(what), epoch(epoch), batch(batch), history(std::move(history)) {}
    int epoch;
    int batch;
    std::vector<EpochRecord> history;
};

TrainedModel train(const sim::Dataset& ds, const ModelShape& shape, const TrainConfig& cfg);

// Same loop on explicit train/validation row sets.
TrainedModel train_on_rows(const sim::Dataset& ds, const std::vector<Index>& train_rows,
                           const std::vector<Index>& val_rows, const ModelShape& shape, const TrainConfig& cfg);

// Yhat[r, t] for every requested row and every treatment, evaluated with
// treatment t's own feature vector. Eval mode.
Matrix predict_outcomes(const NiceModel& model, const Matrix& X, const Matrix& T_emb);
Matrix predict_all_outcomes(const NiceModel& model, const sim::Dataset& ds);

// Eval-mode factual predictions for a subset of rows; the validation path.
Vector predict_factual(const NiceModel& model, const sim::Dataset& ds, const std::vector<Index>& rows);

double factual_mse(const NiceModel& model, const sim::Dataset& ds, const std::vector<Index>& rows);

nlohmann::json to_json(const ModelShape& s);
ModelShape model_shape_from_json(const nlohmann::json& doc, const std::string& path = "model");
nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& doc, const std::string& path = "train");
nlohmann::json to_json(const EpochRecord& r);

nlohmann::json checkpoint_json(const TrainedModel& tm);
TrainedModel checkpoint_from_json(const nlohmann::json& doc);
nlohmann::json history_json(const TrainedModel& tm);

}  // namespace itebench::model
