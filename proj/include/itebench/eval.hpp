#pragma once

// ITE ground truth and PEHE metrics. Treatment indices are 0-based here; the
// JSON report converts pair and zero-shot indices to 1-based.

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itebench/model.hpp"
#include "itebench/simulator.hpp"

namespace itebench::eval {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// (a, b) with a > b.
using TreatmentPair = std::pair<int, int>;

// tau^{a,b}(x_i) = Y[i, a] - Y[i, b] for every pair a > b.
std::map<TreatmentPair, Vector> ite_matrix(const Matrix& Y);

struct Pehe {
    double epsilon = 0.0;
    double sqrt_epsilon = 0.0;
    std::map<TreatmentPair, double> per_pair;  // mean squared ITE error of each pair
};

Pehe pehe(const Matrix& y_hat, const Matrix& y_true);

struct ZeroShotPehe {
    double epsilon = 0.0;
    double sqrt_epsilon = 0.0;
};

// Averages only over the k - 1 pairs that contain treatment z.
ZeroShotPehe zero_shot_pehe(const Matrix& y_hat, const Matrix& y_true, int z);

struct ZeroShotEntry {
    int z = 0;
    double sqrt_pehe_zs = 0.0;
};

struct EvalReport {
    double sqrt_pehe = 0.0;
    std::map<TreatmentPair, double> per_pair_pehe;
    std::optional<ZeroShotEntry> zero_shot;
    Index n_eval = 0;
    sim::SplitKind split = sim::SplitKind::Test;
    std::string variant;
};

// Predicts every potential outcome on the split and scores it against
// Y_expected (read through the dataset's audit counter).
EvalReport evaluate(const model::NiceModel& m, const sim::Dataset& ds, sim::SplitKind split,
                    std::optional<int> zero_shot = std::nullopt);

struct ZeroShotRun {
    EvalReport report;
    model::TrainedModel trained;
    std::vector<Index> train_rows;  // training rows after removing treatment z
    std::vector<Index> val_rows;
};

// Trains without any sample observed under treatment z, then scores the test
// split with both the zero-shot and the full PEHE.
ZeroShotRun run_zero_shot_protocol(const sim::Dataset& ds, const model::ModelShape& shape,
                                   const model::TrainConfig& cfg, int z);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& doc);
std::string render_report(const EvalReport& r);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population convention (divide by n)
};

MeanStd mean_std(const std::vector<double>& values);

// "2.00 ± 1.00"
std::string format_mean_std(const MeanStd& m, int decimals = 2);

}  // namespace itebench::eval
