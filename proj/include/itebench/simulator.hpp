#pragma once

// Semi-synthetic potential-outcome generator for high-dimensional treatments.
//
// Covariates x_i and k+1 centroids z_1..z_{k+1} live in one embedding space.
// The expected preference of user i for treatment t is
//     d_i^t = x_i . z_t + x_i . z_{k+1}
// and the realized potential outcome is y_i^t = c * ytilde_i^t * d_i^t with
// ytilde_i^t ~ N(mu_t, sigma_t^2). Observed treatments are drawn from a
// softmax over kappa_t * y_i^t, so larger kappa_t skews assignment towards t.
//
// Treatment indices are 0-based in memory and 1-based in every file and on
// the command line.

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace itebench::sim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class CentroidMethod { RandomDraw, KMeans };
enum class CovariateSource { SyntheticGaussian, EmbeddingFile };

struct GaussianPrior {
    double mean = 0.0;
    double sd = 1.0;
};

struct SimConfig {
    Index n = 20000;
    Index d = 512;
    int k = 4;
    CentroidMethod centroid_method = CentroidMethod::RandomDraw;
    int kmeans_iters = 100;
    double kmeans_tol = 1e-8;
    double c = 5.0;
    std::vector<double> kappa;  // empty means 10 for every treatment
    GaussianPrior mu_prior{0.45, 0.15};
    GaussianPrior sigma_prior{0.1, 0.05};
    CovariateSource covariate_source = CovariateSource::SyntheticGaussian;
    std::string embedding_path;
    std::uint64_t seed = 0;

    std::vector<double> kappa_or_default() const;
    void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const SimConfig& cfg);
// Missing keys keep their defaults; `path` prefixes error messages.
SimConfig sim_config_from_json(const nlohmann::json& doc, const std::string& path = "sim");

enum class SplitKind { Train, Val, Test };
const char* to_string(SplitKind s);
SplitKind split_from_string(const std::string& s);

struct Split {
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;

    const std::vector<Index>& rows(SplitKind s) const;
};

// Counts reads of counterfactual ground truth per split.
struct GroundTruthAudit {
    std::atomic<long> train{0};
    std::atomic<long> val{0};
    std::atomic<long> test{0};

    long count(SplitKind s) const;
    void record(SplitKind s);
};

struct Dataset {
    SimConfig config;
    Matrix X;           // n x d covariates
    Matrix Z;           // (k+1) x d centroids; row k is the shared term
    Matrix T_emb;       // k x d treatment features
    Vector mu;          // k
    Vector sigma;       // k
    Matrix Y_sampled;   // n x k
    Matrix Y_expected;  // n x k, c * mu_t * d_i^t
    std::vector<int> t_obs;
    Vector y_factual;   // n
    Split split;
    std::shared_ptr<GroundTruthAudit> audit = std::make_shared<GroundTruthAudit>();

    Index n() const { return X.rows(); }
    Index d() const { return X.cols(); }
    int k() const { return static_cast<int>(T_emb.rows()); }

    // Throws DataError naming the broken invariant.
    void validate() const;
};

// Rows of Y_expected for a split; every call is recorded in the audit.
Matrix expected_outcomes(const Dataset& ds, SplitKind split);

Matrix generate_covariates(const SimConfig& cfg);

// One row per instance, comma separated, no header.
Matrix read_embedding_csv(const std::filesystem::path& path);

struct KMeansResult {
    Matrix centroids;                // clusters x d
    std::vector<double> objective;   // within-cluster SS after every assignment step
    int iterations = 0;
};

KMeansResult kmeans(const Matrix& X, int clusters, int iters, double tol, std::uint64_t seed);

Matrix select_centroids(const Matrix& X, int k, CentroidMethod method, int kmeans_iters, double kmeans_tol,
                        std::uint64_t seed);

struct OutcomeParams {
    Vector mu;
    Vector sigma;
};

constexpr double kMinSigma = 1e-3;

OutcomeParams sample_outcome_params(const SimConfig& cfg);

struct PotentialOutcomes {
    Matrix sampled;
    Matrix expected;
};

// d_i^t for every (i, t): n x k.
Matrix preference_matrix(const Matrix& X, const Matrix& Z);

PotentialOutcomes potential_outcomes(const Matrix& X, const Matrix& Z, const Vector& mu, const Vector& sigma,
                                     double c, std::uint64_t seed);

// Row-wise softmax of kappa_t * Y[i, t] (max-subtracted).
Matrix assignment_probabilities(const Matrix& Y, const std::vector<double>& kappa);

std::vector<int> assign_treatments(const Matrix& Y, const std::vector<double>& kappa, std::uint64_t seed);

// Shuffled 70/15/15 partition; validation and test get at least one row each.
Split make_split(Index n, std::uint64_t seed);

Dataset simulate_dataset(const SimConfig& cfg);

// Dataset directory: manifest.json plus seven CSV files.
void write_dataset_dir(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset_dir(const std::filesystem::path& dir);

extern const std::vector<std::string> kDatasetFiles;

}  // namespace itebench::sim
