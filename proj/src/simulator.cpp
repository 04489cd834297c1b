#include "itebench/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "itebench/csv.hpp"
#include "itebench/errors.hpp"
#include "itebench/rng.hpp"

namespace itebench::sim {

namespace {

enum Stream : std::uint64_t {
    kCovariates = 1,
    kCentroids = 2,
    kOutcomeParams = 3,
    kNoise = 4,
    kAssignment = 5,
    kSplit = 6,
};

const char* to_string(CentroidMethod m) {
    return m == CentroidMethod::RandomDraw ? "random" : "kmeans";
}

const char* to_string(CovariateSource s) {
    return s == CovariateSource::SyntheticGaussian ? "gaussian" : "file";
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

Matrix rows_of(const Matrix& m, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = m.row(idx[r]);
    return out;
}

}  // namespace

std::vector<double> SimConfig::kappa_or_default() const {
    return kappa.empty() ? std::vector<double>(static_cast<std::size_t>(k), 10.0) : kappa;
}

void SimConfig::validate() const {
    if (k < 2) throw ConfigError("sim.k: need k >= 2 treatments (got " + std::to_string(k) + ")");
    if (n < k + 1) throw ConfigError("sim.n: need n >= k + 1 instances");
    if (d < 1) throw ConfigError("sim.d: covariate dimension must be >= 1");
    if (!(c > 0.0)) throw ConfigError("sim.c: outcome scale must be positive");
    if (!kappa.empty() && kappa.size() != static_cast<std::size_t>(k))
        throw ConfigError("sim.kappa: expected " + std::to_string(k) + " entries");
    for (double v : kappa)
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("sim.kappa: every entry must be positive");
    if (!(mu_prior.sd >= 0.0) || !(sigma_prior.sd >= 0.0)) throw ConfigError("sim priors: sd must be >= 0");
    if (centroid_method == CentroidMethod::KMeans && kmeans_iters < 1)
        throw ConfigError("sim.kmeans_iters must be >= 1");
    if (covariate_source == CovariateSource::EmbeddingFile && embedding_path.empty())
        throw ConfigError("sim.embedding_path required when covariate_source is 'file'");
}

nlohmann::json to_json(const SimConfig& cfg) {
    return {{"n", cfg.n},
            {"d", cfg.d},
            {"k", cfg.k},
            {"centroid_method", to_string(cfg.centroid_method)},
            {"kmeans_iters", cfg.kmeans_iters},
            {"kmeans_tol", cfg.kmeans_tol},
            {"c", cfg.c},
            {"kappa", cfg.kappa_or_default()},
            {"mu_prior", {cfg.mu_prior.mean, cfg.mu_prior.sd}},
            {"sigma_prior", {cfg.sigma_prior.mean, cfg.sigma_prior.sd}},
            {"covariate_source", to_string(cfg.covariate_source)},
            {"embedding_path", cfg.embedding_path},
            {"seed", cfg.seed}};
}

SimConfig sim_config_from_json(const nlohmann::json& doc, const std::string& path) {
    if (!doc.is_object()) throw ConfigError(path + ": expected an object");
    SimConfig cfg;
    cfg.n = field<Index>(doc, "n", cfg.n, path);
    cfg.d = field<Index>(doc, "d", cfg.d, path);
    cfg.k = field<int>(doc, "k", cfg.k, path);
    const auto method = field<std::string>(doc, "centroid_method", "random", path);
    if (method == "random") cfg.centroid_method = CentroidMethod::RandomDraw;
    else if (method == "kmeans") cfg.centroid_method = CentroidMethod::KMeans;
    else throw ConfigError(path + ".centroid_method: expected 'random' or 'kmeans', got '" + method + "'");
    cfg.kmeans_iters = field<int>(doc, "kmeans_iters", cfg.kmeans_iters, path);
    cfg.kmeans_tol = field<double>(doc, "kmeans_tol", cfg.kmeans_tol, path);
    cfg.c = field<double>(doc, "c", cfg.c, path);
    if (doc.contains("kappa")) {
        const auto& kj = doc.at("kappa");
        if (kj.is_number()) cfg.kappa.assign(static_cast<std::size_t>(std::max(cfg.k, 0)), kj.get<double>());
        else cfg.kappa = field<std::vector<double>>(doc, "kappa", {}, path);
    }
    auto prior = [&](const char* key, GaussianPrior def) {
        const auto v = field<std::vector<double>>(doc, key, {def.mean, def.sd}, path);
        if (v.size() != 2) throw ConfigError(path + "." + key + ": expected [mean, sd]");
        return GaussianPrior{v[0], v[1]};
    };
    cfg.mu_prior = prior("mu_prior", cfg.mu_prior);
    cfg.sigma_prior = prior("sigma_prior", cfg.sigma_prior);
    const auto source = field<std::string>(doc, "covariate_source", "gaussian", path);
    if (source == "gaussian") cfg.covariate_source = CovariateSource::SyntheticGaussian;
    else if (source == "file") cfg.covariate_source = CovariateSource::EmbeddingFile;
    else throw ConfigError(path + ".covariate_source: expected 'gaussian' or 'file', got '" + source + "'");
    cfg.embedding_path = field<std::string>(doc, "embedding_path", "", path);
    cfg.seed = field<std::uint64_t>(doc, "seed", cfg.seed, path);
    return cfg;
}

const char* to_string(SplitKind s) {
    switch (s) {
    case SplitKind::Train: return "train";
    case SplitKind::Val: return "val";
    case SplitKind::Test: return "test";
    }
    return "?";
}

SplitKind split_from_string(const std::string& s) {
    if (s == "train") return SplitKind::Train;
    if (s == "val" || s == "validation") return SplitKind::Val;
    if (s == "test") return SplitKind::Test;
    throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

const std::vector<Index>& Split::rows(SplitKind s) const {
    switch (s) {
    case SplitKind::Train: return train;
    case SplitKind::Val: return val;
    case SplitKind::Test: return test;
    }
    return test;
}

long GroundTruthAudit::count(SplitKind s) const {
    switch (s) {
    case SplitKind::Train: return train.load();
    case SplitKind::Val: return val.load();
    case SplitKind::Test: return test.load();
    }
    return 0;
}

void GroundTruthAudit::record(SplitKind s) {
    switch (s) {
    case SplitKind::Train: ++train; break;
    case SplitKind::Val: ++val; break;
    case SplitKind::Test: ++test; break;
    }
}

void Dataset::validate() const {
    const Index rows = n();
    const int kk = k();
    if (Z.rows() != kk + 1 || Z.cols() != d()) throw DataError("centroid matrix must be (k+1) x d");
    if (T_emb.cols() != d()) throw DataError("treatment features must have d columns");
    if (mu.size() != kk || sigma.size() != kk) throw DataError("mu/sigma must have k entries");
    if (Y_sampled.rows() != rows || Y_sampled.cols() != kk || Y_expected.rows() != rows || Y_expected.cols() != kk)
        throw DataError("outcome matrices must be n x k");
    if (static_cast<Index>(t_obs.size()) != rows || y_factual.size() != rows)
        throw DataError("assignments must have n entries");
    for (Index i = 0; i < rows; ++i) {
        const int t = t_obs[static_cast<std::size_t>(i)];
        if (t < 0 || t >= kk) throw DataError("observed treatment out of range at row " + std::to_string(i));
        if (y_factual(i) != Y_sampled(i, t))
            throw DataError("y_factual != Y_sampled[i, t_obs] at row " + std::to_string(i));
    }
    const Matrix pref = preference_matrix(X, Z);
    for (Index i = 0; i < rows; ++i)
        for (int t = 0; t < kk; ++t) {
            const double want = config.c * mu(t) * pref(i, t);
            if (std::abs(Y_expected(i, t) - want) > 1e-10 * std::max(1.0, std::abs(want)))
                throw DataError("Y_expected inconsistent with c * mu * d at row " + std::to_string(i));
        }
    std::vector<int> seen(static_cast<std::size_t>(rows), 0);
    for (auto s : {SplitKind::Train, SplitKind::Val, SplitKind::Test})
        for (Index r : split.rows(s)) {
            if (r < 0 || r >= rows) throw DataError("split index out of range");
            if (seen[static_cast<std::size_t>(r)]++) throw DataError("split lists overlap");
        }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw DataError("splits do not cover every row");
}

Matrix expected_outcomes(const Dataset& ds, SplitKind split) {
    ds.audit->record(split);
    return rows_of(ds.Y_expected, ds.split.rows(split));
}

Matrix generate_covariates(const SimConfig& cfg) {
    if (cfg.n < 1 || cfg.d < 1) throw ConfigError("generate_covariates: n and d must be >= 1");
    if (cfg.covariate_source == CovariateSource::EmbeddingFile) {
        const Matrix all = read_embedding_csv(cfg.embedding_path);
        if (all.cols() != cfg.d)
            throw DataError(cfg.embedding_path + ": rows have " + std::to_string(all.cols()) + " values, expected d=" +
                            std::to_string(cfg.d));
        if (all.rows() < cfg.n)
            throw DataError(cfg.embedding_path + ": only " + std::to_string(all.rows()) + " rows, need n=" +
                            std::to_string(cfg.n));
        return all.topRows(cfg.n);
    }
    std::mt19937_64 rng(derive_seed(cfg.seed, kCovariates));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix X(cfg.n, cfg.d);
    for (Index i = 0; i < cfg.n; ++i) {
        double norm = 0.0;
        while (norm == 0.0) {
            for (Index j = 0; j < cfg.d; ++j) X(i, j) = normal(rng);
            norm = X.row(i).norm();
        }
        X.row(i) /= norm;
    }
    return X;
}

Matrix read_embedding_csv(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("embedding file not found: " + path.string());
    return csv::read_matrix(path, false);
}

KMeansResult kmeans(const Matrix& X, int clusters, int iters, double tol, std::uint64_t seed) {
    const Index n = X.rows();
    if (clusters < 1) throw ConfigError("kmeans: cluster count must be >= 1");
    if (n < clusters)
        throw InsufficientDataError("kmeans: " + std::to_string(n) + " rows for " + std::to_string(clusters) +
                                    " clusters");
    std::mt19937_64 rng(seed);
    const Index c = clusters;
    Matrix centroids(c, X.cols());

    // k-means++ seeding
    std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::uniform_int_distribution<Index> first(0, n - 1);
    centroids.row(0) = X.row(first(rng));
    for (Index j = 1; j < c; ++j) {
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double dist = (X.row(i) - centroids.row(j - 1)).squaredNorm();
            nearest[static_cast<std::size_t>(i)] = std::min(nearest[static_cast<std::size_t>(i)], dist);
            total += nearest[static_cast<std::size_t>(i)];
        }
        Index pick = 0;
        if (total > 0.0) {
            std::discrete_distribution<Index> weighted(nearest.begin(), nearest.end());
            pick = weighted(rng);
        } else {
            pick = first(rng);
        }
        centroids.row(j) = X.row(pick);
    }

    KMeansResult result;
    std::vector<Index> label(static_cast<std::size_t>(n), 0);
    std::vector<double> dist2(static_cast<std::size_t>(n), 0.0);
    auto assign = [&]() {
        double objective = 0.0;
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < c; ++j) {
                const double dd = (X.row(i) - centroids.row(j)).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = j;
                }
            }
            label[static_cast<std::size_t>(i)] = best;
            dist2[static_cast<std::size_t>(i)] = best_d;
            objective += best_d;
        }
        result.objective.push_back(objective);
    };

    assign();
    for (int it = 0; it < iters; ++it) {
        Matrix sums = Matrix::Zero(c, X.cols());
        std::vector<Index> counts(static_cast<std::size_t>(c), 0);
        for (Index i = 0; i < n; ++i) {
            sums.row(label[static_cast<std::size_t>(i)]) += X.row(i);
            ++counts[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
        }
        Matrix next(c, X.cols());
        for (Index j = 0; j < c; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                next.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
            } else {
                // Re-seed at the point currently worst served by its centroid.
                const auto far = std::max_element(dist2.begin(), dist2.end()) - dist2.begin();
                next.row(j) = X.row(far);
                dist2[static_cast<std::size_t>(far)] = 0.0;
            }
        }
        const double movement = (next - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(next);
        result.iterations = it + 1;
        assign();
        if (movement < tol) break;
    }
    result.centroids = std::move(centroids);
    return result;
}

Matrix select_centroids(const Matrix& X, int k, CentroidMethod method, int kmeans_iters, double kmeans_tol,
                        std::uint64_t seed) {
    const Index wanted = k + 1;
    if (X.rows() < wanted) throw InsufficientDataError("select_centroids: need at least k+1 rows");
    if (method == CentroidMethod::KMeans) return kmeans(X, k + 1, kmeans_iters, kmeans_tol, seed).centroids;
    std::vector<Index> idx(static_cast<std::size_t>(X.rows()));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first k+1 slots are a uniform draw without replacement.
    for (Index j = 0; j < wanted; ++j) {
        std::uniform_int_distribution<Index> pick(j, X.rows() - 1);
        std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(wanted));
    return rows_of(X, idx);
}

OutcomeParams sample_outcome_params(const SimConfig& cfg) {
    std::mt19937_64 rng(derive_seed(cfg.seed, kOutcomeParams));
    std::normal_distribution<double> mu_dist(cfg.mu_prior.mean, cfg.mu_prior.sd);
    std::normal_distribution<double> sigma_dist(cfg.sigma_prior.mean, cfg.sigma_prior.sd);
    OutcomeParams p{Vector(cfg.k), Vector(cfg.k)};
    for (int t = 0; t < cfg.k; ++t) {
        p.mu(t) = mu_dist(rng);
        p.sigma(t) = std::max(kMinSigma, sigma_dist(rng));
    }
    return p;
}

Matrix preference_matrix(const Matrix& X, const Matrix& Z) {
    if (X.cols() != Z.cols()) throw ShapeError("covariates and centroids differ in dimension");
    if (Z.rows() < 2) throw ShapeError("need at least one treatment centroid plus the shared centroid");
    const Index k = Z.rows() - 1;
    Matrix pref = X * Z.topRows(k).transpose();
    pref.colwise() += X * Z.row(k).transpose();
    return pref;
}

PotentialOutcomes potential_outcomes(const Matrix& X, const Matrix& Z, const Vector& mu, const Vector& sigma,
                                     double c, std::uint64_t seed) {
    const Matrix pref = preference_matrix(X, Z);
    const Index k = pref.cols();
    if (mu.size() != k || sigma.size() != k) throw ShapeError("mu/sigma length must equal k");
    PotentialOutcomes out{Matrix(X.rows(), k), Matrix(X.rows(), k)};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> standard(0.0, 1.0);
    for (Index i = 0; i < X.rows(); ++i) {
        for (Index t = 0; t < k; ++t) {
            const double ytilde = mu(t) + sigma(t) * standard(rng);
            out.sampled(i, t) = c * ytilde * pref(i, t);
            out.expected(i, t) = c * mu(t) * pref(i, t);
        }
    }
    return out;
}

Matrix assignment_probabilities(const Matrix& Y, const std::vector<double>& kappa) {
    if (static_cast<Index>(kappa.size()) != Y.cols()) throw ShapeError("kappa length must equal k");
    for (double v : kappa)
        if (!(v > 0.0)) throw ConfigError("kappa entries must be positive");
    if (!Y.allFinite()) throw NumericError("assign_treatments: non-finite outcomes");
    Matrix p(Y.rows(), Y.cols());
    for (Index i = 0; i < Y.rows(); ++i) {
        double top = -std::numeric_limits<double>::infinity();
        for (Index t = 0; t < Y.cols(); ++t) top = std::max(top, kappa[static_cast<std::size_t>(t)] * Y(i, t));
        double total = 0.0;
        for (Index t = 0; t < Y.cols(); ++t) {
            p(i, t) = std::exp(kappa[static_cast<std::size_t>(t)] * Y(i, t) - top);
            total += p(i, t);
        }
        p.row(i) /= total;
    }
    return p;
}

std::vector<int> assign_treatments(const Matrix& Y, const std::vector<double>& kappa, std::uint64_t seed) {
    const Matrix p = assignment_probabilities(Y, kappa);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<int> t_obs(static_cast<std::size_t>(Y.rows()));
    for (Index i = 0; i < Y.rows(); ++i) {
        const double draw = u(rng);
        double acc = 0.0;
        int chosen = static_cast<int>(Y.cols()) - 1;
        for (Index t = 0; t < Y.cols(); ++t) {
            acc += p(i, t);
            if (draw < acc) {
                chosen = static_cast<int>(t);
                break;
            }
        }
        t_obs[static_cast<std::size_t>(i)] = chosen;
    }
    return t_obs;
}

Split make_split(Index n, std::uint64_t seed) {
    if (n < 3) throw ConfigError("make_split: need at least 3 rows for train/val/test");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const Index n_val = std::max<Index>(1, n * 15 / 100);
    const Index n_test = std::max<Index>(1, n * 15 / 100);
    const Index n_train = n - n_val - n_test;
    Split s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    s.test.assign(idx.begin() + n_train + n_val, idx.end());
    for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
    return s;
}

Dataset simulate_dataset(const SimConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.config = cfg;
    ds.config.kappa = cfg.kappa_or_default();
    ds.X = generate_covariates(cfg);
    ds.Z = select_centroids(ds.X, cfg.k, cfg.centroid_method, cfg.kmeans_iters, cfg.kmeans_tol,
                            derive_seed(cfg.seed, kCentroids));
    ds.T_emb = ds.Z.topRows(cfg.k);
    const auto params = sample_outcome_params(cfg);
    ds.mu = params.mu;
    ds.sigma = params.sigma;
    auto outcomes = potential_outcomes(ds.X, ds.Z, ds.mu, ds.sigma, cfg.c, derive_seed(cfg.seed, kNoise));
    ds.Y_sampled = std::move(outcomes.sampled);
    ds.Y_expected = std::move(outcomes.expected);
    ds.t_obs = assign_treatments(ds.Y_sampled, ds.config.kappa, derive_seed(cfg.seed, kAssignment));
    ds.y_factual.resize(ds.n());
    for (Index i = 0; i < ds.n(); ++i) ds.y_factual(i) = ds.Y_sampled(i, ds.t_obs[static_cast<std::size_t>(i)]);
    ds.split = make_split(ds.n(), derive_seed(cfg.seed, kSplit));
    return ds;
}

const std::vector<std::string> kDatasetFiles = {
    "covariates.csv", "centroids.csv",  "treatment_embeddings.csv", "mu_sigma.csv",
    "y_sampled.csv",  "y_expected.csv", "assignments.csv",
};

void write_dataset_dir(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {
        {"schema_version", "1"},
        {"config", to_json(ds.config)},
        {"n", ds.n()},
        {"d", ds.d()},
        {"k", ds.k()},
        {"seed", ds.config.seed},
        {"treatment_index_base", 1},
        {"split", {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}}},
        {"files", kDatasetFiles},
    };
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
        out << manifest.dump(2) << '\n';
    }
    csv::write_matrix(dir / "covariates.csv", ds.X);
    csv::write_matrix(dir / "centroids.csv", ds.Z);
    csv::write_matrix(dir / "treatment_embeddings.csv", ds.T_emb);
    Matrix ms(ds.k(), 2);
    ms.col(0) = ds.mu;
    ms.col(1) = ds.sigma;
    csv::write_matrix(dir / "mu_sigma.csv", ms, {"mu", "sigma"});
    csv::write_matrix(dir / "y_sampled.csv", ds.Y_sampled);
    csv::write_matrix(dir / "y_expected.csv", ds.Y_expected);

    std::ofstream out(dir / "assignments.csv", std::ios::binary);
    if (!out) throw DataError("cannot write assignments.csv");
    out << "index,t_obs,y_factual\n";
    for (Index i = 0; i < ds.n(); ++i)
        out << i << ',' << ds.t_obs[static_cast<std::size_t>(i)] + 1 << ',' << csv::format_double(ds.y_factual(i))
            << '\n';
}

Dataset read_dataset_dir(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("dataset manifest not found: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
    Dataset ds;
    try {
        ds.config = sim_config_from_json(manifest.at("config"), "manifest.config");
        const auto& split = manifest.at("split");
        ds.split.train = split.at("train").get<std::vector<Index>>();
        ds.split.val = split.at("val").get<std::vector<Index>>();
        ds.split.test = split.at("test").get<std::vector<Index>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
    for (const auto& f : kDatasetFiles)
        if (!std::filesystem::exists(dir / f)) throw DataError("dataset file missing: " + (dir / f).string());

    ds.X = csv::read_matrix(dir / "covariates.csv");
    ds.Z = csv::read_matrix(dir / "centroids.csv");
    ds.T_emb = csv::read_matrix(dir / "treatment_embeddings.csv");
    const Matrix ms = csv::read_matrix(dir / "mu_sigma.csv", true);
    if (ms.cols() != 2) throw DataError("mu_sigma.csv must have two columns");
    ds.mu = ms.col(0);
    ds.sigma = ms.col(1);
    ds.Y_sampled = csv::read_matrix(dir / "y_sampled.csv");
    ds.Y_expected = csv::read_matrix(dir / "y_expected.csv");
    const Matrix assignments = csv::read_matrix(dir / "assignments.csv", true);
    if (assignments.cols() != 3) throw DataError("assignments.csv must have three columns");
    ds.t_obs.resize(static_cast<std::size_t>(assignments.rows()));
    ds.y_factual.resize(assignments.rows());
    for (Index i = 0; i < assignments.rows(); ++i) {
        ds.t_obs[static_cast<std::size_t>(i)] = static_cast<int>(assignments(i, 1)) - 1;
        ds.y_factual(i) = assignments(i, 2);
    }
    if (ds.n() != manifest.value("n", Index{-1}) || ds.d() != manifest.value("d", Index{-1}) ||
        ds.k() != manifest.value("k", -1))
        throw DataError("dataset files disagree with manifest dimensions");
    ds.validate();
    return ds;
}

}  // namespace itebench::sim
