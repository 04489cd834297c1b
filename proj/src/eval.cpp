#include "itebench/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "itebench/errors.hpp"

namespace itebench::eval {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("prediction and truth matrices differ in shape");
    if (a.rows() < 1) throw ShapeError("need at least one instance");
    if (a.cols() < 2) throw ShapeError("need k >= 2 treatments");
}

double mean_squared_ite_error(const Matrix& y_hat, const Matrix& y_true, int a, int b) {
    const Vector est = y_hat.col(a) - y_hat.col(b);
    const Vector truth = y_true.col(a) - y_true.col(b);
    return (est - truth).squaredNorm() / static_cast<double>(y_hat.rows());
}

Matrix rows_of(const Matrix& m, const std::vector<Index>& idx) {
    Matrix out(static_cast<Index>(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = m.row(idx[r]);
    return out;
}

}  // namespace

std::map<TreatmentPair, Vector> ite_matrix(const Matrix& Y) {
    if (Y.cols() < 2) throw ShapeError("ite_matrix: need k >= 2 treatments");
    std::map<TreatmentPair, Vector> out;
    for (int a = 1; a < Y.cols(); ++a)
        for (int b = 0; b < a; ++b) out.emplace(TreatmentPair{a, b}, Y.col(a) - Y.col(b));
    return out;
}

Pehe pehe(const Matrix& y_hat, const Matrix& y_true) {
    require_same_shape(y_hat, y_true);
    Pehe out;
    double total = 0.0;
    for (int a = 1; a < y_hat.cols(); ++a)
        for (int b = 0; b < a; ++b) {
            const double e = mean_squared_ite_error(y_hat, y_true, a, b);
            out.per_pair.emplace(TreatmentPair{a, b}, e);
            total += e;
        }
    out.epsilon = total / static_cast<double>(out.per_pair.size());
    out.sqrt_epsilon = std::sqrt(out.epsilon);
    return out;
}

ZeroShotPehe zero_shot_pehe(const Matrix& y_hat, const Matrix& y_true, int z) {
    require_same_shape(y_hat, y_true);
    const int k = static_cast<int>(y_hat.cols());
    if (z < 0 || z >= k)
        throw ConfigError("zero-shot treatment " + std::to_string(z + 1) + " outside 1.." + std::to_string(k));
    double total = 0.0;
    for (int a = 0; a < k; ++a)
        if (a != z) total += mean_squared_ite_error(y_hat, y_true, a, z);
    ZeroShotPehe out;
    out.epsilon = total / static_cast<double>(k - 1);
    out.sqrt_epsilon = std::sqrt(out.epsilon);
    return out;
}

EvalReport evaluate(const model::NiceModel& m, const sim::Dataset& ds, sim::SplitKind split,
                    std::optional<int> zero_shot) {
    if (m.k() != ds.k())
        throw DataError("model has k=" + std::to_string(m.k()) + " heads, dataset has k=" + std::to_string(ds.k()));
    if (zero_shot && (*zero_shot < 0 || *zero_shot >= ds.k()))
        throw ConfigError("zero-shot treatment " + std::to_string(*zero_shot + 1) + " outside 1.." +
                          std::to_string(ds.k()));
    const auto& rows = ds.split.rows(split);
    const Matrix y_hat = model::predict_outcomes(m, rows_of(ds.X, rows), ds.T_emb);
    const Matrix y_true = sim::expected_outcomes(ds, split);
    const auto p = pehe(y_hat, y_true);
    EvalReport r;
    r.sqrt_pehe = p.sqrt_epsilon;
    r.per_pair_pehe = p.per_pair;
    r.n_eval = static_cast<Index>(rows.size());
    r.split = split;
    r.variant = model::to_string(m.variant);
    if (zero_shot) r.zero_shot = ZeroShotEntry{*zero_shot, zero_shot_pehe(y_hat, y_true, *zero_shot).sqrt_epsilon};
    return r;
}

ZeroShotRun run_zero_shot_protocol(const sim::Dataset& ds, const model::ModelShape& shape,
                                   const model::TrainConfig& cfg, int z) {
    if (z < 0 || z >= ds.k())
        throw ConfigError("zero-shot treatment " + std::to_string(z + 1) + " outside 1.." + std::to_string(ds.k()));
    ZeroShotRun run;
    long excluded = 0;
    auto keep = [&](const std::vector<Index>& rows, std::vector<Index>& out) {
        for (Index r : rows) {
            if (ds.t_obs[static_cast<std::size_t>(r)] == z) ++excluded;
            else out.push_back(r);
        }
    };
    keep(ds.split.train, run.train_rows);
    keep(ds.split.val, run.val_rows);
    if (excluded == 0)
        throw DataError("zero-shot treatment " + std::to_string(z + 1) + " has no observed samples to hold out");
    if (run.train_rows.empty()) throw DataError("zero-shot filtering emptied the training split");
    if (run.val_rows.empty()) throw DataError("zero-shot filtering emptied the validation split");
    run.trained = model::train_on_rows(ds, run.train_rows, run.val_rows, shape, cfg);
    run.report = evaluate(run.trained.model, ds, sim::SplitKind::Test, z);
    return run;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& [key, value] : r.per_pair_pehe)
        pairs.push_back({{"a", key.first + 1}, {"b", key.second + 1}, {"pehe", value}});
    nlohmann::json doc = {
        {"schema_version", "1"},
        {"split", sim::to_string(r.split)},
        {"variant", r.variant},
        {"n_eval", r.n_eval},
        {"sqrt_pehe", r.sqrt_pehe},
        {"per_pair_pehe", std::move(pairs)},
    };
    if (r.zero_shot) doc["zero_shot"] = {{"z", r.zero_shot->z + 1}, {"sqrt_pehe_zs", r.zero_shot->sqrt_pehe_zs}};
    return doc;
}

EvalReport eval_report_from_json(const nlohmann::json& doc) {
    EvalReport r;
    try {
        r.split = sim::split_from_string(doc.at("split").get<std::string>());
        r.variant = doc.value("variant", "");
        r.n_eval = doc.at("n_eval").get<Index>();
        r.sqrt_pehe = doc.at("sqrt_pehe").get<double>();
        for (const auto& p : doc.at("per_pair_pehe"))
            r.per_pair_pehe.emplace(TreatmentPair{p.at("a").get<int>() - 1, p.at("b").get<int>() - 1},
                                    p.at("pehe").get<double>());
        if (doc.contains("zero_shot"))
            r.zero_shot = ZeroShotEntry{doc["zero_shot"].at("z").get<int>() - 1,
                                        doc["zero_shot"].at("sqrt_pehe_zs").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed eval report: ") + e.what());
    }
    return r;
}

std::string render_report(const EvalReport& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %-7s %8s %12s", "variant", "split", "n", "sqrt_PEHE");
    out << line;
    if (r.zero_shot) out << "  sqrt_PEHE_ZS(z=" << r.zero_shot->z + 1 << ")";
    out << '\n';
    std::snprintf(line, sizeof line, "%-8s %-7s %8ld %12.4f", r.variant.c_str(), sim::to_string(r.split),
                  static_cast<long>(r.n_eval), r.sqrt_pehe);
    out << line;
    if (r.zero_shot) {
        std::snprintf(line, sizeof line, "  %12.4f", r.zero_shot->sqrt_pehe_zs);
        out << line;
    }
    out << '\n';
    return out.str();
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) throw InsufficientDataError("mean_std: no values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    return {mean, std::sqrt(var)};
}

std::string format_mean_std(const MeanStd& m, int decimals) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.*f ± %.*f", decimals, m.mean, decimals, m.std);
    return buf;
}

}  // namespace itebench::eval
