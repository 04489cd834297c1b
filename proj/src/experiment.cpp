#include "itebench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "itebench/csv.hpp"
#include "itebench/errors.hpp"
#include "itebench/rng.hpp"

namespace itebench::cli {

using Index = Eigen::Index;

namespace {

template <typename T>
std::vector<T> axis(const nlohmann::json& grid, const char* key, std::vector<T> fallback) {
    if (!grid.contains(key)) return fallback;
    const auto& v = grid.at(key);
    try {
        std::vector<T> out = v.is_array() ? v.get<std::vector<T>>() : std::vector<T>{v.get<T>()};
        if (out.empty()) throw ConfigError(std::string("grid.") + key + ": axis must not be empty");
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("grid.") + key + ": " + e.what());
    }
}

bool is_non_empty_dir(const fs::path& p) {
    return fs::exists(p) && fs::is_directory(p) && !fs::is_empty(p);
}

void refuse_same_dir(const fs::path& out, const fs::path& input) {
    std::error_code ec;
    if (fs::exists(out) && fs::equivalent(out, input, ec))
        throw ConfigError("output directory must differ from the input directory " + input.string());
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
    if (dynamic_cast<const DataError*>(&e)) return kDataError;
    if (dynamic_cast<const InsufficientDataError*>(&e)) return kDataError;
    if (dynamic_cast<const ShapeError*>(&e)) return kDataError;
    if (dynamic_cast<const NumericError*>(&e)) return kNumericError;
    return kInternalError;
}

void ExperimentConfig::validate() const {
    sim.validate();
    train.validate();
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (zero_shot && (*zero_shot < 0 || *zero_shot >= sim.k))
        throw ConfigError("zero_shot: treatment " + std::to_string(*zero_shot + 1) + " outside 1.." +
                          std::to_string(sim.k));
    auto probe = model;
    probe.input_dim = std::max<Index>(1, sim.d);
    probe.treatment_dim = std::max<Index>(1, sim.d);
    probe.k = sim.k;
    probe.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
    auto shape = model::to_json(c.model);
    for (const char* derived : {"input_dim", "treatment_dim", "k"}) shape.erase(derived);
    nlohmann::json doc = {{"schema_version", "1"},
                          {"label", c.label},
                          {"sim", sim::to_json(c.sim)},
                          {"train", model::to_json(c.train)},
                          {"model", std::move(shape)},
                          {"repeats", c.repeats}};
    if (c.zero_shot) doc["zero_shot"] = *c.zero_shot + 1;
    return doc;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
    ExperimentConfig c;
    if (doc.contains("sim")) c.sim = sim::sim_config_from_json(doc.at("sim"), "sim");
    if (doc.contains("train")) c.train = model::train_config_from_json(doc.at("train"), "train");
    if (doc.contains("model")) c.model = model::model_shape_from_json(doc.at("model"), "model");
    try {
        c.repeats = doc.value("repeats", 1);
        if (doc.contains("zero_shot") && !doc.at("zero_shot").is_null()) c.zero_shot = doc.at("zero_shot").get<int>() - 1;
        c.label = doc.value("label", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    if (c.label.empty()) c.label = model::to_string(c.model.variant);
    return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    return experiment_config_from_json(read_json(path));
}

std::string config_hash(const nlohmann::json& doc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : doc.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
    if (o.seed) {
        cfg.sim.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    if (o.epochs_max) cfg.train.epochs_max = *o.epochs_max;
    if (o.variant) {
        const bool default_label = cfg.label == model::to_string(cfg.model.variant);
        cfg.model.variant = *o.variant;
        if (default_label) cfg.label = model::to_string(*o.variant);
    }
}

model::ModelShape shape_for(const ExperimentConfig& cfg, const sim::Dataset& ds) {
    auto shape = cfg.model;
    shape.input_dim = ds.d();
    shape.treatment_dim = ds.T_emb.cols();
    shape.k = ds.k();
    return shape;
}

void prepare_output_dir(const fs::path& dir, bool force) {
    if (dir.empty()) throw ConfigError("an output directory is required (--out)");
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (is_non_empty_dir(dir) && !force)
        throw ConfigError(dir.string() + " is not empty; pass --force to overwrite");
    fs::create_directories(dir);
}

void write_json_atomic(const fs::path& path, const nlohmann::json& doc) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << doc.dump(2) << '\n';
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

sim::Dataset cmd_simulate(const ExperimentConfig& cfg, const fs::path& out, bool force, std::ostream& log) {
    cfg.sim.validate();
    prepare_output_dir(out, force);
    auto ds = sim::simulate_dataset(cfg.sim);
    sim::write_dataset_dir(ds, out);
    std::vector<long> counts(static_cast<std::size_t>(ds.k()), 0);
    for (int t : ds.t_obs) ++counts[static_cast<std::size_t>(t)];
    log << "dataset " << out.string() << ": n=" << ds.n() << " d=" << ds.d() << " k=" << ds.k()
        << " seed=" << ds.config.seed << " split=" << ds.split.train.size() << "/" << ds.split.val.size() << "/"
        << ds.split.test.size() << "\nobserved treatment counts:";
    for (std::size_t t = 0; t < counts.size(); ++t) log << ' ' << (t + 1) << ':' << counts[t];
    log << '\n';
    return ds;
}

TrainOutput cmd_train(const fs::path& dataset_dir, const ExperimentConfig& cfg, const fs::path& out, bool force,
                      std::ostream& log) {
    cfg.train.validate();
    const auto ds = sim::read_dataset_dir(dataset_dir);
    refuse_same_dir(out, dataset_dir);
    prepare_output_dir(out, force);
    const auto shape = shape_for(cfg, ds);

    TrainOutput result;
    result.checkpoint = out / "checkpoint.json";
    result.history = out / "history.json";
    try {
        result.trained = model::train(ds, shape, cfg.train);
    } catch (const model::DivergenceError& e) {
        model::TrainedModel partial;
        partial.config = cfg.train;
        partial.history = e.history;
        auto doc = model::history_json(partial);
        doc["diverged"] = {{"epoch", e.epoch}, {"batch", e.batch}, {"message", e.what()}};
        write_json_atomic(result.history, doc);
        throw;
    }
    write_json_atomic(result.checkpoint, model::checkpoint_json(result.trained));
    write_json_atomic(result.history, model::history_json(result.trained));
    const auto& tm = result.trained;
    log << "trained " << model::to_string(shape.variant) << " for " << tm.history.size() << " epochs; best epoch "
        << tm.best_epoch;
    if (tm.best_epoch >= 0) log << " val_L1 " << tm.history[static_cast<std::size_t>(tm.best_epoch)].val_l1;
    log << " (initial " << tm.initial_val_l1 << ")\n";
    return result;
}

eval::EvalReport cmd_evaluate(const fs::path& dataset_dir, const fs::path& checkpoint, sim::SplitKind split,
                              std::optional<int> zero_shot, const fs::path& out, bool force, std::ostream& log) {
    const auto ds = sim::read_dataset_dir(dataset_dir);
    const auto tm = model::checkpoint_from_json(read_json(checkpoint));
    if (tm.model.k() != ds.k())
        throw DataError("checkpoint has k=" + std::to_string(tm.model.k()) + ", dataset has k=" +
                        std::to_string(ds.k()));
    if (zero_shot && (*zero_shot < 0 || *zero_shot >= ds.k()))
        throw ConfigError("--zero-shot " + std::to_string(*zero_shot + 1) + " outside 1.." + std::to_string(ds.k()));
    const auto report = eval::evaluate(tm.model, ds, split, zero_shot);
    if (!out.empty()) {
        refuse_same_dir(out, dataset_dir);
        prepare_output_dir(out, force);
        write_json_atomic(out / "report.json", eval::to_json(report));
    }
    log << eval::render_report(report);
    return report;
}

double RunRecord::mean_val_l1() const {
    if (val_l1.empty()) return std::numeric_limits<double>::infinity();
    return std::accumulate(val_l1.begin(), val_l1.end(), 0.0) / static_cast<double>(val_l1.size());
}

nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& rep : r.reports) reports.push_back(eval::to_json(rep));
    nlohmann::json doc = {{"schema_version", "1"},
                          {"label", r.label},
                          {"method", r.method},
                          {"config_hash", r.config_hash},
                          {"config", r.config},
                          {"k", r.k},
                          {"seeds", r.seeds},
                          {"val_L1", r.val_l1},
                          {"reports", std::move(reports)},
                          {"wall_clock_s", r.wall_clock_s},
                          {"artifacts", r.artifacts},
                          {"status", r.status}};
    if (!r.error.empty()) doc["error"] = r.error;
    if (r.aggregate)
        doc["aggregate"] = {{"mean_sqrt_pehe", r.aggregate->mean},
                            {"std_sqrt_pehe", r.aggregate->std},
                            {"std_convention", "population"}};
    if (r.aggregate_zs)
        doc["aggregate_zero_shot"] = {{"mean_sqrt_pehe_zs", r.aggregate_zs->mean},
                                      {"std_sqrt_pehe_zs", r.aggregate_zs->std},
                                      {"std_convention", "population"}};
    return doc;
}

RunRecord run_record_from_json(const nlohmann::json& doc) {
    RunRecord r;
    try {
        r.label = doc.at("label").get<std::string>();
        r.method = doc.value("method", std::string{});
        r.config_hash = doc.value("config_hash", std::string{});
        r.config = doc.value("config", nlohmann::json::object());
        r.k = doc.at("k").get<int>();
        r.seeds = doc.value("seeds", std::vector<std::uint64_t>{});
        r.val_l1 = doc.value("val_L1", std::vector<double>{});
        for (const auto& rep : doc.at("reports")) r.reports.push_back(eval::eval_report_from_json(rep));
        r.wall_clock_s = doc.value("wall_clock_s", 0.0);
        r.artifacts = doc.value("artifacts", std::vector<std::string>{});
        r.status = doc.value("status", std::string{"ok"});
        r.error = doc.value("error", std::string{});
        if (doc.contains("aggregate"))
            r.aggregate = eval::MeanStd{doc["aggregate"].at("mean_sqrt_pehe").get<double>(),
                                        doc["aggregate"].at("std_sqrt_pehe").get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed run record: ") + e.what());
    }
    return r;
}

std::size_t SweepGrid::size() const {
    return phi_layers.size() * phi_nodes.size() * psi_layers.size() * psi_nodes.size() * head_layers.size() *
           head_nodes.size() * alpha.size() * beta.size() * batch_size.size() * lr.size() * lr_decay.size() *
           scheduler_step.size() * weight_decay.size() * dropout.size() * activation.size();
}

ExperimentConfig SweepGrid::point(const ExperimentConfig& base, std::size_t index) const {
    if (index >= size()) throw ConfigError("grid index out of range");
    // Peel digits from the last axis (fastest) to the first.
    auto take = [&index](const auto& values) {
        const auto& v = values[index % values.size()];
        index /= values.size();
        return v;
    };
    ExperimentConfig c = base;
    c.model.activation = take(activation);
    c.model.dropout_rate = take(dropout);
    c.train.optim.weight_decay = take(weight_decay);
    c.train.optim.scheduler_step = take(scheduler_step);
    c.train.optim.lr_decay = take(lr_decay);
    c.train.optim.base_lr = take(lr);
    c.train.batch_size = take(batch_size);
    c.train.beta = take(beta);
    c.train.alpha = take(alpha);
    c.model.head_nodes = take(head_nodes);
    c.model.head_layers = take(head_layers);
    c.model.psi_nodes = take(psi_nodes);
    c.model.psi_layers = take(psi_layers);
    c.model.phi_nodes = take(phi_nodes);
    c.model.phi_layers = take(phi_layers);
    return c;
}

SweepSpec sweep_spec_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ConfigError("sweep config must be a JSON object");
    SweepSpec spec;
    spec.base = experiment_config_from_json(doc.value("base", nlohmann::json::object()));
    const auto grid = doc.value("grid", nlohmann::json::object());
    if (!grid.is_object()) throw ConfigError("grid: expected an object of axes");
    static const std::vector<std::string> known = {
        "phi_layers", "phi_nodes",  "psi_layers",     "psi_nodes",     "head_layers",
        "head_nodes", "alpha",      "beta",           "batch_size",    "lr",
        "lr_decay",   "scheduler_step", "weight_decay", "dropout",     "activation"};
    for (const auto& [key, _] : grid.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("grid." + key + ": unknown axis");
    auto& g = spec.grid;
    g.phi_layers = axis(grid, "phi_layers", g.phi_layers);
    g.phi_nodes = axis(grid, "phi_nodes", g.phi_nodes);
    g.psi_layers = axis(grid, "psi_layers", g.psi_layers);
    g.psi_nodes = axis(grid, "psi_nodes", g.psi_nodes);
    g.head_layers = axis(grid, "head_layers", g.head_layers);
    g.head_nodes = axis(grid, "head_nodes", g.head_nodes);
    g.alpha = axis(grid, "alpha", g.alpha);
    g.beta = axis(grid, "beta", g.beta);
    g.batch_size = axis(grid, "batch_size", g.batch_size);
    g.lr = axis(grid, "lr", g.lr);
    g.lr_decay = axis(grid, "lr_decay", g.lr_decay);
    g.scheduler_step = axis(grid, "scheduler_step", g.scheduler_step);
    g.weight_decay = axis(grid, "weight_decay", g.weight_decay);
    g.dropout = axis(grid, "dropout", g.dropout);
    if (grid.contains("activation")) {
        g.activation.clear();
        for (const auto& name : axis<std::string>(grid, "activation", {}))
            g.activation.push_back(nn::activation_from_string(name));
    }
    return spec;
}

std::vector<std::size_t> choose_trials(std::size_t grid_size, std::optional<std::size_t> max_trials,
                                       std::uint64_t seed) {
    if (grid_size == 0) throw ConfigError("sweep grid is empty");
    std::vector<std::size_t> all(grid_size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (!max_trials || *max_trials >= grid_size) return all;
    if (*max_trials == 0) throw ConfigError("--max-trials must be >= 1");
    std::mt19937_64 rng(derive_seed(seed, 31));
    std::vector<std::size_t> picked;
    std::sample(all.begin(), all.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(*max_trials), rng);
    std::sort(picked.begin(), picked.end());
    return picked;
}

namespace {

struct PreparedData {
    std::vector<sim::Dataset> datasets;  // one per repeat
    std::vector<std::uint64_t> train_seeds;
};

RunRecord run_trial(const ExperimentConfig& cfg, const PreparedData& data, std::size_t index,
                    std::vector<model::NiceModel>* models) {
    RunRecord rec;
    rec.label = cfg.label;
    rec.method = model::to_string(cfg.model.variant);
    rec.config = to_json(cfg);
    rec.config["grid_index"] = index;
    rec.config_hash = config_hash(rec.config);
    rec.k = cfg.sim.k;
    const auto start = std::chrono::steady_clock::now();
    try {
        for (std::size_t r = 0; r < data.datasets.size(); ++r) {
            const auto& ds = data.datasets[r];
            auto tcfg = cfg.train;
            tcfg.seed = data.train_seeds[r];
            const auto shape = shape_for(cfg, ds);
            model::TrainedModel tm;
            if (cfg.zero_shot) {
                std::vector<Index> tr, va;
                for (Index i : ds.split.train)
                    if (ds.t_obs[static_cast<std::size_t>(i)] != *cfg.zero_shot) tr.push_back(i);
                for (Index i : ds.split.val)
                    if (ds.t_obs[static_cast<std::size_t>(i)] != *cfg.zero_shot) va.push_back(i);
                tm = model::train_on_rows(ds, tr, va, shape, tcfg);
            } else {
                tm = model::train(ds, shape, tcfg);
            }
            rec.seeds.push_back(tcfg.seed);
            rec.val_l1.push_back(tm.best_epoch >= 0 ? tm.history[static_cast<std::size_t>(tm.best_epoch)].val_l1
                                                    : tm.initial_val_l1);
            if (models) models->push_back(tm.model);
        }
    } catch (const NumericError& e) {
        rec.status = "diverged";
        rec.error = e.what();
        if (models) models->clear();
    }
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

}  // namespace

SweepSummary cmd_sweep(const SweepSpec& spec, std::optional<std::size_t> max_trials, int threads,
                       const fs::path& out, bool force, std::ostream& log) {
    spec.base.validate();
    const auto indices = choose_trials(spec.grid.size(), max_trials, spec.base.train.seed);
    std::vector<ExperimentConfig> configs;
    configs.reserve(indices.size());
    for (auto idx : indices) {
        auto c = spec.grid.point(spec.base, idx);
        c.validate();
        configs.push_back(std::move(c));
    }
    prepare_output_dir(out, force);
    fs::create_directories(out / "trials");

    PreparedData data;
    for (int r = 0; r < spec.base.repeats; ++r) {
        auto scfg = spec.base.sim;
        scfg.seed = spec.base.sim.seed + static_cast<std::uint64_t>(r);
        data.datasets.push_back(sim::simulate_dataset(scfg));
        data.train_seeds.push_back(spec.base.train.seed + static_cast<std::uint64_t>(r));
    }

    SweepSummary summary;
    summary.trials.resize(configs.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            auto rec = run_trial(configs[i], data, indices[i], nullptr);
            char name[32];
            std::snprintf(name, sizeof name, "trial_%06zu.json", indices[i]);
            rec.artifacts.push_back((out / "trials" / name).string());
            write_json_atomic(out / "trials" / name, to_json(rec));
            {
                std::lock_guard<std::mutex> lock(log_mutex);
                log << "trial " << indices[i] << ": " << rec.status << " mean val_L1 " << rec.mean_val_l1() << '\n';
            }
            summary.trials[i] = std::move(rec);
        }
    };
    const int pool = std::max(1, std::min<int>(threads, static_cast<int>(configs.size())));
    std::vector<std::thread> workers;
    for (int t = 1; t < pool; ++t) workers.emplace_back(worker);
    worker();
    for (auto& w : workers) w.join();

    for (std::size_t i = 0; i < summary.trials.size(); ++i)
        if (summary.trials[i].status == "ok") summary.ranking.push_back(i);
    std::stable_sort(summary.ranking.begin(), summary.ranking.end(), [&](std::size_t a, std::size_t b) {
        return summary.trials[a].mean_val_l1() < summary.trials[b].mean_val_l1();
    });
    for (const auto& ds : data.datasets) summary.test_reads_before_selection += ds.audit->count(sim::SplitKind::Test);

    nlohmann::json ranking = nlohmann::json::array();
    for (auto i : summary.ranking)
        ranking.push_back({{"grid_index", indices[i]},
                           {"config_hash", summary.trials[i].config_hash},
                           {"mean_val_L1", summary.trials[i].mean_val_l1()}});

    nlohmann::json doc = {{"schema_version", "1"},
                          {"grid_size", spec.grid.size()},
                          {"trials_run", configs.size()},
                          {"ranking", ranking},
                          {"test_reads_before_selection", summary.test_reads_before_selection}};
    if (!summary.ranking.empty()) {
        if (summary.test_reads_before_selection != 0)
            throw std::logic_error("test-split ground truth was read before winner selection");
        const std::size_t w = summary.ranking.front();
        summary.winner = w;
        std::vector<model::NiceModel> models;
        auto rec = run_trial(configs[w], data, indices[w], &models);
        if (rec.status != "ok") throw NumericError("winner retraining diverged: " + rec.error);
        std::vector<double> pehes, zs;
        for (std::size_t r = 0; r < models.size(); ++r) {
            auto rep = eval::evaluate(models[r], data.datasets[r], sim::SplitKind::Test, configs[w].zero_shot);
            pehes.push_back(rep.sqrt_pehe);
            if (rep.zero_shot) zs.push_back(rep.zero_shot->sqrt_pehe_zs);
            rec.reports.push_back(std::move(rep));
        }
        rec.aggregate = eval::mean_std(pehes);
        if (!zs.empty()) rec.aggregate_zs = eval::mean_std(zs);
        rec.artifacts.push_back((out / "winner.json").string());
        write_json_atomic(out / "winner.json", to_json(rec));
        doc["winner"] = {{"grid_index", indices[w]},
                         {"config_hash", rec.config_hash},
                         {"mean_val_L1", rec.mean_val_l1()},
                         {"test_sqrt_pehe", {{"mean", rec.aggregate->mean}, {"std", rec.aggregate->std}}}};
        log << "winner: trial " << indices[w] << " test sqrt_PEHE " << eval::format_mean_std(*rec.aggregate, 4)
            << " (population std over " << pehes.size() << " seeds)\n";
        summary.winner_record = std::move(rec);
    } else {
        log << "every trial diverged; no winner\n";
    }
    write_json_atomic(out / "summary.json", doc);
    return summary;
}

std::vector<ReportRow> aggregate_records(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ConfigError("report needs at least one run record");
    const int k = records.front().k;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> pooled;
    std::vector<std::string> order;
    for (const auto& r : records) {
        if (r.k != k)
            throw DataError("refusing to aggregate records with different k (" + std::to_string(k) + " vs " +
                            std::to_string(r.k) + ")");
        if (r.reports.empty()) throw DataError("record '" + r.label + "' carries no evaluation reports");
        if (!pooled.count(r.label)) order.push_back(r.label);
        auto& [values, zs] = pooled[r.label];
        for (const auto& rep : r.reports) {
            values.push_back(rep.sqrt_pehe);
            if (rep.zero_shot) zs.push_back(rep.zero_shot->sqrt_pehe_zs);
        }
    }
    std::vector<ReportRow> rows;
    for (const auto& label : order) {
        const auto& [values, zs] = pooled[label];
        ReportRow row{label, eval::mean_std(values), std::nullopt, values.size()};
        if (!zs.empty()) row.sqrt_pehe_zs = eval::mean_std(zs);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ReportRow& a, const ReportRow& b) { return a.sqrt_pehe.mean < b.sqrt_pehe.mean; });
    return rows;
}

std::string render_report_table(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    char line[200];
    std::snprintf(line, sizeof line, "%-20s %6s  %-22s %-22s\n", "method", "seeds", "sqrt_PEHE", "sqrt_PEHE_ZS");
    out << line;
    for (const auto& r : rows) {
        const std::string zs = r.sqrt_pehe_zs ? eval::format_mean_std(*r.sqrt_pehe_zs) : "-";
        std::snprintf(line, sizeof line, "%-20s %6zu  %-22s %-22s\n", r.label.c_str(), r.seeds,
                      eval::format_mean_std(r.sqrt_pehe).c_str(), zs.c_str());
        out << line;
    }
    out << "(mean ± population std across seeds)\n";
    return out.str();
}

std::vector<ReportRow> cmd_report(const std::vector<fs::path>& record_paths, const std::optional<fs::path>& csv_out,
                                  std::ostream& log) {
    std::vector<RunRecord> records;
    for (const auto& p : record_paths) {
        const auto doc = read_json(p);
        records.push_back(run_record_from_json(doc));
    }
    const auto rows = aggregate_records(records);
    log << render_report_table(rows);
    if (csv_out) {
        std::ofstream out(*csv_out, std::ios::binary);
        if (!out) throw DataError("cannot write " + csv_out->string());
        out << "method,seeds,mean_sqrt_pehe,std_sqrt_pehe,mean_sqrt_pehe_zs,std_sqrt_pehe_zs\n";
        for (const auto& r : rows) {
            out << r.label << ',' << r.seeds << ',' << csv::format_double(r.sqrt_pehe.mean) << ','
                << csv::format_double(r.sqrt_pehe.std) << ',';
            if (r.sqrt_pehe_zs)
                out << csv::format_double(r.sqrt_pehe_zs->mean) << ',' << csv::format_double(r.sqrt_pehe_zs->std);
            else
                out << ',';
            out << '\n';
        }
    }
    return rows;
}

int default_threads() {
    if (const char* env = std::getenv("ITE_BENCH_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace itebench::cli
