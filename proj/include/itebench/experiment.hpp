#pragma once

// Experiment drivers behind the itebench command line: simulate, train,
// evaluate, sweep and report. Every command throws the typed errors from
// errors.hpp; exit_code_for maps them onto distinct process exit codes.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "itebench/eval.hpp"
#include "itebench/model.hpp"
#include "itebench/simulator.hpp"

namespace itebench::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    kOk = 0,
    kUsageError = 1,
    kConfigError = 2,
    kDataError = 3,
    kNumericError = 4,
    kInternalError = 5,
};

int exit_code_for(const std::exception& e);

struct ExperimentConfig {
    std::string label;  // row name in reports; defaults to the variant
    sim::SimConfig sim;
    model::TrainConfig train;
    model::ModelShape model;  // input/treatment dims and k are taken from the data
    int repeats = 1;
    std::optional<int> zero_shot;  // 0-based

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const fs::path& path);

// 16 hex digits of FNV-1a over the canonical JSON dump.
std::string config_hash(const nlohmann::json& doc);

// Overrides applied after the config file is read.
struct Overrides {
    std::optional<std::uint64_t> seed;  // sets both sim.seed and train.seed
    std::optional<int> epochs_max;
    std::optional<model::Variant> variant;
};

void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

// Shape completed with the dataset's dimensions.
model::ModelShape shape_for(const ExperimentConfig& cfg, const sim::Dataset& ds);

// Creates `dir`, refusing an existing non-empty directory unless force is set.
void prepare_output_dir(const fs::path& dir, bool force);

void write_json_atomic(const fs::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const fs::path& path);

sim::Dataset cmd_simulate(const ExperimentConfig& cfg, const fs::path& out, bool force, std::ostream& log);

struct TrainOutput {
    fs::path checkpoint;
    fs::path history;
    model::TrainedModel trained;
};

TrainOutput cmd_train(const fs::path& dataset_dir, const ExperimentConfig& cfg, const fs::path& out, bool force,
                      std::ostream& log);

eval::EvalReport cmd_evaluate(const fs::path& dataset_dir, const fs::path& checkpoint, sim::SplitKind split,
                              std::optional<int> zero_shot, const fs::path& out, bool force, std::ostream& log);

// One sweep trial (or one experiment) over `repeats` seeds.
struct RunRecord {
    std::string label;
    std::string method;  // variant name
    std::string config_hash;
    nlohmann::json config;
    int k = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> val_l1;               // best validation factual MSE per seed
    std::vector<eval::EvalReport> reports;    // test-split reports; winner only
    std::optional<eval::MeanStd> aggregate;   // over reports' sqrt_pehe
    std::optional<eval::MeanStd> aggregate_zs;
    double wall_clock_s = 0.0;
    std::vector<std::string> artifacts;
    std::string status = "ok";  // or "diverged"
    std::string error;

    double mean_val_l1() const;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& doc);

// The hyperparameter grid; each axis lists candidate values.
struct SweepGrid {
    std::vector<int> phi_layers{4, 6, 8};
    std::vector<int> phi_nodes{200, 400, 600};
    std::vector<int> psi_layers{4, 6, 8};
    std::vector<int> psi_nodes{200, 400, 600};
    std::vector<int> head_layers{4, 6, 8};
    std::vector<int> head_nodes{200, 400, 600};
    std::vector<double> alpha{0.5, 1.0};
    std::vector<double> beta{0.5};
    std::vector<int> batch_size{256, 512};
    std::vector<double> lr{0.1, 0.01};
    std::vector<double> lr_decay{0.1};
    std::vector<int> scheduler_step{10, 15};
    std::vector<double> weight_decay{1e-4};
    std::vector<double> dropout{0.1};
    std::vector<nn::Activation> activation{nn::Activation::Tanh, nn::Activation::Elu};

    std::size_t size() const;
    // Applies grid point `index` (mixed radix, first axis slowest) to a base config.
    ExperimentConfig point(const ExperimentConfig& base, std::size_t index) const;
};

struct SweepSpec {
    ExperimentConfig base;
    SweepGrid grid;
};

SweepSpec sweep_spec_from_json(const nlohmann::json& doc);

// Sorted, distinct grid indices; all of them when max_trials is absent or
// at least the grid size.
std::vector<std::size_t> choose_trials(std::size_t grid_size, std::optional<std::size_t> max_trials,
                                       std::uint64_t seed);

struct SweepSummary {
    std::vector<RunRecord> trials;  // grid order
    std::vector<std::size_t> ranking;  // indices into trials, best validation first
    std::optional<std::size_t> winner;
    RunRecord winner_record;  // trial record plus test reports
    long test_reads_before_selection = 0;
};

SweepSummary cmd_sweep(const SweepSpec& spec, std::optional<std::size_t> max_trials, int threads,
                       const fs::path& out, bool force, std::ostream& log);

struct ReportRow {
    std::string label;
    eval::MeanStd sqrt_pehe;
    std::optional<eval::MeanStd> sqrt_pehe_zs;
    std::size_t seeds = 0;
};

// Rows pooled per label, sorted by mean sqrt PEHE ascending.
std::vector<ReportRow> aggregate_records(const std::vector<RunRecord>& records);
std::string render_report_table(const std::vector<ReportRow>& rows);

std::vector<ReportRow> cmd_report(const std::vector<fs::path>& record_paths, const std::optional<fs::path>& csv_out,
                                  std::ostream& log);

// ITE_BENCH_THREADS, else hardware concurrency (at least 1).
int default_threads();

}  // namespace itebench::cli
