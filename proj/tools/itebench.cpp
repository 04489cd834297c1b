// itebench: simulate, train, evaluate, sweep and report ITE experiments.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "itebench/errors.hpp"
#include "itebench/experiment.hpp"

using namespace itebench;
namespace fs = std::filesystem;

namespace {

cli::ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? cli::ExperimentConfig{} : cli::load_experiment_config(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Individual treatment effect benchmark with high-dimensional treatment features"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    int threads = cli::default_threads();
    app.add_option("--seed", seed, "Seed for simulation and training (overrides the config)");
    app.add_option("--out", out, "Output directory");
    app.add_flag("--force", force, "Overwrite a non-empty output directory");
    app.add_option("--threads", threads, "Sweep worker threads (default: ITE_BENCH_THREADS or core count)")
        ->check(CLI::PositiveNumber);

    std::string config_path;
    std::string dataset_dir;
    std::string checkpoint;
    std::string split = "test";
    std::optional<int> zero_shot;
    std::optional<int> epochs_max;
    std::string variant;
    std::optional<std::size_t> max_trials;
    std::vector<std::string> records;
    std::string csv_out;

    auto* simulate = app.add_subcommand("simulate", "Generate a semi-synthetic dataset directory");
    simulate->add_option("config", config_path, "Experiment config (JSON)")->required();

    auto* train = app.add_subcommand("train", "Train a model on a dataset directory");
    train->add_option("dataset", dataset_dir, "Dataset directory")->required();
    train->add_option("--config", config_path, "Experiment config (JSON)");
    train->add_option("--variant", variant, "nice or tarnet")->check(CLI::IsMember({"nice", "tarnet"}));
    train->add_option("--epochs-max", epochs_max, "Maximum epochs")->check(CLI::NonNegativeNumber);

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint against ground-truth outcomes");
    evaluate->add_option("dataset", dataset_dir, "Dataset directory")->required();
    evaluate->add_option("checkpoint", checkpoint, "Model checkpoint (JSON)")->required();
    evaluate->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    evaluate->add_option("--zero-shot", zero_shot, "Also report zero-shot PEHE for treatment z (1-based)");

    auto* sweep = app.add_subcommand("sweep", "Hyperparameter grid search selected on validation loss");
    sweep->add_option("grid", config_path, "Sweep config (JSON with 'base' and 'grid')")->required();
    sweep->add_option("--max-trials", max_trials, "Random subset size of the grid");

    auto* report = app.add_subcommand("report", "Aggregate run records into a mean ± std table");
    report->add_option("records", records, "Run record JSON files")->required();
    report->add_option("--csv", csv_out, "Also write the table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kOk : cli::kUsageError;
    }

    try {
        cli::Overrides overrides;
        overrides.seed = seed;
        overrides.epochs_max = epochs_max;
        if (!variant.empty()) overrides.variant = model::variant_from_string(variant);

        if (*simulate) {
            auto cfg = config_or_default(config_path);
            cli::apply_overrides(cfg, overrides);
            cli::cmd_simulate(cfg, out, force, std::cout);
        } else if (*train) {
            auto cfg = config_or_default(config_path);
            cli::apply_overrides(cfg, overrides);
            const auto result = cli::cmd_train(dataset_dir, cfg, out, force, std::cout);
            std::cout << "wrote " << result.checkpoint.string() << " and " << result.history.string() << '\n';
        } else if (*evaluate) {
            std::optional<int> z;
            if (zero_shot) z = *zero_shot - 1;
            cli::cmd_evaluate(dataset_dir, checkpoint, sim::split_from_string(split), z, out, force, std::cout);
        } else if (*sweep) {
            auto spec = cli::sweep_spec_from_json(cli::read_json(config_path));
            cli::apply_overrides(spec.base, overrides);
            cli::cmd_sweep(spec, max_trials, threads, out, force, std::cout);
        } else if (*report) {
            std::vector<fs::path> paths(records.begin(), records.end());
            std::optional<fs::path> csv;
            if (!csv_out.empty()) csv = csv_out;
            cli::cmd_report(paths, csv, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::exit_code_for(e);
    }
    return cli::kOk;
}
