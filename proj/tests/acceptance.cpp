// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "itebench/eval.hpp"
#include "itebench/experiment.hpp"
#include "itebench/mmd.hpp"
#include "itebench/model.hpp"
#include "itebench/nn.hpp"
#include "itebench/simulator.hpp"
#include "support/oracles.hpp"

using namespace itebench;
namespace fs = std::filesystem;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

using Criterion = std::function<void(Outcome&)>;

// ---- 1. gradient suite ----------------------------------------------------

double mlp_case(std::mt19937_64& rng, int trial) {
    std::uniform_int_distribution<int> width(1, 8), depth(1, 3);
    std::vector<Index> widths;
    for (int l = depth(rng); l > 0; --l) widths.push_back(width(rng));
    const Index in = width(rng);
    auto p = nn::make_mlp({in, widths, trial % 2 ? nn::Activation::Elu : nn::Activation::Tanh, trial % 3 == 0,
                           trial % 4 == 0 ? 0.0 : 0.2},
                          nn::Init::Glorot, rng);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& l : p.layers)
        for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = n(rng);
    Matrix x = oracles::random_matrix(in, 3, rng);
    const Matrix up = oracles::random_matrix(widths.back(), 3, rng);
    const auto mode = nn::ForwardMode::training(static_cast<std::uint64_t>(trial));
    const auto g = nn::mlp_backward(p, nn::mlp_forward(p, x, mode).cache, up);
    auto f = [&] { return nn::mlp_forward(p, x, mode).output.cwiseProduct(up).sum(); };
    double worst = 0.0;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        worst = std::max(worst, oracles::max_gradient_error(f, p.layers[l].weight, g.layers[l].weight));
        worst = std::max(worst, oracles::max_gradient_error(f, p.layers[l].bias, g.layers[l].bias));
    }
    return std::max(worst, oracles::max_gradient_error(f, x, g.input_gradient));
}

double mmd_case(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> size(1, 5), dim(1, 6);
    const Index d = dim(rng);
    Matrix a = oracles::random_matrix(d, size(rng), rng), b = oracles::random_matrix(d, size(rng), rng, 1.5);
    const double bw = 0.5 + std::uniform_real_distribution<double>(0.0, 1.5)(rng);
    const auto g = mmd::mmd2_gradient(a, b, mmd::KernelSpec::fixed(bw));
    auto f = [&] { return mmd::mmd2_biased_raw(a, b, bw); };
    // Same 1e-6 floor as the other cases: entries of ~1e-11 sit below the roundoff of a central difference.
    return std::max(oracles::max_gradient_error(f, a, g.wrt_a, 1e-5),
                    oracles::max_gradient_error(f, b, g.wrt_b, 1e-5));
}

double batch_loss_case(std::mt19937_64& rng, int trial) {
    model::ModelShape s;
    s.input_dim = 3;
    s.treatment_dim = 3;
    s.k = 2 + trial % 2;
    s.phi_layers = s.psi_layers = s.head_layers = 1;
    s.phi_nodes = s.psi_nodes = 2;
    s.head_nodes = 3;
    s.activation = trial % 2 ? nn::Activation::Elu : nn::Activation::Tanh;
    s.dropout_rate = trial % 3 == 0 ? 0.0 : 0.2;
    auto m = model::init_model(s, static_cast<std::uint64_t>(trial));
    model::Batch b;
    b.x = oracles::random_matrix(3, 4, rng);
    const Matrix feats = oracles::random_matrix(3, s.k, rng);
    b.t_feature.resize(3, 4);
    b.y = oracles::random_matrix(4, 1, rng);
    for (Index j = 0; j < 4; ++j) {
        b.t.push_back(static_cast<int>(j % s.k));
        b.t_feature.col(j) = feats.col(j % s.k);
    }
    model::TrainConfig cfg;
    cfg.alpha = 1.0;
    cfg.beta = 0.5;
    // Fixed bandwidth: the gradient treats it as a constant, so the differenced objective must too.
    const auto mode = nn::ForwardMode::training(static_cast<std::uint64_t>(1000 + trial));
    cfg.kernel = mmd::KernelSpec::fixed(0.5 + 0.1 * trial);
    const auto loss = model::batch_loss(m, b, cfg, mode);
    auto f = [&] { return model::batch_loss(m, b, cfg, mode).total; };
    double worst = 0.0;
    auto net = [&](nn::MlpParams& p, const nn::Gradients& g) {
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            worst = std::max(worst, oracles::max_gradient_error(f, p.layers[l].weight, g.layers[l].weight));
            worst = std::max(worst, oracles::max_gradient_error(f, p.layers[l].bias, g.layers[l].bias));
        }
    };
    net(m.phi, loss.grads.phi);
    net(*m.psi, *loss.grads.psi);
    for (std::size_t t = 0; t < m.heads.size(); ++t) net(m.heads[t], loss.grads.heads[t]);
    return worst;
}

void gradient_suite(Outcome& o) {
    std::mt19937_64 rng(2024);
    double mlp = 0, mm = 0, bl = 0;
    for (int t = 0; t < 20; ++t) {
        mlp = std::max(mlp, mlp_case(rng, t));
        mm = std::max(mm, mmd_case(rng));
        bl = std::max(bl, batch_loss_case(rng, t));
    }
    o.detail << "max rel err mlp " << mlp << ", mmd " << mm << ", batch_loss " << bl << " (20 cases each) ";
    o.require(mlp < 1e-4 && mm < 1e-4 && bl < 1e-4, "relative error < 1e-4");
}

// ---- 2. mmd oracle ---------------------------------------------------------

Matrix pts(std::initializer_list<double> xs) {
    Matrix m(1, static_cast<Index>(xs.size()));
    Index j = 0;
    for (double x : xs) m(0, j++) = x;
    return m;
}

void mmd_oracle(Outcome& o) {
    const auto bw1 = mmd::KernelSpec::fixed(1.0);
    const double e05 = std::exp(-0.5), e2 = std::exp(-2.0);
    const double kernel = mmd::rbf_kernel(Vector{{0.0}}, Vector{{1.0}}, 1.0);
    const double two_point = mmd::mmd2_biased(pts({0}), pts({1}), bw1);
    const double three = mmd::treatment_regularization_loss({pts({0, 1, 2}), {0, 1, 2}, 3}, bw1).value;
    const double grad = mmd::mmd2_gradient(pts({0}), pts({1}), bw1).wrt_a(0, 0);
    o.detail << "rbf " << kernel << ", mmd2 " << two_point << ", three-group " << three << ", d/da " << grad << " ";
    o.require(std::abs(kernel - e05) <= 1e-9, "rbf exp(-1/2)");
    o.require(std::abs(two_point - (2 - 2 * e05)) <= 1e-9, "2 - 2e^-1/2");
    o.require(std::abs(three - ((2 - 2 * e05) * 2 + (2 - 2 * e2)) / 3) <= 1e-9, "three-group mean");
    o.require(std::abs(grad - (-2 * e05)) <= 1e-9, "two-point gradient");

    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Matrix a = oracles::random_matrix(1 + t % 5, 1 + t % 4, rng);
        worst = std::max(worst, mmd::mmd2_biased(a, a, mmd::KernelSpec::median()));
        worst = std::max(worst, mmd::mmd2_biased(a, a, mmd::KernelSpec::fixed(0.3 + t)));
    }
    o.detail << "identical-group max " << worst << " ";
    o.require(worst <= 1e-12, "identical groups give 0");
}

// ---- 3. pehe oracle --------------------------------------------------------

void pehe_oracle(Outcome& o) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> nd(1, 3), kd(2, 4), vd(-2, 2);
    double worst = 0.0, worst_cross = 0.0;
    for (int c = 0; c < 100; ++c) {
        const Index n = nd(rng), k = kd(rng);
        Matrix yh(n, k), yt(n, k);
        for (Index i = 0; i < yh.size(); ++i) yh.data()[i] = vd(rng);
        for (Index i = 0; i < yt.size(); ++i) yt.data()[i] = vd(rng);
        const auto p = eval::pehe(yh, yt);
        worst = std::max(worst, std::abs(p.epsilon - oracles::brute_force_pehe(oracles::to_rows(yh), oracles::to_rows(yt))));
        for (int z = 0; z < k; ++z) {
            double sum = 0.0;
            int count = 0;
            for (const auto& [pair, v] : p.per_pair)
                if (pair.first == z || pair.second == z) sum += v, ++count;
            worst_cross = std::max(worst_cross, std::abs(eval::zero_shot_pehe(yh, yt, z).epsilon - sum / count));
        }
    }
    o.detail << "brute-force max diff " << worst << ", zero-shot cross-consistency max diff " << worst_cross << " ";
    o.require(worst <= 1e-12, "brute force");
    o.require(worst_cross <= 1e-12, "cross-consistency");
}

// ---- 4. simulator statistics ----------------------------------------------

void simulator_statistics(Outcome& o) {
    std::mt19937_64 rng(4);
    const Matrix y = oracles::random_matrix(1000, 6, rng, 0.5);
    const Matrix p = sim::assignment_probabilities(y, {10, 10, 10, 50, 100, 10});
    const double sum_err = (p.rowwise().sum().array() - 1.0).abs().maxCoeff();
    o.require(sum_err <= 1e-12, "probabilities sum to 1");

    const int k = 4;
    const Index n = 100000;
    const auto t = sim::assign_treatments(Matrix::Constant(n, k, 0.3), std::vector<double>(k, 10.0), 17);
    std::vector<long> counts(k, 0);
    for (int ti : t) ++counts[static_cast<std::size_t>(ti)];
    const double sd = std::sqrt(n * 0.25 * 0.75);
    double worst_z = 0.0;
    for (long c : counts) worst_z = std::max(worst_z, std::abs(c - n * 0.25) / sd);
    o.require(worst_z <= 3.0, "uniform frequencies within 3 sigma");

    sim::SimConfig cfg;
    cfg.k = 10000;
    cfg.seed = 31;
    const auto params = sim::sample_outcome_params(cfg);
    auto moments = [](const Vector& v) {
        const double m = v.mean();
        return std::pair{m, std::sqrt((v.array() - m).square().mean())};
    };
    const auto [mu_m, mu_sd] = moments(params.mu);
    const auto [sg_m, sg_sd] = moments(params.sigma);
    o.detail << "sum err " << sum_err << ", max |z| " << worst_z << ", mu " << mu_m << "/" << mu_sd << ", sigma " << sg_m
             << "/" << sg_sd << " ";
    o.require(std::abs(mu_m - 0.45) <= 0.005 && std::abs(mu_sd - 0.15) <= 0.005, "mu ~ N(0.45, 0.15)");
    o.require(std::abs(sg_m - 0.1) <= 0.005 && std::abs(sg_sd - 0.05) <= 0.005, "sigma ~ N(0.1, 0.05) after clamp");
    o.require(params.sigma.minCoeff() >= sim::kMinSigma, "sigma clamp");
}

// ---- 5. skew protocol ------------------------------------------------------

void skew_protocol(Outcome& o) {
    sim::SimConfig cfg;
    cfg.n = 20000;
    cfg.d = 512;
    cfg.k = 4;
    cfg.seed = 2023;
    std::vector<double> shares;
    for (double kk : {10.0, 50.0, 100.0}) {
        cfg.kappa = {10, 10, 10, kk};
        const auto ds = sim::simulate_dataset(cfg);
        shares.push_back(std::count(ds.t_obs.begin(), ds.t_obs.end(), cfg.k - 1) / double(cfg.n));
    }
    o.detail << "share of treatment k at kappa_k = 10/50/100: " << shares[0] << " / " << shares[1] << " / " << shares[2]
             << " ";
    o.require(shares[1] > 0.25 && shares[2] > 0.25, "share exceeds 1/k");
    o.require(shares[0] < shares[1] && shares[1] < shares[2], "monotone in kappa_k");
}

// ---- 6 and 7. desk-scale comparisons ---------------------------------------

sim::SimConfig desk_sim(std::uint64_t seed) {
    sim::SimConfig cfg;
    cfg.n = 2000;
    cfg.d = 32;
    cfg.k = 4;
    cfg.c = 5.0;
    cfg.kappa = std::vector<double>(4, 10.0);
    cfg.seed = seed;
    return cfg;
}

model::ModelShape desk_shape(const sim::Dataset& ds, model::Variant v) {
    model::ModelShape s;
    s.input_dim = ds.d();
    s.treatment_dim = ds.T_emb.cols();
    s.k = ds.k();
    s.phi_layers = s.psi_layers = s.head_layers = 2;
    s.phi_nodes = s.psi_nodes = s.head_nodes = 32;
    s.activation = nn::Activation::Tanh;
    s.dropout_rate = 0.1;
    s.variant = v;
    return s;
}

model::TrainConfig desk_train(std::uint64_t seed) {
    model::TrainConfig cfg;
    cfg.alpha = 1.0;
    cfg.beta = 0.5;
    cfg.batch_size = 64;
    cfg.epochs_max = 100;
    cfg.early_stopping_patience = 10;
    cfg.optim.base_lr = 0.1;
    cfg.optim.lr_decay = 0.1;
    cfg.optim.scheduler_step = 15;
    cfg.optim.weight_decay = 1e-4;
    cfg.seed = seed;
    return cfg;
}

constexpr std::uint64_t kDeskSeeds[] = {101, 202, 303, 404, 505};

void headline_direction(Outcome& o) {
    int wins = 0;
    std::vector<double> nice, tarnet;
    for (auto seed : kDeskSeeds) {
        const auto ds = sim::simulate_dataset(desk_sim(seed));
        const auto a = model::train(ds, desk_shape(ds, model::Variant::Nice), desk_train(seed));
        const auto b = model::train(ds, desk_shape(ds, model::Variant::TarnetBaseline), desk_train(seed));
        nice.push_back(eval::evaluate(a.model, ds, sim::SplitKind::Test).sqrt_pehe);
        tarnet.push_back(eval::evaluate(b.model, ds, sim::SplitKind::Test).sqrt_pehe);
        wins += nice.back() < tarnet.back();
    }
    const auto n = eval::mean_std(nice), t = eval::mean_std(tarnet);
    o.detail << "test sqrt_PEHE NICE " << eval::format_mean_std(n, 4) << " vs TARNet " << eval::format_mean_std(t, 4)
             << ", NICE wins " << wins << "/5 ";
    o.require(n.mean < t.mean, "NICE mean below TARNet");
    o.require(wins >= 4, "NICE wins >= 4 of 5 seeds");
}

void zero_shot_direction(Outcome& o) {
    int wins = 0;
    bool head_untouched = true;
    std::vector<double> nice, tarnet;
    for (auto seed : kDeskSeeds) {
        const auto ds = sim::simulate_dataset(desk_sim(seed));
        const int z = ds.k() - 1;
        const auto a = eval::run_zero_shot_protocol(ds, desk_shape(ds, model::Variant::Nice), desk_train(seed), z);
        const auto b =
            eval::run_zero_shot_protocol(ds, desk_shape(ds, model::Variant::TarnetBaseline), desk_train(seed), z);
        head_untouched = head_untouched && b.trained.head_updates[static_cast<std::size_t>(z)] == 0 &&
                         a.trained.head_updates[static_cast<std::size_t>(z)] == 0;
        const auto init = model::init_model(b.trained.shape, desk_train(seed).seed);
        for (std::size_t l = 0; l < init.heads[static_cast<std::size_t>(z)].layers.size(); ++l)
            head_untouched = head_untouched && (b.trained.model.heads[static_cast<std::size_t>(z)].layers[l].weight.array() ==
                                                init.heads[static_cast<std::size_t>(z)].layers[l].weight.array())
                                                   .all();
        nice.push_back(a.report.zero_shot->sqrt_pehe_zs);
        tarnet.push_back(b.report.zero_shot->sqrt_pehe_zs);
        wins += nice.back() < tarnet.back();
    }
    o.detail << "sqrt_PEHE_ZS NICE " << eval::format_mean_std(eval::mean_std(nice), 4) << " vs TARNet "
             << eval::format_mean_std(eval::mean_std(tarnet), 4) << ", NICE wins " << wins << "/5, head z untouched "
             << (head_untouched ? "yes" : "no") << " ";
    o.require(head_untouched, "baseline head z receives zero updates");
    o.require(wins >= 4, "NICE wins >= 4 of 5 seeds");
}

// ---- 8. determinism --------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void determinism(Outcome& o) {
    const auto root = fs::temp_directory_path() / "itebench_acceptance_determinism";
    fs::remove_all(root);
    cli::ExperimentConfig cfg;
    cfg.sim = desk_sim(77);
    cfg.sim.n = 600;
    cfg.train = desk_train(77);
    cfg.train.epochs_max = 5;
    cfg.model.dropout_rate = 0.1;
    std::ostringstream log;
    for (const char* run : {"a", "b"}) {
        const auto dir = root / run;
        cli::cmd_simulate(cfg, dir / "data", false, log);
        const auto out = cli::cmd_train(dir / "data", cfg, dir / "model", false, log);
        cli::cmd_evaluate(dir / "data", out.checkpoint, sim::SplitKind::Test, 0, dir / "eval", false, log);
    }
    int files = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const auto other = root / "b" / fs::relative(entry.path(), root / "a");
        if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
            ++differing;
            o.detail << "differs: " << fs::relative(entry.path(), root / "a").string() << " ";
        }
    }
    o.detail << files << " artifacts compared, " << differing << " differ ";
    o.require(files >= 11 && differing == 0, "byte-identical artifacts");
    fs::remove_all(root);
}

// ---- 9. kmeans -------------------------------------------------------------

void kmeans_checks(Outcome& o) {
    std::mt19937_64 rng(9);
    int violations = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Matrix x = oracles::random_matrix(200, 5, rng);
        const auto r = sim::kmeans(x, 5, 100, 0.0, s);
        for (std::size_t i = 1; i < r.objective.size(); ++i) violations += r.objective[i] > r.objective[i - 1];
    }
    Matrix blobs(5, 1);
    blobs << 0.0, 0.1, 0.2, 10.0, 10.1;
    const auto r = sim::kmeans(blobs, 2, 100, 1e-12, 3);
    std::vector<double> c{r.centroids(0, 0), r.centroids(1, 0)};
    std::sort(c.begin(), c.end());
    o.detail << "objective increases " << violations << " over 50 runs, blob centroids " << c[0] << ", " << c[1] << " ";
    o.require(violations == 0, "monotone objective");
    o.require(std::abs(c[0] - 0.1) <= 1e-9 && std::abs(c[1] - 10.05) <= 1e-9, "blob means");
}

}  // namespace

int main() {
    const std::vector<std::tuple<int, std::string, Criterion, double>> criteria = {
        {1, "gradient suite", gradient_suite, 30.0},
        {2, "MMD oracle", mmd_oracle, 0.0},
        {3, "PEHE oracle", pehe_oracle, 0.0},
        {4, "simulator statistics", simulator_statistics, 60.0},
        {5, "skew protocol", skew_protocol, 0.0},
        {6, "NICE beats TARNet on sqrt PEHE", headline_direction, 600.0},
        {7, "zero-shot NICE beats TARNet", zero_shot_direction, 0.0},
        {8, "pipeline determinism", determinism, 0.0},
        {9, "kmeans", kmeans_checks, 0.0},
    };
    int failed = 0;
    for (const auto& [id, name, run, budget] : criteria) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "[exception: " << e.what() << "] ";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (budget > 0.0 && secs > budget) o.require(false, "runtime budget " + std::to_string(budget) + " s");
        failed += !o.pass;
        std::printf("criterion %d [%s] %s: %s(%.2f s)\n", id, o.pass ? "PASS" : "FAIL", name.c_str(),
                    o.detail.str().c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
