#include <doctest.h>

#include <algorithm>
#include <random>

#include "itebench/errors.hpp"
#include "itebench/model.hpp"
#include "support/oracles.hpp"

using namespace itebench;
using namespace itebench::model;
using nn::ForwardMode;

namespace {

sim::Dataset desk_dataset(std::uint64_t seed = 1, Index n = 2000, int k = 4) {
    sim::SimConfig cfg;
    cfg.n = n;
    cfg.d = 32;
    cfg.k = k;
    cfg.seed = seed;
    return sim::simulate_dataset(cfg);
}

ModelShape tiny_shape(Variant v = Variant::Nice, double dropout = 0.0) {
    ModelShape s;
    s.input_dim = 3;
    s.treatment_dim = 3;
    s.k = 2;
    s.phi_layers = 1;
    s.phi_nodes = 2;
    s.psi_layers = 1;
    s.psi_nodes = 2;
    s.head_layers = 1;
    s.head_nodes = 3;
    s.activation = nn::Activation::Tanh;
    s.dropout_rate = dropout;
    s.variant = v;
    return s;
}

Batch random_batch(std::mt19937_64& rng, Index n, int k, Index dim = 3) {
    Batch b;
    b.x = oracles::random_matrix(dim, n, rng);
    const Matrix features = oracles::random_matrix(dim, k, rng);
    b.t_feature.resize(dim, n);
    b.y = oracles::random_matrix(n, 1, rng);
    for (Index j = 0; j < n; ++j) {
        const int t = static_cast<int>(j % k);
        b.t.push_back(t);
        b.t_feature.col(j) = features.col(t);
    }
    return b;
}

void randomize_biases(NiceModel& m, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 0.3);
    auto fill = [&](nn::MlpParams& p) {
        for (auto& l : p.layers)
            for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = n(rng);
    };
    fill(m.phi);
    if (m.psi) fill(*m.psi);
    for (auto& h : m.heads) fill(h);
}

TrainConfig quick_config(std::uint64_t seed = 3) {
    TrainConfig cfg;
    cfg.batch_size = 64;
    cfg.epochs_max = 30;
    cfg.early_stopping_patience = 10;
    cfg.optim.base_lr = 0.1;
    cfg.optim.scheduler_step = 15;
    cfg.seed = seed;
    return cfg;
}

ModelShape desk_shape(const sim::Dataset& ds, Variant v = Variant::Nice) {
    ModelShape s;
    s.input_dim = ds.d();
    s.treatment_dim = ds.d();
    s.k = ds.k();
    s.activation = nn::Activation::Tanh;
    s.dropout_rate = 0.1;
    s.variant = v;
    return s;
}

}  // namespace

TEST_CASE("forward: zero model predicts zero") {
    auto shape = tiny_shape();
    shape.init = nn::Init::Zeros;
    const auto m = init_model(shape, 1);
    std::mt19937_64 rng(1);
    for (int t = 0; t < 2; ++t)
        CHECK(nice_forward(m, oracles::random_matrix(3, 1, rng).col(0), oracles::random_matrix(3, 1, rng).col(0), t,
                           ForwardMode::eval()) == 0.0);
    CHECK(predict_outcomes(m, oracles::random_matrix(5, 3, rng), oracles::random_matrix(2, 3, rng)).isZero(0.0));
}

TEST_CASE("forward: hand-built one-layer networks") {
    NiceModel m;
    m.phi.layers.push_back({Matrix{{1.0}}, Vector{{0.0}}});
    m.phi.hidden_activation = nn::Activation::Elu;
    m.phi.activate_output = true;
    nn::MlpParams psi;
    psi.layers.push_back({Matrix{{2.0}}, Vector{{0.0}}});
    psi.hidden_activation = nn::Activation::Elu;
    psi.activate_output = true;
    m.psi = psi;
    nn::MlpParams head;
    head.layers.push_back({Matrix{{3.0, -1.0}}, Vector{{0.1}}});
    m.heads = {head, head};
    m.heads[1].layers[0].bias(0) = -0.1;
    // phi = elu(0.5) = 0.5, psi = elu(2 * 0.25) = 0.5, head: 3 * 0.5 - 0.5 + 0.1
    CHECK(nice_forward(m, Vector{{0.5}}, Vector{{0.25}}, 0, ForwardMode::eval()) == doctest::Approx(1.1).epsilon(1e-15));
    CHECK(nice_forward(m, Vector{{0.5}}, Vector{{0.25}}, 1, ForwardMode::eval()) == doctest::Approx(0.9).epsilon(1e-15));
    // elu on the negative side: phi = e^-1 - 1
    CHECK(nice_forward(m, Vector{{-1.0}}, Vector{{0.25}}, 0, ForwardMode::eval()) ==
          doctest::Approx(3.0 * (std::exp(-1.0) - 1.0) - 0.5 + 0.1).epsilon(1e-14));
    CHECK_THROWS_AS(nice_forward(m, Vector{{0.5}}, Vector{{0.25}}, 2, ForwardMode::eval()), ShapeError);
    CHECK_THROWS_AS(nice_forward(m, Vector{{0.5, 1.0}}, Vector{{0.25}}, 0, ForwardMode::eval()), ShapeError);
}

TEST_CASE("baseline is blind to treatment features") {
    const auto m = init_model(tiny_shape(Variant::TarnetBaseline), 2);
    CHECK_FALSE(m.psi.has_value());
    CHECK(m.heads[0].input_dim() == 2);
    std::mt19937_64 rng(2);
    const Matrix X = oracles::random_matrix(6, 3, rng);
    const Matrix a = predict_outcomes(m, X, oracles::random_matrix(2, 3, rng));
    const Matrix b = predict_outcomes(m, X, oracles::random_matrix(2, 3, rng, 100.0));
    CHECK((a.array() == b.array()).all());
    const Vector x = X.row(0).transpose();
    CHECK(nice_forward(m, x, Vector::Zero(3), 1, ForwardMode::eval()) ==
          nice_forward(m, x, Vector::Constant(3, 5.0), 1, ForwardMode::eval()));

    const auto nice = init_model(tiny_shape(), 2);
    CHECK(nice.heads[0].input_dim() == 4);
}

TEST_CASE("batch_loss: MSE arithmetic and perfect predictor") {
    NiceModel m;
    m.variant = Variant::TarnetBaseline;
    m.phi.layers.push_back({Matrix{{0.0}}, Vector{{1.0}}});
    m.phi.activate_output = false;
    nn::MlpParams head;
    head.layers.push_back({Matrix{{2.0}}, Vector{{0.0}}});
    m.heads = {head, head};
    TrainConfig cfg;
    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    Batch b{Matrix{{0.3}}, Matrix(0, 1), {0}, Vector{{0.0}}};
    CHECK(batch_loss(m, b, cfg, ForwardMode::eval()).total == 4.0);

    Batch perfect{Matrix{{0.3, 0.3}}, Matrix(0, 2), {0, 1}, Vector{{2.0, 2.0}}};
    cfg.beta = 0.5;
    const auto l = batch_loss(m, perfect, cfg, ForwardMode::eval());
    CHECK(l.l1 == 0.0);
    CHECK(l.l2 == 0.0);  // baseline carries no balancing term
    CHECK(l.total == 0.0);

    auto nice = init_model(tiny_shape(), 4);
    Batch same{Matrix::Ones(3, 2), Matrix::Ones(3, 2), {0, 1}, Vector::Zero(2)};
    CHECK(batch_loss(nice, same, cfg, ForwardMode::eval()).l2 == 0.0);  // identical embeddings per group
}

TEST_CASE("batch_loss gradient matches finite differences on a tiny model") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        const double dropout = trial % 2 ? 0.2 : 0.0;
        auto shape = tiny_shape(trial == 5 ? Variant::TarnetBaseline : Variant::Nice, dropout);
        shape.activation = trial % 3 == 1 ? nn::Activation::Elu : nn::Activation::Tanh;
        auto m = init_model(shape, static_cast<std::uint64_t>(trial));
        randomize_biases(m, rng);
        const Batch b = random_batch(rng, 4, 2);
        TrainConfig cfg;
        cfg.alpha = 0.7;
        cfg.beta = 1.3;
        // Bandwidth held fixed so the objective being differenced is the one the gradient describes.
        cfg.kernel = mmd::KernelSpec::fixed(0.8);
        const auto mode = ForwardMode::training(static_cast<std::uint64_t>(100 + trial));
        const auto loss = batch_loss(m, b, cfg, mode);
        auto f = [&] { return batch_loss(m, b, cfg, mode).total; };

        double worst = 0.0;
        auto check_net = [&](nn::MlpParams& p, const nn::Gradients& g) {
            for (std::size_t l = 0; l < p.layers.size(); ++l) {
                worst = std::max(worst, oracles::max_gradient_error(f, p.layers[l].weight, g.layers[l].weight));
                worst = std::max(worst, oracles::max_gradient_error(f, p.layers[l].bias, g.layers[l].bias));
            }
        };
        check_net(m.phi, loss.grads.phi);
        if (m.psi) check_net(*m.psi, *loss.grads.psi);
        for (int t = 0; t < 2; ++t) check_net(m.heads[static_cast<std::size_t>(t)], loss.grads.heads[static_cast<std::size_t>(t)]);
        CHECK_MESSAGE(worst < 1e-4, "trial " << trial);
    }
}

TEST_CASE("head isolation, L2 path and loss composition") {
    std::mt19937_64 rng(6);
    auto shape = tiny_shape();
    shape.k = 3;
    auto m = init_model(shape, 6);
    randomize_biases(m, rng);
    Batch b = random_batch(rng, 6, 3);
    for (auto& t : b.t) t = t == 2 ? 0 : t;  // nobody observes treatment 3

    TrainConfig cfg;
    cfg.beta = 0.0;
    auto l = batch_loss(m, b, cfg, ForwardMode::eval());
    CHECK(l.grads.head_used == std::vector<bool>{true, true, false});
    for (const auto& layer : l.grads.heads[2].layers) CHECK(layer.weight.isZero(0.0));

    Batch single = b;
    single.x = b.x.leftCols(1);
    single.t_feature = b.t_feature.leftCols(1);
    single.t = {1};
    single.y = b.y.head(1);
    l = batch_loss(m, single, cfg, ForwardMode::eval());
    for (int h : {0, 2})
        for (const auto& layer : l.grads.heads[static_cast<std::size_t>(h)].layers) {
            CHECK(layer.weight.isZero(0.0));
            CHECK(layer.bias.isZero(0.0));
        }

    cfg.alpha = 0.0;
    cfg.beta = 1.0;
    l = batch_loss(m, b, cfg, ForwardMode::eval());
    for (const auto& g : l.grads.heads)
        for (const auto& layer : g.layers) CHECK(layer.weight.isZero(0.0));
    CHECK(l.grads.phi.layers[0].weight.cwiseAbs().maxCoeff() > 0.0);
    CHECK(l.grads.psi->layers[0].weight.cwiseAbs().maxCoeff() > 0.0);

    for (double alpha : {0.0, 0.5, 1.0})
        for (double beta : {0.0, 0.5, 2.0}) {
            if (alpha + beta == 0.0) continue;
            cfg.alpha = alpha;
            cfg.beta = beta;
            const auto r = batch_loss(m, b, cfg, ForwardMode::training(9));
            CHECK(std::abs(r.total - (alpha * r.l1 + beta * r.l2)) <= 1e-12);
        }
}

TEST_CASE("apply_update leaves unused heads untouched") {
    std::mt19937_64 rng(7);
    auto shape = tiny_shape();
    shape.k = 3;
    const auto m = init_model(shape, 7);
    Batch b = random_batch(rng, 4, 2);
    const auto l = batch_loss(m, b, TrainConfig{}, ForwardMode::eval());
    const auto next = apply_update(m, l.grads, 0.1, 1e-2);
    for (std::size_t i = 0; i < m.heads[2].layers.size(); ++i)
        CHECK((next.heads[2].layers[i].weight.array() == m.heads[2].layers[i].weight.array()).all());
    CHECK_FALSE((next.heads[0].layers[0].weight.array() == m.heads[0].layers[0].weight.array()).all());
}

TEST_CASE("train: epochs_max 0 returns the initial model") {
    const auto ds = desk_dataset(2, 200);
    auto cfg = quick_config();
    cfg.epochs_max = 0;
    const auto shape = desk_shape(ds);
    const auto tm = train(ds, shape, cfg);
    CHECK(tm.history.empty());
    CHECK(tm.best_epoch == -1);
    const auto init = init_model(shape, cfg.seed);
    CHECK((tm.model.phi.layers[0].weight.array() == init.phi.layers[0].weight.array()).all());
}

TEST_CASE("train: seeded determinism and early-stopping bookkeeping") {
    const auto ds = desk_dataset(3, 400);
    const auto shape = desk_shape(ds);
    auto cfg = quick_config(4);
    cfg.epochs_max = 12;
    cfg.early_stopping_patience = 3;
    const auto a = train(ds, shape, cfg);
    const auto b = train(ds, shape, cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].loss == b.history[e].loss);
        CHECK(a.history[e].val_l1 == b.history[e].val_l1);
    }
    REQUIRE(!a.history.empty());
    std::size_t argmin = 0;
    for (std::size_t e = 1; e < a.history.size(); ++e)
        if (a.history[e].val_l1 < a.history[argmin].val_l1) argmin = e;
    CHECK(a.best_epoch == a.history[argmin].epoch);
    CHECK(static_cast<int>(a.history.size()) <= std::max(a.best_epoch + 1 + cfg.early_stopping_patience, 0) + 0);
    for (const auto& r : a.history) CHECK(std::abs(r.loss - (cfg.alpha * r.l1 + cfg.beta * r.l2)) <= 1e-12);
    CHECK(factual_mse(a.model, ds, ds.split.val) == doctest::Approx(a.history[argmin].val_l1).epsilon(1e-14));
}

TEST_CASE("train: beta 0 regression makes progress") {
    const auto ds = desk_dataset(4, 600, 2);
    auto cfg = quick_config(5);
    cfg.beta = 0.0;
    cfg.epochs_max = 10;
    const auto tm = train(ds, desk_shape(ds), cfg);
    REQUIRE(tm.best_epoch >= 0);
    CHECK(tm.history[static_cast<std::size_t>(tm.best_epoch)].val_l1 <= tm.history.front().val_l1);
    CHECK(tm.history[static_cast<std::size_t>(tm.best_epoch)].val_l1 < tm.initial_val_l1);
}

TEST_CASE("train: desk-scale run halves validation L1") {
    const auto ds = desk_dataset(5);
    const auto tm = train(ds, desk_shape(ds), quick_config(6));
    REQUIRE(tm.best_epoch >= 0);
    const double best = tm.history[static_cast<std::size_t>(tm.best_epoch)].val_l1;
    MESSAGE("initial val L1 " << tm.initial_val_l1 << ", best " << best);
    CHECK(best <= 0.5 * tm.initial_val_l1);
}

TEST_CASE("factual predictions are bit-identical to the validation path") {
    const auto ds = desk_dataset(6, 300);
    auto cfg = quick_config(7);
    cfg.epochs_max = 3;
    const auto tm = train(ds, desk_shape(ds), cfg);
    const Matrix all = predict_all_outcomes(tm.model, ds);
    const Vector fact = predict_factual(tm.model, ds, ds.split.val);
    for (std::size_t r = 0; r < ds.split.val.size(); ++r) {
        const Index i = ds.split.val[r];
        CHECK(all(i, ds.t_obs[static_cast<std::size_t>(i)]) == fact(static_cast<Index>(r)));
    }
}

TEST_CASE("checkpoint round trip preserves predictions") {
    const auto ds = desk_dataset(7, 200);
    auto cfg = quick_config(8);
    cfg.epochs_max = 2;
    for (auto v : {Variant::Nice, Variant::TarnetBaseline}) {
        const auto tm = train(ds, desk_shape(ds, v), cfg);
        const auto doc = checkpoint_json(tm);
        CHECK(doc.at("schema_version") == "1");
        CHECK(doc.contains("psi") == (v == Variant::Nice));
        const auto back = checkpoint_from_json(nlohmann::json::parse(doc.dump()));
        CHECK(back.best_epoch == tm.best_epoch);
        const Matrix a = predict_all_outcomes(tm.model, ds), b = predict_all_outcomes(back.model, ds);
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    const auto ds = desk_dataset(8, 100);
    auto shape = desk_shape(ds);
    shape.k = 3;
    CHECK_THROWS(train(ds, shape, quick_config()));
}
