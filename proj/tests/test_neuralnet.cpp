#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "cfmia/neuralnet.hpp"
#include "cfmia/synthetic.hpp"

using namespace cfmia;

namespace {

nn::MlpConfig toy_config(std::vector<int> widths, int input_dim, int k, std::uint64_t seed) {
    nn::MlpConfig c;
    c.layer_widths = std::move(widths);
    c.input_dim = input_dim;
    c.num_classes = k;
    c.seed = seed;
    return c;
}

int param_count(const nn::MlpModel& m) {
    int n = 0;
    for (const auto& l : m.layers()) n += static_cast<int>(l.w.size() + l.b.size());
    return n;
}

// Flattened parameter read/write for the finite-difference probe.
double* param_at(nn::MlpModel& m, int flat) {
    for (auto& l : m.layers()) {
        if (flat < l.w.size()) return l.w.data() + flat;
        flat -= static_cast<int>(l.w.size());
        if (flat < l.b.size()) return l.b.data() + flat;
        flat -= static_cast<int>(l.b.size());
    }
    return nullptr;
}

double grad_at(const nn::Grads& g, int flat) {
    for (const auto& l : g) {
        if (flat < l.w.size()) return *(l.w.data() + flat);
        flat -= static_cast<int>(l.w.size());
        if (flat < l.b.size()) return *(l.b.data() + flat);
        flat -= static_cast<int>(l.b.size());
    }
    return 0.0;
}

double loss_only(nn::MlpModel& m, const Eigen::MatrixXd& x, const std::vector<int>& y) {
    return nn::loss_and_grads(m, x, y).loss;
}

// Finite differences are invalid near ReLU kinks (the analytic value is a
// one-sided subgradient there); reject configurations whose hidden
// preactivations sit within the margin.
bool preacts_clear_of_kinks(const nn::MlpModel& m, const Eigen::MatrixXd& x, double margin) {
    Eigen::MatrixXd a = x.transpose();
    const auto& layers = m.layers();
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        Eigen::MatrixXd z = (layers[l].w * a).colwise() + layers[l].b;
        if (z.cwiseAbs().minCoeff() < margin) return false;
        a = z.cwiseMax(0.0);
    }
    return true;
}

}  // namespace

TEST_CASE("all-zero parameters give the uniform posterior") {
    nn::MlpModel m(toy_config({3}, 2, 4, 1));
    for (auto& l : m.layers()) {
        l.w.setZero();
        l.b.setZero();
    }
    Eigen::VectorXd x(2);
    x << 0.3, -0.7;
    const auto p = nn::forward(m, x);
    REQUIRE(p.size() == 4);
    for (int k = 0; k < 4; ++k) CHECK(p[k] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("hand-built single-hidden-unit net matches a hand-computed softmax") {
    // x -> relu(2x+1) -> logits (1*h, -1*h): for x=1, h=3, logits (3,-3).
    nn::MlpModel m(toy_config({1}, 1, 2, 1));
    m.layers()[0].w(0, 0) = 2.0;
    m.layers()[0].b(0) = 1.0;
    m.layers()[1].w(0, 0) = 1.0;
    m.layers()[1].w(1, 0) = -1.0;
    m.layers()[1].b.setZero();
    Eigen::VectorXd x(1);
    x << 1.0;
    const auto p = nn::forward(m, x);
    const double e6 = std::exp(6.0);
    CHECK(p[0] == doctest::Approx(e6 / (e6 + 1.0)).epsilon(1e-9));
    CHECK(p[1] == doctest::Approx(1.0 / (e6 + 1.0)).epsilon(1e-9));
}

TEST_CASE("forward rejects wrong input arity and non-finite input") {
    nn::MlpModel m(toy_config({3}, 2, 2, 1));
    Eigen::VectorXd bad(3);
    bad.setZero();
    CHECK_THROWS_AS(nn::forward(m, bad), ShapeError);
    Eigen::VectorXd inf(2);
    inf << 1.0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(nn::forward(m, inf), NumericError);
}

TEST_CASE("posterior is a distribution for random nets and inputs") {
    Rng rng(202);
    for (int trial = 0; trial < 50; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_int(4));
        const int k = 2 + static_cast<int>(rng.uniform_int(3));
        nn::MlpModel m(toy_config({1 + static_cast<int>(rng.uniform_int(5))}, d, k, rng.next_u64()));
        Eigen::VectorXd x(d);
        for (int j = 0; j < d; ++j) x[j] = rng.gaussian(0, 3);
        const auto p = nn::forward(m, x);
        double sum = 0.0;
        for (int i = 0; i < k; ++i) {
            CHECK(p[i] >= 0.0);
            CHECK(p[i] <= 1.0);
            sum += p[i];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("cross-entropy hits ln 2 on the uniform binary posterior and ~0 when confident") {
    nn::MlpModel uniform_net(toy_config({2}, 1, 2, 3));
    for (auto& l : uniform_net.layers()) {
        l.w.setZero();
        l.b.setZero();
    }
    Eigen::MatrixXd x(1, 1);
    x << 0.5;
    CHECK(loss_only(uniform_net, x, {0}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    nn::MlpModel confident(toy_config({1}, 1, 2, 4));
    confident.layers()[0].w(0, 0) = 0.0;
    confident.layers()[0].b(0) = 1.0;
    confident.layers()[1].w(0, 0) = 50.0;
    confident.layers()[1].w(1, 0) = -50.0;
    confident.layers()[1].b.setZero();
    CHECK(loss_only(confident, x, {0}) < 1e-9);
}

TEST_CASE("loss_and_grads rejects an empty batch and out-of-range labels") {
    nn::MlpModel m(toy_config({2}, 1, 2, 5));
    Eigen::MatrixXd empty(0, 1);
    CHECK_THROWS_AS(nn::loss_and_grads(m, empty, {}), SizeError);
    Eigen::MatrixXd x(1, 1);
    x << 1.0;
    CHECK_THROWS_AS(nn::loss_and_grads(m, x, {7}), ShapeError);
}

TEST_CASE("analytic gradients match central finite differences across random configs") {
    // The acceptance gate re-runs this at 100 configs; keep the unit suite at
    // 30 for speed while exercising depth, width, and K variation.
    Rng rng(777);
    int checked = 0;
    for (int trial = 0; trial < 80 && checked < 30; ++trial) {
        const int d = 1 + static_cast<int>(rng.uniform_int(3));
        const int k = 2 + static_cast<int>(rng.uniform_int(2));
        std::vector<int> widths{1 + static_cast<int>(rng.uniform_int(3))};
        if (rng.uniform() < 0.5) widths.push_back(1 + static_cast<int>(rng.uniform_int(2)));
        nn::MlpModel m(toy_config(widths, d, k, rng.next_u64()));
        if (param_count(m) > 64) continue;

        const int n = 1 + static_cast<int>(rng.uniform_int(4));
        Eigen::MatrixXd x(n, d);
        std::vector<int> y;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) x(i, j) = rng.gaussian(0, 1);
            y.push_back(static_cast<int>(rng.uniform_int(k)));
        }
        if (!preacts_clear_of_kinks(m, x, 1e-2)) continue;

        const nn::Grads analytic = nn::loss_and_grads(m, x, y).grads;
        const double h = 1e-4;
        for (int p = 0; p < param_count(m); ++p) {
            double* slot = param_at(m, p);
            const double keep = *slot;
            *slot = keep + h;
            const double up = loss_only(m, x, y);
            *slot = keep - h;
            const double down = loss_only(m, x, y);
            *slot = keep;
            const double fd = (up - down) / (2 * h);
            const double an = grad_at(analytic, p);
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(std::abs(fd - an) / scale <= 1e-3);
        }
        ++checked;
    }
    CHECK(checked >= 25);
}

TEST_CASE("per-example gradients average to the batch gradient") {
    Rng rng(31);
    nn::MlpModel m(toy_config({4, 3}, 3, 3, 8));
    Eigen::MatrixXd x(8, 3);
    std::vector<int> y;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = rng.gaussian(0, 1);
        y.push_back(static_cast<int>(rng.uniform_int(3)));
    }
    const nn::Grads mean_grad = nn::loss_and_grads(m, x, y).grads;
    const std::vector<nn::Grads> per = nn::per_example_grads(m, x, y);
    REQUIRE(per.size() == 8);
    for (std::size_t l = 0; l < mean_grad.size(); ++l) {
        Eigen::MatrixXd w_acc = Eigen::MatrixXd::Zero(mean_grad[l].w.rows(), mean_grad[l].w.cols());
        Eigen::VectorXd b_acc = Eigen::VectorXd::Zero(mean_grad[l].b.size());
        for (const auto& g : per) {
            w_acc += g[l].w;
            b_acc += g[l].b;
        }
        CHECK((w_acc / 8.0 - mean_grad[l].w).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((b_acc / 8.0 - mean_grad[l].b).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("per-example gradients: singleton batch equals the batch gradient, twins match") {
    Rng rng(12);
    nn::MlpModel m(toy_config({3}, 2, 2, 9));
    Eigen::MatrixXd one(1, 2);
    one << 0.4, -1.1;
    const nn::Grads batch = nn::loss_and_grads(m, one, {1}).grads;
    const auto per_one = nn::per_example_grads(m, one, {1});
    REQUIRE(per_one.size() == 1);
    for (std::size_t l = 0; l < batch.size(); ++l) {
        CHECK((per_one[0][l].w - batch[l].w).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((per_one[0][l].b - batch[l].b).cwiseAbs().maxCoeff() < 1e-12);
    }

    Eigen::MatrixXd twins(2, 2);
    twins << 0.4, -1.1, 0.4, -1.1;
    const auto per_two = nn::per_example_grads(m, twins, {1, 1});
    REQUIRE(per_two.size() == 2);
    for (std::size_t l = 0; l < batch.size(); ++l) {
        CHECK((per_two[0][l].w - per_two[1][l].w).cwiseAbs().maxCoeff() == 0.0);
        CHECK((per_two[0][l].b - per_two[1][l].b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("adam: zero gradient is a fixed point; first unit-gradient step is ~ -lr") {
    nn::MlpConfig c = toy_config({1}, 1, 2, 6);
    c.learning_rate = 0.01;
    nn::MlpModel m(c);
    const auto before = m.layers();
    nn::adam_step(m, nn::zeros_like(m.layers()), 1);
    for (std::size_t l = 0; l < before.size(); ++l)
        CHECK((m.layers()[l].w - before[l].w).cwiseAbs().maxCoeff() == 0.0);

    nn::MlpModel m2(c);
    const double w0 = m2.layers()[0].w(0, 0);
    nn::Grads g = nn::zeros_like(m2.layers());
    g[0].w(0, 0) = 1.0;
    nn::adam_step(m2, g, 1);
    // mhat = g, vhat = g^2 => step = lr * g / (|g| + eps) ~= lr
    CHECK(m2.layers()[0].w(0, 0) == doctest::Approx(w0 - 0.01).epsilon(1e-6));
}

TEST_CASE("training separates 2-D blobs and is seed-deterministic") {
    data::Dataset blobs = data::make_blobs(250, 6.0, 21);
    data::DataSplits s = data::split_45_45_10(blobs, 2);
    nn::MlpConfig c = toy_config({8, 4}, 2, 2, 33);
    c.epochs = 30;
    c.batch_size = 16;
    auto r1 = nn::train(c, s.target_train, s.validation);
    CHECK(r1.history.size() == 30);
    CHECK(nn::evaluate(r1.model, s.validation).accuracy >= 0.95);

    auto r2 = nn::train(c, s.target_train, s.validation);
    CHECK(r1.model.to_json() == r2.model.to_json());  // bit-identical trajectories

    // Loss goes down over training.
    CHECK(r1.history.back().train_loss < r1.history.front().train_loss);
}

TEST_CASE("epochs=0 returns the untouched initialization") {
    data::Dataset blobs = data::make_blobs(60, 4.0, 5);
    data::DataSplits s = data::split_45_45_10(blobs, 7);
    nn::MlpConfig c = toy_config({3}, 2, 2, 44);
    c.epochs = 0;
    auto r = nn::train(c, s.target_train, s.validation);
    nn::MlpModel fresh(c);
    for (std::size_t l = 0; l < fresh.layers().size(); ++l) {
        CHECK((r.model.layers()[l].w - fresh.layers()[l].w).cwiseAbs().maxCoeff() == 0.0);
        CHECK((r.model.layers()[l].b - fresh.layers()[l].b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("evaluate: perfect predictor scores 1.0 everywhere; constant predictor is 0.5 on balanced data") {
    // Net that outputs class = sign(x): w=(big), picks class by sign.
    nn::MlpModel signnet(toy_config({1}, 1, 2, 2));
    signnet.layers()[0].w(0, 0) = 1.0;
    signnet.layers()[0].b(0) = 0.0;
    signnet.layers()[1].w(0, 0) = -50.0;
    signnet.layers()[1].w(1, 0) = 50.0;
    signnet.layers()[1].b.setZero();

    data::Dataset ds;
    data::FeatureMeta f;
    f.name = "x";
    ds.schema = {f};
    ds.rows.resize(4, 1);
    ds.rows << -2, -1, 1, 2;
    ds.labels = {0, 0, 1, 1};
    ds.row_ids = {0, 1, 2, 3};
    ds.num_classes = 2;
    // relu kills negatives: x<0 -> h=0 -> logits equal -> argmax first class (0). x>0 -> class 1.
    auto m1 = nn::evaluate(signnet, ds);
    CHECK(m1.accuracy == doctest::Approx(1.0));
    CHECK(m1.macro_precision == doctest::Approx(1.0));
    CHECK(m1.macro_recall == doctest::Approx(1.0));

    nn::MlpModel constant(toy_config({1}, 1, 2, 2));
    for (auto& l : constant.layers()) {
        l.w.setZero();
        l.b.setZero();
    }
    auto m2 = nn::evaluate(constant, ds);  // uniform posterior -> argmax ties to class 0
    CHECK(m2.accuracy == doctest::Approx(0.5));
}

TEST_CASE("evaluate matches a hand-computed 6-point confusion matrix") {
    // Inputs pin predictions: pred = sign(x) as above.
    nn::MlpModel signnet(toy_config({1}, 1, 2, 2));
    signnet.layers()[0].w(0, 0) = 1.0;
    signnet.layers()[0].b(0) = 0.0;
    signnet.layers()[1].w(0, 0) = -50.0;
    signnet.layers()[1].w(1, 0) = 50.0;
    signnet.layers()[1].b.setZero();

    data::Dataset ds;
    data::FeatureMeta f;
    f.name = "x";
    ds.schema = {f};
    ds.rows.resize(6, 1);
    // predictions:   0,  0,  1, 1, 1, 1
    ds.rows << -1, -1, 1, 1, 1, 1;
    // labels:        0,  1,  0, 1, 1, 1
    ds.labels = {0, 1, 0, 1, 1, 1};
    ds.row_ids = {0, 1, 2, 3, 4, 5};
    ds.num_classes = 2;
    // class0: TP=1 FP=1 FN=1 -> P=0.5 R=0.5 ; class1: TP=3 FP=1 FN=1 -> P=0.75 R=0.75
    auto m = nn::evaluate(signnet, ds);
    CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
    CHECK(m.macro_precision == doctest::Approx(0.625));
    CHECK(m.macro_recall == doctest::Approx(0.625));
}

TEST_CASE("dropout: eval is deterministic, train mode draws seeded masks") {
    nn::MlpConfig c = toy_config({6}, 2, 2, 15);
    c.dropout_rate = 0.5;
    c.dropout_layer = 0;
    nn::MlpModel m(c);
    Eigen::VectorXd x(2);
    x << 1.0, -1.0;
    const auto p1 = nn::forward(m, x);
    const auto p2 = nn::forward(m, x);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() == 0.0);  // eval mode: no dropout

    // Same seed => same masks => identical training outcomes.
    data::Dataset blobs = data::make_blobs(80, 5.0, 3);
    data::DataSplits s = data::split_45_45_10(blobs, 4);
    c.epochs = 5;
    auto r1 = nn::train(c, s.target_train, s.validation);
    auto r2 = nn::train(c, s.target_train, s.validation);
    CHECK(r1.model.to_json() == r2.model.to_json());
}

TEST_CASE("checkpoint reload reproduces forward outputs bit-identically") {
    data::Dataset blobs = data::make_blobs(100, 4.0, 8);
    data::DataSplits s = data::split_45_45_10(blobs, 6);
    nn::MlpConfig c = toy_config({5, 3}, 2, 2, 77);
    c.epochs = 8;
    auto r = nn::train(c, s.target_train, s.validation);
    nn::MlpModel restored = nn::MlpModel::from_json(r.model.to_json());
    for (Eigen::Index i = 0; i < s.validation.size(); ++i) {
        const Eigen::VectorXd x = s.validation.row(i);
        const auto a = nn::forward(r.model, x);
        const auto b = nn::forward(restored, x);
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
}
