#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <vector>

#include "cfmia/counterfactual.hpp"
#include "cfmia/data.hpp"
#include "cfmia/neuralnet.hpp"
#include "cfmia/synthetic.hpp"

using namespace cfmia;

namespace {

data::Dataset tiny_numeric(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
    data::Dataset ds;
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    for (std::size_t j = 0; j < d; ++j) {
        data::FeatureMeta m;
        m.name = "f" + std::to_string(j);
        ds.schema.push_back(m);
    }
    ds.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    ds.labels = labels;
    for (std::size_t i = 0; i < rows.size(); ++i) ds.row_ids.push_back(static_cast<RowId>(i));
    ds.num_classes = 0;
    for (int y : labels) ds.num_classes = std::max(ds.num_classes, y + 1);
    ds.label_names.resize(static_cast<std::size_t>(ds.num_classes));
    return ds;
}

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

// Sharp linear boundary: class 1 iff x0 + x1 > 1.
cf::BatchPredictFn linear_boundary() {
    return [](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd p(x.rows(), 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double p1 = 1.0 / (1.0 + std::exp(-50.0 * (x(i, 0) + x(i, 1) - 1.0)));
            p(i, 0) = 1.0 - p1;
            p(i, 1) = p1;
        }
        return p;
    };
}

}  // namespace

TEST_CASE("heom reproduces hand values, the overlap rule, and degenerate ranges") {
    // Ranges below: f0 spans [0,2], f1 spans [0,2].
    data::Dataset ref = tiny_numeric({{0.0, 0.0}, {2.0, 2.0}}, {0, 1});
    const cf::HeomSpace space = cf::HeomSpace::from_reference(ref);
    CHECK(space.range[0] == doctest::Approx(2.0));
    CHECK(space.range[1] == doctest::Approx(2.0));

    // One unit on each feature = 0.5 per normalized axis.
    CHECK(cf::heom(space, vec2(0, 0), vec2(1, 1)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(cf::heom(space, vec2(0.3, 1.2), vec2(0.3, 1.2)) == doctest::Approx(0.0));

    data::Dataset mixed = tiny_numeric({{0.0, 0.0}, {2.0, 1.0}}, {0, 1});
    mixed.schema[1].kind = data::FeatureKind::Categorical;
    const cf::HeomSpace mspace = cf::HeomSpace::from_reference(mixed);
    CHECK(cf::heom(mspace, vec2(0, 3), vec2(0, 7)) == doctest::Approx(1.0));  // category mismatch
    CHECK(cf::heom(mspace, vec2(0, 7), vec2(0, 7)) == doctest::Approx(0.0));

    data::Dataset flat = tiny_numeric({{1.0, 0.0}, {1.0, 2.0}}, {0, 1});
    const cf::HeomSpace fspace = cf::HeomSpace::from_reference(flat);
    CHECK(fspace.range[0] == doctest::Approx(0.0));
    // Degenerate numeric range contributes nothing rather than dividing by zero.
    CHECK(cf::heom(fspace, vec2(-5, 0), vec2(9, 0)) == doctest::Approx(0.0));

    CHECK_THROWS_AS(cf::heom(space, Eigen::VectorXd::Zero(3), vec2(0, 0)), ShapeError);
    CHECK_THROWS_AS(cf::HeomSpace::from_reference(data::Dataset{}), SizeError);
}

TEST_CASE("heom is symmetric and satisfies the triangle inequality") {
    data::Dataset ref = tiny_numeric({{0.0, 0.0}, {1.0, 4.0}}, {0, 1});
    ref.schema[1].kind = data::FeatureKind::Categorical;
    const cf::HeomSpace space = cf::HeomSpace::from_reference(ref);
    Rng rng(77);
    for (int t = 0; t < 2000; ++t) {
        const Eigen::VectorXd a = vec2(rng.uniform(-2, 2), std::floor(rng.uniform(0, 3)));
        const Eigen::VectorXd b = vec2(rng.uniform(-2, 2), std::floor(rng.uniform(0, 3)));
        const Eigen::VectorXd c = vec2(rng.uniform(-2, 2), std::floor(rng.uniform(0, 3)));
        const double ab = cf::heom(space, a, b);
        const double ba = cf::heom(space, b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-15));
        CHECK(ab <= cf::heom(space, a, c) + cf::heom(space, c, b) + 1e-12);
        CHECK(ab >= 0.0);
    }
}

TEST_CASE("nice traces the hand-worked linear-boundary example") {
    // Reference: r0 correctly classified unlike; r1 same class; r2 unlike but
    // far; r3 nearer than r0 but misclassified (label 0, predicted 1), so the
    // eligibility rule must skip it.
    data::Dataset ref = tiny_numeric(
        {{1.5, 0.2}, {0.2, 0.2}, {5.0, 5.0}, {1.2, -0.1}}, {1, 0, 1, 0});
    auto predict = linear_boundary();
    const cf::HeomSpace space = cf::HeomSpace::from_reference(ref);
    CHECK(space.range[0] == doctest::Approx(4.8));
    CHECK(space.range[1] == doctest::Approx(5.1));

    const cf::Counterfactual c = cf::nice_explain(predict, space, ref, vec2(0, 0), cf::Reward::Proximity);
    CHECK(c.original_class == 0);
    CHECK(c.cf_class == 1);
    // NUN is r0; substituting f0 alone already crosses the boundary.
    CHECK(c.explanation[0] == doctest::Approx(1.5));
    CHECK(c.explanation[1] == doctest::Approx(0.0));
    CHECK(c.sparsity == 1);
    CHECK(c.changed_features == std::vector<int>{0});
    CHECK(c.proximity == doctest::Approx(1.5 / 4.8).epsilon(1e-12));
}

TEST_CASE("reward ties resolve to the lowest feature index") {
    // Class 1 iff x0 > 0.9 or x2 > 0.9; both single-feature substitutions
    // flip with identical gain and identical normalized distance.
    auto predict = [](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd p(x.rows(), 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const bool one = x(i, 0) > 0.9 || x(i, 2) > 0.9;
            p(i, 0) = one ? 0.0 : 1.0;
            p(i, 1) = one ? 1.0 : 0.0;
        }
        return p;
    };
    data::Dataset ref = tiny_numeric({{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}}, {0, 1});
    const cf::HeomSpace space = cf::HeomSpace::from_reference(ref);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    const cf::Counterfactual c = cf::nice_explain(predict, space, ref, x, cf::Reward::Proximity);
    CHECK(c.changed_features == std::vector<int>{0});
    CHECK(c.cf_class == 1);
}

TEST_CASE("missing eligible unlike neighbours raises NoCounterfactualError") {
    auto always_zero = [](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(x.rows(), 2);
        p.col(0).setOnes();
        return p;
    };
    // Class-1 rows exist but the model misclassifies them all.
    data::Dataset ref = tiny_numeric({{0.0, 0.0}, {1.0, 1.0}}, {0, 1});
    CHECK_THROWS_AS(
        cf::nice_explain(always_zero, cf::HeomSpace::from_reference(ref), ref, vec2(0, 0), cf::Reward::Proximity),
        NoCounterfactualError);
}

TEST_CASE("full substitution always reaches the NUN, so an eligible NUN guarantees a flip") {
    // Even when no single substitution helps, the walk terminates at the NUN
    // itself, whose predicted class is unlike by eligibility.
    auto corner = [](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd p(x.rows(), 2);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const bool one = x(i, 0) > 2.0 && x(i, 1) > 2.0;
            p(i, 0) = one ? 0.0 : 1.0;
            p(i, 1) = one ? 1.0 : 0.0;
        }
        return p;
    };
    data::Dataset ref = tiny_numeric({{0.0, 0.0}, {3.0, 3.0}}, {0, 1});
    const cf::Counterfactual c =
        cf::nice_explain(corner, cf::HeomSpace::from_reference(ref), ref, vec2(0, 0), cf::Reward::Proximity);
    CHECK(c.cf_class == 1);
    CHECK(c.sparsity == 2);
    CHECK(c.explanation[0] == doctest::Approx(3.0));
    CHECK(c.explanation[1] == doctest::Approx(3.0));
}

TEST_CASE("counterfactuals from a trained model always flip and store consistent metrics") {
    data::Dataset blobs = data::make_blobs(400, 4.0, 5);
    nn::MlpConfig cfg;
    cfg.input_dim = 2;
    cfg.num_classes = 2;
    cfg.layer_widths = {16, 8};
    cfg.epochs = 40;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.01;
    cfg.seed = 3;
    data::Dataset head = blobs.subset([] {
        std::vector<Eigen::Index> idx(300);
        for (Eigen::Index i = 0; i < 300; ++i) idx[static_cast<std::size_t>(i)] = i;
        return idx;
    }());
    data::Dataset tail = blobs.subset([] {
        std::vector<Eigen::Index> idx(100);
        for (Eigen::Index i = 0; i < 100; ++i) idx[static_cast<std::size_t>(i)] = 300 + i;
        return idx;
    }());
    nn::MlpModel model = nn::train(cfg, head, tail).model;

    auto predict = cf::wrap_model(model);
    const cf::HeomSpace space = cf::HeomSpace::from_reference(head);
    cf::NiceExplainer explainer(predict, space, head, cf::Reward::Proximity);

    std::vector<cf::Counterfactual> cfs;
    for (Eigen::Index i = 0; i < tail.size(); ++i) {
        const cf::Counterfactual c = explainer.explain(tail.row(i));
        CHECK(c.cf_class != c.original_class);
        CHECK(c.proximity == doctest::Approx(cf::heom(space, c.original, c.explanation)).epsilon(1e-12));
        CHECK(c.sparsity == static_cast<int>(c.changed_features.size()));
        // Explanation differs from the original exactly on changed_features.
        std::set<int> changed(c.changed_features.begin(), c.changed_features.end());
        for (Eigen::Index j = 0; j < c.original.size(); ++j) {
            if (changed.count(static_cast<int>(j)))
                CHECK(c.original[j] != c.explanation[j]);
            else
                CHECK(c.original[j] == c.explanation[j]);
        }
        cfs.push_back(c);
    }

    const cf::CfQuality q = cf::cf_quality(cfs);
    CHECK(q.validity == doctest::Approx(1.0));
    CHECK(q.avg_sparsity >= 1.0);
    CHECK(q.avg_sparsity_fraction == doctest::Approx(q.avg_sparsity / 2.0).epsilon(1e-12));
    CHECK(q.avg_proximity > 0.0);

    // Model-reference overload agrees with the wrapped-function overload.
    const cf::Counterfactual via_model = cf::nice_explain(model, space, head, tail.row(0), cf::Reward::Proximity);
    const cf::Counterfactual via_fn = explainer.explain(tail.row(0));
    CHECK((via_model.explanation - via_fn.explanation).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cf_quality arithmetic and empty-list guard") {
    cf::Counterfactual a;
    a.original_class = 0;
    a.cf_class = 1;
    a.proximity = 0.25;
    a.sparsity = 1;
    a.sparsity_fraction = 0.5;
    cf::Counterfactual b = a;
    b.proximity = 0.75;
    b.sparsity = 2;
    b.sparsity_fraction = 1.0;
    const cf::CfQuality q = cf::cf_quality({a, b});
    CHECK(q.avg_proximity == doctest::Approx(0.5));
    CHECK(q.avg_sparsity == doctest::Approx(1.5));
    CHECK(q.avg_sparsity_fraction == doctest::Approx(0.75));
    CHECK(q.validity == doctest::Approx(1.0));
    CHECK_THROWS_AS(cf::cf_quality({}), SizeError);
}

TEST_CASE("cf csv dump lists one line per explanation with named features") {
    data::Dataset ref = tiny_numeric({{0.0, 0.0}, {1.0, 1.0}}, {0, 1});
    cf::Counterfactual c;
    c.original = vec2(0, 0);
    c.explanation = vec2(1, 0);
    c.original_class = 0;
    c.cf_class = 1;
    c.proximity = 0.5;
    c.sparsity = 1;
    c.changed_features = {0};
    const std::string text = cf::cf_dump_csv({c, c}, {7, 9}, ref.schema);
    CHECK(text.find("row_id,original_class,cf_class,proximity,sparsity,changed_feature_names\n") == 0);
    CHECK(text.find("7,0,1,0.5,1,f0\n") != std::string::npos);
    CHECK(text.find("9,0,1,0.5,1,f0\n") != std::string::npos);
    CHECK_THROWS_AS(cf::cf_dump_csv({c}, {1, 2}, ref.schema), SizeError);
}
