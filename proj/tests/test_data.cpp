#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cfmia/data.hpp"
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
        for (std::size_t j = 0; j < d; ++j) ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    ds.labels = labels;
    for (std::size_t i = 0; i < rows.size(); ++i) ds.row_ids.push_back(static_cast<RowId>(i));
    ds.num_classes = 0;
    for (int y : labels) ds.num_classes = std::max(ds.num_classes, y + 1);
    for (int k = 0; k < ds.num_classes; ++k) ds.label_names.push_back(std::to_string(k));
    return ds;
}

}  // namespace

TEST_CASE("parse_csv reads a 3-line file with 2 numeric columns plus label") {
    const std::string text = "a,b,y\n1.0,2.0,cat\n3.0,4.0,dog\n5.0,6.0,cat\n";
    data::Dataset ds = data::parse_csv(text, "y");
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.num_classes == 2);
    CHECK(ds.rows(1, 0) == doctest::Approx(3.0));
    CHECK(ds.labels[0] == ds.labels[2]);
    CHECK(ds.labels[0] != ds.labels[1]);
    CHECK(ds.row_ids == std::vector<RowId>{0, 1, 2});
}

TEST_CASE("parse_csv rejects a non-numeric token in a numeric column, naming the line") {
    const std::string text = "a,b,y\n1.0,2.0,0\n1.0,oops,1\n";
    try {
        data::parse_csv(text, "y");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);  // 1-based file line
    }
}

TEST_CASE("parse_csv rejects wrong-arity rows with the line number") {
    const std::string text = "a,b,y\n1.0,2.0,0\n1.0,0\n";
    CHECK_THROWS_AS(data::parse_csv(text, "y"), ParseError);
}

TEST_CASE("missing label column is a schema error naming the column") {
    const std::string text = "a,b,y\n1,2,0\n";
    try {
        data::parse_csv(text, "click");
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("click") != std::string::npos);
    }
}

TEST_CASE("closed schema hint rejects unseen categories") {
    data::FeatureMeta cat;
    cat.name = "color";
    cat.kind = data::FeatureKind::Categorical;
    cat.categories = {"red", "blue"};
    const std::string text = "color,y\nred,0\ngreen,1\n";
    CHECK_THROWS_AS(data::parse_csv(text, "y", std::vector<data::FeatureMeta>{cat}), SchemaError);
}

TEST_CASE("preprocess on a clean set with huge outlier_z keeps rows and centers columns") {
    data::Dataset raw = tiny_numeric({{1, 10}, {2, 20}, {3, 30}, {4, 40}}, {0, 1, 0, 1});
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    REQUIRE(clean.size() == 4);
    for (Eigen::Index j = 0; j < clean.dim(); ++j) {
        CHECK(std::abs(clean.rows.col(j).mean()) < 1e-9);
        const double var = clean.rows.col(j).squaredNorm() / clean.size();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(scaler.feature_names.size() == 2);
}

TEST_CASE("single feature {1,2,3} scales to -1.2247, 0, +1.2247") {
    data::Dataset raw = tiny_numeric({{1}, {2}, {3}}, {0, 1, 0});
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    REQUIRE(clean.size() == 3);
    CHECK(clean.rows(0, 0) == doctest::Approx(-1.2247).epsilon(1e-4));
    CHECK(clean.rows(1, 0) == doctest::Approx(0.0));
    CHECK(clean.rows(2, 0) == doctest::Approx(1.2247).epsilon(1e-4));
}

TEST_CASE("a far-out row is removed at outlier_z=3") {
    // Population z-scores cap at sqrt(N-1) for a lone outlier, so N must be
    // comfortably above 10 for the threshold to bite.
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 19; ++i) {
        rows.push_back({static_cast<double>(i % 3)});  // values 0,1,2 repeating
        labels.push_back(i % 2);
    }
    rows.push_back({1000.0});
    labels.push_back(0);
    auto [clean, scaler] = data::preprocess(tiny_numeric(rows, labels), 3.0);
    CHECK(clean.size() == 19);
}

TEST_CASE("rows with missing cells are dropped before scaling") {
    data::Dataset raw = tiny_numeric({{1, 1}, {2, 2}, {3, 3}}, {0, 1, 0});
    raw.rows(1, 1) = std::nan("");
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    CHECK(clean.size() == 2);
    CHECK(clean.row_ids == std::vector<RowId>{0, 2});
}

TEST_CASE("zero-variance feature is dropped with a warning") {
    data::Dataset raw = tiny_numeric({{1, 7}, {2, 7}, {3, 7}}, {0, 1, 0});
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    CHECK(clean.dim() == 1);
    REQUIRE(scaler.dropped_features.size() == 1);
    CHECK(scaler.dropped_features[0] == "f1");
    CHECK(!scaler.warnings.empty());
}

TEST_CASE("preprocess on an all-dropped dataset raises a size error") {
    data::Dataset raw = tiny_numeric({{1}, {2}}, {0, 1});
    raw.rows(0, 0) = std::nan("");
    raw.rows(1, 0) = std::nan("");
    CHECK_THROWS_AS(data::preprocess(raw, 3.0), SizeError);
}

TEST_CASE("preprocess is idempotent on already-scaled data") {
    Rng rng(99);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        rows.push_back({rng.gaussian(0, 1), rng.gaussian(2, 3)});
        labels.push_back(i % 2);
    }
    auto [once, s1] = data::preprocess(tiny_numeric(rows, labels), 1e18);
    auto [twice, s2] = data::preprocess(once, 1e18);
    REQUIRE(twice.size() == once.size());
    CHECK((twice.rows - once.rows).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("scaler inverse transform round-trips") {
    Rng rng(7);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) {
        rows.push_back({rng.uniform(0, 10), rng.uniform(-5, 5)});
        labels.push_back(i % 2);
    }
    data::Dataset raw = tiny_numeric(rows, labels);
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    Eigen::MatrixXd back = data::inverse_transform(scaler, clean);
    for (Eigen::Index i = 0; i < clean.size(); ++i)
        for (Eigen::Index j = 0; j < clean.dim(); ++j)
            CHECK(back(i, j) == doctest::Approx(raw.rows(i, j)).epsilon(1e-9));
}

TEST_CASE("scale_vector matches the matrix transform") {
    data::Dataset raw = tiny_numeric({{1, 10}, {2, 20}, {3, 30}, {4, 40}}, {0, 1, 0, 1});
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    const Eigen::VectorXd v = data::scale_vector(scaler, raw.rows.row(2).transpose());
    CHECK((v - clean.rows.row(2).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(data::scale_vector(scaler, Eigen::VectorXd::Zero(5)), ShapeError);
}

TEST_CASE("split sizes follow the floor rule") {
    Rng rng(3);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) {
        rows.push_back({rng.gaussian(0, 1)});
        labels.push_back(i % 2);
    }
    data::DataSplits s = data::split_45_45_10(tiny_numeric(rows, labels), 5);
    CHECK(s.target_train.size() == 45);
    CHECK(s.shadow_pool.size() == 45);
    CHECK(s.validation.size() == 10);
}

TEST_CASE("split sizes at N=14980 are 6741/6741/1498") {
    std::vector<std::vector<double>> rows(14980, {0.0});
    std::vector<int> labels(14980);
    for (int i = 0; i < 14980; ++i) {
        rows[static_cast<std::size_t>(i)][0] = static_cast<double>(i);
        labels[static_cast<std::size_t>(i)] = i % 2;
    }
    data::DataSplits s = data::split_45_45_10(tiny_numeric(rows, labels), 1);
    CHECK(s.target_train.size() == 6741);
    CHECK(s.shadow_pool.size() == 6741);
    CHECK(s.validation.size() == 1498);
}

TEST_CASE("splits partition the dataset and are seed-deterministic") {
    Rng rng(11);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 137; ++i) {
        rows.push_back({rng.gaussian(0, 1), rng.gaussian(0, 1)});
        labels.push_back(i % 3);
    }
    data::Dataset ds = tiny_numeric(rows, labels);
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
        data::DataSplits s = data::split_45_45_10(ds, seed);
        std::set<RowId> all;
        for (const auto* part : {&s.target_train, &s.shadow_pool, &s.validation})
            for (RowId id : part->row_ids) CHECK(all.insert(id).second);  // disjoint
        CHECK(all.size() == static_cast<std::size_t>(ds.size()));
    }
    data::DataSplits a = data::split_45_45_10(ds, 42);
    data::DataSplits b = data::split_45_45_10(ds, 42);
    CHECK(a.target_train.row_ids == b.target_train.row_ids);
    CHECK(a.validation.row_ids == b.validation.row_ids);
    data::DataSplits c = data::split_45_45_10(ds, 43);
    CHECK(a.target_train.row_ids != c.target_train.row_ids);
}

TEST_CASE("split rejects N < 10") {
    data::Dataset ds = tiny_numeric({{1}, {2}, {3}}, {0, 1, 0});
    CHECK_THROWS_AS(data::split_45_45_10(ds, 1), SizeError);
}

TEST_CASE("subset_by_ids preserves requested order and payload") {
    data::Dataset ds = tiny_numeric({{0}, {10}, {20}, {30}}, {0, 1, 0, 1});
    data::Dataset sub = ds.subset_by_ids({3, 1});
    REQUIRE(sub.size() == 2);
    CHECK(sub.rows(0, 0) == 30);
    CHECK(sub.rows(1, 0) == 10);
    CHECK(sub.labels == std::vector<int>{1, 1});
    CHECK(sub.row_ids == std::vector<RowId>{3, 1});
    CHECK_THROWS_AS(ds.subset_by_ids({77}), SizeError);
}

TEST_CASE("split csv files round-trip through write/read") {
    Rng rng(5);
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (int i = 0; i < 25; ++i) {
        rows.push_back({rng.gaussian(0, 1), rng.uniform(0, 1)});
        labels.push_back(i % 2);
    }
    data::Dataset ds = tiny_numeric(rows, labels);
    const std::string path = "test_data_roundtrip.csv";
    data::write_dataset_csv(ds, path);
    data::Dataset back = data::read_dataset_csv(path);
    std::remove(path.c_str());
    REQUIRE(back.size() == ds.size());
    CHECK(back.row_ids == ds.row_ids);
    CHECK(back.labels == ds.labels);
    CHECK((back.rows - ds.rows).cwiseAbs().maxCoeff() == 0.0);  // full-precision readback
}

TEST_CASE("scaler state serializes and restores") {
    data::Dataset raw = tiny_numeric({{1, 5}, {2, 6}, {3, 9}}, {0, 1, 0});
    auto [clean, scaler] = data::preprocess(raw, 1e18);
    data::ScalerState back = data::ScalerState::from_json(scaler.to_json());
    CHECK(back.feature_names == scaler.feature_names);
    REQUIRE(back.mean.size() == scaler.mean.size());
    for (std::size_t j = 0; j < back.mean.size(); ++j) {
        CHECK(back.mean[j] == doctest::Approx(scaler.mean[j]).epsilon(1e-15));
        CHECK(back.stddev[j] == doctest::Approx(scaler.stddev[j]).epsilon(1e-15));
    }
}

TEST_CASE("blobs and the surrogate mixture have the pinned shapes and are deterministic") {
    data::Dataset blobs = data::make_blobs(200, 6.0, 9);
    CHECK(blobs.size() == 200);
    CHECK(blobs.dim() == 2);
    CHECK(blobs.num_classes == 2);

    data::Dataset a = data::make_surrogate();
    data::Dataset b = data::make_surrogate();
    CHECK(a.size() == 5000);
    CHECK(a.dim() == 14);
    CHECK(a.num_classes == 2);
    CHECK((a.rows - b.rows).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.labels == b.labels);

    int ones = 0;
    for (int y : a.labels) ones += y;
    CHECK(ones > 1500);  // both classes well represented
    CHECK(ones < 3500);
}
