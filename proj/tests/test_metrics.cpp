#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/metrics.hpp"

using namespace cfmia;

namespace {

// Brute-force oracle: walk every id in D and classify it against S / S-hat,
// then read the ratios straight off the confusion counts.
struct BruteCounts {
    long tp = 0, fn = 0, never_trained = 0;
};

BruteCounts brute(const metrics::ExposureInput& in) {
    std::unordered_set<RowId> s(in.trained_ids.begin(), in.trained_ids.end());
    std::unordered_set<RowId> shat(in.predicted_member_ids.begin(), in.predicted_member_ids.end());
    BruteCounts c;
    for (RowId id : in.all_ids) {
        if (!s.count(id)) {
            ++c.never_trained;
            continue;
        }
        shat.count(id) ? ++c.tp : ++c.fn;
    }
    return c;
}

metrics::ExposureInput random_triple(Rng& rng) {
    metrics::ExposureInput in;
    const int n = 1 + static_cast<int>(rng.uniform_int(50));
    for (int i = 0; i < n; ++i) in.all_ids.push_back(static_cast<RowId>(i * 7 + 3));
    for (RowId id : in.all_ids) {
        if (rng.uniform() < 0.5) in.trained_ids.push_back(id);
        // S-hat may name any id in D, member or not, and may also be sloppy
        // about ids outside D; keep it inside D here to match the contract.
        if (rng.uniform() < 0.4) in.predicted_member_ids.push_back(id);
    }
    if (in.trained_ids.empty()) in.trained_ids.push_back(in.all_ids.front());
    return in;
}

}  // namespace

TEST_CASE("micro and macro ratios match brute-force enumeration on 1000 random triples") {
    Rng rng(411);
    for (int t = 0; t < 1000; ++t) {
        const auto in = random_triple(rng);
        const auto c = brute(in);
        const double micro = static_cast<double>(c.fn) / static_cast<double>(c.tp + c.fn);
        const double macro =
            static_cast<double>(c.never_trained + c.fn) / static_cast<double>(in.all_ids.size());
        CHECK(std::fabs(metrics::micro_defended(in) - micro) <= 1e-12);
        CHECK(std::fabs(metrics::macro_defended(in) - macro) <= 1e-12);

        // Set-form / recall-form identity.
        const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
        const double fraction =
            static_cast<double>(in.trained_ids.size()) / static_cast<double>(in.all_ids.size());
        CHECK(std::fabs(metrics::macro_defended(in) - metrics::macro_from_recall(fraction, recall)) <= 1e-12);
    }
}

TEST_CASE("recall-form shortcuts reproduce the reported DP-Post-AL operating point") {
    // 77.45% of the data trained, micro 0.97 -> macro 0.9768.
    const double micro = 0.97;
    const double recall = 1.0 - micro;
    CHECK(metrics::micro_from_recall(recall) == doctest::Approx(0.97).epsilon(1e-12));
    CHECK(metrics::macro_from_recall(0.7745, recall) == doctest::Approx(0.9768).epsilon(0.001 / 0.9768));
}

TEST_CASE("micro is 1 - TPR and macro equals micro when everything was trained") {
    metrics::ExposureInput in;
    in.all_ids = {1, 2, 3, 4};
    in.trained_ids = {1, 2, 3, 4};
    in.predicted_member_ids = {1, 2};
    CHECK(metrics::micro_defended(in) == doctest::Approx(0.5));
    CHECK(metrics::macro_defended(in) == doctest::Approx(0.5));
}

TEST_CASE("never-trained records count as defended in macro only") {
    metrics::ExposureInput in;
    in.all_ids = {1, 2, 3, 4, 5};
    in.trained_ids = {1, 2};
    in.predicted_member_ids = {1, 2};  // attacker finds every member
    CHECK(metrics::micro_defended(in) == doctest::Approx(0.0));
    CHECK(metrics::macro_defended(in) == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("degenerate and malformed inputs are rejected") {
    metrics::ExposureInput empty_s;
    empty_s.all_ids = {1, 2};
    CHECK_THROWS_AS(metrics::micro_defended(empty_s), UndefinedMetricError);

    metrics::ExposureInput empty_d;
    CHECK_THROWS_AS(metrics::macro_defended(empty_d), UndefinedMetricError);

    metrics::ExposureInput dup_d;
    dup_d.all_ids = {1, 1, 2};
    dup_d.trained_ids = {1};
    CHECK_THROWS_AS(metrics::micro_defended(dup_d), SchemaError);

    metrics::ExposureInput dup_s;
    dup_s.all_ids = {1, 2, 3};
    dup_s.trained_ids = {1, 1};
    CHECK_THROWS_AS(metrics::micro_defended(dup_s), SchemaError);

    metrics::ExposureInput outside;
    outside.all_ids = {1, 2, 3};
    outside.trained_ids = {9};
    CHECK_THROWS_AS(metrics::macro_defended(outside), SchemaError);

    CHECK_THROWS_AS(metrics::micro_from_recall(1.5), NumericError);
    CHECK_THROWS_AS(metrics::macro_from_recall(-0.1, 0.5), NumericError);
    CHECK_THROWS_AS(metrics::macro_from_recall(0.5, 2.0), NumericError);
}

TEST_CASE("predictions outside S only ever help the defender ratios") {
    // Flooding S-hat with non-members must not change micro, and macro's
    // never-trained term is independent of the attacker's false positives.
    metrics::ExposureInput in;
    in.all_ids = {1, 2, 3, 4, 5, 6};
    in.trained_ids = {1, 2, 3};
    in.predicted_member_ids = {1};
    const double micro_before = metrics::micro_defended(in);
    const double macro_before = metrics::macro_defended(in);
    in.predicted_member_ids = {1, 4, 5, 6};
    CHECK(metrics::micro_defended(in) == doctest::Approx(micro_before));
    CHECK(metrics::macro_defended(in) == doctest::Approx(macro_before));
}
