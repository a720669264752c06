#include "cfmia/active_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace cfmia::al {

namespace {

// Acquisition scores: lower = more informative. Least-confidence uses the max
// posterior directly; entropy mode negates entropy so the same acquire() rule applies.
std::vector<std::pair<RowId, double>> acquisition_scores(const nn::MlpModel& model, const data::Dataset& pool,
                                                         bool entropy_mode) {
    const Eigen::MatrixXd probs = nn::forward_batch(model, pool.rows);
    std::vector<std::pair<RowId, double>> out;
    out.reserve(pool.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        double score;
        if (entropy_mode) {
            double h = 0.0;
            for (Eigen::Index j = 0; j < probs.cols(); ++j) {
                const double p = probs(i, j);
                if (p > 0.0) h -= p * std::log(p);
            }
            score = -h;
        } else {
            score = probs.row(i).maxCoeff();
        }
        out.emplace_back(pool.row_ids[i], score);
    }
    return out;
}

}  // namespace

std::vector<std::pair<RowId, double>> least_confidence_scores(const nn::MlpModel& model, const data::Dataset& pool) {
    if (pool.size() == 0) throw SizeError("least_confidence_scores: empty pool");
    return acquisition_scores(model, pool, false);
}

std::vector<RowId> acquire(const std::vector<std::pair<RowId, double>>& scores,
                           const std::unordered_set<RowId>& already_labeled, int k) {
    if (k < 1) throw SizeError("acquire: k must be >= 1");
    std::vector<std::pair<RowId, double>> remaining;
    remaining.reserve(scores.size());
    for (const auto& s : scores)
        if (!already_labeled.count(s.first)) remaining.push_back(s);
    std::sort(remaining.begin(), remaining.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return a.first < b.first;
    });
    if (static_cast<int>(remaining.size()) > k) remaining.resize(k);
    std::vector<RowId> out;
    out.reserve(remaining.size());
    for (const auto& s : remaining) out.push_back(s.first);
    return out;
}

AlResult run_al(const AlConfig& config, const data::Dataset& train_pool, const data::Dataset& valid) {
    if (config.initial_fraction <= 0.0 || config.initial_fraction >= 1.0)
        throw ConfigError("run_al: initial_fraction must lie in (0,1)");
    if (config.batch_per_iter < 1) throw ConfigError("run_al: batch_per_iter must be >= 1");
    if (config.max_iters < 1) throw ConfigError("run_al: max_iters must be >= 1");
    const int n = static_cast<int>(train_pool.size());
    const int initial = std::max(1, static_cast<int>(std::floor(config.initial_fraction * n)));
    if (initial + config.batch_per_iter > n)
        throw SizeError("run_al: pool too small for initial subset plus one acquisition batch");

    Rng init_rng(derive_seed(config.seed, "al_init"));
    std::vector<int> positions(n);
    for (int i = 0; i < n; ++i) positions[i] = i;
    init_rng.shuffle(positions);
    positions.resize(initial);

    std::vector<RowId> labeled_ids;
    std::unordered_set<RowId> labeled_set;
    for (int p : positions) {
        labeled_ids.push_back(train_pool.row_ids[p]);
        labeled_set.insert(train_pool.row_ids[p]);
    }

    AlResult result;
    result.best_validation_accuracy = -1.0;
    const bool dp_mode = config.trainer == TrainerKind::Dp;
    if (dp_mode)
        result.trace.notes.push_back(
            "dp trainer: each iteration spends the full (epsilon, delta) budget independently; "
            "compounded spend across iterations is not reflected in the per-run epsilon");

    nn::MlpModel iter_model;  // model of the latest completed iteration; scores the next acquisition
    std::vector<RowId> added_this_iter(labeled_ids);  // iteration 0 reports the initial draw
    for (int t = 0; t <= config.max_iters; ++t) {
        if (t > 0) {
            auto scores = acquisition_scores(iter_model, train_pool, config.entropy_acquisition);
            added_this_iter = acquire(scores, labeled_set, config.batch_per_iter);
            if (added_this_iter.empty()) break;  // pool exhausted
            for (RowId id : added_this_iter) {
                labeled_ids.push_back(id);
                labeled_set.insert(id);
            }
        }

        data::Dataset subset = train_pool.subset_by_ids(labeled_ids);
        nn::MlpConfig mc = config.model;
        mc.input_dim = static_cast<int>(train_pool.dim());
        mc.num_classes = train_pool.num_classes;
        mc.seed = derive_seed(config.seed, "al_iter", t);

        double realized_eps = std::numeric_limits<double>::infinity();
        if (dp_mode) {
            dp::DpTrainResult r = dp::train_dp(mc, config.dp_budget, subset, valid);
            iter_model = std::move(r.model);
            realized_eps = r.realized_epsilon;
        } else {
            iter_model = nn::train(mc, subset, valid).model;
        }

        IterationRecord rec;
        rec.iteration = t;
        rec.labeled_count = static_cast<int>(labeled_ids.size());
        rec.validation_accuracy = nn::evaluate(iter_model, valid).accuracy;
        rec.selected_row_ids = added_this_iter;
        result.trace.records.push_back(rec);

        if (rec.validation_accuracy > result.best_validation_accuracy) {
            result.best_validation_accuracy = rec.validation_accuracy;
            result.best_model = iter_model;
            result.best_realized_epsilon = realized_eps;
            result.trace.best_iteration = t;
            result.trace.best_dataset_row_ids = labeled_ids;
            std::sort(result.trace.best_dataset_row_ids.begin(), result.trace.best_dataset_row_ids.end());
        }
    }
    return result;
}

std::string trace_to_json(const AlTrace& trace) {
    nlohmann::ordered_json doc;
    doc["records"] = nlohmann::ordered_json::array();
    for (const auto& r : trace.records) {
        nlohmann::ordered_json rec;
        rec["iteration"] = r.iteration;
        rec["labeled_count"] = r.labeled_count;
        rec["validation_accuracy"] = r.validation_accuracy;
        rec["selected_row_ids"] = r.selected_row_ids;
        doc["records"].push_back(std::move(rec));
    }
    doc["best_iteration"] = trace.best_iteration;
    doc["best_dataset_row_ids"] = trace.best_dataset_row_ids;
    doc["notes"] = trace.notes;
    return doc.dump(2);
}

}  // namespace cfmia::al
