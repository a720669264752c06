#pragma once

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/data.hpp"
#include "cfmia/dp.hpp"
#include "cfmia/neuralnet.hpp"

namespace cfmia::al {

enum class TrainerKind { Standard, Dp };

struct AlConfig {
    double initial_fraction = 0.10;
    int batch_per_iter = 50;
    int max_iters = 50;
    TrainerKind trainer = TrainerKind::Standard;
    dp::DpBudget dp_budget;       // consulted when trainer == Dp
    bool entropy_acquisition = false;  // ablation; default is least-confidence
    std::uint64_t seed = 0;
    nn::MlpConfig model;          // per-iteration trainer settings; seed overridden per iteration
};

struct IterationRecord {
    int iteration = 0;
    int labeled_count = 0;
    double validation_accuracy = 0.0;
    std::vector<RowId> selected_row_ids;  // ids added at this iteration
};

struct AlTrace {
    std::vector<IterationRecord> records;
    int best_iteration = 0;
    std::vector<RowId> best_dataset_row_ids;  // ascending
    std::vector<std::string> notes;
};

struct AlResult {
    nn::MlpModel best_model;
    AlTrace trace;
    double best_validation_accuracy = 0.0;
    double best_realized_epsilon = 0.0;  // +inf under the standard trainer
};

// Confidence = max class probability under the model, eval mode.
std::vector<std::pair<RowId, double>> least_confidence_scores(const nn::MlpModel& model, const data::Dataset& pool);

// k lowest-score unlabeled ids; ties by ascending row_id; fewer than k only on
// pool exhaustion.
std::vector<RowId> acquire(const std::vector<std::pair<RowId, double>>& scores,
                           const std::unordered_set<RowId>& already_labeled, int k);

AlResult run_al(const AlConfig& config, const data::Dataset& train_pool, const data::Dataset& valid);

std::string trace_to_json(const AlTrace& trace);

}  // namespace cfmia::al
