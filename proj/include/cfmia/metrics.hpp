#pragma once

#include <vector>

#include "cfmia/common.hpp"

namespace cfmia::metrics {

struct ExposureInput {
    std::vector<RowId> all_ids;               // D
    std::vector<RowId> trained_ids;           // S, subset of D
    std::vector<RowId> predicted_member_ids;  // the attacker's S-hat
};

// |S \ S-hat| / |S|  ==  1 - TPR over S.
double micro_defended(const ExposureInput& input);

// (|D \ S| + |S \ S-hat|) / |D|; the recall form 1 - (|S|/|D|) * recall is
// computed alongside and cross-checked before returning.
double macro_defended(const ExposureInput& input);

// Recall-form shortcuts for sampled evaluations where TPR is estimated on a
// balanced subset rather than all of S.
double micro_from_recall(double member_recall);
double macro_from_recall(double trained_fraction, double member_recall);

}  // namespace cfmia::metrics
