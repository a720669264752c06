#include "cfmia/metrics.hpp"

#include <cmath>
#include <unordered_set>

namespace cfmia::metrics {

namespace {

std::unordered_set<RowId> as_set(const std::vector<RowId>& v) { return {v.begin(), v.end()}; }

void validate(const ExposureInput& input) {
    const auto d = as_set(input.all_ids);
    if (d.size() != input.all_ids.size()) throw SchemaError("privacy metrics: duplicate ids in D");
    if (as_set(input.trained_ids).size() != input.trained_ids.size())
        throw SchemaError("privacy metrics: duplicate ids in S");
    for (RowId id : input.trained_ids)
        if (!d.count(id)) throw SchemaError("privacy metrics: trained id " + std::to_string(id) + " outside D");
}

}  // namespace

double micro_defended(const ExposureInput& input) {
    if (input.trained_ids.empty()) throw UndefinedMetricError("micro_defended: empty trained set");
    validate(input);
    const auto predicted = as_set(input.predicted_member_ids);
    long hidden = 0;
    for (RowId id : input.trained_ids)
        if (!predicted.count(id)) ++hidden;
    return static_cast<double>(hidden) / static_cast<double>(input.trained_ids.size());
}

double macro_defended(const ExposureInput& input) {
    if (input.all_ids.empty()) throw UndefinedMetricError("macro_defended: empty dataset");
    validate(input);
    const auto predicted = as_set(input.predicted_member_ids);
    const auto trained = as_set(input.trained_ids);

    long hidden = 0, detected = 0;
    for (RowId id : input.trained_ids)
        predicted.count(id) ? ++detected : ++hidden;
    const long saved = static_cast<long>(input.all_ids.size()) - static_cast<long>(trained.size());
    const double set_form = static_cast<double>(saved + hidden) / static_cast<double>(input.all_ids.size());

    const double recall =
        input.trained_ids.empty() ? 0.0 : static_cast<double>(detected) / static_cast<double>(input.trained_ids.size());
    const double ratio = static_cast<double>(trained.size()) / static_cast<double>(input.all_ids.size());
    const double recall_form = macro_from_recall(ratio, recall);
    if (std::fabs(set_form - recall_form) > 1e-12)
        throw NumericError("macro_defended: set form and recall form disagree");
    return set_form;
}

double micro_from_recall(double member_recall) {
    if (member_recall < 0.0 || member_recall > 1.0) throw NumericError("micro_from_recall: recall outside [0,1]");
    return 1.0 - member_recall;
}

double macro_from_recall(double trained_fraction, double member_recall) {
    if (trained_fraction < 0.0 || trained_fraction > 1.0)
        throw NumericError("macro_from_recall: trained fraction outside [0,1]");
    if (member_recall < 0.0 || member_recall > 1.0) throw NumericError("macro_from_recall: recall outside [0,1]");
    return 1.0 - trained_fraction * member_recall;
}

}  // namespace cfmia::metrics
