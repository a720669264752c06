#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfmia/attack.hpp"
#include "cfmia/counterfactual.hpp"
#include "cfmia/data.hpp"
#include "cfmia/presets.hpp"

namespace cfmia::pipeline {

enum class ScenarioKind { Baseline, OnlyAL, OnlyDP, DPPostAL, ALGuidedDP };

const char* scenario_name(ScenarioKind kind);
ScenarioKind scenario_by_name(const std::string& name);
bool scenario_uses_dp(ScenarioKind kind);

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::Baseline;
    std::optional<double> epsilon;  // required iff the kind uses DP
    std::string dataset;
    std::uint64_t master_seed = 0;
};

struct SettingPrivacy {
    double micro_defended = 0.0;
    double macro_defended = 0.0;
    std::vector<double> run_micro;
    std::vector<double> run_macro;
};

struct CfQualityBlock {
    cf::CfQuality quality;
    long explained = 0;
    long unavailable = 0;
};

struct ScenarioReport {
    ScenarioSpec spec;
    std::string model_checkpoint;  // serialized model; kept out of the report JSON
    double accuracy = 0.0;
    double precision = 0.0;  // macro, validation split
    double recall = 0.0;
    double train_subset_fraction = 0.0;
    long train_pool_size = 0;
    long trained_count = 0;
    attack::AttackReport attack_no_cf;
    attack::AttackReport attack_cf;
    SettingPrivacy privacy_no_cf;
    SettingPrivacy privacy_cf;
    CfQualityBlock cf_quality;
    std::optional<double> realized_epsilon;
    long eval_member_count = 0;
    long eval_non_member_count = 0;
    std::map<std::string, double> timings;  // wall-clock seconds per phase
};

ScenarioReport run_scenario(const ScenarioSpec& spec, const data::DataSplits& splits, const presets::Preset& preset);

std::string report_to_json(const ScenarioReport& report);
// Structural check against the report schema; returns false and fills `error`
// on the first violation.
bool validate_report_json(const std::string& text, std::string* error);

std::string report_file_name(const ScenarioSpec& spec, bool include_seed);

struct GridResult {
    std::vector<std::string> report_files;  // relative to out_dir, run order
    std::vector<std::string> failures;      // "<file>: <error>"
    std::string comparison_csv;             // also written to out_dir
    std::vector<ScenarioReport> reports;    // parallel to specs; default-constructed on failure
    std::vector<bool> succeeded;            // parallel to specs
};

GridResult run_grid(const std::vector<ScenarioSpec>& specs, const data::DataSplits& splits,
                    const presets::Preset& preset, const std::string& out_dir, int jobs = 1,
                    bool save_models = false);

std::string comparison_csv(const std::vector<ScenarioSpec>& specs, const std::vector<ScenarioReport>& reports,
                           const std::vector<bool>& succeeded);

}  // namespace cfmia::pipeline
