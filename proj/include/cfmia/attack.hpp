#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/counterfactual.hpp"
#include "cfmia/data.hpp"
#include "cfmia/facade.hpp"
#include "cfmia/gbdt.hpp"
#include "cfmia/neuralnet.hpp"

namespace cfmia::attack {

enum class Setting { NoCf, Cf };

inline const char* setting_name(Setting s) { return s == Setting::NoCf ? "no_cf" : "cf"; }

struct ShadowConfig {
    int num_shadows = 5;
    nn::MlpConfig shadow_arch;
    double member_fraction = 0.5;
    int shadow_sample_size = 0;  // rows drawn per shadow; 0 = whole pool
    std::uint64_t seed = 0;
};

struct ShadowSplit {
    std::vector<RowId> member_ids;
    std::vector<RowId> non_member_ids;
};

std::vector<ShadowSplit> build_shadow_splits(const data::Dataset& pool, const ShadowConfig& config);

struct AttackRecord {
    std::vector<double> features;
    int member = 0;
    int source_shadow = 0;
};

// All target/shadow access goes through this response-shaped callable; the
// attack code never sees a model type.
using QueryFn = std::function<facade::QueryResponse(const Eigen::VectorXd&)>;

struct ShadowAccess {
    QueryFn query;
    ShadowSplit split;
    int shadow_index = 0;
};

// Feature layout, fixed across training and evaluation:
//   [posterior sorted desc (K)] + in cf setting
//   [heom(x,E), scaled L2(x,E), changed-feature count, cf_missing flag,
//    posterior of E sorted desc (K)]; sentinel -1 fills distance/count/posterior
// slots when no CF came back (flag = 1).
std::vector<double> attack_features(const QueryFn& query, const Eigen::VectorXd& x, const cf::HeomSpace& space,
                                    Setting setting);

std::vector<AttackRecord> assemble_attack_set(const std::vector<ShadowAccess>& shadows, const data::Dataset& pool,
                                              const cf::HeomSpace& attacker_space, Setting setting);

std::string records_to_csv(const std::vector<AttackRecord>& records);

gbdt::GbdtModel gbdt_train(const std::vector<AttackRecord>& records, const gbdt::GbdtConfig& config,
                           std::vector<double>* round_losses = nullptr);

struct AttackRunResult {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    bool precision_undefined = false;
    std::vector<RowId> predicted_members;  // within the evaluated ids
    std::vector<RowId> eval_member_ids;
    std::vector<RowId> eval_non_member_ids;
};

// Balanced evaluation: min(|members|, |holdout|) per side, seeded subsample.
AttackRunResult attack_target(const gbdt::GbdtModel& attack_model, const QueryFn& target_query,
                              const data::Dataset& universe, const std::vector<RowId>& member_ids,
                              const std::vector<RowId>& holdout_ids, const cf::HeomSpace& attacker_space,
                              Setting setting, std::uint64_t seed, double threshold = 0.5);

struct AttackReport {
    Setting setting = Setting::NoCf;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<double> run_accuracy;
    std::vector<double> run_precision;
    std::vector<double> run_recall;
    bool any_precision_undefined = false;
};

struct SuiteInputs {
    QueryFn target_query_no_cf;
    QueryFn target_query_cf;
    const data::Dataset* shadow_pool = nullptr;
    const data::Dataset* universe = nullptr;  // holds every id referenced below
    std::vector<RowId> target_member_ids;
    std::vector<RowId> holdout_ids;  // ids never in the target's training set
    ShadowConfig shadow_config;
    gbdt::GbdtConfig gbdt_config;
    cf::Reward reward = cf::Reward::Proximity;  // shadow CF services mirror the target's
    int runs = 5;
    std::uint64_t seed = 0;
};

struct SuiteResult {
    AttackReport no_cf;
    AttackReport cf;
    std::vector<AttackRunResult> no_cf_runs;
    std::vector<AttackRunResult> cf_runs;
};

SuiteResult run_attack_suite(const SuiteInputs& in);

std::string report_to_json(const AttackReport& report);

}  // namespace cfmia::attack
