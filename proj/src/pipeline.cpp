#include "cfmia/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "json.hpp"

#include "cfmia/active_learning.hpp"
#include "cfmia/dp.hpp"
#include "cfmia/metrics.hpp"
#include "cfmia/version.hpp"

namespace cfmia::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const char* scenario_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::Baseline: return "baseline";
        case ScenarioKind::OnlyAL: return "only_al";
        case ScenarioKind::OnlyDP: return "only_dp";
        case ScenarioKind::DPPostAL: return "dp_post_al";
        case ScenarioKind::ALGuidedDP: return "al_guided_dp";
    }
    throw ConfigError("scenario_name: bad kind");
}

ScenarioKind scenario_by_name(const std::string& name) {
    if (name == "baseline") return ScenarioKind::Baseline;
    if (name == "only_al") return ScenarioKind::OnlyAL;
    if (name == "only_dp") return ScenarioKind::OnlyDP;
    if (name == "dp_post_al") return ScenarioKind::DPPostAL;
    if (name == "al_guided_dp") return ScenarioKind::ALGuidedDP;
    throw ConfigError("unknown scenario: " + name);
}

bool scenario_uses_dp(ScenarioKind kind) {
    return kind == ScenarioKind::OnlyDP || kind == ScenarioKind::DPPostAL || kind == ScenarioKind::ALGuidedDP;
}

namespace {

data::Dataset concat(const data::Dataset& a, const data::Dataset& b) {
    if (a.dim() != b.dim()) throw ShapeError("concat: dimension mismatch");
    data::Dataset out;
    out.schema = a.schema;
    out.num_classes = std::max(a.num_classes, b.num_classes);
    out.label_names = a.label_names;
    out.rows.resize(a.size() + b.size(), a.dim());
    out.rows.topRows(a.size()) = a.rows;
    out.rows.bottomRows(b.size()) = b.rows;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.row_ids = a.row_ids;
    out.row_ids.insert(out.row_ids.end(), b.row_ids.begin(), b.row_ids.end());
    return out;
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

ScenarioReport run_scenario_inner(const ScenarioSpec& spec, const data::DataSplits& splits,
                                  const presets::Preset& preset) {
    const data::Dataset& train = splits.target_train;
    const data::Dataset& valid = splits.validation;
    if (train.size() == 0 || valid.size() == 0) throw SizeError("run_scenario: empty split");
    if (scenario_uses_dp(spec.kind) && !spec.epsilon)
        throw ConfigError("run_scenario: DP scenario requires an epsilon");
    if (!scenario_uses_dp(spec.kind) && spec.epsilon)
        throw ConfigError("run_scenario: non-DP scenario must not carry an epsilon");

    ScenarioReport report;
    report.spec = spec;
    report.train_pool_size = static_cast<long>(train.size());

    nn::MlpConfig mc = preset.model;
    mc.input_dim = static_cast<int>(train.dim());
    mc.num_classes = train.num_classes;
    mc.seed = derive_seed(spec.master_seed, "model");

    dp::DpBudget budget = preset.dp;
    if (spec.epsilon) budget.epsilon = *spec.epsilon;

    al::AlConfig ac = preset.al;
    ac.model = preset.al.model;
    ac.seed = derive_seed(spec.master_seed, "al");

    Timer total_timer;
    Timer train_timer;
    nn::MlpModel model;
    std::vector<RowId> trained_ids;
    switch (spec.kind) {
        case ScenarioKind::Baseline: {
            model = nn::train(mc, train, valid).model;
            trained_ids = train.row_ids;
            break;
        }
        case ScenarioKind::OnlyAL: {
            ac.trainer = al::TrainerKind::Standard;
            auto r = al::run_al(ac, train, valid);
            model = std::move(r.best_model);
            trained_ids = r.trace.best_dataset_row_ids;
            break;
        }
        case ScenarioKind::OnlyDP: {
            auto r = dp::train_dp(mc, budget, train, valid);
            model = std::move(r.model);
            trained_ids = train.row_ids;
            report.realized_epsilon = r.realized_epsilon;
            break;
        }
        case ScenarioKind::DPPostAL: {
            ac.trainer = al::TrainerKind::Standard;
            auto al_result = al::run_al(ac, train, valid);
            trained_ids = al_result.trace.best_dataset_row_ids;
            data::Dataset best_subset = train.subset_by_ids(trained_ids);
            nn::MlpConfig dp_mc = mc;
            dp_mc.seed = derive_seed(spec.master_seed, "dp_after_al");
            auto r = dp::train_dp(dp_mc, budget, best_subset, valid);
            model = std::move(r.model);
            report.realized_epsilon = r.realized_epsilon;
            break;
        }
        case ScenarioKind::ALGuidedDP: {
            ac.trainer = al::TrainerKind::Dp;
            ac.dp_budget = budget;
            auto r = al::run_al(ac, train, valid);
            model = std::move(r.best_model);
            trained_ids = r.trace.best_dataset_row_ids;
            report.realized_epsilon = r.best_realized_epsilon;
            break;
        }
    }
    report.timings["train_seconds"] = train_timer.seconds();

    report.trained_count = static_cast<long>(trained_ids.size());
    report.train_subset_fraction = static_cast<double>(trained_ids.size()) / static_cast<double>(train.size());

    const nn::EvalMetrics model_metrics = nn::evaluate(model, valid);
    report.accuracy = model_metrics.accuracy;
    report.precision = model_metrics.macro_precision;
    report.recall = model_metrics.macro_recall;
    report.model_checkpoint = model.to_json();

    data::Dataset trained_subset = train.subset_by_ids(trained_ids);

    facade::ServiceConfig plain_cfg;
    plain_cfg.cf_enabled = false;
    auto facade_plain = std::make_shared<facade::Facade>(facade::Facade::from_model(model, trained_subset, plain_cfg));
    facade::ServiceConfig cf_cfg;
    cf_cfg.cf_enabled = true;
    cf_cfg.reward = preset.reward;
    auto facade_cf = std::make_shared<facade::Facade>(facade::Facade::from_model(model, trained_subset, cf_cfg));
    attack::QueryFn query_plain = [facade_plain](const Eigen::VectorXd& x) { return facade_plain->query(x); };
    attack::QueryFn query_cf = [facade_cf](const Eigen::VectorXd& x) { return facade_cf->query(x); };

    // Explanation quality over the held-out split, through the CF facade.
    Timer cf_timer;
    std::vector<cf::Counterfactual> cfs;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(valid.size()); ++i) {
        const facade::QueryResponse response = facade_cf->query(valid.rows.row(i).transpose());
        if (response.counterfactual) {
            cfs.push_back(*response.counterfactual);
            ++report.cf_quality.explained;
        } else {
            ++report.cf_quality.unavailable;
        }
    }
    if (!cfs.empty()) report.cf_quality.quality = cf::cf_quality(cfs);
    report.timings["cf_seconds"] = cf_timer.seconds();

    // Membership attack in both settings.
    Timer attack_timer;
    std::unordered_set<RowId> trained_set(trained_ids.begin(), trained_ids.end());
    std::vector<RowId> holdout = valid.row_ids;
    for (RowId id : train.row_ids)
        if (!trained_set.count(id)) holdout.push_back(id);

    const data::Dataset universe = concat(train, valid);
    attack::SuiteInputs inputs;
    inputs.target_query_no_cf = query_plain;
    inputs.target_query_cf = query_cf;
    inputs.shadow_pool = &splits.shadow_pool;
    inputs.universe = &universe;
    inputs.target_member_ids = trained_ids;
    inputs.holdout_ids = holdout;
    inputs.shadow_config = preset.shadow;
    inputs.gbdt_config = preset.gbdt;
    inputs.reward = preset.reward;
    inputs.runs = preset.attack_runs;
    inputs.seed = derive_seed(spec.master_seed, "attack");
    attack::SuiteResult suite = attack::run_attack_suite(inputs);
    report.attack_no_cf = suite.no_cf;
    report.attack_cf = suite.cf;
    report.timings["attack_seconds"] = attack_timer.seconds();

    const double trained_fraction = report.train_subset_fraction;
    auto fill_privacy = [&](SettingPrivacy& privacy, const std::vector<attack::AttackRunResult>& runs) {
        for (const auto& r : runs) {
            privacy.run_micro.push_back(metrics::micro_from_recall(r.recall));
            privacy.run_macro.push_back(metrics::macro_from_recall(trained_fraction, r.recall));
        }
        for (double v : privacy.run_micro) privacy.micro_defended += v / privacy.run_micro.size();
        for (double v : privacy.run_macro) privacy.macro_defended += v / privacy.run_macro.size();
    };
    fill_privacy(report.privacy_no_cf, suite.no_cf_runs);
    fill_privacy(report.privacy_cf, suite.cf_runs);
    if (!suite.no_cf_runs.empty()) {
        report.eval_member_count = static_cast<long>(suite.no_cf_runs.front().eval_member_ids.size());
        report.eval_non_member_count = static_cast<long>(suite.no_cf_runs.front().eval_non_member_ids.size());
    }
    report.timings["total_seconds"] = total_timer.seconds();
    return report;
}

json attack_report_json(const attack::AttackReport& r) {
    json doc;
    doc["accuracy"] = r.accuracy;
    doc["precision"] = r.precision;
    doc["recall"] = r.recall;
    doc["run_accuracy"] = r.run_accuracy;
    doc["run_precision"] = r.run_precision;
    doc["run_recall"] = r.run_recall;
    doc["precision_undefined"] = r.any_precision_undefined;
    return doc;
}

json privacy_json(const SettingPrivacy& p) {
    json doc;
    doc["micro_defended"] = p.micro_defended;
    doc["macro_defended"] = p.macro_defended;
    doc["run_micro"] = p.run_micro;
    doc["run_macro"] = p.run_macro;
    return doc;
}

}  // namespace

ScenarioReport run_scenario(const ScenarioSpec& spec, const data::DataSplits& splits, const presets::Preset& preset) {
    try {
        return run_scenario_inner(spec, splits, preset);
    } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "scenario " << scenario_name(spec.kind);
        if (spec.epsilon) msg << " (eps=" << *spec.epsilon << ")";
        msg << ": " << e.what();
        throw Error(msg.str());
    }
}

std::string report_to_json(const ScenarioReport& report) {
    json doc;
    doc["version"] = kArtifactVersion;
    json spec;
    spec["kind"] = scenario_name(report.spec.kind);
    spec["epsilon"] = report.spec.epsilon ? json(*report.spec.epsilon) : json(nullptr);
    spec["dataset"] = report.spec.dataset;
    spec["master_seed"] = report.spec.master_seed;
    doc["spec"] = std::move(spec);
    json mm;
    mm["accuracy"] = report.accuracy;
    mm["precision"] = report.precision;
    mm["recall"] = report.recall;
    doc["model_metrics"] = std::move(mm);
    doc["train_subset_fraction"] = report.train_subset_fraction;
    doc["train_pool_size"] = report.train_pool_size;
    doc["trained_count"] = report.trained_count;
    json att;
    att["no_cf"] = attack_report_json(report.attack_no_cf);
    att["cf"] = attack_report_json(report.attack_cf);
    doc["attack"] = std::move(att);
    json priv;
    priv["no_cf"] = privacy_json(report.privacy_no_cf);
    priv["cf"] = privacy_json(report.privacy_cf);
    doc["privacy"] = std::move(priv);
    json cfq;
    cfq["avg_proximity"] = report.cf_quality.quality.avg_proximity;
    cfq["avg_sparsity"] = report.cf_quality.quality.avg_sparsity;
    cfq["avg_sparsity_fraction"] = report.cf_quality.quality.avg_sparsity_fraction;
    cfq["validity"] = report.cf_quality.quality.validity;
    cfq["explained"] = report.cf_quality.explained;
    cfq["unavailable"] = report.cf_quality.unavailable;
    doc["cf_quality"] = std::move(cfq);
    doc["realized_epsilon"] =
        report.realized_epsilon && std::isfinite(*report.realized_epsilon) ? json(*report.realized_epsilon) : json(nullptr);
    doc["eval_member_count"] = report.eval_member_count;
    doc["eval_non_member_count"] = report.eval_non_member_count;
    doc["attack_feature_layout"] = kAttackFeatureLayout;
    json timings;
    for (const auto& [k, v] : report.timings) timings[k] = v;
    doc["timings"] = std::move(timings);
    return doc.dump(2);
}

bool validate_report_json(const std::string& text, std::string* error) {
    auto fail = [&](const std::string& msg) {
        if (error) *error = msg;
        return false;
    };
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        return fail(std::string("not valid json: ") + e.what());
    }
    auto need = [&](const json& node, const char* key, const char* type) -> const json* {
        if (!node.contains(key)) return nullptr;
        const json& v = node[key];
        const std::string t = type;
        if (t == "number" && !v.is_number()) return nullptr;
        if (t == "number_or_null" && !v.is_number() && !v.is_null()) return nullptr;
        if (t == "string" && !v.is_string()) return nullptr;
        if (t == "integer" && !v.is_number_integer() && !v.is_number_unsigned()) return nullptr;
        if (t == "object" && !v.is_object()) return nullptr;
        if (t == "array" && !v.is_array()) return nullptr;
        if (t == "bool" && !v.is_boolean()) return nullptr;
        return &v;
    };
    if (!need(doc, "version", "string")) return fail("missing/invalid: version");
    const json* spec = need(doc, "spec", "object");
    if (!spec) return fail("missing/invalid: spec");
    if (!need(*spec, "kind", "string")) return fail("missing/invalid: spec.kind");
    try {
        scenario_by_name((*spec)["kind"].get<std::string>());
    } catch (const std::exception&) {
        return fail("spec.kind is not a scenario");
    }
    if (!need(*spec, "epsilon", "number_or_null")) return fail("missing/invalid: spec.epsilon");
    if (!need(*spec, "dataset", "string")) return fail("missing/invalid: spec.dataset");
    if (!need(*spec, "master_seed", "integer")) return fail("missing/invalid: spec.master_seed");
    const json* mm = need(doc, "model_metrics", "object");
    if (!mm) return fail("missing/invalid: model_metrics");
    for (const char* k : {"accuracy", "precision", "recall"}) {
        const json* v = need(*mm, k, "number");
        if (!v) return fail(std::string("missing/invalid: model_metrics.") + k);
        const double x = v->get<double>();
        if (x < 0.0 || x > 1.0) return fail(std::string("out of range: model_metrics.") + k);
    }
    if (!need(doc, "train_subset_fraction", "number")) return fail("missing/invalid: train_subset_fraction");
    if (!need(doc, "train_pool_size", "integer")) return fail("missing/invalid: train_pool_size");
    if (!need(doc, "trained_count", "integer")) return fail("missing/invalid: trained_count");
    const json* att = need(doc, "attack", "object");
    if (!att) return fail("missing/invalid: attack");
    for (const char* setting : {"no_cf", "cf"}) {
        const json* s = need(*att, setting, "object");
        if (!s) return fail(std::string("missing/invalid: attack.") + setting);
        for (const char* k : {"accuracy", "precision", "recall"})
            if (!need(*s, k, "number")) return fail(std::string("missing/invalid: attack.") + setting + "." + k);
        std::size_t len = 0;
        for (const char* k : {"run_accuracy", "run_precision", "run_recall"}) {
            const json* arr = need(*s, k, "array");
            if (!arr) return fail(std::string("missing/invalid: attack.") + setting + "." + k);
            if (len == 0) len = arr->size();
            if (arr->size() != len || len == 0) return fail(std::string("ragged run arrays: attack.") + setting);
        }
        if (!need(*s, "precision_undefined", "bool"))
            return fail(std::string("missing/invalid: attack.") + setting + ".precision_undefined");
    }
    const json* priv = need(doc, "privacy", "object");
    if (!priv) return fail("missing/invalid: privacy");
    for (const char* setting : {"no_cf", "cf"}) {
        const json* s = need(*priv, setting, "object");
        if (!s) return fail(std::string("missing/invalid: privacy.") + setting);
        for (const char* k : {"micro_defended", "macro_defended"})
            if (!need(*s, k, "number")) return fail(std::string("missing/invalid: privacy.") + setting + "." + k);
    }
    const json* cfq = need(doc, "cf_quality", "object");
    if (!cfq) return fail("missing/invalid: cf_quality");
    for (const char* k : {"avg_proximity", "avg_sparsity", "avg_sparsity_fraction", "validity"})
        if (!need(*cfq, k, "number")) return fail(std::string("missing/invalid: cf_quality.") + k);
    for (const char* k : {"explained", "unavailable"})
        if (!need(*cfq, k, "integer")) return fail(std::string("missing/invalid: cf_quality.") + k);
    if (!need(doc, "realized_epsilon", "number_or_null")) return fail("missing/invalid: realized_epsilon");
    if (!need(doc, "eval_member_count", "integer")) return fail("missing/invalid: eval_member_count");
    if (!need(doc, "eval_non_member_count", "integer")) return fail("missing/invalid: eval_non_member_count");
    if (!need(doc, "timings", "object")) return fail("missing/invalid: timings");
    const std::string kind = (*spec)["kind"].get<std::string>();
    const bool dp_kind = scenario_uses_dp(scenario_by_name(kind));
    if (dp_kind && (*spec)["epsilon"].is_null()) return fail("DP scenario without epsilon");
    if (!dp_kind && !(*spec)["epsilon"].is_null()) return fail("non-DP scenario carries epsilon");
    return true;
}

std::string report_file_name(const ScenarioSpec& spec, bool include_seed) {
    std::ostringstream name;
    name << scenario_name(spec.kind);
    if (spec.epsilon) {
        name << "_";
        const double e = *spec.epsilon;
        if (e == std::floor(e))
            name << static_cast<long>(e);
        else
            name << e;
    }
    if (include_seed) name << "_s" << spec.master_seed;
    name << ".json";
    return name.str();
}

std::string comparison_csv(const std::vector<ScenarioSpec>& specs, const std::vector<ScenarioReport>& reports,
                           const std::vector<bool>& succeeded) {
    std::ostringstream out;
    out.precision(12);
    out << "dataset,scenario,epsilon,setting,model_accuracy,model_precision,model_recall,train_subset_fraction,"
           "realized_epsilon,attack_accuracy,attack_precision,attack_recall,micro_defended,macro_defended,"
           "avg_proximity,avg_sparsity,avg_sparsity_fraction\n";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (!succeeded[i]) continue;
        const ScenarioReport& r = reports[i];
        for (int setting = 0; setting < 2; ++setting) {
            const attack::AttackReport& att = setting == 0 ? r.attack_no_cf : r.attack_cf;
            const SettingPrivacy& priv = setting == 0 ? r.privacy_no_cf : r.privacy_cf;
            out << r.spec.dataset << ',' << scenario_name(r.spec.kind) << ',';
            if (r.spec.epsilon) out << *r.spec.epsilon;
            out << ',' << (setting == 0 ? "no_cf" : "cf") << ',' << r.accuracy << ',' << r.precision << ','
                << r.recall << ',' << r.train_subset_fraction << ',';
            if (r.realized_epsilon && std::isfinite(*r.realized_epsilon)) out << *r.realized_epsilon;
            out << ',' << att.accuracy << ',' << att.precision << ',' << att.recall << ',' << priv.micro_defended
                << ',' << priv.macro_defended << ',' << r.cf_quality.quality.avg_proximity << ','
                << r.cf_quality.quality.avg_sparsity << ',' << r.cf_quality.quality.avg_sparsity_fraction << '\n';
        }
    }
    return out.str();
}

GridResult run_grid(const std::vector<ScenarioSpec>& specs, const data::DataSplits& splits,
                    const presets::Preset& preset, const std::string& out_dir, int jobs, bool save_models) {
    if (specs.empty()) throw SizeError("run_grid: no scenario specs");
    fs::create_directories(out_dir);

    // Seed suffixes only when names would collide (multi-seed grids).
    std::unordered_set<std::string> plain_names;
    bool include_seed = false;
    for (const auto& spec : specs)
        if (!plain_names.insert(report_file_name(spec, false)).second) include_seed = true;

    std::vector<ScenarioReport> reports(specs.size());
    std::vector<bool> succeeded(specs.size(), false);
    std::vector<std::string> errors(specs.size());

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(specs.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            try {
                reports[i] = run_scenario(specs[i], splits, preset);
                succeeded[i] = true;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    GridResult result;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const std::string name = report_file_name(specs[i], include_seed);
        if (succeeded[i]) {
            const std::string text = report_to_json(reports[i]);
            std::string schema_error;
            if (!validate_report_json(text, &schema_error)) {
                succeeded[i] = false;
                errors[i] = "report schema violation: " + schema_error;
            } else {
                std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
                f << text << "\n";
                result.report_files.push_back(name);
                if (save_models) {
                    const std::string stem = name.substr(0, name.size() - 5);  // strip ".json"
                    std::ofstream mf(fs::path(out_dir) / (stem + "_model.json"), std::ios::binary);
                    mf << reports[i].model_checkpoint << "\n";
                }
            }
        }
        if (!succeeded[i]) result.failures.push_back(name + ": " + errors[i]);
    }
    result.reports = reports;
    result.succeeded = succeeded;

    result.comparison_csv = comparison_csv(specs, reports, succeeded);
    {
        std::ofstream f(fs::path(out_dir) / "comparison.csv", std::ios::binary);
        f << result.comparison_csv;
    }

    // Deterministic manifest: seeds + config digest, no wall-clock content.
    std::ostringstream cfg;
    cfg << preset.name << '|' << preset.model.epochs << '|' << preset.model.batch_size << '|'
        << preset.model.learning_rate << '|';
    for (int w : preset.model.layer_widths) cfg << w << ',';
    cfg << '|' << preset.dp.clip_norm << '|' << preset.dp.delta << '|' << preset.al.initial_fraction << '|'
        << preset.al.batch_per_iter << '|' << preset.al.max_iters << '|' << preset.shadow.num_shadows << '|'
        << preset.gbdt.n_estimators << '|' << preset.gbdt.max_depth << '|' << preset.gbdt.learning_rate << '|'
        << preset.attack_runs;
    for (const auto& spec : specs) {
        cfg << '|' << scenario_name(spec.kind) << ':';
        if (spec.epsilon) cfg << *spec.epsilon;
        cfg << ':' << spec.master_seed;
    }
    json manifest;
    manifest["artifact_version"] = kArtifactVersion;
    std::ostringstream hash_hex;
    hash_hex << std::hex << hash_tag(cfg.str());
    manifest["config_hash"] = hash_hex.str();
    manifest["dataset"] = specs.front().dataset;
    json seeds = json::array();
    for (const auto& spec : specs) seeds.push_back(spec.master_seed);
    manifest["seeds"] = std::move(seeds);
    manifest["reports"] = result.report_files;
    manifest["failures"] = result.failures;
    {
        std::ofstream f(fs::path(out_dir) / "manifest.json", std::ios::binary);
        f << manifest.dump(2) << "\n";
    }
    return result;
}

}  // namespace cfmia::pipeline
