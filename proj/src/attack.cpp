#include "cfmia/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace cfmia::attack {

namespace {

std::vector<double> sorted_desc(const Eigen::VectorXd& v) {
    std::vector<double> out(v.data(), v.data() + v.size());
    std::sort(out.begin(), out.end(), std::greater<double>());
    return out;
}

std::unordered_map<RowId, int> index_by_id(const data::Dataset& d) {
    std::unordered_map<RowId, int> map;
    map.reserve(d.size());
    for (std::size_t i = 0; i < d.row_ids.size(); ++i) map.emplace(d.row_ids[i], static_cast<int>(i));
    return map;
}

Eigen::VectorXd row_of(const data::Dataset& d, const std::unordered_map<RowId, int>& index, RowId id) {
    auto it = index.find(id);
    if (it == index.end()) throw SchemaError("attack: row_id " + std::to_string(id) + " missing from dataset");
    return d.rows.row(it->second).transpose();
}

int count_changed(const cf::HeomSpace& space, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    int changed = 0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        if (space.schema[j].kind == data::FeatureKind::Categorical) {
            if (a[j] != b[j]) ++changed;
        } else if (std::fabs(a[j] - b[j]) > 1e-9) {
            ++changed;
        }
    }
    return changed;
}

}  // namespace

std::vector<ShadowSplit> build_shadow_splits(const data::Dataset& pool, const ShadowConfig& config) {
    if (config.num_shadows < 1) throw ConfigError("build_shadow_splits: need at least one shadow");
    if (config.member_fraction <= 0.0 || config.member_fraction >= 1.0)
        throw ConfigError("build_shadow_splits: member_fraction must lie in (0,1)");
    const int n = static_cast<int>(pool.size());
    const int sample = config.shadow_sample_size > 0 ? std::min(config.shadow_sample_size, n) : n;
    const int members = static_cast<int>(std::floor(config.member_fraction * sample));
    if (members < 1 || sample - members < 1)
        throw SizeError("build_shadow_splits: pool too small for a member/non-member split");

    std::vector<ShadowSplit> splits;
    splits.reserve(config.num_shadows);
    for (int s = 0; s < config.num_shadows; ++s) {
        Rng rng(derive_seed(config.seed, "shadow_split", s));
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);
        ShadowSplit split;
        split.member_ids.reserve(members);
        split.non_member_ids.reserve(sample - members);
        for (int i = 0; i < sample; ++i) {
            if (i < members)
                split.member_ids.push_back(pool.row_ids[order[i]]);
            else
                split.non_member_ids.push_back(pool.row_ids[order[i]]);
        }
        splits.push_back(std::move(split));
    }
    return splits;
}

std::vector<double> attack_features(const QueryFn& query, const Eigen::VectorXd& x, const cf::HeomSpace& space,
                                    Setting setting) {
    const facade::QueryResponse response = query(x);
    std::vector<double> features = sorted_desc(response.posterior);
    if (setting == Setting::NoCf) return features;

    const auto k = static_cast<std::size_t>(response.posterior.size());
    if (response.counterfactual) {
        const Eigen::VectorXd& e = response.counterfactual->explanation;
        features.push_back(cf::heom(space, x, e));
        features.push_back((x - e).norm());
        features.push_back(static_cast<double>(count_changed(space, x, e)));
        features.push_back(0.0);  // cf_missing flag
        const facade::QueryResponse cf_response = query(e);
        for (double p : sorted_desc(cf_response.posterior)) features.push_back(p);
    } else {
        features.push_back(-1.0);
        features.push_back(-1.0);
        features.push_back(-1.0);
        features.push_back(1.0);
        for (std::size_t i = 0; i < k; ++i) features.push_back(-1.0);
    }
    return features;
}

std::vector<AttackRecord> assemble_attack_set(const std::vector<ShadowAccess>& shadows, const data::Dataset& pool,
                                              const cf::HeomSpace& attacker_space, Setting setting) {
    if (shadows.empty()) throw SizeError("assemble_attack_set: no shadows");
    const auto index = index_by_id(pool);
    std::vector<AttackRecord> records;
    for (const auto& shadow : shadows) {
        for (int side = 0; side < 2; ++side) {
            const auto& ids = side == 0 ? shadow.split.member_ids : shadow.split.non_member_ids;
            for (RowId id : ids) {
                AttackRecord rec;
                rec.features = attack_features(shadow.query, row_of(pool, index, id), attacker_space, setting);
                rec.member = side == 0 ? 1 : 0;
                rec.source_shadow = shadow.shadow_index;
                records.push_back(std::move(rec));
            }
        }
    }
    return records;
}

std::string records_to_csv(const std::vector<AttackRecord>& records) {
    if (records.empty()) throw SizeError("records_to_csv: empty record list");
    std::ostringstream out;
    out.precision(17);
    for (std::size_t j = 0; j < records.front().features.size(); ++j) out << "f" << j << ",";
    out << "member,source_shadow\n";
    for (const auto& r : records) {
        for (double f : r.features) out << f << ",";
        out << r.member << "," << r.source_shadow << "\n";
    }
    return out.str();
}

gbdt::GbdtModel gbdt_train(const std::vector<AttackRecord>& records, const gbdt::GbdtConfig& config,
                           std::vector<double>* round_losses) {
    if (records.empty()) throw SizeError("gbdt_train: empty record list");
    const auto f = records.front().features.size();
    Eigen::MatrixXd x(records.size(), f);
    std::vector<int> y(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].features.size() != f) throw ShapeError("gbdt_train: inconsistent feature length");
        for (std::size_t j = 0; j < f; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = records[i].features[j];
        y[i] = records[i].member;
    }
    return gbdt::GbdtModel::train(x, y, config, round_losses);
}

AttackRunResult attack_target(const gbdt::GbdtModel& attack_model, const QueryFn& target_query,
                              const data::Dataset& universe, const std::vector<RowId>& member_ids,
                              const std::vector<RowId>& holdout_ids, const cf::HeomSpace& attacker_space,
                              Setting setting, std::uint64_t seed, double threshold) {
    if (member_ids.empty() || holdout_ids.empty())
        throw SizeError("attack_target: need both member and holdout ids");
    const auto index = index_by_id(universe);
    const std::size_t m = std::min(member_ids.size(), holdout_ids.size());

    Rng rng(derive_seed(seed, "attack_eval"));
    AttackRunResult result;
    result.eval_member_ids = member_ids.size() == m ? member_ids : rng.sample(member_ids, m);
    result.eval_non_member_ids = holdout_ids.size() == m ? holdout_ids : rng.sample(holdout_ids, m);

    long tp = 0, fp = 0, fn = 0, tn = 0;
    auto run_side = [&](const std::vector<RowId>& ids, bool is_member) {
        for (RowId id : ids) {
            const auto features = attack_features(target_query, row_of(universe, index, id), attacker_space, setting);
            Eigen::VectorXd fv = Eigen::Map<const Eigen::VectorXd>(features.data(), static_cast<Eigen::Index>(features.size()));
            const bool predicted_member = attack_model.predict_proba_one(fv) > threshold;
            if (predicted_member) result.predicted_members.push_back(id);
            if (is_member) {
                predicted_member ? ++tp : ++fn;
            } else {
                predicted_member ? ++fp : ++tn;
            }
        }
    };
    run_side(result.eval_member_ids, true);
    run_side(result.eval_non_member_ids, false);

    const long total = tp + fp + fn + tn;
    result.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
    result.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    if (tp + fp > 0) {
        result.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    } else {
        result.precision = 0.0;
        result.precision_undefined = true;
    }
    return result;
}

SuiteResult run_attack_suite(const SuiteInputs& in) {
    if (!in.shadow_pool || !in.universe) throw ConfigError("run_attack_suite: missing datasets");
    if (in.runs < 1) throw ConfigError("run_attack_suite: runs must be >= 1");
    if (!in.target_query_no_cf || !in.target_query_cf) throw ConfigError("run_attack_suite: missing target queries");

    const cf::HeomSpace attacker_space = cf::HeomSpace::from_reference(*in.shadow_pool);
    SuiteResult out;
    out.no_cf.setting = Setting::NoCf;
    out.cf.setting = Setting::Cf;

    for (int run = 0; run < in.runs; ++run) {
        const std::uint64_t run_seed = derive_seed(in.seed, "attack_run", run);
        ShadowConfig sc = in.shadow_config;
        sc.seed = run_seed;
        const auto splits = build_shadow_splits(*in.shadow_pool, sc);

        std::vector<ShadowAccess> shadows_no_cf, shadows_cf;
        for (int s = 0; s < sc.num_shadows; ++s) {
            data::Dataset shadow_train = in.shadow_pool->subset_by_ids(splits[s].member_ids);
            nn::MlpConfig arch = sc.shadow_arch;
            arch.input_dim = static_cast<int>(in.shadow_pool->dim());
            arch.num_classes = in.shadow_pool->num_classes;
            arch.seed = derive_seed(run_seed, "shadow_model", s);
            nn::MlpModel model = nn::train(arch, shadow_train, data::Dataset{}).model;

            facade::ServiceConfig plain;
            plain.cf_enabled = false;
            auto facade_no_cf = std::make_shared<facade::Facade>(
                facade::Facade::from_model(model, shadow_train, plain));
            facade::ServiceConfig with_cf;
            with_cf.cf_enabled = true;
            with_cf.reward = in.reward;
            auto facade_cf = std::make_shared<facade::Facade>(
                facade::Facade::from_model(model, shadow_train, with_cf));

            shadows_no_cf.push_back({[facade_no_cf](const Eigen::VectorXd& x) { return facade_no_cf->query(x); },
                                     splits[s], s});
            shadows_cf.push_back({[facade_cf](const Eigen::VectorXd& x) { return facade_cf->query(x); },
                                  splits[s], s});
        }

        gbdt::GbdtConfig gc = in.gbdt_config;
        gc.seed = run_seed;

        auto run_setting = [&](Setting setting, const std::vector<ShadowAccess>& shadows, const QueryFn& target) {
            auto records = assemble_attack_set(shadows, *in.shadow_pool, attacker_space, setting);
            auto model = gbdt_train(records, gc);
            return attack_target(model, target, *in.universe, in.target_member_ids, in.holdout_ids, attacker_space,
                                 setting, run_seed);
        };
        out.no_cf_runs.push_back(run_setting(Setting::NoCf, shadows_no_cf, in.target_query_no_cf));
        out.cf_runs.push_back(run_setting(Setting::Cf, shadows_cf, in.target_query_cf));
    }

    auto aggregate = [](AttackReport& report, const std::vector<AttackRunResult>& runs) {
        for (const auto& r : runs) {
            report.run_accuracy.push_back(r.accuracy);
            report.run_precision.push_back(r.precision);
            report.run_recall.push_back(r.recall);
            report.any_precision_undefined = report.any_precision_undefined || r.precision_undefined;
        }
        const double n = static_cast<double>(runs.size());
        for (double v : report.run_accuracy) report.accuracy += v / n;
        for (double v : report.run_precision) report.precision += v / n;
        for (double v : report.run_recall) report.recall += v / n;
    };
    aggregate(out.no_cf, out.no_cf_runs);
    aggregate(out.cf, out.cf_runs);
    return out;
}

std::string report_to_json(const AttackReport& report) {
    nlohmann::ordered_json doc;
    doc["setting"] = setting_name(report.setting);
    doc["accuracy"] = report.accuracy;
    doc["precision"] = report.precision;
    doc["recall"] = report.recall;
    doc["run_accuracy"] = report.run_accuracy;
    doc["run_precision"] = report.run_precision;
    doc["run_recall"] = report.run_recall;
    doc["precision_undefined"] = report.any_precision_undefined;
    return doc.dump();
}

}  // namespace cfmia::attack
