// cfmia: prepare datasets, run privacy/utility scenario grids, serve a model
// behind the query facade, and inspect report bundles.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cfmia/common.hpp"
#include "cfmia/config.hpp"
#include "cfmia/counterfactual.hpp"
#include "cfmia/data.hpp"
#include "cfmia/facade.hpp"
#include "cfmia/neuralnet.hpp"
#include "cfmia/pipeline.hpp"
#include "cfmia/presets.hpp"
#include "cfmia/synthetic.hpp"
#include "cfmia/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Single-line machine-parsable error channel.
int fail(int code, const std::string& message) {
    std::string line = message;
    for (char& c : line)
        if (c == '\n' || c == '\r') c = ' ';
    std::cerr << "error: " << line << "\n";
    return code;
}

bool is_usage_error(const std::exception& e) {
    return dynamic_cast<const cfmia::ConfigError*>(&e) != nullptr ||
           dynamic_cast<const cfmia::SchemaError*>(&e) != nullptr ||
           dynamic_cast<const cfmia::ParseError*>(&e) != nullptr;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw cfmia::ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string dataset_label(const std::string& path) {
    return path.empty() ? "surrogate" : fs::path(path).stem().string();
}

struct PrepareArgs {
    std::string data_path;
    std::string label_column;
    bool synthetic = false;
    std::string out_dir;
    std::uint64_t seed = 17;
    double outlier_z = 3.0;
};

int run_prepare(const PrepareArgs& args) {
    if (args.synthetic && !args.data_path.empty())
        return fail(kExitUsage, "prepare: --data and --synthetic are mutually exclusive");
    if (!args.synthetic && args.data_path.empty())
        return fail(kExitUsage, "prepare: pass either --data FILE --label NAME or --synthetic");
    if (!args.synthetic && args.label_column.empty())
        return fail(kExitUsage, "prepare: --label is required with --data");

    cfmia::data::Dataset raw;
    std::string source;
    std::string label_column;
    if (args.synthetic) {
        raw = cfmia::data::make_surrogate();
        source = "surrogate";
        label_column = "label";
    } else {
        raw = cfmia::data::load_csv(args.data_path, args.label_column);
        source = args.data_path;
        label_column = args.label_column;
    }
    auto [clean, scaler] = cfmia::data::preprocess(raw, args.outlier_z);
    const cfmia::data::DataSplits splits = cfmia::data::split_45_45_10(clean, args.seed);
    cfmia::config::write_splits(splits, scaler, args.out_dir, args.seed, source, label_column);
    std::cout << "prepared " << args.out_dir << ": train=" << splits.target_train.size()
              << " shadow=" << splits.shadow_pool.size() << " valid=" << splits.validation.size()
              << " features=" << clean.dim() << " classes=" << clean.num_classes << "\n";
    for (const auto& w : scaler.warnings) std::cout << "warning: " << w << "\n";
    return kExitOk;
}

struct RunArgs {
    std::string splits_dir;
    std::string config_path;
    std::string data_path;
    std::string label_column;
    bool synthetic = false;
    std::string preset_name;
    std::string scenarios_csv;
    std::string eps_csv;
    std::string seeds_csv;
    std::string out_dir;
    int jobs = 0;
    std::uint64_t split_seed = 17;
    bool dry_run = false;
    bool save_models = false;
};

std::vector<std::string> split_csv_arg(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void print_summary_line(std::ostream& os, const cfmia::pipeline::ScenarioReport& r) {
    char eps[32] = "-";
    if (r.spec.epsilon) std::snprintf(eps, sizeof(eps), "%g", *r.spec.epsilon);
    char line[512];
    std::snprintf(line, sizeof(line),
                  "%-13s eps=%-5s seed=%-4llu acc=%.4f  attack no_cf=%.4f cf=%.4f  "
                  "micro no_cf=%.4f cf=%.4f  macro no_cf=%.4f cf=%.4f",
                  cfmia::pipeline::scenario_name(r.spec.kind), eps,
                  static_cast<unsigned long long>(r.spec.master_seed), r.accuracy, r.attack_no_cf.accuracy,
                  r.attack_cf.accuracy, r.privacy_no_cf.micro_defended, r.privacy_cf.micro_defended,
                  r.privacy_no_cf.macro_defended, r.privacy_cf.macro_defended);
    os << line << "\n";
}

int run_run(const RunArgs& args, bool jobs_given) {
    cfmia::config::RunConfig cfg;
    if (!args.config_path.empty()) cfg = cfmia::config::load_run_config(args.config_path);
    if (!args.data_path.empty()) cfg.dataset_path = args.data_path;
    if (!args.label_column.empty()) cfg.label_column = args.label_column;
    if (args.synthetic) cfg.dataset_path.clear();
    if (!args.preset_name.empty()) cfg.preset = args.preset_name;
    if (!args.scenarios_csv.empty()) cfg.scenarios = split_csv_arg(args.scenarios_csv);
    if (!args.eps_csv.empty()) {
        cfg.eps.clear();
        for (const auto& tok : split_csv_arg(args.eps_csv)) cfg.eps.push_back(std::stod(tok));
    }
    if (!args.seeds_csv.empty()) {
        cfg.seeds.clear();
        for (const auto& tok : split_csv_arg(args.seeds_csv)) cfg.seeds.push_back(std::stoull(tok));
        if (cfg.seeds.empty()) throw cfmia::ConfigError("run: --seeds list is empty");
    }
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (jobs_given) cfg.jobs = args.jobs;
    if (cfg.jobs < 1) throw cfmia::ConfigError("run: jobs must be >= 1");

    cfmia::presets::Preset preset = cfmia::presets::preset_by_name(cfg.preset);
    cfmia::config::apply_overrides(preset, cfg);

    std::vector<std::string> scenario_names = cfg.scenarios;
    if (scenario_names.empty())
        scenario_names = {"baseline", "only_al", "only_dp", "dp_post_al", "al_guided_dp"};
    const std::vector<double>& eps_grid = cfg.eps.empty() ? preset.eps_grid : cfg.eps;

    std::string dataset_name;
    cfmia::data::DataSplits splits;
    if (!args.splits_dir.empty()) {
        dataset_name = "splits";
        const fs::path manifest_path = fs::path(args.splits_dir) / "prep_manifest.json";
        if (fs::exists(manifest_path)) {
            const json manifest = json::parse(read_file(manifest_path.string()));
            if (manifest.contains("source") && manifest["source"].is_string())
                dataset_name = dataset_label(manifest["source"].get<std::string>());
        }
        if (!args.dry_run) splits = cfmia::config::read_splits(args.splits_dir);
    } else {
        dataset_name = dataset_label(cfg.dataset_path);
        if (!args.dry_run) {
            cfmia::data::Dataset raw = cfg.dataset_path.empty()
                                           ? cfmia::data::make_surrogate()
                                           : cfmia::data::load_csv(cfg.dataset_path,
                                                                   cfg.label_column.empty() ? "label"
                                                                                            : cfg.label_column);
            auto [clean, scaler] = cfmia::data::preprocess(raw);
            splits = cfmia::data::split_45_45_10(clean, args.split_seed);
        }
    }

    std::vector<cfmia::pipeline::ScenarioSpec> specs;
    for (std::uint64_t seed : cfg.seeds) {
        for (const auto& name : scenario_names) {
            const cfmia::pipeline::ScenarioKind kind = cfmia::pipeline::scenario_by_name(name);
            cfmia::pipeline::ScenarioSpec spec;
            spec.kind = kind;
            spec.dataset = dataset_name;
            spec.master_seed = seed;
            if (cfmia::pipeline::scenario_uses_dp(kind)) {
                for (double e : eps_grid) {
                    spec.epsilon = e;
                    specs.push_back(spec);
                }
            } else {
                spec.epsilon.reset();
                specs.push_back(spec);
            }
        }
    }
    if (specs.empty()) throw cfmia::ConfigError("run: nothing to do (empty scenario set)");

    if (args.dry_run) {
        std::cout << "planned " << specs.size() << " scenario runs (dataset=" << dataset_name
                  << ", preset=" << preset.name << ", out=" << cfg.out_dir << ", jobs=" << cfg.jobs << "):\n";
        bool include_seed = cfg.seeds.size() > 1;
        for (const auto& spec : specs)
            std::cout << "  " << cfmia::pipeline::report_file_name(spec, include_seed) << "\n";
        return kExitOk;
    }

    const cfmia::pipeline::GridResult grid =
        cfmia::pipeline::run_grid(specs, splits, preset, cfg.out_dir, cfg.jobs, args.save_models);
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (grid.succeeded[i]) print_summary_line(std::cout, grid.reports[i]);
    for (const auto& failure : grid.failures) std::cerr << "failed: " << failure << "\n";
    std::cout << "bundle: " << cfg.out_dir << " (" << grid.report_files.size() << "/" << specs.size()
              << " reports)\n";
    return grid.failures.empty() ? kExitOk : kExitRuntime;
}

struct ServeArgs {
    std::string model_path;
    std::string reference_path;
    std::string scaler_path;
    bool no_cf = false;
    long budget = 0;
    std::string reward = "proximity";
};

cfmia::cf::Reward parse_reward(const std::string& name) {
    if (name == "proximity") return cfmia::cf::Reward::Proximity;
    if (name == "sparsity") return cfmia::cf::Reward::Sparsity;
    if (name == "combined") return cfmia::cf::Reward::Combined;
    throw cfmia::ConfigError("unknown reward '" + name + "' (proximity|sparsity|combined)");
}

int run_serve(const ServeArgs& args, bool budget_given) {
    cfmia::nn::MlpModel model = cfmia::nn::MlpModel::from_json(read_file(args.model_path));
    cfmia::data::Dataset reference = cfmia::data::read_dataset_csv(args.reference_path);

    cfmia::facade::ServiceConfig cfg;
    cfg.cf_enabled = !args.no_cf;
    cfg.reward = parse_reward(args.reward);
    if (budget_given) cfg.query_budget = args.budget;

    if (args.scaler_path.empty()) {
        cfmia::facade::Facade service = cfmia::facade::Facade::from_model(std::move(model), reference, cfg);
        cfmia::facade::serve_lines(service, std::cin, std::cout);
        return kExitOk;
    }

    // With a scaler the line protocol speaks raw feature space: requests are
    // standardized on entry and the CF search runs over the inverse-transformed
    // reference rows, so explanations come back in raw units too.
    const cfmia::data::ScalerState scaler = cfmia::data::ScalerState::from_json(read_file(args.scaler_path));
    cfmia::data::Dataset raw_reference = reference;
    raw_reference.rows = cfmia::data::inverse_transform(scaler, reference);
    cfmia::cf::BatchPredictFn scaled_predict = cfmia::cf::wrap_model(std::move(model));
    cfmia::cf::BatchPredictFn raw_predict = [scaled_predict, scaler](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd scaled(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            scaled.row(i) = cfmia::data::scale_vector(scaler, x.row(i).transpose()).transpose();
        return scaled_predict(scaled);
    };
    std::shared_ptr<const cfmia::cf::NiceExplainer> explainer;
    if (cfg.cf_enabled)
        explainer = std::make_shared<cfmia::cf::NiceExplainer>(raw_predict, raw_reference, cfg.reward);
    cfmia::facade::Facade service(raw_predict, explainer, cfg);
    cfmia::facade::serve_lines(service, std::cin, std::cout);
    return kExitOk;
}

int run_report(const std::string& bundle_dir) {
    const fs::path manifest_path = fs::path(bundle_dir) / "manifest.json";
    if (!fs::exists(manifest_path)) return fail(kExitUsage, "report: no manifest.json under " + bundle_dir);
    const json manifest = json::parse(read_file(manifest_path.string()));
    std::cout << "bundle " << bundle_dir << "\n";
    std::cout << "  version:     " << manifest.value("artifact_version", std::string("?")) << "\n";
    std::cout << "  config hash: " << manifest.value("config_hash", std::string("?")) << "\n";
    std::cout << "  dataset:     " << manifest.value("dataset", std::string("?")) << "\n";
    if (manifest.contains("seeds")) {
        std::cout << "  seeds:      ";
        std::vector<std::uint64_t> seen;
        for (const auto& s : manifest["seeds"]) {
            const auto v = s.get<std::uint64_t>();
            if (std::find(seen.begin(), seen.end(), v) == seen.end()) {
                seen.push_back(v);
                std::cout << " " << v;
            }
        }
        std::cout << "\n";
    }
    std::cout << "reports:\n";
    for (const auto& entry : manifest.value("reports", json::array())) {
        const std::string name = entry.get<std::string>();
        const std::string text = read_file((fs::path(bundle_dir) / name).string());
        std::string schema_error;
        if (!cfmia::pipeline::validate_report_json(text, &schema_error)) {
            std::cout << "  " << name << ": INVALID (" << schema_error << ")\n";
            continue;
        }
        const json doc = json::parse(text);
        char eps[32] = "-";
        if (!doc["spec"]["epsilon"].is_null())
            std::snprintf(eps, sizeof(eps), "%g", doc["spec"]["epsilon"].get<double>());
        char line[512];
        std::snprintf(line, sizeof(line),
                      "  %-28s %-13s eps=%-5s seed=%-4llu acc=%.4f  attack no_cf=%.4f cf=%.4f  "
                      "micro no_cf=%.4f cf=%.4f  macro no_cf=%.4f cf=%.4f",
                      name.c_str(), doc["spec"]["kind"].get<std::string>().c_str(), eps,
                      static_cast<unsigned long long>(doc["spec"]["master_seed"].get<std::uint64_t>()),
                      doc["model_metrics"]["accuracy"].get<double>(),
                      doc["attack"]["no_cf"]["accuracy"].get<double>(), doc["attack"]["cf"]["accuracy"].get<double>(),
                      doc["privacy"]["no_cf"]["micro_defended"].get<double>(),
                      doc["privacy"]["cf"]["micro_defended"].get<double>(),
                      doc["privacy"]["no_cf"]["macro_defended"].get<double>(),
                      doc["privacy"]["cf"]["macro_defended"].get<double>());
        std::cout << line << "\n";
    }
    const auto failures = manifest.value("failures", json::array());
    if (!failures.empty()) {
        std::cout << "failures:\n";
        for (const auto& f : failures) std::cout << "  " << f.get<std::string>() << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"membership-inference laboratory: defended training, counterfactual serving, shadow attacks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(cfmia::kArtifactVersion));

    PrepareArgs prep;
    CLI::App* prepare = app.add_subcommand("prepare", "ingest a CSV (or the bundled surrogate), scale, split 45/45/10");
    prepare->add_option("--data", prep.data_path, "source CSV path");
    prepare->add_option("--label", prep.label_column, "label column name");
    prepare->add_flag("--synthetic", prep.synthetic, "use the bundled Gaussian-mixture surrogate");
    prepare->add_option("--out", prep.out_dir, "output directory for split files")->required();
    prepare->add_option("--seed", prep.seed, "split seed");
    prepare->add_option("--outlier-z", prep.outlier_z, "outlier z-score threshold");

    RunArgs run;
    CLI::App* runcmd = app.add_subcommand("run", "execute a scenario grid and write the report bundle");
    runcmd->add_option("--splits", run.splits_dir, "directory produced by `prepare`");
    runcmd->add_option("--config", run.config_path, "key = value config file");
    runcmd->add_option("--data", run.data_path, "source CSV (prepared in memory when --splits is absent)");
    runcmd->add_option("--label", run.label_column, "label column for --data");
    runcmd->add_flag("--synthetic", run.synthetic, "use the bundled surrogate dataset");
    runcmd->add_option("--preset", run.preset_name, "preset name (eeg | inlocation | surrogate)");
    runcmd->add_option("--scenarios", run.scenarios_csv, "comma list: baseline,only_al,only_dp,dp_post_al,al_guided_dp");
    runcmd->add_option("--eps", run.eps_csv, "comma list of privacy budgets for DP scenarios");
    runcmd->add_option("--seeds", run.seeds_csv, "comma list of master seeds");
    runcmd->add_option("--out", run.out_dir, "bundle output directory");
    CLI::Option* jobs_opt = runcmd->add_option("--jobs", run.jobs, "scenario-level parallelism");
    runcmd->add_option("--split-seed", run.split_seed, "seed for the in-memory split when --splits is absent");
    runcmd->add_flag("--dry-run", run.dry_run, "print planned jobs, write nothing");
    runcmd->add_flag("--save-models", run.save_models, "write a model checkpoint next to each report");

    ServeArgs serve;
    CLI::App* servecmd = app.add_subcommand("serve", "answer the NDJSON line protocol on stdin/stdout");
    servecmd->add_option("--model", serve.model_path, "model checkpoint JSON")->required();
    servecmd->add_option("--reference", serve.reference_path, "reference split CSV for CF search")->required();
    servecmd->add_option("--scaler", serve.scaler_path, "scaler.json: accept raw-space requests");
    servecmd->add_flag("--no-cf", serve.no_cf, "disable counterfactual payloads");
    CLI::Option* budget_opt = servecmd->add_option("--budget", serve.budget, "query budget before QuotaError");
    servecmd->add_option("--reward", serve.reward, "NICE reward: proximity | sparsity | combined");

    std::string bundle_dir;
    CLI::App* reportcmd = app.add_subcommand("report", "pretty-print a report bundle");
    reportcmd->add_option("--bundle", bundle_dir, "bundle directory written by `run`")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (prepare->parsed()) return run_prepare(prep);
        if (runcmd->parsed()) return run_run(run, jobs_opt->count() > 0);
        if (servecmd->parsed()) return run_serve(serve, budget_opt->count() > 0);
        if (reportcmd->parsed()) return run_report(bundle_dir);
    } catch (const std::exception& e) {
        return fail(is_usage_error(e) ? kExitUsage : kExitRuntime, e.what());
    }
    return fail(kExitUsage, "no subcommand given");
}
