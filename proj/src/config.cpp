#include "cfmia/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cfmia::config {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

long to_long(const std::string& key, const std::string& v) {
    long x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    return x;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = unquote(trim(line.substr(eq + 1)));

        if (key == "dataset") cfg.dataset_path = value;
        else if (key == "label") cfg.label_column = value;
        else if (key == "preset") cfg.preset = value;
        else if (key == "scenarios") cfg.scenarios = split_list(value);
        else if (key == "eps") {
            cfg.eps.clear();
            for (const auto& v : split_list(value)) cfg.eps.push_back(to_double(key, v));
        } else if (key == "seeds") {
            cfg.seeds.clear();
            for (const auto& v : split_list(value)) cfg.seeds.push_back(static_cast<std::uint64_t>(to_long(key, v)));
            if (cfg.seeds.empty()) throw ConfigError("config: seeds list is empty");
        } else if (key == "out") cfg.out_dir = value;
        else if (key == "jobs") cfg.jobs = static_cast<int>(to_long(key, value));
        else if (key == "epochs") cfg.epochs = static_cast<int>(to_long(key, value));
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(to_long(key, value));
        else if (key == "learning_rate") cfg.learning_rate = to_double(key, value);
        else if (key == "al_initial_fraction") cfg.al_initial_fraction = to_double(key, value);
        else if (key == "al_batch_per_iter") cfg.al_batch_per_iter = static_cast<int>(to_long(key, value));
        else if (key == "al_max_iters") cfg.al_max_iters = static_cast<int>(to_long(key, value));
        else if (key == "num_shadows") cfg.num_shadows = static_cast<int>(to_long(key, value));
        else if (key == "member_fraction") cfg.member_fraction = to_double(key, value);
        else if (key == "gbdt_estimators") cfg.gbdt_estimators = static_cast<int>(to_long(key, value));
        else if (key == "gbdt_depth") cfg.gbdt_depth = static_cast<int>(to_long(key, value));
        else if (key == "gbdt_learning_rate") cfg.gbdt_learning_rate = to_double(key, value);
        else if (key == "clip_norm") cfg.clip_norm = to_double(key, value);
        else if (key == "delta") cfg.delta = to_double(key, value);
        else if (key == "attack_runs") cfg.attack_runs = static_cast<int>(to_long(key, value));
        else if (key == "reward") cfg.reward = value;
        else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

void apply_overrides(presets::Preset& preset, const RunConfig& config) {
    if (config.epochs >= 0) {
        preset.model.epochs = config.epochs;
        preset.al.model.epochs = config.epochs;
        preset.shadow.shadow_arch.epochs = config.epochs;
    }
    if (config.batch_size > 0) {
        preset.model.batch_size = config.batch_size;
        preset.al.model.batch_size = config.batch_size;
        preset.shadow.shadow_arch.batch_size = config.batch_size;
    }
    if (config.learning_rate > 0) {
        preset.model.learning_rate = config.learning_rate;
        preset.al.model.learning_rate = config.learning_rate;
        preset.shadow.shadow_arch.learning_rate = config.learning_rate;
    }
    if (config.al_initial_fraction > 0) preset.al.initial_fraction = config.al_initial_fraction;
    if (config.al_batch_per_iter > 0) preset.al.batch_per_iter = config.al_batch_per_iter;
    if (config.al_max_iters > 0) preset.al.max_iters = config.al_max_iters;
    if (config.num_shadows > 0) preset.shadow.num_shadows = config.num_shadows;
    if (config.member_fraction > 0) preset.shadow.member_fraction = config.member_fraction;
    if (config.gbdt_estimators > 0) preset.gbdt.n_estimators = config.gbdt_estimators;
    if (config.gbdt_depth > 0) preset.gbdt.max_depth = config.gbdt_depth;
    if (config.gbdt_learning_rate > 0) preset.gbdt.learning_rate = config.gbdt_learning_rate;
    if (config.clip_norm > 0) preset.dp.clip_norm = config.clip_norm;
    if (config.delta > 0) preset.dp.delta = config.delta;
    if (config.attack_runs > 0) preset.attack_runs = config.attack_runs;
    if (!config.reward.empty()) {
        if (config.reward == "proximity") preset.reward = cf::Reward::Proximity;
        else if (config.reward == "sparsity") preset.reward = cf::Reward::Sparsity;
        else if (config.reward == "combined") preset.reward = cf::Reward::Combined;
        else throw ConfigError("config: unknown reward '" + config.reward + "'");
    }
}

void write_splits(const data::DataSplits& splits, const data::ScalerState& scaler, const std::string& dir,
                  std::uint64_t seed, const std::string& source, const std::string& label_column) {
    fs::create_directories(dir);
    data::write_dataset_csv(splits.target_train, (fs::path(dir) / "train.csv").string());
    data::write_dataset_csv(splits.shadow_pool, (fs::path(dir) / "shadow.csv").string());
    data::write_dataset_csv(splits.validation, (fs::path(dir) / "valid.csv").string());
    {
        std::ofstream f(fs::path(dir) / "scaler.json", std::ios::binary);
        f << scaler.to_json() << "\n";
    }
    nlohmann::ordered_json manifest;
    manifest["seed"] = seed;
    manifest["source"] = source;
    manifest["label_column"] = label_column;
    nlohmann::ordered_json rows;
    rows["train"] = splits.target_train.size();
    rows["shadow"] = splits.shadow_pool.size();
    rows["valid"] = splits.validation.size();
    manifest["rows"] = std::move(rows);
    manifest["num_classes"] = splits.target_train.num_classes;
    manifest["warnings"] = scaler.warnings;
    std::ofstream f(fs::path(dir) / "prep_manifest.json", std::ios::binary);
    f << manifest.dump(2) << "\n";
}

data::DataSplits read_splits(const std::string& dir) {
    data::DataSplits splits;
    splits.target_train = data::read_dataset_csv((fs::path(dir) / "train.csv").string());
    splits.shadow_pool = data::read_dataset_csv((fs::path(dir) / "shadow.csv").string());
    splits.validation = data::read_dataset_csv((fs::path(dir) / "valid.csv").string());
    const int k = std::max({splits.target_train.num_classes, splits.shadow_pool.num_classes,
                            splits.validation.num_classes});
    splits.target_train.num_classes = k;
    splits.shadow_pool.num_classes = k;
    splits.validation.num_classes = k;
    return splits;
}

}  // namespace cfmia::config
