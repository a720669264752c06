#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfmia/data.hpp"
#include "cfmia/presets.hpp"

namespace cfmia::config {

struct RunConfig {
    std::string dataset_path;  // empty = bundled synthetic surrogate
    std::string label_column;
    std::string preset = "surrogate";
    std::vector<std::string> scenarios;  // empty = all five
    std::vector<double> eps;             // empty = preset grid
    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "runs/out";
    int jobs = 1;
    // Preset overrides; negative/empty means "keep preset value".
    int epochs = -1;
    int batch_size = -1;
    double learning_rate = -1.0;
    double al_initial_fraction = -1.0;
    int al_batch_per_iter = -1;
    int al_max_iters = -1;
    int num_shadows = -1;
    double member_fraction = -1.0;
    int gbdt_estimators = -1;
    int gbdt_depth = -1;
    double gbdt_learning_rate = -1.0;
    double clip_norm = -1.0;
    double delta = -1.0;
    int attack_runs = -1;
    std::string reward;  // proximity | sparsity | combined
};

// Flat key = value document; '#' comments; unknown keys rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

void apply_overrides(presets::Preset& preset, const RunConfig& config);

void write_splits(const data::DataSplits& splits, const data::ScalerState& scaler, const std::string& dir,
                  std::uint64_t seed, const std::string& source, const std::string& label_column);
data::DataSplits read_splits(const std::string& dir);

}  // namespace cfmia::config
