#include "cfmia/presets.hpp"

#include <algorithm>
#include <cctype>

namespace cfmia::presets {

namespace {

Preset base_preset() {
    Preset p;
    p.model.learning_rate = 0.01;
    p.model.epochs = 50;
    p.model.batch_size = 64;
    p.dp.clip_norm = 1.5;
    p.dp.delta = 1e-5;
    p.al.initial_fraction = 0.10;
    p.al.batch_per_iter = 50;
    p.al.max_iters = 50;
    p.shadow.num_shadows = 5;
    p.shadow.member_fraction = 0.5;
    p.gbdt.n_estimators = 150;
    p.gbdt.max_depth = 15;
    p.gbdt.learning_rate = 0.01;
    p.attack_runs = 5;
    return p;
}

}  // namespace

Preset eeg_preset() {
    Preset p = base_preset();
    p.name = "eeg";
    p.model.layer_widths = {32, 16, 32, 16};
    p.reward = cf::Reward::Proximity;
    p.al.model = p.model;
    p.shadow.shadow_arch = p.model;
    return p;
}

Preset inlocation_preset() {
    Preset p = base_preset();
    p.name = "inlocation";
    p.model.layer_widths = {600, 700, 600, 300, 600, 300, 128};
    p.model.dropout_rate = 0.2;
    p.model.dropout_layer = 1;  // after the widest (700) layer
    p.reward = cf::Reward::Combined;
    p.al.model = p.model;
    p.shadow.shadow_arch = p.model;
    return p;
}

Preset surrogate_preset() {
    Preset p = base_preset();
    p.name = "surrogate";
    p.model.layer_widths = {32, 16, 32, 16};
    p.model.epochs = 60;
    p.reward = cf::Reward::Proximity;
    p.al.max_iters = 30;     // caps the labeled set below the full pool
    p.al.model = p.model;
    p.al.model.epochs = 30;  // per-iteration retrains stay cheap
    p.shadow.shadow_arch = p.model;
    p.attack_runs = 1;       // acceptance averages across master seeds instead
    return p;
}

Preset preset_by_name(const std::string& name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "eeg") return eeg_preset();
    if (lower == "inlocation" || lower == "in-location") return inlocation_preset();
    if (lower == "surrogate" || lower == "custom") return surrogate_preset();
    throw ConfigError("unknown preset: " + name);
}

}  // namespace cfmia::presets
