#pragma once

#include <string>
#include <vector>

#include "cfmia/active_learning.hpp"
#include "cfmia/attack.hpp"
#include "cfmia/counterfactual.hpp"
#include "cfmia/dp.hpp"
#include "cfmia/gbdt.hpp"
#include "cfmia/neuralnet.hpp"

namespace cfmia::presets {

struct Preset {
    std::string name;
    nn::MlpConfig model;           // input_dim/num_classes filled at run time
    dp::DpBudget dp;               // clip norm + delta; epsilon set per scenario
    al::AlConfig al;               // trainer/model/seed filled at run time
    attack::ShadowConfig shadow;   // arch mirrors `model`
    gbdt::GbdtConfig gbdt;
    cf::Reward reward = cf::Reward::Proximity;
    std::vector<double> eps_grid{1.0, 3.0, 5.0, 10.0};
    int attack_runs = 5;
};

Preset eeg_preset();
Preset inlocation_preset();
// Settings for the bundled two-class Gaussian-mixture stand-in used when no
// real dataset file is on disk.
Preset surrogate_preset();

Preset preset_by_name(const std::string& name);

}  // namespace cfmia::presets
