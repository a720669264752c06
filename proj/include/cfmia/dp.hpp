#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/data.hpp"
#include "cfmia/neuralnet.hpp"

namespace cfmia::dp {

struct DpBudget {
    double epsilon = 0.0;           // target
    double delta = 1e-5;
    double clip_norm = 1.5;         // C
    double noise_multiplier = 0.0;  // sigma; <= 0 requests calibration
    double sample_rate = 0.0;       // q; <= 0 derives batch_size / |train|
    int steps = 0;                  // planned composition length; 0 derives from epochs
};

struct RdpCurve {
    std::vector<double> orders;
    std::vector<double> rdp_values;
};

// {1.5, 2, 3, ..., 64, 128, 256}
const std::vector<double>& default_orders();

// Global-L2 clip; each structure scaled by min(1, C/||g||). Throws NumericError
// naming the first non-finite example.
std::vector<nn::Grads> clip_grads(std::vector<nn::Grads> per_example, double clip_norm);

// (sum of clipped + N(0, sigma^2 C^2 I)) / batch_size, noise from `rng`.
nn::Grads noisy_aggregate(const std::vector<nn::Grads>& clipped, double clip_norm, double sigma, Rng& rng);

// RDP of the Poisson-subsampled Gaussian composed over `steps` steps.
RdpCurve rdp_subsampled_gaussian(double q, double sigma, int steps,
                                 const std::vector<double>& orders = default_orders());

struct EpsilonAtOrder {
    double epsilon = 0.0;
    double order = 0.0;
};

EpsilonAtOrder rdp_to_eps(const RdpCurve& curve, double delta);

// Smallest sigma in [1e-2, 1e3] whose accounted epsilon is <= eps_target,
// bisected to <=1% relative slack against the target.
double calibrate_sigma(double eps_target, double delta, double q, int steps);

struct AuditEntry {
    int step = 0;  // cumulative executed steps
    double q = 0.0;
    double sigma = 0.0;
    double realized_epsilon = 0.0;
    double delta = 0.0;
};

std::string audit_to_jsonl(const std::vector<AuditEntry>& entries, const std::vector<std::string>& notes = {});

struct DpTrainOptions {
    bool accounting_enabled = true;  // off: sigma may be 0, realized epsilon reported as +inf
    bool check_clip = false;         // in-loop post-clip norm assertion
    std::function<void(int step, const std::vector<double>& postclip_norms)> step_observer;
};

struct DpTrainResult {
    nn::MlpModel model;
    double realized_epsilon = 0.0;
    std::vector<nn::EpochStats> history;
    std::vector<AuditEntry> audit;
    DpBudget resolved;  // budget with q/steps/sigma filled in
    bool budget_exhausted = false;
    int steps_executed = 0;
    std::vector<std::string> warnings;
};

DpTrainResult train_dp(const nn::MlpConfig& config, const DpBudget& budget, const data::Dataset& train,
                       const data::Dataset& valid, const DpTrainOptions& opts = {});

}  // namespace cfmia::dp
