#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/data.hpp"

namespace cfmia::nn {

// Posterior over classes: entries in [0,1], summing to 1.
using PosteriorVector = Eigen::VectorXd;

struct MlpConfig {
    std::vector<int> layer_widths;  // hidden layer widths, in order
    int input_dim = 0;
    int num_classes = 2;
    double dropout_rate = 0.0;
    int dropout_layer = -1;  // hidden layer index the dropout follows; -1 disables
    double learning_rate = 0.01;
    int epochs = 50;
    int batch_size = 64;
    std::uint64_t seed = 0;
};

struct LayerTensors {
    Eigen::MatrixXd w;  // out x in
    Eigen::VectorXd b;  // out
};

// Gradients mirror the parameter shapes.
using Grads = std::vector<LayerTensors>;

double global_l2_norm(const Grads& g);
Grads zeros_like(const std::vector<LayerTensors>& params);

class MlpModel {
public:
    MlpModel() = default;
    explicit MlpModel(const MlpConfig& config);  // He-uniform init, seeded per layer

    const MlpConfig& config() const { return config_; }
    const std::vector<LayerTensors>& layers() const { return layers_; }
    std::vector<LayerTensors>& layers() { return layers_; }

    bool train_mode() const { return train_mode_; }
    void set_train_mode(bool on) { train_mode_ = on; }

    // Adam moment state lives with the model so that interrupted/resumed
    // optimization stays consistent.
    struct OptimizerSlot {
        Grads m;
        Grads v;
        int steps_taken = 0;
    };
    OptimizerSlot& optimizer() { return optimizer_; }

    Rng& dropout_rng() { return dropout_rng_; }

    std::string to_json(const std::string& scaler_ref = "") const;
    static MlpModel from_json(const std::string& text);

private:
    MlpConfig config_;
    std::vector<LayerTensors> layers_;
    bool train_mode_ = false;
    OptimizerSlot optimizer_;
    Rng dropout_rng_{1};
};

PosteriorVector forward(MlpModel& model, const Eigen::VectorXd& x);
// Eval-mode forward over a batch; rows of `x` are examples, rows of the
// result are posteriors.
Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& x);

struct LossAndGrads {
    double loss = 0.0;
    Grads grads;
};

LossAndGrads loss_and_grads(MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels);

std::vector<Grads> per_example_grads(MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels);

void adam_step(MlpModel& model, const Grads& grads, int step_index);

struct EpochStats {
    int epoch = 0;
    double train_accuracy = 0.0;
    double valid_accuracy = 0.0;
    double train_loss = 0.0;
};

struct TrainResult {
    MlpModel model;
    std::vector<EpochStats> history;
};

TrainResult train(const MlpConfig& config, const data::Dataset& train_set, const data::Dataset& valid_set);

struct EvalMetrics {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
};

EvalMetrics evaluate(const MlpModel& model, const data::Dataset& dataset);

}  // namespace cfmia::nn
