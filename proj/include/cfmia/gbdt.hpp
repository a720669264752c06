#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cfmia/common.hpp"

namespace cfmia::gbdt {

struct GbdtConfig {
    int n_estimators = 150;
    int max_depth = 15;
    double learning_rate = 0.01;
    int max_bins = 256;
    std::uint64_t seed = 0;  // reserved; the builder is fully deterministic
};

// Binary gradient boosting with logistic loss: F0 = empirical log-odds, each
// round fits a histogram regression tree to the residuals y - sigmoid(F) with
// Newton leaf values, shrunk by learning_rate.
class GbdtModel {
public:
    static GbdtModel train(const Eigen::MatrixXd& x, const std::vector<int>& y, const GbdtConfig& config,
                           std::vector<double>* round_losses = nullptr);

    double predict_proba_one(const Eigen::VectorXd& x) const;
    Eigen::VectorXd predict_proba(const Eigen::MatrixXd& x) const;

    int tree_count() const { return static_cast<int>(trees_.size()); }

private:
    struct Node {
        int feature = -1;
        double threshold = 0.0;  // goes left when value <= threshold
        int left = -1;
        int right = -1;
        double value = 0.0;
        bool leaf = true;
    };
    struct Tree {
        std::vector<Node> nodes;
    };

    double score_one(const Eigen::VectorXd& x) const;

    double base_score_ = 0.0;
    double learning_rate_ = 0.0;
    std::vector<Tree> trees_;
};

}  // namespace cfmia::gbdt
