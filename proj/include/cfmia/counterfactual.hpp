#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/data.hpp"
#include "cfmia/neuralnet.hpp"

namespace cfmia::cf {

struct HeomSpace {
    std::vector<data::FeatureMeta> schema;
    std::vector<double> range;  // max-min over the reference set; 0 for categorical/degenerate

    static HeomSpace from_reference(const data::Dataset& reference);
};

double heom(const HeomSpace& space, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

enum class Reward { Proximity, Sparsity, Combined };

struct Counterfactual {
    Eigen::VectorXd original;
    Eigen::VectorXd explanation;
    int original_class = 0;
    int cf_class = 0;
    double proximity = 0.0;
    int sparsity = 0;
    double sparsity_fraction = 0.0;
    std::vector<int> changed_features;
};

// Rows of the input are examples; rows of the output are posteriors.
using BatchPredictFn = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

// Snapshot the model by value so facades can outlive the training scope.
BatchPredictFn wrap_model(nn::MlpModel model);

// Precomputes reference-set eligibility once; explain() is then read-only.
class NiceExplainer {
public:
    NiceExplainer(BatchPredictFn predict, const data::Dataset& reference, Reward reward);
    // Distance space supplied explicitly (e.g. ranges wider than this reference).
    NiceExplainer(BatchPredictFn predict, HeomSpace space, const data::Dataset& reference, Reward reward);

    Counterfactual explain(const Eigen::VectorXd& x) const;
    const HeomSpace& space() const { return space_; }

private:
    BatchPredictFn predict_;
    data::Dataset reference_;
    HeomSpace space_;
    Reward reward_;
    std::vector<int> ref_pred_;
    std::vector<char> ref_eligible_;  // correctly classified by the model
};

Counterfactual nice_explain(const nn::MlpModel& model, const HeomSpace& space, const data::Dataset& reference,
                            const Eigen::VectorXd& x, Reward reward);
Counterfactual nice_explain(const BatchPredictFn& predict, const HeomSpace& space, const data::Dataset& reference,
                            const Eigen::VectorXd& x, Reward reward);

struct CfQuality {
    double avg_proximity = 0.0;
    double avg_sparsity = 0.0;
    double avg_sparsity_fraction = 0.0;
    double validity = 0.0;
};

CfQuality cf_quality(const std::vector<Counterfactual>& cfs);

std::string cf_dump_csv(const std::vector<Counterfactual>& cfs, const std::vector<RowId>& row_ids,
                        const std::vector<data::FeatureMeta>& schema);

}  // namespace cfmia::cf
