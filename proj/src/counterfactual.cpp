#include "cfmia/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cfmia::cf {

namespace {

int argmax_row(const Eigen::MatrixXd& probs, Eigen::Index row) {
    int best = 0;
    for (int j = 1; j < probs.cols(); ++j)
        if (probs(row, j) > probs(row, best)) best = j;
    return best;
}

bool features_differ(const data::FeatureMeta& meta, double a, double b) {
    if (meta.kind == data::FeatureKind::Categorical) return a != b;
    return std::fabs(a - b) > 1e-9;
}

}  // namespace

HeomSpace HeomSpace::from_reference(const data::Dataset& reference) {
    if (reference.size() == 0) throw SizeError("heom space: empty reference set");
    HeomSpace space;
    space.schema = reference.schema;
    space.range.resize(reference.schema.size(), 0.0);
    for (std::size_t j = 0; j < reference.schema.size(); ++j) {
        if (reference.schema[j].kind != data::FeatureKind::Numeric) continue;
        const double mn = reference.rows.col(j).minCoeff();
        const double mx = reference.rows.col(j).maxCoeff();
        space.range[j] = mx - mn;
    }
    return space;
}

double heom(const HeomSpace& space, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const auto d = static_cast<Eigen::Index>(space.schema.size());
    if (a.size() != d || b.size() != d)
        throw ShapeError("heom: vector length does not match schema (" + std::to_string(d) + ")");
    double sq = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        double dj;
        if (space.schema[j].kind == data::FeatureKind::Categorical) {
            dj = a[j] == b[j] ? 0.0 : 1.0;
        } else {
            dj = space.range[j] > 0.0 ? std::fabs(a[j] - b[j]) / space.range[j] : 0.0;
        }
        sq += dj * dj;
    }
    return std::sqrt(sq);
}

BatchPredictFn wrap_model(nn::MlpModel model) {
    auto owned = std::make_shared<nn::MlpModel>(std::move(model));
    owned->set_train_mode(false);
    return [owned](const Eigen::MatrixXd& x) { return nn::forward_batch(*owned, x); };
}

NiceExplainer::NiceExplainer(BatchPredictFn predict, const data::Dataset& reference, Reward reward)
    : NiceExplainer(std::move(predict), HeomSpace::from_reference(reference), reference, reward) {}

NiceExplainer::NiceExplainer(BatchPredictFn predict, HeomSpace space, const data::Dataset& reference, Reward reward)
    : predict_(std::move(predict)), reference_(reference), space_(std::move(space)), reward_(reward) {
    if (space_.schema.size() != static_cast<std::size_t>(reference_.dim()))
        throw ShapeError("nice_explain: space schema does not match reference dimension");
    const Eigen::MatrixXd probs = predict_(reference_.rows);
    ref_pred_.resize(reference_.size());
    ref_eligible_.resize(reference_.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        ref_pred_[i] = argmax_row(probs, i);
        ref_eligible_[i] = ref_pred_[i] == reference_.labels[i] ? 1 : 0;
    }
}

Counterfactual NiceExplainer::explain(const Eigen::VectorXd& x) const {
    const auto d = static_cast<Eigen::Index>(space_.schema.size());
    if (x.size() != d) throw ShapeError("nice_explain: input length does not match schema");

    const Eigen::MatrixXd x_probs = predict_(x.transpose());
    const int original_class = argmax_row(x_probs, 0);

    // Nearest unlike neighbor among correctly classified reference rows of a
    // different predicted class; ties resolve to the lowest row index.
    Eigen::Index nun = -1;
    double nun_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(reference_.size()); ++i) {
        if (!ref_eligible_[i] || ref_pred_[i] == original_class) continue;
        const double dist = heom(space_, x, reference_.rows.row(i).transpose());
        if (dist < nun_dist) {
            nun_dist = dist;
            nun = i;
        }
    }
    if (nun < 0) throw NoCounterfactualError("nice_explain: no correctly classified unlike instance in reference");

    const Eigen::VectorXd nun_row = reference_.rows.row(nun).transpose();
    std::vector<int> pending;
    for (Eigen::Index j = 0; j < d; ++j)
        if (features_differ(space_.schema[j], x[j], nun_row[j])) pending.push_back(static_cast<int>(j));

    Eigen::VectorXd current = x;
    double current_score = 1.0 - x_probs(0, original_class);
    double current_dist = 0.0;
    std::vector<int> changed;
    int cf_class = original_class;

    while (!pending.empty()) {
        Eigen::MatrixXd hybrids(pending.size(), d);
        for (std::size_t c = 0; c < pending.size(); ++c) {
            hybrids.row(c) = current.transpose();
            hybrids(c, pending[c]) = nun_row[pending[c]];
        }
        const Eigen::MatrixXd probs = predict_(hybrids);

        int best_c = -1;
        double best_reward = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < pending.size(); ++c) {
            const double score = 1.0 - probs(static_cast<Eigen::Index>(c), original_class);
            const double gain = score - current_score;
            const double dist = heom(space_, x, hybrids.row(c).transpose());
            const double ddist = std::max(dist - current_dist, 1e-12);
            double reward;
            switch (reward_) {
                case Reward::Proximity: reward = gain / ddist; break;
                case Reward::Sparsity: reward = gain; break;
                case Reward::Combined: reward = (gain / ddist) * gain; break;
                default: reward = gain; break;
            }
            if (reward > best_reward) {  // strict: ties keep the lowest feature index
                best_reward = reward;
                best_c = static_cast<int>(c);
            }
        }

        const int feat = pending[best_c];
        current[feat] = nun_row[feat];
        current_score = 1.0 - probs(best_c, original_class);
        current_dist = heom(space_, x, current);
        changed.push_back(feat);
        pending.erase(pending.begin() + best_c);

        const int pred = argmax_row(probs, best_c);
        if (pred != original_class) {
            cf_class = pred;
            break;
        }
    }

    if (cf_class == original_class)
        throw NoCounterfactualError("nice_explain: exhausted substitutions without a class flip");

    Counterfactual out;
    out.original = x;
    out.explanation = current;
    out.original_class = original_class;
    out.cf_class = cf_class;
    out.proximity = heom(space_, x, current);
    std::sort(changed.begin(), changed.end());
    out.changed_features = std::move(changed);
    out.sparsity = 0;
    for (Eigen::Index j = 0; j < d; ++j)
        if (features_differ(space_.schema[j], x[j], current[j])) ++out.sparsity;
    out.sparsity_fraction = d > 0 ? static_cast<double>(out.sparsity) / static_cast<double>(d) : 0.0;
    return out;
}

Counterfactual nice_explain(const BatchPredictFn& predict, const HeomSpace& space, const data::Dataset& reference,
                            const Eigen::VectorXd& x, Reward reward) {
    NiceExplainer explainer(predict, space, reference, reward);
    return explainer.explain(x);
}

Counterfactual nice_explain(const nn::MlpModel& model, const HeomSpace& space, const data::Dataset& reference,
                            const Eigen::VectorXd& x, Reward reward) {
    return nice_explain(wrap_model(model), space, reference, x, reward);
}

CfQuality cf_quality(const std::vector<Counterfactual>& cfs) {
    if (cfs.empty()) throw SizeError("cf_quality: empty list");
    CfQuality q;
    for (const auto& c : cfs) {
        q.avg_proximity += c.proximity;
        q.avg_sparsity += c.sparsity;
        q.avg_sparsity_fraction += c.sparsity_fraction;
        q.validity += c.cf_class != c.original_class ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(cfs.size());
    q.avg_proximity /= n;
    q.avg_sparsity /= n;
    q.avg_sparsity_fraction /= n;
    q.validity /= n;
    return q;
}

std::string cf_dump_csv(const std::vector<Counterfactual>& cfs, const std::vector<RowId>& row_ids,
                        const std::vector<data::FeatureMeta>& schema) {
    if (row_ids.size() != cfs.size()) throw SizeError("cf_dump_csv: row_ids/cfs length mismatch");
    std::ostringstream out;
    out << "row_id,original_class,cf_class,proximity,sparsity,changed_feature_names\n";
    out.precision(17);
    for (std::size_t i = 0; i < cfs.size(); ++i) {
        out << row_ids[i] << ',' << cfs[i].original_class << ',' << cfs[i].cf_class << ',' << cfs[i].proximity << ','
            << cfs[i].sparsity << ',';
        for (std::size_t k = 0; k < cfs[i].changed_features.size(); ++k) {
            if (k) out << '|';
            out << schema.at(cfs[i].changed_features[k]).name;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace cfmia::cf
