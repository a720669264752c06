#include "cfmia/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfmia::gbdt {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) {
        const double e = std::exp(-z);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logistic_loss(const Eigen::VectorXd& scores, const std::vector<int>& y) {
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = sigmoid(scores[static_cast<Eigen::Index>(i)]);
        const double clamped = std::min(std::max(p, 1e-15), 1.0 - 1e-15);
        loss += y[i] ? -std::log(clamped) : -std::log(1.0 - clamped);
    }
    return loss / static_cast<double>(y.size());
}

// Per-feature bin thresholds: exact value midpoints up to max_bins distinct
// values, equal-frequency quantile cuts beyond that.
std::vector<double> bin_thresholds(const Eigen::MatrixXd& x, int feature, int max_bins) {
    std::vector<double> vals(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) vals[i] = x(i, feature);
    std::sort(vals.begin(), vals.end());
    std::vector<double> uniq;
    for (double v : vals)
        if (uniq.empty() || v != uniq.back()) uniq.push_back(v);

    std::vector<double> thresholds;
    if (static_cast<int>(uniq.size()) <= max_bins) {
        for (std::size_t k = 0; k + 1 < uniq.size(); ++k) thresholds.push_back(0.5 * (uniq[k] + uniq[k + 1]));
    } else {
        const std::size_t n = vals.size();
        for (int k = 1; k < max_bins; ++k) {
            const std::size_t pos = static_cast<std::size_t>(static_cast<double>(k) * n / max_bins);
            if (pos == 0 || pos >= n) continue;
            if (vals[pos - 1] == vals[pos]) continue;  // cut inside a tie run carries no information
            const double t = 0.5 * (vals[pos - 1] + vals[pos]);
            if (thresholds.empty() || t > thresholds.back()) thresholds.push_back(t);
        }
    }
    return thresholds;
}

int bin_of(const std::vector<double>& thresholds, double v) {
    return static_cast<int>(std::lower_bound(thresholds.begin(), thresholds.end(), v) - thresholds.begin());
}

}  // namespace

GbdtModel GbdtModel::train(const Eigen::MatrixXd& x, const std::vector<int>& y, const GbdtConfig& config,
                           std::vector<double>* round_losses) {
    if (x.rows() != static_cast<Eigen::Index>(y.size())) throw ShapeError("gbdt: rows/labels size mismatch");
    if (y.empty()) throw SizeError("gbdt: empty training set");
    if (config.n_estimators < 1 || config.max_depth < 1) throw ConfigError("gbdt: bad estimator/depth config");
    long positives = std::count(y.begin(), y.end(), 1);
    for (int v : y)
        if (v != 0 && v != 1) throw SchemaError("gbdt: labels must be 0/1");
    if (positives == 0 || positives == static_cast<long>(y.size()))
        throw DegenerateLabelsError("gbdt: training labels contain a single class");

    const int n = static_cast<int>(y.size());
    const int d = static_cast<int>(x.cols());

    std::vector<std::vector<double>> thresholds(d);
    std::vector<std::vector<std::uint16_t>> codes(d, std::vector<std::uint16_t>(n));
    for (int j = 0; j < d; ++j) {
        thresholds[j] = bin_thresholds(x, j, config.max_bins);
        for (int i = 0; i < n; ++i) codes[j][i] = static_cast<std::uint16_t>(bin_of(thresholds[j], x(i, j)));
    }

    GbdtModel model;
    model.learning_rate_ = config.learning_rate;
    const double pos_frac = static_cast<double>(positives) / n;
    model.base_score_ = std::log(pos_frac / (1.0 - pos_frac));

    Eigen::VectorXd scores = Eigen::VectorXd::Constant(n, model.base_score_);
    if (round_losses) round_losses->push_back(logistic_loss(scores, y));

    Eigen::VectorXd residual(n), hess(n);
    for (int round = 0; round < config.n_estimators; ++round) {
        for (int i = 0; i < n; ++i) {
            const double p = sigmoid(scores[i]);
            residual[i] = y[i] - p;
            hess[i] = p * (1.0 - p);
        }

        Tree tree;
        std::vector<int> all_rows(n);
        std::iota(all_rows.begin(), all_rows.end(), 0);

        struct Work {
            int node;
            std::vector<int> rows;
            int depth;
        };
        tree.nodes.push_back(Node{});
        std::vector<Work> stack;
        stack.push_back({0, std::move(all_rows), 0});

        while (!stack.empty()) {
            Work w = std::move(stack.back());
            stack.pop_back();

            double g_total = 0.0, h_total = 0.0;
            for (int i : w.rows) {
                g_total += residual[i];
                h_total += hess[i];
            }

            bool make_leaf = w.depth >= config.max_depth || w.rows.size() < 2;
            int best_feature = -1, best_bin = -1;
            double best_gain = 1e-12;
            if (!make_leaf) {
                const double parent_obj = g_total * g_total / w.rows.size();
                for (int j = 0; j < d; ++j) {
                    const int nbins = static_cast<int>(thresholds[j].size()) + 1;
                    if (nbins < 2) continue;
                    std::vector<double> gsum(nbins, 0.0);
                    std::vector<int> cnt(nbins, 0);
                    for (int i : w.rows) {
                        gsum[codes[j][i]] += residual[i];
                        ++cnt[codes[j][i]];
                    }
                    double gl = 0.0;
                    int nl = 0;
                    for (int b = 0; b + 1 < nbins; ++b) {
                        gl += gsum[b];
                        nl += cnt[b];
                        const int nr = static_cast<int>(w.rows.size()) - nl;
                        if (nl == 0 || nr == 0) continue;
                        const double gr = g_total - gl;
                        const double gain = gl * gl / nl + gr * gr / nr - parent_obj;
                        if (gain > best_gain) {  // strict: ties keep lowest (feature, bin)
                            best_gain = gain;
                            best_feature = j;
                            best_bin = b;
                        }
                    }
                }
                if (best_feature < 0) make_leaf = true;
            }

            if (make_leaf) {
                Node& leaf = tree.nodes[w.node];
                leaf.leaf = true;
                // Newton step on the logistic loss, clamped for stability.
                leaf.value = std::clamp(g_total / std::max(h_total, 1e-6), -4.0, 4.0);
                for (int i : w.rows) scores[i] += config.learning_rate * leaf.value;
                continue;
            }

            std::vector<int> left_rows, right_rows;
            left_rows.reserve(w.rows.size());
            right_rows.reserve(w.rows.size());
            for (int i : w.rows) {
                if (codes[best_feature][i] <= best_bin)
                    left_rows.push_back(i);
                else
                    right_rows.push_back(i);
            }
            const int left_id = static_cast<int>(tree.nodes.size());
            const int right_id = left_id + 1;
            tree.nodes.push_back(Node{});
            tree.nodes.push_back(Node{});  // may reallocate; re-address the parent below
            Node& parent = tree.nodes[w.node];
            parent.leaf = false;
            parent.feature = best_feature;
            parent.threshold = thresholds[best_feature][best_bin];
            parent.left = left_id;
            parent.right = right_id;
            stack.push_back({right_id, std::move(right_rows), w.depth + 1});
            stack.push_back({left_id, std::move(left_rows), w.depth + 1});
        }

        model.trees_.push_back(std::move(tree));
        if (round_losses) round_losses->push_back(logistic_loss(scores, y));
    }
    return model;
}

double GbdtModel::score_one(const Eigen::VectorXd& x) const {
    double score = base_score_;
    for (const auto& tree : trees_) {
        int node = 0;
        while (!tree.nodes[node].leaf) {
            const Node& nd = tree.nodes[node];
            node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
        }
        score += learning_rate_ * tree.nodes[node].value;
    }
    return score;
}

double GbdtModel::predict_proba_one(const Eigen::VectorXd& x) const { return sigmoid(score_one(x)); }

Eigen::VectorXd GbdtModel::predict_proba(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict_proba_one(x.row(i).transpose());
    return out;
}

}  // namespace cfmia::gbdt
