#include "cfmia/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace cfmia::nn {

using json = nlohmann::ordered_json;

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void validate_config(const MlpConfig& c) {
    if (c.input_dim <= 0) throw ShapeError("mlp: input_dim must be positive");
    if (c.num_classes < 2) throw ShapeError("mlp: need at least two classes");
    for (int w : c.layer_widths)
        if (w <= 0) throw ShapeError("mlp: hidden widths must be positive");
    if (c.dropout_layer >= static_cast<int>(c.layer_widths.size()))
        throw ShapeError("mlp: dropout_layer out of range");
    if (c.dropout_rate < 0.0 || c.dropout_rate >= 1.0)
        throw ShapeError("mlp: dropout_rate must lie in [0,1)");
    if (c.batch_size <= 0) throw ShapeError("mlp: batch_size must be positive");
    if (c.epochs < 0) throw ShapeError("mlp: epochs must be nonnegative");
}

int layer_in_dim(const MlpConfig& c, int l) {
    return l == 0 ? c.input_dim : c.layer_widths[l - 1];
}

int layer_out_dim(const MlpConfig& c, int l) {
    return l < static_cast<int>(c.layer_widths.size()) ? c.layer_widths[l] : c.num_classes;
}

// Forward/backward cache for one batch. Activations are stored column-wise
// (one column per example) so layer application is a single GEMM.
struct Cache {
    std::vector<Eigen::MatrixXd> acts;   // acts[0] = inputs, acts[l+1] = post-activation of layer l
    std::vector<Eigen::MatrixXd> preact; // z per layer
    Eigen::MatrixXd dropout_mask;        // scale factors; empty when dropout inactive
    Eigen::MatrixXd probs;               // num_classes x n
    double mean_loss = 0.0;
};

Cache run_forward(MlpModel& model, const Eigen::MatrixXd& x_rows, const std::vector<int>* labels) {
    const MlpConfig& c = model.config();
    if (x_rows.cols() != c.input_dim)
        throw ShapeError("mlp forward: expected " + std::to_string(c.input_dim) + " features, got " +
                         std::to_string(x_rows.cols()));
    if (!x_rows.allFinite()) throw NumericError("mlp forward: non-finite input");
    const int n = static_cast<int>(x_rows.rows());
    const int num_layers = static_cast<int>(c.layer_widths.size()) + 1;
    const bool use_dropout = model.train_mode() && c.dropout_layer >= 0 && c.dropout_rate > 0.0;

    Cache cache;
    cache.acts.resize(num_layers + 1);
    cache.preact.resize(num_layers);
    cache.acts[0] = x_rows.transpose();

    for (int l = 0; l < num_layers; ++l) {
        const auto& layer = model.layers()[l];
        cache.preact[l] = (layer.w * cache.acts[l]).colwise() + layer.b;
        if (l < num_layers - 1) {
            cache.acts[l + 1] = cache.preact[l].cwiseMax(0.0);
            if (use_dropout && l == c.dropout_layer) {
                const double keep = 1.0 - c.dropout_rate;
                Eigen::MatrixXd mask(cache.acts[l + 1].rows(), n);
                for (int j = 0; j < n; ++j)
                    for (int i = 0; i < mask.rows(); ++i)
                        mask(i, j) = model.dropout_rng().uniform() < keep ? 1.0 / keep : 0.0;
                cache.acts[l + 1] = cache.acts[l + 1].cwiseProduct(mask);
                cache.dropout_mask = std::move(mask);
            }
        } else {
            cache.acts[l + 1] = cache.preact[l];  // logits
        }
    }

    // Log-softmax keeps the loss exact for small logits; probs reused in backward.
    const Eigen::MatrixXd& logits = cache.acts[num_layers];
    cache.probs.resize(logits.rows(), n);
    double loss_sum = 0.0;
    for (int j = 0; j < n; ++j) {
        const double zmax = logits.col(j).maxCoeff();
        const Eigen::VectorXd shifted = logits.col(j).array() - zmax;
        const double lse = std::log(shifted.array().exp().sum());
        cache.probs.col(j) = (shifted.array() - lse).exp();
        if (labels) {
            const int y = (*labels)[j];
            if (y < 0 || y >= logits.rows()) throw ShapeError("mlp: label out of range");
            loss_sum += lse - shifted(y);
        }
    }
    cache.mean_loss = n > 0 ? loss_sum / n : 0.0;
    return cache;
}

// Backward pass. When `per_example` is null, accumulates mean grads into `mean_out`;
// otherwise emits one Grads per column without averaging.
void run_backward(MlpModel& model, const Cache& cache, const std::vector<int>& labels, Grads* mean_out,
                  std::vector<Grads>* per_example) {
    const MlpConfig& c = model.config();
    const int n = static_cast<int>(labels.size());
    const int num_layers = static_cast<int>(c.layer_widths.size()) + 1;
    const bool use_dropout = cache.dropout_mask.size() > 0;

    Eigen::MatrixXd delta = cache.probs;
    for (int j = 0; j < n; ++j) delta(labels[j], j) -= 1.0;

    if (per_example) {
        per_example->assign(n, zeros_like(model.layers()));
    } else {
        *mean_out = zeros_like(model.layers());
    }

    for (int l = num_layers - 1; l >= 0; --l) {
        if (per_example) {
            for (int j = 0; j < n; ++j) {
                (*per_example)[j][l].w = delta.col(j) * cache.acts[l].col(j).transpose();
                (*per_example)[j][l].b = delta.col(j);
            }
        } else {
            (*mean_out)[l].w = (delta * cache.acts[l].transpose()) / n;
            (*mean_out)[l].b = delta.rowwise().sum() / n;
        }
        if (l > 0) {
            Eigen::MatrixXd grad_act = model.layers()[l].w.transpose() * delta;
            if (use_dropout && l - 1 == c.dropout_layer)
                grad_act = grad_act.cwiseProduct(cache.dropout_mask);
            delta = grad_act.cwiseProduct((cache.preact[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
}

json tensor_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd tensor_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty()) throw ParseError("checkpoint: bad weight tensor");
    const int r = static_cast<int>(rows.size());
    const int cno = static_cast<int>(rows[0].size());
    Eigen::MatrixXd m(r, cno);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(rows[i].size()) != cno) throw ParseError("checkpoint: ragged weight tensor");
        for (int j = 0; j < cno; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

}  // namespace

double global_l2_norm(const Grads& g) {
    double sq = 0.0;
    for (const auto& layer : g) {
        sq += layer.w.squaredNorm();
        sq += layer.b.squaredNorm();
    }
    return std::sqrt(sq);
}

Grads zeros_like(const std::vector<LayerTensors>& params) {
    Grads out(params.size());
    for (std::size_t l = 0; l < params.size(); ++l) {
        out[l].w = Eigen::MatrixXd::Zero(params[l].w.rows(), params[l].w.cols());
        out[l].b = Eigen::VectorXd::Zero(params[l].b.size());
    }
    return out;
}

MlpModel::MlpModel(const MlpConfig& config) : config_(config), dropout_rng_(derive_seed(config.seed, "dropout")) {
    validate_config(config);
    const int num_layers = static_cast<int>(config.layer_widths.size()) + 1;
    layers_.resize(num_layers);
    for (int l = 0; l < num_layers; ++l) {
        const int in = layer_in_dim(config, l);
        const int out = layer_out_dim(config, l);
        Rng rng(derive_seed(config.seed, "init", l));
        const double limit = std::sqrt(6.0 / in);
        layers_[l].w.resize(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) layers_[l].w(i, j) = rng.uniform(-limit, limit);
        layers_[l].b = Eigen::VectorXd::Zero(out);
    }
    optimizer_.m = zeros_like(layers_);
    optimizer_.v = zeros_like(layers_);
}

std::string MlpModel::to_json(const std::string& scaler_ref) const {
    json doc;
    doc["format"] = "cfmia-mlp";
    doc["version"] = 1;
    json cfg;
    cfg["layer_widths"] = config_.layer_widths;
    cfg["input_dim"] = config_.input_dim;
    cfg["num_classes"] = config_.num_classes;
    cfg["dropout_rate"] = config_.dropout_rate;
    cfg["dropout_layer"] = config_.dropout_layer;
    cfg["learning_rate"] = config_.learning_rate;
    cfg["epochs"] = config_.epochs;
    cfg["batch_size"] = config_.batch_size;
    cfg["seed"] = config_.seed;
    doc["config"] = std::move(cfg);
    doc["scaler"] = scaler_ref;
    json layers = json::array();
    for (const auto& layer : layers_) {
        json entry;
        entry["w"] = tensor_to_json(layer.w);
        entry["b"] = tensor_to_json(layer.b);
        layers.push_back(std::move(entry));
    }
    doc["layers"] = std::move(layers);
    return doc.dump();
}

MlpModel MlpModel::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    if (!doc.contains("format") || doc["format"] != "cfmia-mlp")
        throw SchemaError("checkpoint: unrecognized format field");
    const json& cfg = doc.at("config");
    MlpConfig config;
    config.layer_widths = cfg.at("layer_widths").get<std::vector<int>>();
    config.input_dim = cfg.at("input_dim").get<int>();
    config.num_classes = cfg.at("num_classes").get<int>();
    config.dropout_rate = cfg.at("dropout_rate").get<double>();
    config.dropout_layer = cfg.at("dropout_layer").get<int>();
    config.learning_rate = cfg.at("learning_rate").get<double>();
    config.epochs = cfg.at("epochs").get<int>();
    config.batch_size = cfg.at("batch_size").get<int>();
    config.seed = cfg.at("seed").get<std::uint64_t>();

    MlpModel model(config);
    const json& layers = doc.at("layers");
    if (layers.size() != model.layers_.size()) throw SchemaError("checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < model.layers_.size(); ++l) {
        Eigen::MatrixXd w = tensor_from_json(layers[l].at("w"));
        Eigen::MatrixXd b = tensor_from_json(layers[l].at("b"));
        if (w.rows() != model.layers_[l].w.rows() || w.cols() != model.layers_[l].w.cols())
            throw ShapeError("checkpoint: weight shape mismatch at layer " + std::to_string(l));
        if (b.rows() != model.layers_[l].b.size() || b.cols() != 1)
            throw ShapeError("checkpoint: bias shape mismatch at layer " + std::to_string(l));
        model.layers_[l].w = std::move(w);
        model.layers_[l].b = b.col(0);
    }
    return model;
}

PosteriorVector forward(MlpModel& model, const Eigen::VectorXd& x) {
    Eigen::MatrixXd rows = x.transpose();
    Cache cache = run_forward(model, rows, nullptr);
    return cache.probs.col(0);
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& x) {
    MlpModel* mutable_model = const_cast<MlpModel*>(&model);
    const bool saved = model.train_mode();
    mutable_model->set_train_mode(false);
    Cache cache = run_forward(*mutable_model, x, nullptr);
    mutable_model->set_train_mode(saved);
    return cache.probs.transpose();
}

LossAndGrads loss_and_grads(MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
    if (x.rows() != static_cast<Eigen::Index>(labels.size()))
        throw ShapeError("mlp loss: rows/labels size mismatch");
    if (labels.empty()) throw SizeError("mlp loss: empty batch");
    Cache cache = run_forward(model, x, &labels);
    LossAndGrads out;
    out.loss = cache.mean_loss;
    run_backward(model, cache, labels, &out.grads, nullptr);
    return out;
}

std::vector<Grads> per_example_grads(MlpModel& model, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
    if (x.rows() != static_cast<Eigen::Index>(labels.size()))
        throw ShapeError("mlp grads: rows/labels size mismatch");
    if (labels.empty()) throw SizeError("mlp grads: empty batch");
    Cache cache = run_forward(model, x, &labels);
    std::vector<Grads> out;
    run_backward(model, cache, labels, nullptr, &out);
    return out;
}

void adam_step(MlpModel& model, const Grads& grads, int step_index) {
    if (step_index < 1) throw NumericError("adam: step_index must be >= 1");
    if (grads.size() != model.layers().size()) throw ShapeError("adam: gradient layer count mismatch");
    auto& opt = model.optimizer();
    const double lr = model.config().learning_rate;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, step_index);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, step_index);
    for (std::size_t l = 0; l < grads.size(); ++l) {
        auto& layer = model.layers()[l];
        if (grads[l].w.rows() != layer.w.rows() || grads[l].w.cols() != layer.w.cols())
            throw ShapeError("adam: gradient shape mismatch at layer " + std::to_string(l));
        opt.m[l].w = kAdamBeta1 * opt.m[l].w + (1.0 - kAdamBeta1) * grads[l].w;
        opt.m[l].b = kAdamBeta1 * opt.m[l].b + (1.0 - kAdamBeta1) * grads[l].b;
        opt.v[l].w = kAdamBeta2 * opt.v[l].w + (1.0 - kAdamBeta2) * grads[l].w.cwiseProduct(grads[l].w);
        opt.v[l].b = kAdamBeta2 * opt.v[l].b + (1.0 - kAdamBeta2) * grads[l].b.cwiseProduct(grads[l].b);
        layer.w -= lr * (opt.m[l].w / bc1).cwiseQuotient((opt.v[l].w / bc2).cwiseSqrt().array().matrix() +
                                                         Eigen::MatrixXd::Constant(layer.w.rows(), layer.w.cols(), kAdamEps));
        layer.b -= lr * (opt.m[l].b / bc1).cwiseQuotient((opt.v[l].b / bc2).cwiseSqrt() +
                                                         Eigen::VectorXd::Constant(layer.b.size(), kAdamEps));
    }
    opt.steps_taken = step_index;
}

TrainResult train(const MlpConfig& config, const data::Dataset& train_set, const data::Dataset& valid_set) {
    if (train_set.size() == 0) throw SizeError("mlp train: empty training set");
    if (train_set.dim() != config.input_dim) throw ShapeError("mlp train: dataset dim != config input_dim");

    TrainResult result;
    result.model = MlpModel(config);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));

    const int n = static_cast<int>(train_set.size());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    int step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        result.model.set_train_mode(true);
        double loss_sum = 0.0;
        for (int start = 0; start < n; start += config.batch_size) {
            const int b = std::min(config.batch_size, n - start);
            Eigen::MatrixXd batch(b, config.input_dim);
            std::vector<int> labels(b);
            for (int i = 0; i < b; ++i) {
                batch.row(i) = train_set.rows.row(order[start + i]);
                labels[i] = train_set.labels[order[start + i]];
            }
            LossAndGrads lg = loss_and_grads(result.model, batch, labels);
            adam_step(result.model, lg.grads, ++step);
            loss_sum += lg.loss * b;
        }
        result.model.set_train_mode(false);

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / n;
        stats.train_accuracy = evaluate(result.model, train_set).accuracy;
        stats.valid_accuracy = valid_set.size() > 0 ? evaluate(result.model, valid_set).accuracy : 0.0;
        result.history.push_back(stats);
    }
    result.model.set_train_mode(false);
    return result;
}

EvalMetrics evaluate(const MlpModel& model, const data::Dataset& dataset) {
    if (dataset.size() == 0) throw SizeError("mlp evaluate: empty dataset");
    const Eigen::MatrixXd probs = forward_batch(model, dataset.rows);
    const int k = static_cast<int>(probs.cols());
    std::vector<long> tp(k, 0), fp(k, 0), fn(k, 0);
    long correct = 0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        int pred = 0;
        for (int j = 1; j < k; ++j)
            if (probs(i, j) > probs(i, pred)) pred = j;
        const int truth = dataset.labels[i];
        if (pred == truth) {
            ++correct;
            ++tp[truth];
        } else {
            ++fp[pred];
            ++fn[truth];
        }
    }
    EvalMetrics out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(probs.rows());
    double psum = 0.0, rsum = 0.0;
    for (int c = 0; c < k; ++c) {
        psum += tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
        rsum += tp[c] + fn[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
    }
    out.macro_precision = psum / k;
    out.macro_recall = rsum / k;
    return out;
}

}  // namespace cfmia::nn
