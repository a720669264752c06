#include "cfmia/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace cfmia::dp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSigmaLo = 1e-2;
constexpr double kSigmaHi = 1e3;

double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double hi = std::max(a, b), lo = std::min(a, b);
    return hi + std::log1p(std::exp(lo - hi));
}

double log_sub(double a, double b) {
    if (b == -kInf) return a;
    if (b > a) throw NumericError("rdp accountant: negative partial sum");
    if (a == b) return -kInf;
    return a + std::log1p(-std::exp(b - a));
}

double log_erfc(double x) {
    const double r = std::erfc(x);
    if (r > 0.0) return std::log(r);
    // Tail expansion once erfc underflows (x beyond ~26.5).
    const double x2 = x * x;
    return -0.5 * std::log(M_PI) - std::log(x) - x2 - 0.5 / x2 + 0.625 / (x2 * x2) -
           37.0 / 24.0 / (x2 * x2 * x2) + 353.0 / 64.0 / (x2 * x2 * x2 * x2);
}

// log E[(mu/mu0)^alpha] for integer alpha: binomial expansion over exact moments
// of the mixture (1-q) N(0, s^2) + q N(1, s^2).
double log_a_int(double q, double sigma, int alpha) {
    double log_a = -kInf;
    const double log_q = std::log(q);
    const double log_1mq = std::log1p(-q);
    double log_binom = 0.0;  // log C(alpha, i), updated incrementally
    for (int i = 0; i <= alpha; ++i) {
        if (i > 0) log_binom += std::log(static_cast<double>(alpha - i + 1)) - std::log(static_cast<double>(i));
        const double term = log_binom + i * log_q + (alpha - i) * log_1mq +
                            (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma);
        log_a = log_add(log_a, term);
    }
    return log_a;
}

// Fractional alpha: split the integral at z0 and expand both halves as series
// with signed generalized binomial coefficients.
double log_a_frac(double q, double sigma, double alpha) {
    double log_a0 = -kInf, log_a1 = -kInf;
    const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
    double coef = 1.0;  // binom(alpha, i), tracked with sign
    for (int i = 0;; ++i) {
        if (i > 0) coef *= (alpha - (i - 1)) / i;
        if (coef == 0.0) break;
        const double log_coef = std::log(std::fabs(coef));
        const double j = alpha - i;
        const double log_t0 = log_coef + i * std::log(q) + j * std::log1p(-q);
        const double log_t1 = log_coef + j * std::log(q) + i * std::log1p(-q);
        const double log_e0 = std::log(0.5) + log_erfc((i - z0) / (std::sqrt(2.0) * sigma));
        const double log_e1 = std::log(0.5) + log_erfc((z0 - j) / (std::sqrt(2.0) * sigma));
        const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2.0 * sigma * sigma) + log_e0;
        const double log_s1 = log_t1 + (j * j - j) / (2.0 * sigma * sigma) + log_e1;
        if (coef > 0.0) {
            log_a0 = log_add(log_a0, log_s0);
            log_a1 = log_add(log_a1, log_s1);
        } else {
            log_a0 = log_sub(log_a0, log_s0);
            log_a1 = log_sub(log_a1, log_s1);
        }
        if (std::max(log_s0, log_s1) < -30.0 && i > static_cast<int>(alpha)) break;
        if (i > 2000) return kInf;  // series failed to settle; report divergence
    }
    return log_add(log_a0, log_a1);
}

double rdp_one_step(double q, double sigma, double alpha) {
    if (sigma <= 0.0) return kInf;
    if (q == 0.0) return 0.0;
    if (q == 1.0) return alpha / (2.0 * sigma * sigma);  // plain Gaussian, exact for all orders
    double log_a;
    if (std::floor(alpha) == alpha) {
        log_a = log_a_int(q, sigma, static_cast<int>(alpha));
    } else {
        log_a = log_a_frac(q, sigma, alpha);
    }
    if (!std::isfinite(log_a)) return kInf;
    return std::max(0.0, log_a / (alpha - 1.0));
}

double accounted_epsilon(double q, double sigma, int steps, double delta) {
    return rdp_to_eps(rdp_subsampled_gaussian(q, sigma, steps), delta).epsilon;
}

}  // namespace

const std::vector<double>& default_orders() {
    static const std::vector<double> orders = [] {
        std::vector<double> o{1.5};
        for (int a = 2; a <= 64; ++a) o.push_back(a);
        o.push_back(128.0);
        o.push_back(256.0);
        return o;
    }();
    return orders;
}

std::vector<nn::Grads> clip_grads(std::vector<nn::Grads> per_example, double clip_norm) {
    if (clip_norm <= 0.0) throw NumericError("clip_grads: clip norm must be positive");
    for (std::size_t i = 0; i < per_example.size(); ++i) {
        for (const auto& layer : per_example[i])
            if (!layer.w.allFinite() || !layer.b.allFinite())
                throw NumericError("clip_grads: non-finite gradient at example " + std::to_string(i));
        const double norm = nn::global_l2_norm(per_example[i]);
        if (norm > clip_norm) {
            const double scale = clip_norm / norm;
            for (auto& layer : per_example[i]) {
                layer.w *= scale;
                layer.b *= scale;
            }
        }
    }
    return per_example;
}

nn::Grads noisy_aggregate(const std::vector<nn::Grads>& clipped, double clip_norm, double sigma, Rng& rng) {
    if (clipped.empty()) throw SizeError("noisy_aggregate: empty batch");
    nn::Grads agg = nn::zeros_like(clipped.front());
    for (const auto& g : clipped) {
        for (std::size_t l = 0; l < agg.size(); ++l) {
            agg[l].w += g[l].w;
            agg[l].b += g[l].b;
        }
    }
    const double stddev = sigma * clip_norm;
    const double inv_n = 1.0 / static_cast<double>(clipped.size());
    for (auto& layer : agg) {
        if (stddev > 0.0) {
            for (Eigen::Index i = 0; i < layer.w.rows(); ++i)
                for (Eigen::Index j = 0; j < layer.w.cols(); ++j) layer.w(i, j) += rng.gaussian(0.0, stddev);
            for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b(i) += rng.gaussian(0.0, stddev);
        }
        layer.w *= inv_n;
        layer.b *= inv_n;
    }
    return agg;
}

RdpCurve rdp_subsampled_gaussian(double q, double sigma, int steps, const std::vector<double>& orders) {
    if (q <= 0.0 || q > 1.0) throw NumericError("rdp: sample rate must lie in (0, 1]");
    if (sigma <= 0.0) throw NumericError("rdp: sigma must be positive");
    if (steps < 1) throw NumericError("rdp: steps must be >= 1");
    RdpCurve curve;
    curve.orders = orders;
    curve.rdp_values.reserve(orders.size());
    for (double alpha : orders) {
        if (alpha <= 1.0) throw NumericError("rdp: orders must exceed 1");
        const double one = rdp_one_step(q, sigma, alpha);
        curve.rdp_values.push_back(std::isfinite(one) ? one * steps : kInf);
    }
    return curve;
}

EpsilonAtOrder rdp_to_eps(const RdpCurve& curve, double delta) {
    if (curve.orders.empty() || curve.orders.size() != curve.rdp_values.size())
        throw SizeError("rdp_to_eps: empty or ragged curve");
    if (delta <= 0.0 || delta >= 1.0) throw NumericError("rdp_to_eps: delta must lie in (0,1)");
    EpsilonAtOrder best{kInf, 0.0};
    const double log_inv_delta = std::log(1.0 / delta);
    for (std::size_t i = 0; i < curve.orders.size(); ++i) {
        if (!std::isfinite(curve.rdp_values[i])) continue;
        const double eps = curve.rdp_values[i] + log_inv_delta / (curve.orders[i] - 1.0);
        if (eps < best.epsilon) best = {eps, curve.orders[i]};
    }
    if (!std::isfinite(best.epsilon)) throw NumericError("rdp_to_eps: no finite epsilon on the curve");
    return best;
}

double calibrate_sigma(double eps_target, double delta, double q, int steps) {
    if (eps_target <= 0.0) throw CalibrationError("calibrate_sigma: target epsilon must be positive");
    double lo = kSigmaLo, hi = kSigmaHi;
    if (accounted_epsilon(q, lo, steps, delta) <= eps_target) return lo;
    if (accounted_epsilon(q, hi, steps, delta) > eps_target)
        throw CalibrationError("calibrate_sigma: sigma bound [1e-2, 1e3] exhausted");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double eps = accounted_epsilon(q, mid, steps, delta);
        if (eps <= eps_target) {
            hi = mid;
            if (eps >= 0.99 * eps_target) break;  // within 1% relative slack of the target
        } else {
            lo = mid;
        }
    }
    return hi;
}

std::string audit_to_jsonl(const std::vector<AuditEntry>& entries, const std::vector<std::string>& notes) {
    std::ostringstream out;
    for (const auto& e : entries) {
        nlohmann::ordered_json line;
        line["step"] = e.step;
        line["q"] = e.q;
        line["sigma"] = e.sigma;
        line["realized_epsilon"] = std::isfinite(e.realized_epsilon) ? nlohmann::ordered_json(e.realized_epsilon)
                                                                     : nlohmann::ordered_json(nullptr);
        line["delta"] = e.delta;
        out << line.dump() << "\n";
    }
    for (const auto& n : notes) {
        nlohmann::ordered_json line;
        line["note"] = n;
        out << line.dump() << "\n";
    }
    return out.str();
}

DpTrainResult train_dp(const nn::MlpConfig& config, const DpBudget& budget, const data::Dataset& train,
                       const data::Dataset& valid, const DpTrainOptions& opts) {
    if (train.size() == 0) throw SizeError("train_dp: empty training set");
    if (train.dim() != config.input_dim) throw ShapeError("train_dp: dataset dim != config input_dim");

    DpTrainResult result;
    result.resolved = budget;
    DpBudget& b = result.resolved;
    const int n = static_cast<int>(train.size());

    if (b.sample_rate <= 0.0) b.sample_rate = std::min(1.0, static_cast<double>(config.batch_size) / n);
    if (b.sample_rate > 1.0) throw NumericError("train_dp: sample rate above 1");
    const int steps_per_epoch = std::max(1, (n + config.batch_size - 1) / config.batch_size);
    if (b.steps <= 0) b.steps = config.epochs * steps_per_epoch;
    if (b.delta >= 1.0 / n)
        result.warnings.push_back("delta " + std::to_string(b.delta) + " is not below 1/N = " +
                                  std::to_string(1.0 / n));

    if (opts.accounting_enabled) {
        if (b.noise_multiplier <= 0.0) {
            if (b.epsilon <= 0.0) throw CalibrationError("train_dp: neither sigma nor target epsilon given");
            b.noise_multiplier = calibrate_sigma(b.epsilon, b.delta, b.sample_rate, b.steps);
        }
    } else if (b.noise_multiplier < 0.0) {
        throw NumericError("train_dp: negative sigma");
    }

    nn::MlpModel model(config);
    Rng dp_rng(derive_seed(config.seed, "dp"));
    const double eps_cap = b.epsilon > 0.0 ? 1.01 * b.epsilon : kInf;

    int step = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        if (opts.accounting_enabled && b.epsilon > 0.0) {
            const double projected = accounted_epsilon(b.sample_rate, b.noise_multiplier, step + steps_per_epoch, b.delta);
            if (projected > eps_cap) {
                result.budget_exhausted = true;
                break;
            }
        }
        model.set_train_mode(true);
        double loss_sum = 0.0;
        long loss_count = 0;
        for (int s = 0; s < steps_per_epoch; ++s) {
            std::vector<int> batch_idx;
            for (int i = 0; i < n; ++i)
                if (dp_rng.uniform() < b.sample_rate) batch_idx.push_back(i);
            ++step;  // empty draws still count against the accountant
            if (batch_idx.empty()) continue;

            Eigen::MatrixXd batch(batch_idx.size(), config.input_dim);
            std::vector<int> labels(batch_idx.size());
            for (std::size_t i = 0; i < batch_idx.size(); ++i) {
                batch.row(i) = train.rows.row(batch_idx[i]);
                labels[i] = train.labels[batch_idx[i]];
            }
            auto per_ex = nn::per_example_grads(model, batch, labels);
            auto clipped = clip_grads(std::move(per_ex), b.clip_norm);
            if (opts.check_clip || opts.step_observer) {
                std::vector<double> norms(clipped.size());
                for (std::size_t i = 0; i < clipped.size(); ++i) {
                    norms[i] = nn::global_l2_norm(clipped[i]);
                    if (opts.check_clip && norms[i] > b.clip_norm + 1e-9)
                        throw NumericError("train_dp: post-clip norm exceeds C at step " + std::to_string(step));
                }
                if (opts.step_observer) opts.step_observer(step, norms);
            }
            nn::Grads noisy = noisy_aggregate(clipped, b.clip_norm, b.noise_multiplier, dp_rng);
            nn::adam_step(model, noisy, step);

            // Track the post-update batch loss for the history curve.
            Eigen::MatrixXd probs = nn::forward_batch(model, batch);
            for (std::size_t i = 0; i < labels.size(); ++i)
                loss_sum += -std::log(std::max(probs(static_cast<Eigen::Index>(i), labels[i]), 1e-300));
            loss_count += static_cast<long>(labels.size());
        }
        model.set_train_mode(false);

        const double realized =
            opts.accounting_enabled ? accounted_epsilon(b.sample_rate, b.noise_multiplier, std::max(step, 1), b.delta)
                                    : kInf;
        result.audit.push_back({step, b.sample_rate, b.noise_multiplier, realized, b.delta});

        nn::EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
        stats.train_accuracy = nn::evaluate(model, train).accuracy;
        stats.valid_accuracy = valid.size() > 0 ? nn::evaluate(model, valid).accuracy : 0.0;
        result.history.push_back(stats);
    }

    result.steps_executed = step;
    result.realized_epsilon =
        opts.accounting_enabled
            ? (step > 0 ? accounted_epsilon(b.sample_rate, b.noise_multiplier, step, b.delta) : 0.0)
            : kInf;
    result.model = std::move(model);
    return result;
}

}  // namespace cfmia::dp
