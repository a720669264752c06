#pragma once

#include <atomic>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cfmia/common.hpp"
#include "cfmia/counterfactual.hpp"

namespace cfmia::facade {

struct ServiceConfig {
    bool cf_enabled = true;
    std::optional<long> query_budget;  // unset = unlimited
    bool log_queries = false;
    cf::Reward reward = cf::Reward::Proximity;
};

struct QueryResponse {
    Eigen::VectorXd posterior;
    std::optional<cf::Counterfactual> counterfactual;
    bool cf_unavailable = false;  // set when cf_enabled but generation failed
};

// The query boundary: consumers see posteriors and counterfactuals only. The
// model enters as a type-erased predictor, so nothing downstream can reach
// parameters or training identifiers.
class Facade {
public:
    Facade(cf::BatchPredictFn predict, std::shared_ptr<const cf::NiceExplainer> explainer, ServiceConfig config);

    // Counters move as plain values; the log mutex is freshly constructed.
    Facade(Facade&& other) noexcept
        : predict_(std::move(other.predict_)),
          explainer_(std::move(other.explainer_)),
          config_(std::move(other.config_)),
          remaining_(other.remaining_.load()),
          served_(other.served_.load()),
          log_(std::move(other.log_)) {}

    // Standard wiring: CF reference = the serving model's own training set.
    static Facade from_model(nn::MlpModel model, const data::Dataset& reference, ServiceConfig config);

    QueryResponse query(const Eigen::VectorXd& x);

    long queries_served() const { return served_.load(); }
    std::vector<Eigen::VectorXd> query_log() const;

private:
    cf::BatchPredictFn predict_;
    std::shared_ptr<const cf::NiceExplainer> explainer_;
    ServiceConfig config_;
    std::atomic<long> remaining_{0};
    std::atomic<long> served_{0};
    mutable std::mutex log_mutex_;
    std::vector<Eigen::VectorXd> log_;
};

// Newline-delimited JSON loop: {"features":[...]} per request line,
// {"posterior":[...], "cf": {...}|null, "cf_unavailable": bool} per response
// line; malformed input yields {"error": "..."} and the loop continues.
void serve_lines(Facade& service, std::istream& in, std::ostream& out);

std::string response_to_json(const QueryResponse& response);

}  // namespace cfmia::facade
