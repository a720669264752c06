#include "cfmia/facade.hpp"

#include <istream>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace cfmia::facade {

using json = nlohmann::ordered_json;

Facade::Facade(cf::BatchPredictFn predict, std::shared_ptr<const cf::NiceExplainer> explainer, ServiceConfig config)
    : predict_(std::move(predict)), explainer_(std::move(explainer)), config_(config) {
    if (config_.query_budget && *config_.query_budget < 1)
        throw ConfigError("facade: query_budget must be >= 1 when set");
    if (config_.cf_enabled && !explainer_) throw ConfigError("facade: cf_enabled without an explainer");
    remaining_.store(config_.query_budget.value_or(std::numeric_limits<long>::max()));
}

Facade Facade::from_model(nn::MlpModel model, const data::Dataset& reference, ServiceConfig config) {
    cf::BatchPredictFn predict = cf::wrap_model(std::move(model));
    std::shared_ptr<const cf::NiceExplainer> explainer;
    if (config.cf_enabled)
        explainer = std::make_shared<cf::NiceExplainer>(predict, reference, config.reward);
    return Facade(std::move(predict), std::move(explainer), config);
}

QueryResponse Facade::query(const Eigen::VectorXd& x) {
    if (config_.query_budget && remaining_.fetch_sub(1) <= 0) throw QuotaError("facade: query budget exhausted");
    QueryResponse response;
    response.posterior = predict_(x.transpose()).row(0).transpose();
    if (config_.cf_enabled) {
        try {
            response.counterfactual = explainer_->explain(x);
        } catch (const NoCounterfactualError&) {
            response.cf_unavailable = true;
        }
    }
    served_.fetch_add(1);
    if (config_.log_queries) {
        std::lock_guard<std::mutex> lock(log_mutex_);
        log_.push_back(x);
    }
    return response;
}

std::vector<Eigen::VectorXd> Facade::query_log() const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    return log_;
}

std::string response_to_json(const QueryResponse& response) {
    json doc;
    json posterior = json::array();
    for (Eigen::Index i = 0; i < response.posterior.size(); ++i) posterior.push_back(response.posterior[i]);
    doc["posterior"] = std::move(posterior);
    if (response.counterfactual) {
        json cf_doc;
        json feats = json::array();
        for (Eigen::Index i = 0; i < response.counterfactual->explanation.size(); ++i)
            feats.push_back(response.counterfactual->explanation[i]);
        cf_doc["features"] = std::move(feats);
        cf_doc["class"] = response.counterfactual->cf_class;
        doc["cf"] = std::move(cf_doc);
    } else {
        doc["cf"] = nullptr;
    }
    doc["cf_unavailable"] = response.cf_unavailable;
    return doc.dump();
}

void serve_lines(Facade& service, std::istream& in, std::ostream& out) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            json request = json::parse(line);
            if (!request.contains("features") || !request["features"].is_array())
                throw ParseError("request must carry a \"features\" array");
            const auto& feats = request["features"];
            Eigen::VectorXd x(feats.size());
            for (std::size_t i = 0; i < feats.size(); ++i) {
                if (!feats[i].is_number()) throw ParseError("non-numeric feature at index " + std::to_string(i));
                x[static_cast<Eigen::Index>(i)] = feats[i].get<double>();
            }
            out << response_to_json(service.query(x)) << "\n";
        } catch (const json::exception& e) {
            out << json{{"error", std::string("bad json: ") + e.what()}}.dump() << "\n";
        } catch (const std::exception& e) {
            out << json{{"error", e.what()}}.dump() << "\n";
        }
        out.flush();
    }
}

}  // namespace cfmia::facade
