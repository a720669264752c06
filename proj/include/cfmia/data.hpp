#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "cfmia/common.hpp"

namespace cfmia::data {

enum class FeatureKind { Numeric, Categorical };

struct FeatureMeta {
    std::string name;
    FeatureKind kind = FeatureKind::Numeric;
    double observed_min = 0.0;
    double observed_max = 0.0;
    std::vector<std::string> categories;  // empty for numeric; index order is the stored encoding
};

// Tabular dataset after ingestion. Categorical cells hold the index of the
// category in FeatureMeta::categories. Missing cells are NaN until preprocess
// drops them.
struct Dataset {
    std::vector<FeatureMeta> schema;
    Eigen::MatrixXd rows;           // N x d
    std::vector<int> labels;        // class ids in [0, K)
    std::vector<RowId> row_ids;     // stable unique identifiers
    int num_classes = 0;
    std::vector<std::string> label_names;  // id -> original label token

    Eigen::Index size() const { return rows.rows(); }
    Eigen::Index dim() const { return rows.cols(); }
    Eigen::VectorXd row(Eigen::Index i) const { return rows.row(i).transpose(); }

    // Subset by positional indices, preserving row_ids.
    Dataset subset(const std::vector<Eigen::Index>& idx) const;
    // Subset by row_id values (order of `ids` preserved).
    Dataset subset_by_ids(const std::vector<RowId>& ids) const;
};

struct DataSplits {
    Dataset target_train;  // 45%
    Dataset shadow_pool;   // 45%
    Dataset validation;    // 10%
};

struct ScalerState {
    std::vector<std::string> feature_names;  // scaled numeric features, post-drop order
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::string> dropped_features;  // zero-variance features removed
    std::vector<std::string> warnings;

    std::string to_json() const;
    static ScalerState from_json(const std::string& text);
};

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::optional<std::vector<FeatureMeta>>& schema_hint = std::nullopt);

// Parses CSV text directly (same contract as load_csv); `origin` names the
// source in error messages.
Dataset parse_csv(const std::string& text, const std::string& label_column,
                  const std::optional<std::vector<FeatureMeta>>& schema_hint = std::nullopt,
                  const std::string& origin = "<memory>");

// Drops rows with missing cells, drops rows with any numeric |z| > outlier_z
// (z computed after the missing-drop), standard-scales numeric features, and
// drops zero-variance features. Categorical features pass through.
std::pair<Dataset, ScalerState> preprocess(const Dataset& raw, double outlier_z = 3.0);

// Applies the stored inverse transform (x * std + mean) to scaled data.
Eigen::MatrixXd inverse_transform(const ScalerState& scaler, const Dataset& scaled);

DataSplits split_45_45_10(const Dataset& dataset, std::uint64_t seed);

std::string dataset_to_csv(const Dataset& ds);
void write_dataset_csv(const Dataset& ds, const std::string& path);
// Reads back a split written by write_dataset_csv (row_id column restored).
Dataset read_dataset_csv(const std::string& path, const std::string& label_column = "label");

// Standardizes a raw feature vector with the stored (mean, stddev) pairs.
Eigen::VectorXd scale_vector(const ScalerState& scaler, const Eigen::VectorXd& raw);

}  // namespace cfmia::data
