#include "cfmia/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace cfmia::data {
namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

bool is_missing_token(const std::string& tok) {
    if (tok.empty()) return true;
    std::string lower;
    for (char c : tok) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return lower == "nan";
}

bool parse_double(const std::string& tok, double& out) {
    const char* begin = tok.data();
    const char* end = begin + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

bool numeric_label_order(const std::vector<std::string>& tokens) {
    double v;
    for (const auto& t : tokens)
        if (!parse_double(t, v)) return false;
    return true;
}

}  // namespace

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.schema = schema;
    out.num_classes = num_classes;
    out.label_names = label_names;
    out.rows.resize(static_cast<Eigen::Index>(idx.size()), rows.cols());
    out.labels.reserve(idx.size());
    out.row_ids.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.rows.row(static_cast<Eigen::Index>(k)) = rows.row(idx[k]);
        out.labels.push_back(labels[static_cast<std::size_t>(idx[k])]);
        out.row_ids.push_back(row_ids[static_cast<std::size_t>(idx[k])]);
    }
    return out;
}

Dataset Dataset::subset_by_ids(const std::vector<RowId>& ids) const {
    std::unordered_map<RowId, Eigen::Index> pos;
    pos.reserve(row_ids.size());
    for (std::size_t i = 0; i < row_ids.size(); ++i) pos[row_ids[i]] = static_cast<Eigen::Index>(i);
    std::vector<Eigen::Index> idx;
    idx.reserve(ids.size());
    for (RowId id : ids) {
        auto it = pos.find(id);
        if (it == pos.end()) throw SizeError("subset_by_ids: unknown row_id " + std::to_string(id));
        idx.push_back(it->second);
    }
    return subset(idx);
}

Dataset parse_csv(const std::string& text, const std::string& label_column,
                  const std::optional<std::vector<FeatureMeta>>& schema_hint,
                  const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(origin + ": empty file, header row required");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_line(line);

    int label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_col = static_cast<int>(i);
    if (label_col < 0) throw SchemaError(origin + ": label column '" + label_column + "' not found");

    const std::size_t d = header.size() - 1;
    std::vector<std::string> feature_names;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (static_cast<int>(i) != label_col) feature_names.push_back(header[i]);
    {
        std::set<std::string> uniq(feature_names.begin(), feature_names.end());
        if (uniq.size() != feature_names.size()) throw SchemaError(origin + ": duplicate feature names in header");
    }

    // Hinted schema, if present, is closed: kinds fixed, categories fixed.
    std::vector<FeatureMeta> schema;
    bool closed = false;
    if (schema_hint) {
        if (schema_hint->size() != d)
            throw SchemaError(origin + ": schema hint has " + std::to_string(schema_hint->size()) +
                              " features, file has " + std::to_string(d));
        schema = *schema_hint;
        closed = true;
    } else {
        schema.resize(d);
        for (std::size_t i = 0; i < d; ++i) schema[i].name = feature_names[i];
    }

    std::vector<std::vector<std::string>> cells;  // feature tokens per row
    std::vector<std::string> label_tokens;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> toks = split_line(line);
        if (toks.size() != header.size())
            throw ParseError(origin + ": line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, got " + std::to_string(toks.size()));
        label_tokens.push_back(toks[static_cast<std::size_t>(label_col)]);
        toks.erase(toks.begin() + label_col);
        cells.push_back(std::move(toks));
    }
    if (cells.empty()) throw ParseError(origin + ": no data rows");

    // Infer kinds when no hint from each column's first non-missing token;
    // later rows must conform (a stray word in a numeric column is a parse
    // error, not a silent kind flip).
    if (!closed) {
        for (std::size_t j = 0; j < d; ++j) {
            bool decided = false;
            double v;
            for (const auto& row : cells) {
                const std::string& tok = row[j];
                if (is_missing_token(tok)) continue;
                schema[j].kind = parse_double(tok, v) ? FeatureKind::Numeric : FeatureKind::Categorical;
                decided = true;
                break;
            }
            if (!decided) schema[j].kind = FeatureKind::Numeric;  // all-missing column; rows drop later
        }
    }

    Dataset ds;
    ds.rows.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(d));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const std::string& tok = cells[i][j];
            const int file_line = static_cast<int>(i) + 2;
            if (is_missing_token(tok)) {
                ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = nan;
                continue;
            }
            if (schema[j].kind == FeatureKind::Numeric) {
                double v;
                if (!parse_double(tok, v))
                    throw ParseError(origin + ": line " + std::to_string(file_line) + ": non-numeric value '" +
                                     tok + "' in numeric column '" + schema[j].name + "'");
                ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            } else {
                auto& cats = schema[j].categories;
                auto it = std::find(cats.begin(), cats.end(), tok);
                if (it == cats.end()) {
                    if (closed)
                        throw SchemaError(origin + ": line " + std::to_string(file_line) + ": unknown category '" +
                                          tok + "' for feature '" + schema[j].name + "'");
                    cats.push_back(tok);
                    it = cats.end() - 1;
                }
                ds.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    static_cast<double>(it - cats.begin());
            }
        }
    }

    // Label ids: distinct tokens, numeric order when all parse, else lexicographic.
    {
        std::vector<std::string> distinct;
        for (const auto& t : label_tokens)
            if (std::find(distinct.begin(), distinct.end(), t) == distinct.end()) distinct.push_back(t);
        if (distinct.size() < 2) throw SchemaError(origin + ": need at least 2 distinct labels");
        if (numeric_label_order(distinct)) {
            std::sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) {
                double x, y;
                parse_double(a, x);
                parse_double(b, y);
                return x < y;
            });
        } else {
            std::sort(distinct.begin(), distinct.end());
        }
        std::unordered_map<std::string, int> to_id;
        for (std::size_t i = 0; i < distinct.size(); ++i) to_id[distinct[i]] = static_cast<int>(i);
        ds.labels.reserve(label_tokens.size());
        for (const auto& t : label_tokens) ds.labels.push_back(to_id.at(t));
        ds.num_classes = static_cast<int>(distinct.size());
        ds.label_names = distinct;
    }

    // Observed ranges for numeric features (ignoring missing).
    for (std::size_t j = 0; j < d; ++j) {
        if (schema[j].kind != FeatureKind::Numeric) continue;
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (Eigen::Index i = 0; i < ds.rows.rows(); ++i) {
            const double v = ds.rows(i, static_cast<Eigen::Index>(j));
            if (std::isnan(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (std::isfinite(lo)) {
            schema[j].observed_min = lo;
            schema[j].observed_max = hi;
        }
    }

    ds.schema = std::move(schema);
    ds.row_ids.resize(static_cast<std::size_t>(ds.rows.rows()));
    for (std::size_t i = 0; i < ds.row_ids.size(); ++i) ds.row_ids[i] = static_cast<RowId>(i);
    return ds;
}

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::optional<std::vector<FeatureMeta>>& schema_hint) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open file: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_csv(buf.str(), label_column, schema_hint, path);
}

std::pair<Dataset, ScalerState> preprocess(const Dataset& raw, double outlier_z) {
    if (raw.size() == 0) throw SizeError("preprocess: empty dataset");
    const Eigen::Index n = raw.size(), d = raw.dim();

    // 1. Drop rows with any missing cell.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
        bool ok = true;
        for (Eigen::Index j = 0; j < d; ++j)
            if (std::isnan(raw.rows(i, j))) {
                ok = false;
                break;
            }
        if (ok) keep.push_back(i);
    }
    if (keep.empty()) throw SizeError("preprocess: all rows dropped (missing values)");
    Dataset clean = raw.subset(keep);

    // 2. Outlier removal: per-feature z-score on the post-missing-drop set.
    std::vector<double> mu(static_cast<std::size_t>(d), 0.0), sd(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index j = 0; j < d; ++j) {
        if (clean.schema[static_cast<std::size_t>(j)].kind != FeatureKind::Numeric) continue;
        mu[static_cast<std::size_t>(j)] = clean.rows.col(j).mean();
        const double var =
            (clean.rows.col(j).array() - mu[static_cast<std::size_t>(j)]).square().mean();
        sd[static_cast<std::size_t>(j)] = std::sqrt(var);
    }
    std::vector<Eigen::Index> inliers;
    for (Eigen::Index i = 0; i < clean.size(); ++i) {
        bool ok = true;
        for (Eigen::Index j = 0; j < d && ok; ++j) {
            const auto ju = static_cast<std::size_t>(j);
            if (clean.schema[ju].kind != FeatureKind::Numeric || sd[ju] == 0.0) continue;
            const double z = (clean.rows(i, j) - mu[ju]) / sd[ju];
            if (std::abs(z) > outlier_z) ok = false;
        }
        if (ok) inliers.push_back(i);
    }
    if (inliers.empty()) throw SizeError("preprocess: all rows dropped (outlier filter)");
    Dataset filtered = clean.subset(inliers);

    // 3. Fit the scaler on the filtered rows; drop zero-variance features.
    ScalerState scaler;
    std::vector<Eigen::Index> kept_cols;
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (filtered.schema[ju].kind != FeatureKind::Numeric) {
            kept_cols.push_back(j);
            continue;
        }
        const double m = filtered.rows.col(j).mean();
        const double var = (filtered.rows.col(j).array() - m).square().mean();
        const double s = std::sqrt(var);
        if (s <= 0.0) {
            scaler.dropped_features.push_back(filtered.schema[ju].name);
            scaler.warnings.push_back("dropped zero-variance feature '" + filtered.schema[ju].name + "'");
            continue;
        }
        kept_cols.push_back(j);
        scaler.feature_names.push_back(filtered.schema[ju].name);
        scaler.mean.push_back(m);
        scaler.stddev.push_back(s);
    }

    Dataset out;
    out.num_classes = filtered.num_classes;
    out.label_names = filtered.label_names;
    out.labels = filtered.labels;
    out.row_ids = filtered.row_ids;
    out.rows.resize(filtered.size(), static_cast<Eigen::Index>(kept_cols.size()));
    std::size_t scaled_idx = 0;
    for (std::size_t jc = 0; jc < kept_cols.size(); ++jc) {
        const Eigen::Index j = kept_cols[jc];
        const auto ju = static_cast<std::size_t>(j);
        FeatureMeta meta = filtered.schema[ju];
        if (meta.kind == FeatureKind::Numeric) {
            const double m = scaler.mean[scaled_idx];
            const double s = scaler.stddev[scaled_idx];
            out.rows.col(static_cast<Eigen::Index>(jc)) = (filtered.rows.col(j).array() - m) / s;
            ++scaled_idx;
            meta.observed_min = out.rows.col(static_cast<Eigen::Index>(jc)).minCoeff();
            meta.observed_max = out.rows.col(static_cast<Eigen::Index>(jc)).maxCoeff();
        } else {
            out.rows.col(static_cast<Eigen::Index>(jc)) = filtered.rows.col(j);
        }
        out.schema.push_back(std::move(meta));
    }
    return {std::move(out), std::move(scaler)};
}

Eigen::MatrixXd inverse_transform(const ScalerState& scaler, const Dataset& scaled) {
    Eigen::MatrixXd out = scaled.rows;
    std::size_t k = 0;
    for (std::size_t j = 0; j < scaled.schema.size(); ++j) {
        if (scaled.schema[j].kind != FeatureKind::Numeric) continue;
        if (k >= scaler.feature_names.size() || scaler.feature_names[k] != scaled.schema[j].name)
            throw SchemaError("inverse_transform: scaler does not match dataset schema");
        out.col(static_cast<Eigen::Index>(j)) =
            scaled.rows.col(static_cast<Eigen::Index>(j)).array() * scaler.stddev[k] + scaler.mean[k];
        ++k;
    }
    return out;
}

DataSplits split_45_45_10(const Dataset& dataset, std::uint64_t seed) {
    const Eigen::Index n = dataset.size();
    if (n < 10) throw SizeError("split_45_45_10: need at least 10 rows, got " + std::to_string(n));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, "split_45_45_10"));
    rng.shuffle(order);

    const auto n_train = static_cast<std::size_t>(std::floor(0.45 * static_cast<double>(n)));
    const auto n_shadow = n_train;
    std::vector<Eigen::Index> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Eigen::Index> b(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                                order.begin() + static_cast<std::ptrdiff_t>(n_train + n_shadow));
    std::vector<Eigen::Index> c(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_shadow), order.end());
    return DataSplits{dataset.subset(a), dataset.subset(b), dataset.subset(c)};
}

std::string ScalerState::to_json() const {
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < feature_names.size(); ++i)
        j[feature_names[i]] = {{"mean", mean[i]}, {"std", stddev[i]}};
    nlohmann::ordered_json root;
    root["features"] = j;
    root["dropped_features"] = dropped_features;
    return root.dump(2);
}

ScalerState ScalerState::from_json(const std::string& text) {
    const auto root = nlohmann::ordered_json::parse(text);
    ScalerState s;
    for (const auto& [name, entry] : root.at("features").items()) {
        s.feature_names.push_back(name);
        s.mean.push_back(entry.at("mean").get<double>());
        s.stddev.push_back(entry.at("std").get<double>());
    }
    if (root.contains("dropped_features"))
        s.dropped_features = root.at("dropped_features").get<std::vector<std::string>>();
    return s;
}

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream out;
    out.precision(17);
    out << "row_id";
    for (const auto& m : ds.schema) out << ',' << m.name;
    out << ",label\n";
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        out << ds.row_ids[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < ds.dim(); ++j) {
            const auto& meta = ds.schema[static_cast<std::size_t>(j)];
            out << ',';
            if (meta.kind == FeatureKind::Categorical)
                out << meta.categories[static_cast<std::size_t>(ds.rows(i, j))];
            else
                out << ds.rows(i, j);
        }
        out << ',' << ds.label_names[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])] << '\n';
    }
    return out.str();
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write file: " + path);
    f << dataset_to_csv(ds);
}

Dataset read_dataset_csv(const std::string& path, const std::string& label_column) {
    Dataset with_id = load_csv(path, label_column);
    // Column 0 is row_id; peel it off and restore the ids.
    if (with_id.schema.empty() || with_id.schema[0].name != "row_id")
        throw SchemaError(path + ": expected leading row_id column");
    Dataset ds;
    ds.num_classes = with_id.num_classes;
    ds.label_names = with_id.label_names;
    ds.labels = with_id.labels;
    ds.schema.assign(with_id.schema.begin() + 1, with_id.schema.end());
    ds.rows = with_id.rows.rightCols(with_id.dim() - 1);
    ds.row_ids.resize(static_cast<std::size_t>(with_id.size()));
    for (Eigen::Index i = 0; i < with_id.size(); ++i)
        ds.row_ids[static_cast<std::size_t>(i)] = static_cast<RowId>(with_id.rows(i, 0));
    return ds;
}

Eigen::VectorXd scale_vector(const ScalerState& scaler, const Eigen::VectorXd& raw) {
    if (raw.size() != static_cast<Eigen::Index>(scaler.feature_names.size()))
        throw ShapeError("scale_vector: expected " + std::to_string(scaler.feature_names.size()) + " features");
    Eigen::VectorXd out(raw.size());
    for (Eigen::Index j = 0; j < raw.size(); ++j) {
        const double sd = scaler.stddev[static_cast<std::size_t>(j)];
        out[j] = sd > 0.0 ? (raw[j] - scaler.mean[static_cast<std::size_t>(j)]) / sd : 0.0;
    }
    return out;
}

}  // namespace cfmia::data
