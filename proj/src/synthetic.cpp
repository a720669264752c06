#include "cfmia/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace cfmia::data {
namespace {

Dataset finish(Eigen::MatrixXd rows, std::vector<int> labels) {
    Dataset ds;
    ds.rows = std::move(rows);
    ds.labels = std::move(labels);
    ds.num_classes = 2;
    ds.label_names = {"0", "1"};
    ds.schema.resize(static_cast<std::size_t>(ds.rows.cols()));
    for (Eigen::Index j = 0; j < ds.rows.cols(); ++j) {
        auto& m = ds.schema[static_cast<std::size_t>(j)];
        m.name = "f" + std::to_string(j);
        m.kind = FeatureKind::Numeric;
        m.observed_min = ds.rows.col(j).minCoeff();
        m.observed_max = ds.rows.col(j).maxCoeff();
    }
    ds.row_ids.resize(static_cast<std::size_t>(ds.rows.rows()));
    for (std::size_t i = 0; i < ds.row_ids.size(); ++i) ds.row_ids[i] = static_cast<RowId>(i);
    return ds;
}

}  // namespace

Dataset make_blobs(int rows, double separation, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "make_blobs"));
    Eigen::MatrixXd x(rows, 2);
    std::vector<int> y(static_cast<std::size_t>(rows));
    const double half = separation / 2.0;
    for (int i = 0; i < rows; ++i) {
        const int c = static_cast<int>(rng.uniform_int(2));
        const double cx = c == 0 ? -half : half;
        x(i, 0) = cx + rng.gaussian();
        x(i, 1) = rng.gaussian();
        y[static_cast<std::size_t>(i)] = c;
    }
    return finish(std::move(x), std::move(y));
}

Dataset make_mixture(const MixtureSpec& spec) {
    Rng rng(derive_seed(spec.seed, "make_mixture"));
    const int d = spec.features;
    const int s = spec.latent_dims;

    Eigen::MatrixXd bulk(spec.bulk_components, s);
    for (Eigen::Index i = 0; i < bulk.rows(); ++i)
        for (Eigen::Index j = 0; j < s; ++j) bulk(i, j) = rng.gaussian(0.0, spec.mean_scale);
    // Blob centers sit on the first blob_dims latent axes at a fixed radius.
    const int bd = std::min(spec.blob_dims, s);
    Eigen::MatrixXd blobs = Eigen::MatrixXd::Zero(spec.blob_count, s);
    for (Eigen::Index i = 0; i < blobs.rows(); ++i) {
        const auto axis = static_cast<Eigen::Index>(i) % bd;
        const double sign = (i / bd) % 2 == 0 ? 1.0 : -1.0;
        blobs(i, axis) = sign * spec.blob_radius;
    }
    // Latent -> feature map; every feature is a correlated unit-scale view of
    // the latent, so standardization treats all features alike.
    Eigen::MatrixXd map(d, s);
    for (Eigen::Index i = 0; i < map.rows(); ++i) {
        for (Eigen::Index j = 0; j < s; ++j) map(i, j) = rng.gaussian();
        map.row(i) /= map.row(i).norm();
    }

    const auto near_blob = [&](const Eigen::VectorXd& z) {
        for (Eigen::Index b = 0; b < blobs.rows(); ++b)
            if ((z - blobs.row(b).transpose()).norm() < spec.moat_radius) return true;
        return false;
    };

    Eigen::MatrixXd x(spec.rows, d);
    std::vector<int> y(static_cast<std::size_t>(spec.rows));
    Eigen::VectorXd z(s);
    for (int i = 0; i < spec.rows; ++i) {
        const bool one = rng.uniform() < spec.blob_fraction;
        const Eigen::MatrixXd& centers = one ? blobs : bulk;
        const auto k = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(centers.rows())));
        // Blobs are dense radially-truncated pancakes spanning the first blob_dims
        // latent axes (no sparse Gaussian tail); bulk draws are rejected inside
        // the moat around each blob, leaving an empty shell that separates the
        // classes without extreme feature values.
        for (int attempt = 0; attempt < 100; ++attempt) {
            for (int j = 0; j < s; ++j) {
                const double sd = !one ? spec.bulk_std : (j < bd ? spec.blob_std : spec.blob_flat_std);
                z(j) = centers(k, j) + rng.gaussian(0.0, sd);
            }
            if (one) {
                double m2 = 0.0;
                for (int j = 0; j < bd; ++j) {
                    const double u = (z(j) - centers(k, j)) / spec.blob_std;
                    m2 += u * u;
                }
                if (m2 <= spec.blob_trunc * spec.blob_trunc) break;
            } else if (!near_blob(z)) {
                break;
            }
        }
        x.row(i) = (map * z).transpose();
        for (int j = 0; j < d; ++j) x(i, j) += rng.gaussian(0.0, spec.jitter);
        y[static_cast<std::size_t>(i)] = one ? 1 : 0;
    }
    // Contamination: a fraction of bulk rows is relabeled to class 1 and given
    // extra isotropic noise. These atypical, off-manifold records sit in class-0
    // territory and can only be fit by memorization.
    const int n_contam = static_cast<int>(std::floor(spec.contamination * spec.rows));
    std::vector<int> order;
    for (int i = 0; i < spec.rows; ++i)
        if (y[static_cast<std::size_t>(i)] == 0) order.push_back(i);
    rng.shuffle(order);
    for (int i = 0; i < n_contam && i < static_cast<int>(order.size()); ++i) {
        const auto r = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
        y[r] = 1;
        for (int j = 0; j < d; ++j)
            x(static_cast<Eigen::Index>(r), j) += rng.gaussian(0.0, spec.needle_jitter);
    }
    return finish(std::move(x), std::move(y));
}

Dataset make_surrogate() { return make_mixture(MixtureSpec{}); }

}  // namespace cfmia::data
