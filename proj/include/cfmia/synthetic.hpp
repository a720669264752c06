#pragma once

#include <cstdint>

#include "cfmia/data.hpp"

namespace cfmia::data {

// Two well-separated 2-D Gaussian blobs; the classic attack sanity-check set.
Dataset make_blobs(int rows, double separation, std::uint64_t seed);

// Two-class Gaussian mixture used when no real dataset file is supplied.
//
// Rows live on a low-dimensional latent manifold: each row's latent position z
// is drawn from the class mixture, then mapped to feature space as A·z plus a
// small jitter, so all features are correlated views of the latent structure
// (the way real tabular features are). Class 0 is a broad bulk mixture near
// the origin, class 1 a few dense blobs on the latent axes outside the bulk.
// A `contamination` fraction of rows is drawn from the bulk but labeled 1:
// those points sit deep in class-0 territory and can only be fit by
// memorization, which is the behavior the privacy experiments probe.
struct MixtureSpec {
    int rows = 5000;
    int features = 14;
    int latent_dims = 3;
    int bulk_components = 2;        // class-0 mixture
    double bulk_std = 1.0;
    int blob_count = 3;             // class-1 mixture
    int blob_dims = 3;              // latent dims a blob extends over; flat elsewhere
    double blob_std = 0.30;
    double blob_flat_std = 0.05;
    double blob_trunc = 1.8;        // radial truncation of blob draws, in blob_std units
    double blob_fraction = 0.25;    // P(label = 1) before contamination
    double blob_radius = 4.0;       // blob centers sit on latent axes at this radius
    double moat_radius = 1.5;       // bulk draws are rejected this close to a blob center
    double mean_scale = 2.0;        // bulk centers drawn from N(0, mean_scale^2)
    double contamination = 0.09;    // fraction of rows relabeled bulk -> class 1
    double jitter = 0.1;            // per-feature off-manifold noise
    double needle_jitter = 0.5;     // extra per-feature noise on contaminated rows
    std::uint64_t seed = 20240;
};

Dataset make_mixture(const MixtureSpec& spec);

// The bundled surrogate: make_mixture with the defaults above.
Dataset make_surrogate();

}  // namespace cfmia::data
