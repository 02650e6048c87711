#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "pda/depth_map.hpp"

namespace pda {

struct ScaleShift {
    double scale = 1.0;
    double shift = 0.0;
    std::size_t inlier_count = 0;

    DepthMap apply(const DepthMap& map) const;
};

struct RansacOptions {
    std::size_t n_groups = 64;
    std::size_t group_size = 5;
    std::uint64_t seed = 0;
};

// Pixels of pred and ref that are valid in both maps (pred is resized to the
// ref raster first when sizes differ).
struct AlignmentSamples {
    std::vector<double> pred;
    std::vector<double> ref;
};
AlignmentSamples alignment_samples(const DepthMap& pred, const DepthMap& ref);

// Least-squares scale/shift over every valid pixel.
ScaleShift polyfit_align(const DepthMap& pred, const DepthMap& ref);

// Groups of random pixels each yield a least-squares (scale, shift); every fit
// is scored by how many pixels it explains within the inlier threshold, the
// median absolute deviation of the all-pixel least-squares residuals. The
// winner is refit on its inliers.
ScaleShift ransac_scale_shift(const DepthMap& pred, const DepthMap& ref, const RansacOptions& options = {});

struct DepthMetrics {
    double l1 = 0.0;
    double rmse = 0.0;
    double absrel = 0.0;
    double delta05 = 0.0;
};

inline const double kDelta05Threshold = std::pow(1.25, 0.5);

// Metrics over pixels valid in both maps; gt must be positive there.
DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt);

}  // namespace pda
