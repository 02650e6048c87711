#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pda/depth_map.hpp"
#include "pda/fusion.hpp"

namespace pda {

// Jittered sampling grid on the prompt raster.
struct AnchorGrid {
    int stride = 7;
    double jitter = 7.0 / 3.0;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::size_t, std::size_t>> anchors;  // (row, col)

    // Nominal nodes sit at stride/2 + k*stride along each axis; every node is
    // displaced by an independent uniform offset in [-jitter, +jitter] per axis,
    // rounded and clamped to the raster.
    static AnchorGrid build(std::size_t height, std::size_t width, int stride, double jitter, std::uint64_t seed);
};

struct LidarSimOptions {
    std::size_t prompt_height = 0;  // 0: half of the input height
    std::size_t prompt_width = 0;   // 0: half of the input width
    int stride = 7;
    // 0: stride / 3.
    double jitter = 0.0;
    std::size_t k = 4;
    // Width of the RGB affinity kernel, in [0,1] colour units.
    double sigma = 0.1;
};

// Bilinear downsample of the ground truth (the naive simulator).
PromptDepth naive_downsample(const DepthMap& gt, std::size_t height, std::size_t width);

struct LidarSimResult {
    PromptDepth prompt;
    AnchorGrid grid;
};

// Sparse anchor interpolation: downsample gt and rgb to the prompt raster,
// keep exact depth at the jittered anchors and give every other pixel the
// weighted mean of its k spatially nearest anchors, weight =
// exp(-|rgb_q - rgb_a|^2 / (2 sigma^2)) / distance.
LidarSimResult simulate_lidar_detailed(const DepthMap& gt, const Image& rgb, std::uint64_t seed,
                                       const LidarSimOptions& options = {});
PromptDepth simulate_lidar(const DepthMap& gt, const Image& rgb, std::uint64_t seed,
                           const LidarSimOptions& options = {});

// Fills every invalid pixel with the inverse-distance-weighted mean of its k
// nearest valid pixels (k is clamped to the number of valid pixels).
DepthMap knn_complete_sparse(const DepthMap& sparse, std::size_t k = 4);

}  // namespace pda
