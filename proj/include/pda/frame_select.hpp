#pragma once

#include <cstddef>
#include <vector>

#include "pda/depth_map.hpp"

namespace pda {

struct FrameScore {
    std::size_t index = 0;
    double sharpness = 0.0;
};

// Variance of the 4-neighbour Laplacian of the grayscale image over interior
// pixels. Throws InputError for images smaller than 3x3.
double laplacian_variance(const Image& image);

inline constexpr std::size_t kSelectWindow = 30;
inline constexpr std::size_t kSelectSpacing = 6;

// Scores must be listed in frame order (index i at position i). Picks are
// returned in increasing order:
//  - each 30-frame window contributes the sharpest frame at least 6 frames
//    after the previous window's pick;
//  - any run of floor(2 * fps) frames without a pick gets a forced pick, the
//    sharpest frame that keeps 6 frames clear of its neighbours.
// fps must be at least 6 so that both spacing rules can hold at once.
std::vector<std::size_t> select_sharp_frames(const std::vector<FrameScore>& scores, double fps);

}  // namespace pda
