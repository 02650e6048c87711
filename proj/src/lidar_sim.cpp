#include "pda/lidar_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>

#include "pda/error.hpp"
#include "pda/ops.hpp"

namespace pda {

namespace {

std::vector<std::size_t> nominal_nodes(std::size_t extent, int stride) {
    std::vector<std::size_t> nodes;
    for (auto n = static_cast<std::size_t>(stride / 2); n < extent; n += static_cast<std::size_t>(stride)) {
        nodes.push_back(n);
    }
    if (nodes.empty()) nodes.push_back((extent - 1) / 2);
    return nodes;
}

struct Neighbor {
    double d2;
    std::size_t index;
    bool operator<(const Neighbor& o) const { return d2 < o.d2 || (d2 == o.d2 && index < o.index); }
};

// k nearest points (by squared pixel distance, ties by list order) to (r, c).
void nearest_k(const std::vector<std::pair<std::size_t, std::size_t>>& points, std::size_t r, std::size_t c,
               std::size_t k, std::vector<Neighbor>& out) {
    out.clear();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double dr = static_cast<double>(points[i].first) - static_cast<double>(r);
        const double dc = static_cast<double>(points[i].second) - static_cast<double>(c);
        Neighbor n{dr * dr + dc * dc, i};
        if (out.size() < k) {
            out.insert(std::upper_bound(out.begin(), out.end(), n), n);
        } else if (n < out.back()) {
            out.pop_back();
            out.insert(std::upper_bound(out.begin(), out.end(), n), n);
        }
    }
}

}  // namespace

AnchorGrid AnchorGrid::build(std::size_t height, std::size_t width, int stride, double jitter, std::uint64_t seed) {
    if (height == 0 || width == 0) throw ParameterError("AnchorGrid: empty raster");
    if (stride < 1) throw ParameterError("AnchorGrid: stride must be positive");
    if (jitter < 0.0) throw ParameterError("AnchorGrid: jitter must be non-negative");
    AnchorGrid grid;
    grid.stride = stride;
    grid.jitter = jitter;
    grid.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(-jitter, jitter);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    const auto rows = nominal_nodes(height, stride);
    const auto cols = nominal_nodes(width, stride);
    auto place = [&](std::size_t node, std::size_t extent) {
        const double shifted = static_cast<double>(node) + (jitter > 0.0 ? offset(rng) : 0.0);
        const long rounded = std::lround(shifted);
        return static_cast<std::size_t>(std::clamp<long>(rounded, 0, static_cast<long>(extent) - 1));
    };
    for (std::size_t r : rows) {
        for (std::size_t c : cols) {
            const std::size_t rr = place(r, height);
            const std::size_t cc = place(c, width);
            if (seen.insert({rr, cc}).second) grid.anchors.emplace_back(rr, cc);
        }
    }
    return grid;
}

PromptDepth naive_downsample(const DepthMap& gt, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0 || height > gt.height || width > gt.width) {
        throw ParameterError("naive_downsample: target must be non-empty and no larger than the input");
    }
    return PromptDepth{resize_bilinear(gt, height, width)};
}

LidarSimResult simulate_lidar_detailed(const DepthMap& gt, const Image& rgb, std::uint64_t seed,
                                       const LidarSimOptions& options) {
    if (gt.height != rgb.height || gt.width != rgb.width) {
        throw InputError("simulate_lidar: rgb is not registered with the depth map");
    }
    if (options.k == 0) throw ParameterError("simulate_lidar: k must be positive");
    if (!(options.sigma > 0.0)) throw ParameterError("simulate_lidar: sigma must be positive");
    const std::size_t ph = options.prompt_height ? options.prompt_height : std::max<std::size_t>(1, gt.height / 2);
    const std::size_t pw = options.prompt_width ? options.prompt_width : std::max<std::size_t>(1, gt.width / 2);
    const double jitter = options.jitter > 0.0 ? options.jitter : options.stride / 3.0;

    const DepthMap low = naive_downsample(gt, ph, pw).depth;
    const Tensor colour = ops::bilinear_resize(rgb.to_tensor(), ph, pw);
    const auto cd = colour.data();
    const std::size_t plane = ph * pw;
    auto rgb_at = [&](std::size_t idx) { return std::array<double, 3>{cd[idx], cd[plane + idx], cd[2 * plane + idx]}; };

    LidarSimResult result;
    result.grid = AnchorGrid::build(ph, pw, options.stride, jitter, seed);
    const auto& anchors = result.grid.anchors;
    if (anchors.size() < options.k) {
        throw ParameterError("simulate_lidar: " + std::to_string(anchors.size()) + " anchors, fewer than k = " +
                             std::to_string(options.k));
    }
    std::vector<std::uint8_t> is_anchor(plane, 0);
    for (const auto& [r, c] : anchors) is_anchor[r * pw + c] = 1;

    const double inv_two_sigma2 = 1.0 / (2.0 * options.sigma * options.sigma);
    DepthMap out(ph, pw);
    std::vector<Neighbor> nearest;
    for (std::size_t r = 0; r < ph; ++r) {
        for (std::size_t c = 0; c < pw; ++c) {
            const std::size_t idx = r * pw + c;
            if (is_anchor[idx]) {
                out.depth[idx] = low.depth[idx];
                continue;
            }
            nearest_k(anchors, r, c, options.k, nearest);
            const auto q = rgb_at(idx);
            double num = 0.0;
            double den = 0.0;
            double num_spatial = 0.0;
            double den_spatial = 0.0;
            for (const auto& n : nearest) {
                const auto [ar, ac] = anchors[n.index];
                const std::size_t aidx = ar * pw + ac;
                const auto a = rgb_at(aidx);
                double colour_d2 = 0.0;
                for (std::size_t k = 0; k < 3; ++k) colour_d2 += (q[k] - a[k]) * (q[k] - a[k]);
                const double inv_dist = 1.0 / std::sqrt(n.d2);
                const double w = std::exp(-colour_d2 * inv_two_sigma2) * inv_dist;
                num += w * low.depth[aidx];
                den += w;
                num_spatial += inv_dist * low.depth[aidx];
                den_spatial += inv_dist;
            }
            // All affinities can underflow when colours differ wildly.
            out.depth[idx] = den > 0.0 ? num / den : num_spatial / den_spatial;
        }
    }
    result.prompt.depth = std::move(out);
    return result;
}

PromptDepth simulate_lidar(const DepthMap& gt, const Image& rgb, std::uint64_t seed, const LidarSimOptions& options) {
    return simulate_lidar_detailed(gt, rgb, seed, options).prompt;
}

DepthMap knn_complete_sparse(const DepthMap& sparse, std::size_t k) {
    if (k == 0) throw ParameterError("knn_complete_sparse: k must be positive");
    std::vector<std::pair<std::size_t, std::size_t>> valid;
    for (std::size_t r = 0; r < sparse.height; ++r) {
        for (std::size_t c = 0; c < sparse.width; ++c) {
            if (sparse.is_valid(r, c)) valid.emplace_back(r, c);
        }
    }
    if (valid.empty()) throw InputError("knn_complete_sparse: empty mask");
    k = std::min(k, valid.size());
    DepthMap out = sparse;
    std::vector<Neighbor> nearest;
    for (std::size_t r = 0; r < sparse.height; ++r) {
        for (std::size_t c = 0; c < sparse.width; ++c) {
            if (sparse.is_valid(r, c)) continue;
            nearest_k(valid, r, c, k, nearest);
            double num = 0.0;
            double den = 0.0;
            for (const auto& n : nearest) {
                const double w = 1.0 / std::sqrt(n.d2);
                const auto [vr, vc] = valid[n.index];
                num += w * sparse.at(vr, vc);
                den += w;
            }
            out.at(r, c) = num / den;
            out.valid[out.index(r, c)] = 1;
        }
    }
    return out;
}

}  // namespace pda
