#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "pda/error.hpp"
#include "pda/lidar_sim.hpp"
#include "pda/ops.hpp"

using namespace pda;

namespace {

DepthMap ramp_depth(std::size_t h, std::size_t w) {
    DepthMap d(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) d.at(r, c) = 1.0 + 0.05 * static_cast<double>(c) + 0.02 * static_cast<double>(r);
    }
    return d;
}

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, 255);
    Image img(h, w);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(u(rng));
    return img;
}

// k nearest anchors by full sort, ties by list position.
std::vector<std::size_t> brute_nearest(const std::vector<std::pair<std::size_t, std::size_t>>& pts, std::size_t r,
                                       std::size_t c, std::size_t k) {
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    auto d2 = [&](std::size_t i) {
        const double dr = double(pts[i].first) - double(r), dc = double(pts[i].second) - double(c);
        return dr * dr + dc * dc;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d2(a) < d2(b); });
    order.resize(k);
    return order;
}

}  // namespace

TEST_CASE("anchor grid layout") {
    const auto g = AnchorGrid::build(32, 48, 7, 7.0 / 3.0, 5);
    CHECK(!g.anchors.empty());
    std::set<std::pair<std::size_t, std::size_t>> unique(g.anchors.begin(), g.anchors.end());
    CHECK(unique.size() == g.anchors.size());
    for (const auto& [r, c] : g.anchors) {
        CHECK(r < 32);
        CHECK(c < 48);
    }
    CHECK(g.anchors.size() <= 5 * 7);

    const auto same = AnchorGrid::build(32, 48, 7, 7.0 / 3.0, 5);
    CHECK(same.anchors == g.anchors);
    const auto other = AnchorGrid::build(32, 48, 7, 7.0 / 3.0, 6);
    CHECK(other.anchors != g.anchors);

    const auto fixed = AnchorGrid::build(32, 48, 7, 0.0, 1);
    REQUIRE(fixed.anchors.size() == 5 * 7);
    CHECK(fixed.anchors[0] == std::pair<std::size_t, std::size_t>{3, 3});
    CHECK(fixed.anchors[8] == std::pair<std::size_t, std::size_t>{10, 10});

    CHECK_THROWS_AS(AnchorGrid::build(0, 4, 7, 1.0, 0), ParameterError);
    CHECK_THROWS_AS(AnchorGrid::build(4, 4, 0, 1.0, 0), ParameterError);
}

TEST_CASE("anchors reproduce the downsampled ground truth exactly") {
    const DepthMap gt = ramp_depth(64, 96);
    const Image rgb = random_image(64, 96, 3);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto res = simulate_lidar_detailed(gt, rgb, seed);
        const DepthMap low = naive_downsample(gt, 32, 48).depth;
        CHECK(res.prompt.depth.height == 32);
        CHECK(res.prompt.depth.width == 48);
        for (const auto& [r, c] : res.grid.anchors) CHECK(res.prompt.depth.at(r, c) == low.at(r, c));
        CHECK(res.prompt.depth.valid_count() == res.prompt.depth.size());
    }
}

TEST_CASE("interpolated pixels are the affinity-weighted mean of their nearest anchors") {
    const DepthMap gt = ramp_depth(64, 96);
    const Image rgb = random_image(64, 96, 4);
    LidarSimOptions opt;
    opt.sigma = 0.3;
    const auto res = simulate_lidar_detailed(gt, rgb, 9, opt);
    const DepthMap low = naive_downsample(gt, 32, 48).depth;
    const Tensor colour = ops::bilinear_resize(rgb.to_tensor(), 32, 48);
    const auto& anchors = res.grid.anchors;
    std::set<std::pair<std::size_t, std::size_t>> anchor_set(anchors.begin(), anchors.end());
    auto col = [&](std::size_t ch, std::size_t r, std::size_t c) { return colour.data()[(ch * 32 + r) * 48 + c]; };
    for (std::size_t r = 0; r < 32; r += 3) {
        for (std::size_t c = 0; c < 48; c += 5) {
            if (anchor_set.contains({r, c})) continue;
            double num = 0.0, den = 0.0;
            for (std::size_t i : brute_nearest(anchors, r, c, opt.k)) {
                const auto [ar, ac] = anchors[i];
                double cd2 = 0.0;
                for (std::size_t ch = 0; ch < 3; ++ch) cd2 += std::pow(col(ch, r, c) - col(ch, ar, ac), 2);
                const double dist = std::hypot(double(ar) - double(r), double(ac) - double(c));
                const double w = std::exp(-cd2 / (2.0 * opt.sigma * opt.sigma)) / dist;
                num += w * low.at(ar, ac);
                den += w;
            }
            CHECK(res.prompt.depth.at(r, c) == doctest::Approx(num / den).epsilon(1e-12));
        }
    }
}

TEST_CASE("uniform colour reduces to inverse-distance completion of the anchors") {
    const DepthMap gt = ramp_depth(64, 96);
    Image rgb(64, 96);
    std::fill(rgb.rgb.begin(), rgb.rgb.end(), std::uint8_t{128});
    const auto res = simulate_lidar_detailed(gt, rgb, 2);
    DepthMap sparse = naive_downsample(gt, 32, 48).depth;
    std::fill(sparse.valid.begin(), sparse.valid.end(), std::uint8_t{0});
    for (const auto& [r, c] : res.grid.anchors) sparse.valid[sparse.index(r, c)] = 1;
    const DepthMap completed = knn_complete_sparse(sparse, 4);
    // Ties for the 4th neighbour are broken by list order, which differs
    // between the two routes, so only untied pixels are compared.
    std::size_t compared = 0;
    for (std::size_t r = 0; r < 32; ++r) {
        for (std::size_t c = 0; c < 48; ++c) {
            const auto order = brute_nearest(res.grid.anchors, r, c, 5);
            auto d2 = [&](std::size_t i) {
                const auto [ar, ac] = res.grid.anchors[order[i]];
                return std::pow(double(ar) - double(r), 2) + std::pow(double(ac) - double(c), 2);
            };
            if (d2(3) == d2(4)) continue;
            ++compared;
            CHECK(res.prompt.depth.at(r, c) == doctest::Approx(completed.at(r, c)).epsilon(1e-12));
        }
    }
    CHECK(compared > 32 * 48 / 2);
}

TEST_CASE("simulated prompt departs from the naive downsample on non-constant scenes") {
    const DepthMap ramp = ramp_depth(64, 96);
    const Image rgb = random_image(64, 96, 5);
    const auto sim = simulate_lidar(ramp, rgb, 1);
    const auto naive = naive_downsample(ramp, 32, 48);
    double mean_diff = 0.0;
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < naive.depth.size(); ++i) {
        mean_diff += std::abs(sim.depth.depth[i] - naive.depth.depth[i]);
        lo = std::min(lo, naive.depth.depth[i]);
        hi = std::max(hi, naive.depth.depth[i]);
    }
    CHECK(mean_diff / naive.depth.size() > 0.0);
    // Convex combinations stay within the range of the anchor depths.
    for (double v : sim.depth.depth) {
        CHECK(v >= lo - 1e-12);
        CHECK(v <= hi + 1e-12);
    }

    const DepthMap flat(64, 96, 2.5);
    const auto sim_flat = simulate_lidar(flat, rgb, 1);
    for (double v : sim_flat.depth.depth) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("simulation errors") {
    const DepthMap gt = ramp_depth(64, 96);
    CHECK_THROWS_AS(simulate_lidar(gt, random_image(32, 96, 1), 0), InputError);
    LidarSimOptions opt;
    opt.k = 0;
    CHECK_THROWS_AS(simulate_lidar(gt, random_image(64, 96, 1), 0, opt), ParameterError);
    opt = {};
    opt.stride = 100;
    CHECK_THROWS_AS(simulate_lidar(gt, random_image(64, 96, 1), 0, opt), ParameterError);
    CHECK_THROWS_AS(naive_downsample(gt, 128, 10), ParameterError);
}

TEST_CASE("knn completion keeps valid pixels") {
    DepthMap sparse(5, 5, 0.0, false);
    sparse.at(0, 0) = 1.0;
    sparse.valid[0] = 1;
    sparse.at(4, 4) = 3.0;
    sparse.valid[24] = 1;
    const DepthMap out = knn_complete_sparse(sparse, 4);
    CHECK(out.at(0, 0) == 1.0);
    CHECK(out.at(4, 4) == 3.0);
    CHECK(out.at(2, 2) == doctest::Approx(2.0));
    CHECK(out.valid_count() == 25);
    CHECK_THROWS_AS(knn_complete_sparse(DepthMap(3, 3, 0.0, false)), InputError);
}
