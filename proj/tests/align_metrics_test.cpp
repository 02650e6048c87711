#include <cmath>
#include <random>

#include "doctest.h"
#include "pda/align_metrics.hpp"
#include "pda/error.hpp"
#include "support/oracles.hpp"

using namespace pda;

namespace {

DepthMap random_depth(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = 0.5, double hi = 5.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    DepthMap d(h, w);
    for (auto& v : d.depth) v = u(rng);
    return d;
}

DepthMap affine(const DepthMap& d, double s, double t) {
    DepthMap out = d;
    for (auto& v : out.depth) v = s * v + t;
    return out;
}

}  // namespace

TEST_CASE("clean affine data is recovered exactly") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const DepthMap pred = random_depth(12, 16, rng, 0.0, 1.0);
        const double s = std::uniform_real_distribution<double>(0.5, 4.0)(rng);
        const double t = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        const DepthMap ref = affine(pred, s, t);
        const ScaleShift r = ransac_scale_shift(pred, ref, {64, 5, static_cast<std::uint64_t>(trial)});
        CHECK(std::abs(r.scale - s) < 1e-9);
        CHECK(std::abs(r.shift - t) < 1e-9);
        CHECK(r.inlier_count == pred.size());
        const ScaleShift p = polyfit_align(pred, ref);
        CHECK(std::abs(p.scale - s) < 1e-9);
        CHECK(std::abs(p.shift - t) < 1e-9);
    }
}

TEST_CASE("robust fit ignores gross outliers") {
    std::mt19937_64 rng(32);
    const DepthMap pred = random_depth(20, 20, rng, 0.0, 1.0);
    DepthMap ref = affine(pred, 2.0, 0.5);
    std::normal_distribution<double> noise(0.0, 0.002);
    for (auto& v : ref.depth) v += noise(rng);
    std::bernoulli_distribution outlier(0.3);
    std::uniform_real_distribution<double> junk(5.0, 20.0);
    for (auto& v : ref.depth) {
        if (outlier(rng)) v = junk(rng);
    }
    const ScaleShift r = ransac_scale_shift(pred, ref, {64, 5, 1});
    CHECK(std::abs(r.scale - 2.0) / 2.0 < 0.01);
    const ScaleShift p = polyfit_align(pred, ref);
    CHECK(std::abs(p.scale - 2.0) > std::abs(r.scale - 2.0));
}

TEST_CASE("alignment respects masks and resizes the prediction") {
    DepthMap pred(4, 4, 1.0);
    DepthMap ref(4, 4, 1.0);
    for (std::size_t i = 0; i < 16; ++i) {
        pred.depth[i] = static_cast<double>(i);
        ref.depth[i] = 3.0 * i + 1.0;
    }
    ref.valid[5] = 0;
    ref.depth[5] = 1e6;
    const auto samples = alignment_samples(pred, ref);
    CHECK(samples.pred.size() == 15);
    const ScaleShift p = polyfit_align(pred, ref);
    CHECK(p.scale == doctest::Approx(3.0));
    CHECK(p.shift == doctest::Approx(1.0));

    const auto resized = alignment_samples(DepthMap(2, 2, 1.0), ref);
    CHECK(resized.pred.size() == 15);

    const DepthMap applied = p.apply(pred);
    CHECK(applied.at(1, 0) == doctest::Approx(13.0));
}

TEST_CASE("alignment errors") {
    const DepthMap flat(4, 4, 2.0);
    DepthMap ref(4, 4, 1.0);
    for (std::size_t i = 0; i < 16; ++i) ref.depth[i] = static_cast<double>(i) + 1.0;
    CHECK_THROWS_AS(polyfit_align(flat, ref), AlignmentError);
    CHECK_THROWS_AS(ransac_scale_shift(flat, ref), AlignmentError);
    CHECK_THROWS_AS(polyfit_align(ref, DepthMap(4, 4, 1.0, false)), AlignmentError);
    CHECK_THROWS_AS(ransac_scale_shift(ref, ref, {0, 5, 0}), ParameterError);
    CHECK_THROWS_AS(ransac_scale_shift(ref, ref, {4, 1, 0}), ParameterError);
}

TEST_CASE("depth metrics hand example") {
    DepthMap gt(1, 2, 1.0);
    DepthMap pred(1, 2);
    pred.depth = {1.2, 0.9};
    const DepthMetrics m = depth_metrics(pred, gt);
    CHECK(m.l1 == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(m.absrel == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(m.delta05 == 0.5);
    CHECK(m.rmse == doctest::Approx(std::sqrt((0.04 + 0.01) / 2.0)).epsilon(1e-14));
}

TEST_CASE("depth metrics match the reference") {
    std::mt19937_64 rng(33);
    std::bernoulli_distribution keep(0.8);
    for (int trial = 0; trial < 100; ++trial) {
        DepthMap gt = random_depth(7, 9, rng);
        DepthMap pred = random_depth(7, 9, rng);
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (!keep(rng)) gt.valid[i] = 0;
            if (!keep(rng)) pred.valid[i] = 0;
        }
        gt.valid[0] = pred.valid[0] = 1;
        const auto a = depth_metrics(pred, gt);
        const auto b = oracle::depth_metrics(pred, gt);
        CHECK(std::abs(a.l1 - b.l1) < 1e-12);
        CHECK(std::abs(a.rmse - b.rmse) < 1e-12);
        CHECK(std::abs(a.absrel - b.absrel) < 1e-12);
        CHECK(std::abs(a.delta05 - b.delta05) < 1e-12);
    }
}

TEST_CASE("depth metric errors") {
    CHECK_THROWS_AS(depth_metrics(DepthMap(2, 2), DepthMap(2, 3)), ShapeError);
    CHECK_THROWS_AS(depth_metrics(DepthMap(2, 2, 1.0), DepthMap(2, 2, 1.0, false)), InputError);
    CHECK_THROWS_AS(depth_metrics(DepthMap(2, 2, 1.0), DepthMap(2, 2, 0.0)), InputError);
}
