#include <cmath>
#include <random>

#include "doctest.h"
#include "pda/error.hpp"
#include "pda/fusion.hpp"
#include "pda/ops.hpp"
#include "support/oracles.hpp"

using namespace pda;

namespace {

ModelParams full_params(const NetConfig& c) {
    ModelParams p = init_foundation_params(c);
    p.merge(init_fusion_params(c));
    return p;
}

NetConfig small_config() {
    NetConfig c;
    c.height = 32;
    c.width = 48;
    return c;
}

}  // namespace

TEST_CASE("fresh fusion branch leaves the foundation output unchanged") {
    const NetConfig c = small_config();
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 3; ++trial) {
        NetConfig ct = c;
        ct.seed = 100 + trial;
        const ModelParams p = full_params(ct);
        const Tensor image = oracle::random_tensor({3, 32, 48}, rng, 0, 1);
        const Tensor prompt = oracle::random_tensor({1, 16, 24}, rng, 0, 1);
        const Tensor a = forward_prompted(image, prompt, p, ct);
        const Tensor b = forward_base(image, p, ct);
        double worst = 0.0;
        for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("fusion projection starts at zero") {
    const NetConfig c = small_config();
    const ModelParams p = init_fusion_params(c);
    std::size_t projections = 0;
    for (const auto& e : p.entries()) {
        CHECK(e.group == ParamGroup::fusion);
        if (e.name.find("proj") != std::string::npos) {
            ++projections;
            for (double v : e.value.data()) CHECK(v == 0.0);
        }
    }
    CHECK(projections == 2 * c.fusion_stages);
}

TEST_CASE("fuse_block contracts") {
    const NetConfig c = small_config();
    const ModelParams p = full_params(c);
    std::mt19937_64 rng(12);
    const Tensor features = oracle::random_tensor({c.stage_dims[0], 32, 48}, rng);
    const Tensor out = fuse_block(Tensor::full({1, 16, 24}, 0.5), features, 0, p, c);
    CHECK(out.shape() == features.shape());

    CHECK_THROWS_AS(fuse_block(Tensor::full({1, 16, 24}, 1.5), features, 0, p, c), ContractError);
    CHECK_THROWS_AS(fuse_block(Tensor::full({1, 16, 24}, -0.1), features, 0, p, c), ContractError);
    CHECK_THROWS_AS(forward_prompted(Tensor::zeros({3, 32, 48}), Tensor::full({1, 16, 24}, 2.0), p, c),
                    ContractError);
}

TEST_CASE("prompt signal flows once the projection is nonzero") {
    const NetConfig c = small_config();
    ModelParams p = full_params(c);
    std::mt19937_64 rng(13);
    for (auto& e : p.entries()) {
        if (e.group == ParamGroup::fusion && e.name.find("proj") != std::string::npos) {
            for (auto& v : e.value.mutable_data()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
        }
    }
    const Tensor image = oracle::random_tensor({3, 32, 48}, rng, 0, 1);
    const Tensor near = Tensor::full({1, 16, 24}, 0.1);
    const Tensor far = oracle::random_tensor({1, 16, 24}, rng, 0.5, 1.0);
    const Tensor a = forward_prompted(image, near, p, c);
    const Tensor b = forward_prompted(image, far, p, c);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a.data()[i] - b.data()[i]);
    CHECK(diff > 0.0);

    // And the prompt itself receives a gradient.
    Tensor prompt = far.clone();
    prompt.set_requires_grad(true);
    Tape tape;
    tape.backward(ops::mean(forward_prompted(image, prompt, p, c)));
    REQUIRE(prompt.has_grad());
    double norm = 0.0;
    for (double g : prompt.grad()) norm += g * g;
    CHECK(norm > 0.0);
}

TEST_CASE("zero-init projection still receives a gradient") {
    const NetConfig c = small_config();
    ModelParams p = full_params(c);
    std::mt19937_64 rng(14);
    const Tensor image = oracle::random_tensor({3, 32, 48}, rng, 0, 1);
    const Tensor prompt = oracle::random_tensor({1, 16, 24}, rng, 0, 1);
    for (auto& e : p.entries()) e.value.set_requires_grad(true);
    Tape tape;
    tape.backward(ops::mean(forward_prompted(image, prompt, p, c)));
    double proj_norm = 0.0;
    for (const auto& e : p.entries()) {
        if (e.group == ParamGroup::fusion && e.name.find("proj") != std::string::npos && e.value.has_grad()) {
            for (double g : e.value.grad()) proj_norm += g * g;
        }
    }
    CHECK(proj_norm > 0.0);
}

TEST_CASE("prepare_prompt normalizes and fills holes") {
    DepthMap d(4, 6, 2.0);
    d.at(0, 0) = 1.0;
    d.at(3, 5) = 5.0;
    d.valid[d.index(1, 1)] = 0;
    d.at(1, 1) = 100.0;
    const NormScale s = NormScale::from_depth(PromptDepth{d}.depth);
    CHECK(s.d_min == 1.0);
    CHECK(s.d_max == 5.0);
    const Tensor t = prepare_prompt(PromptDepth{d}, s);
    CHECK(t.shape() == Shape{1, 4, 6});
    CHECK(t.data()[0] == 0.0);
    CHECK(t.data()[23] == 1.0);
    CHECK(t.data()[1 * 6 + 1] == doctest::Approx(0.25));
    for (double v : t.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("prompt validation") {
    PromptDepth p{DepthMap(40, 10, 1.0)};
    CHECK_THROWS(p.validate(32, 48));
    p.depth = DepthMap(16, 24, 1.0);
    CHECK_NOTHROW(p.validate(32, 48));
    p.depth.at(2, 2) = -1.0;
    CHECK_THROWS(p.validate(32, 48));
}

TEST_CASE("fusion overhead") {
    NetConfig c;
    const double r = fusion_overhead(c);
    CHECK(r > 0.0);
    CHECK(r < 0.10);

    // Deterministic and independent of parameter values.
    CHECK(fusion_overhead(c) == r);
    NetConfig reseeded = c;
    reseeded.seed = 999;
    CHECK(fusion_overhead(reseeded) == r);

    NetConfig none = c;
    none.fusion_stages = 0;
    CHECK(fusion_overhead(none) == 0.0);

    NetConfig two = c;
    two.fusion_stages = 2;
    const double r2 = fusion_overhead(two);
    CHECK(r2 > 0.0);
    CHECK(r2 < r);

    const FlopsReport rep = measure_flops(c);
    CHECK(rep.prompted > rep.base);
    CHECK(rep.ratio == doctest::Approx(static_cast<double>(rep.prompted) / rep.base - 1.0).epsilon(1e-15));
}
