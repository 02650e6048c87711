#pragma once

// Randomized finite-difference cases for every differentiable op and loss.

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pda/losses.hpp"
#include "pda/ops.hpp"
#include "support/oracles.hpp"

namespace oracle {

using Fn = std::function<pda::Tensor(const std::vector<pda::Tensor>&)>;

struct GradTrial {
    std::vector<pda::Tensor> inputs;
    Fn fn;
};

struct GradCase {
    std::string name;
    std::function<GradTrial(std::mt19937_64&)> make;
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

// Random 0/1 mask with at least one valid pixel.
inline pda::Tensor random_mask(const pda::Shape& shape, std::mt19937_64& rng, double p_valid = 0.8) {
    std::bernoulli_distribution keep(p_valid);
    std::vector<double> v(pda::shape_numel(shape));
    for (auto& x : v) x = keep(rng) ? 1.0 : 0.0;
    v[rng() % v.size()] = 1.0;
    return pda::Tensor::from(shape, std::move(v));
}

// Residual with alternating sign and magnitude in [0.05, 0.5]: neither the
// values nor their neighbour differences come near zero, so |.| stays smooth
// within a finite-difference step.
inline pda::Tensor checker_residual(const pda::Shape& shape, std::mt19937_64& rng) {
    const std::size_t h = shape[1], w = shape[2];
    std::uniform_real_distribution<double> mag(0.05, 0.5);
    const double sign = rng() % 2 ? 1.0 : -1.0;
    std::vector<double> v(pda::shape_numel(shape));
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t x = i % w, y = (i / w) % h;
        v[i] = ((x + y) % 2 ? -sign : sign) * mag(rng);
    }
    return pda::Tensor::from(shape, std::move(v));
}

inline std::pair<pda::Tensor, pda::Tensor> smooth_residual_pair(const pda::Shape& shape, std::mt19937_64& rng) {
    const pda::Tensor target = random_tensor(shape, rng, 0.0, 1.0);
    return {pda::ops::add(target, checker_residual(shape, rng)), target};
}

inline std::vector<GradCase> grad_cases() {
    using pda::Tensor;
    namespace ops = pda::ops;
    std::vector<GradCase> cases;

    auto elementwise = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
        cases.push_back({name, [op](std::mt19937_64& rng) {
                             const pda::Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
                             const Tensor w = random_tensor(s, rng);
                             return GradTrial{{random_tensor(s, rng), random_tensor(s, rng)},
                                              [op, w](const auto& in) { return probe(op(in[0], in[1]), w); }};
                         }});
    };
    elementwise("add", ops::add);
    elementwise("sub", ops::sub);
    elementwise("mul", ops::mul);

    auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, bool avoid_zero) {
        cases.push_back({name, [op, avoid_zero](std::mt19937_64& rng) {
                             const pda::Shape s{pick(rng, 1, 3), pick(rng, 1, 5)};
                             const Tensor w = random_tensor(s, rng);
                             const Tensor x = avoid_zero ? random_away_from_zero(s, rng) : random_tensor(s, rng, -3, 3);
                             return GradTrial{{x}, [op, w](const auto& in) { return probe(op(in[0]), w); }};
                         }});
    };
    unary("scale", [](const Tensor& x) { return ops::scale(x, -1.7); }, false);
    unary("add_scalar", [](const Tensor& x) { return ops::add_scalar(x, 0.3); }, false);
    unary("relu", ops::relu, true);
    unary("gelu", ops::gelu, false);
    unary("abs", ops::abs, true);
    cases.push_back({"transpose", [](std::mt19937_64& rng) {
                         const std::size_t a = pick(rng, 1, 3), b = pick(rng, 1, 4);
                         const Tensor w = random_tensor({b, a}, rng);
                         return GradTrial{{random_tensor({a, b}, rng)},
                                          [w](const auto& in) { return probe(ops::transpose(in[0]), w); }};
                     }});
    cases.push_back({"reshape", [](std::mt19937_64& rng) {
                         const std::size_t a = pick(rng, 1, 3), b = pick(rng, 1, 4);
                         const Tensor w = random_tensor({b, a}, rng);
                         return GradTrial{{random_tensor({a, b}, rng)},
                                          [w, a, b](const auto& in) { return probe(ops::reshape(in[0], {b, a}), w); }};
                     }});
    cases.push_back({"add_row_bias", [](std::mt19937_64& rng) {
                         const std::size_t m = pick(rng, 1, 4), n = pick(rng, 1, 4);
                         const Tensor w = random_tensor({m, n}, rng);
                         return GradTrial{{random_tensor({m, n}, rng), random_tensor({n}, rng)},
                                          [w](const auto& in) { return probe(ops::add_row_bias(in[0], in[1]), w); }};
                     }});
    cases.push_back({"matmul", [](std::mt19937_64& rng) {
                         const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                         const Tensor w = random_tensor({m, n}, rng);
                         return GradTrial{{random_tensor({m, k}, rng), random_tensor({k, n}, rng)},
                                          [w](const auto& in) { return probe(ops::matmul(in[0], in[1]), w); }};
                     }});
    cases.push_back({"layer_norm", [](std::mt19937_64& rng) {
                         const std::size_t m = pick(rng, 1, 3), n = pick(rng, 2, 6);
                         const Tensor w = random_tensor({m, n}, rng);
                         return GradTrial{
                             {random_tensor({m, n}, rng, -2, 2), random_tensor({n}, rng), random_tensor({n}, rng)},
                             [w](const auto& in) { return probe(ops::layer_norm(in[0], in[1], in[2]), w); }};
                     }});
    cases.push_back({"softmax", [](std::mt19937_64& rng) {
                         const pda::Shape s{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 2, 4)};
                         const std::size_t axis = pick(rng, 0, 2);
                         const Tensor w = random_tensor(s, rng);
                         return GradTrial{{random_tensor(s, rng, -2, 2)},
                                          [w, axis](const auto& in) { return probe(ops::softmax(in[0], axis), w); }};
                     }});
    cases.push_back({"slice_concat_cols", [](std::mt19937_64& rng) {
                         const std::size_t m = pick(rng, 1, 3), n = pick(rng, 3, 6);
                         const std::size_t start = pick(rng, 0, n - 2), count = pick(rng, 1, n - start);
                         const Tensor w = random_tensor({m, count + 2}, rng);
                         return GradTrial{{random_tensor({m, n}, rng), random_tensor({m, 2}, rng)},
                                          [w, start, count](const auto& in) {
                                              return probe(ops::concat_cols({ops::slice_cols(in[0], start, count), in[1]}), w);
                                          }};
                     }});
    cases.push_back({"slice_concat_rows", [](std::mt19937_64& rng) {
                         const std::size_t m = pick(rng, 3, 6), n = pick(rng, 1, 3);
                         const std::size_t start = pick(rng, 0, m - 2), count = pick(rng, 1, m - start);
                         const Tensor w = random_tensor({count + 1, n}, rng);
                         return GradTrial{{random_tensor({m, n}, rng), random_tensor({1, n}, rng)},
                                          [w, start, count](const auto& in) {
                                              return probe(ops::concat_rows({in[1], ops::slice_rows(in[0], start, count)}), w);
                                          }};
                     }});
    cases.push_back({"crop", [](std::mt19937_64& rng) {
                         const std::size_t c = pick(rng, 1, 2), h = pick(rng, 2, 5), w = pick(rng, 2, 5);
                         const std::size_t r0 = pick(rng, 0, h - 1), c0 = pick(rng, 0, w - 1);
                         const std::size_t rows = pick(rng, 1, h - r0), cols = pick(rng, 1, w - c0);
                         const Tensor wt = random_tensor({c, rows, cols}, rng);
                         return GradTrial{{random_tensor({c, h, w}, rng)}, [=](const auto& in) {
                                              return probe(ops::crop(in[0], r0, rows, c0, cols), wt);
                                          }};
                     }});
    cases.push_back({"conv2d", [](std::mt19937_64& rng) {
                         const std::size_t c = pick(rng, 1, 3), o = pick(rng, 1, 3);
                         const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
                         pda::ops::Conv2dOptions opt;
                         opt.stride = pick(rng, 1, 2);
                         // Odd sizes keep the strided extent integral with same padding.
                         const std::size_t h = 2 * pick(rng, 1, 3) + 1, w = 2 * pick(rng, 1, 3) + 1;
                         const std::size_t oh = (h - 1) / opt.stride + 1, ow = (w - 1) / opt.stride + 1;
                         const Tensor wt = random_tensor({o, oh, ow}, rng);
                         return GradTrial{{random_tensor({c, h, w}, rng), random_tensor({o, c, k, k}, rng),
                                           random_tensor({o}, rng)},
                                          [wt, opt](const auto& in) { return probe(ops::conv2d(in[0], in[1], in[2], opt), wt); }};
                     }});
    cases.push_back({"bilinear_resize", [](std::mt19937_64& rng) {
                         const std::size_t c = pick(rng, 1, 2), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
                         const std::size_t oh = pick(rng, 1, 7), ow = pick(rng, 1, 7);
                         const Tensor wt = random_tensor({c, oh, ow}, rng);
                         return GradTrial{{random_tensor({c, h, w}, rng)},
                                          [=](const auto& in) { return probe(ops::bilinear_resize(in[0], oh, ow), wt); }};
                     }});
    cases.push_back({"sum_mean", [](std::mt19937_64& rng) {
                         const pda::Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
                         return GradTrial{{random_tensor(s, rng)}, [](const auto& in) {
                                              return ops::add(ops::scale(ops::sum(in[0]), 0.3), ops::mean(in[0]));
                                          }};
                     }});

    // Losses: gradients with respect to the prediction (and, where the loss
    // is smooth in it, the target).
    auto loss_shape = [](std::mt19937_64& rng) { return pda::Shape{1, pick(rng, 2, 5), pick(rng, 2, 5)}; };
    cases.push_back({"l1_loss", [loss_shape](std::mt19937_64& rng) {
                         const auto s = loss_shape(rng);
                         auto [pred, target] = smooth_residual_pair(s, rng);
                         const Tensor mask = random_mask(s, rng);
                         return GradTrial{{pred, target},
                                          [mask](const auto& in) { return pda::l1_loss(in[0], in[1], mask); }};
                     }});
    cases.push_back({"grad_loss", [loss_shape](std::mt19937_64& rng) {
                         const auto s = loss_shape(rng);
                         auto [pred, target] = smooth_residual_pair(s, rng);
                         const Tensor mask = random_mask(s, rng);
                         return GradTrial{{pred, target},
                                          [mask](const auto& in) { return pda::grad_loss(in[0], in[1], mask); }};
                     }});
    cases.push_back({"edge_aware_loss", [loss_shape](std::mt19937_64& rng) {
                         const auto s = loss_shape(rng);
                         auto [pred, gt] = smooth_residual_pair(s, rng);
                         const Tensor pseudo = ops::sub(pred, checker_residual(s, rng));
                         const Tensor gm = random_mask(s, rng), pm = random_mask(s, rng);
                         return GradTrial{{pred, gt, pseudo}, [gm, pm](const auto& in) {
                                              return pda::edge_aware_loss(in[0], in[1], in[2], pda::kEdgeLossLambda, gm, pm)
                                                  .total_tensor;
                                          }};
                     }});
    cases.push_back({"synthetic_loss", [loss_shape](std::mt19937_64& rng) {
                         const auto s = loss_shape(rng);
                         auto [pred, gt] = smooth_residual_pair(s, rng);
                         const Tensor mask = random_mask(s, rng);
                         return GradTrial{{pred, gt}, [mask](const auto& in) {
                                              return pda::synthetic_loss(in[0], in[1], 0.5, mask).total_tensor;
                                          }};
                     }});
    return cases;
}

}  // namespace oracle
