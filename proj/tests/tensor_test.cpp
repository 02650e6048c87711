#include <cmath>
#include <random>

#include "doctest.h"
#include "pda/error.hpp"
#include "pda/ops.hpp"
#include "pda/params.hpp"
#include "pda/tensor.hpp"
#include "support/oracles.hpp"

using namespace pda;

namespace {

double at3(const Tensor& t, std::size_t c, std::size_t r, std::size_t col) {
    return t.data()[(c * t.dim(1) + r) * t.dim(2) + col];
}

}  // namespace

TEST_CASE("tensor shape and storage") {
    Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.dim(0) == 2);
    CHECK(t.at(5) == 6.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);

    Tensor c = t.clone();
    c.mutable_data()[0] = 42.0;
    CHECK(t.data()[0] == 1.0);
    CHECK_FALSE(c.same_storage(t));
}

TEST_CASE("matmul hand examples") {
    const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from({2, 1}, {5, 6});
    const Tensor y = ops::matmul(a, b);
    CHECK(y.shape() == Shape{2, 1});
    CHECK(y.data()[0] == 17.0);
    CHECK(y.data()[1] == 39.0);

    std::mt19937_64 rng(3);
    const Tensor m = oracle::random_tensor({3, 4}, rng);
    const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor same = ops::matmul(eye, m);
    for (std::size_t i = 0; i < m.numel(); ++i) CHECK(same.data()[i] == m.data()[i]);

    const Tensor z = ops::matmul(Tensor::zeros({2, 3}), oracle::random_tensor({3, 4}, rng));
    CHECK(z.shape() == Shape{2, 4});
    for (double v : z.data()) CHECK(v == 0.0);

    CHECK_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("conv2d semantics") {
    std::mt19937_64 rng(5);
    const Tensor x = oracle::random_tensor({2, 5, 6}, rng);

    const Tensor zero = ops::conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor::zeros({3}));
    for (double v : zero.data()) CHECK(v == 0.0);

    Tensor eye = Tensor::zeros({2, 2, 1, 1});
    eye.mutable_data()[0] = 1.0;
    eye.mutable_data()[3] = 1.0;
    const Tensor same = ops::conv2d(x, eye, Tensor());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(same.data()[i] == x.data()[i]);

    // 3x3 box filter over a 5x5 ramp, zero padded, against a direct sum.
    std::vector<double> ramp(25);
    for (std::size_t i = 0; i < 25; ++i) ramp[i] = static_cast<double>(i);
    const Tensor img = Tensor::from({1, 5, 5}, ramp);
    const Tensor box = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor y = ops::conv2d(img, box, Tensor());
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
            double expect = 0.0;
            for (int dr = -1; dr <= 1; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr >= 0 && rr < 5 && cc >= 0 && cc < 5) expect += ramp[rr * 5 + cc];
                }
            }
            CHECK(at3(y, 0, static_cast<std::size_t>(r), static_cast<std::size_t>(c)) == doctest::Approx(expect));
        }
    }

    // Strided, unpadded output extent and a non-integral one.
    const Tensor s = ops::conv2d(img, box, Tensor(), {.stride = 2, .padding = 0});
    CHECK(s.shape() == Shape{1, 2, 2});
    CHECK(at3(s, 0, 0, 0) == doctest::Approx(0 + 1 + 2 + 5 + 6 + 7 + 10 + 11 + 12));
    CHECK_THROWS_AS(ops::conv2d(Tensor::zeros({1, 6, 6}), box, Tensor(), {.stride = 2, .padding = 0}), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(img, Tensor::zeros({1, 1, 2, 2}), Tensor()), ShapeError);
}

TEST_CASE("bilinear resize convention") {
    const Tensor x = Tensor::from({1, 2, 2}, {0, 1, 2, 3});
    const Tensor y = ops::bilinear_resize(x, 4, 4);
    // Source coordinate (i + 0.5) * in / out - 0.5, clamped to [0, in - 1].
    auto coord = [](std::size_t i) { return std::clamp((static_cast<double>(i) + 0.5) * 0.5 - 0.5, 0.0, 1.0); };
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double sr = coord(r), sc = coord(c);
            const double expect = (1 - sr) * ((1 - sc) * 0 + sc * 1) + sr * ((1 - sc) * 2 + sc * 3);
            CHECK(at3(y, 0, r, c) == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    CHECK(at3(y, 0, 0, 0) == 0.0);
    CHECK(at3(y, 0, 0, 1) == doctest::Approx(0.25));

    std::mt19937_64 rng(9);
    const Tensor m = oracle::random_tensor({3, 4, 5}, rng);
    const Tensor same = ops::bilinear_resize(m, 4, 5);
    for (std::size_t i = 0; i < m.numel(); ++i) CHECK(same.data()[i] == m.data()[i]);

    const Tensor k = ops::bilinear_resize(Tensor::full({1, 3, 3}, 2.5), 7, 2);
    for (double v : k.data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("layer norm, softmax and relu identities") {
    const Tensor row = Tensor::full({1, 4}, 3.0);
    const Tensor ln = ops::layer_norm(row, Tensor::full({4}, 1.0), Tensor::zeros({4}));
    for (double v : ln.data()) CHECK(v == 0.0);
    CHECK_THROWS_AS(ops::layer_norm(row, Tensor::full({4}, 1.0), Tensor::zeros({4}), 0.0), ParameterError);

    const Tensor sm = ops::softmax(Tensor::zeros({1, 2}), 1);
    CHECK(sm.data()[0] == 0.5);
    CHECK(sm.data()[1] == 0.5);

    std::mt19937_64 rng(11);
    const Tensor x = oracle::random_tensor({3, 7, 5}, rng, -20, 20);
    for (std::size_t axis = 0; axis < 3; ++axis) {
        const Tensor p = ops::softmax(x, axis);
        const Shape& s = x.shape();
        std::size_t inner = 1;
        for (std::size_t a = axis + 1; a < 3; ++a) inner *= s[a];
        const std::size_t outer = x.numel() / (inner * s[axis]);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                double total = 0.0;
                for (std::size_t k = 0; k < s[axis]; ++k) total += p.data()[(o * s[axis] + k) * inner + i];
                CHECK(std::abs(total - 1.0) < 1e-12);
            }
        }
    }

    const Tensor r = ops::add(ops::relu(x), ops::relu(ops::scale(x, -1.0)));
    const Tensor a = ops::abs(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(r.data()[i] == a.data()[i]);
}

TEST_CASE("backward on small graphs") {
    {
        Tensor x = Tensor::from({3}, {1, -2, 5});
        x.set_requires_grad(true);
        Tape tape;
        tape.backward(ops::sum(x));
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    {
        Tensor x = Tensor::from({2}, {1, 2});
        x.set_requires_grad(true);
        Tape tape;
        tape.backward(ops::sum(ops::mul(x, x)));
        CHECK(x.grad()[0] == 2.0);
        CHECK(x.grad()[1] == 4.0);
    }
    {
        Tensor x = Tensor::from({2}, {1, 2});
        x.set_requires_grad(true);
        Tape tape;
        const Tensor y = ops::mul(x, x);
        CHECK_THROWS_AS(tape.backward(y), ContractError);
    }
    std::mt19937_64 rng(13);
    const Tensor x = oracle::random_tensor({2, 6, 6}, rng);
    const Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng);
    const Tensor b = oracle::random_tensor({3}, rng);
    const auto check = oracle::gradcheck(
        [](const std::vector<Tensor>& in) { return ops::sum(ops::relu(ops::conv2d(in[0], in[1], in[2]))); },
        {x, w, b});
    CHECK(check.max_rel_error < 1e-4);
}

TEST_CASE("tape replays in strict reverse order") {
    Tensor x = Tensor::from({2}, {0.5, -1.5});
    x.set_requires_grad(true);
    Tape tape;
    const Tensor a = ops::scale(x, 2.0);
    const Tensor b = ops::gelu(a);
    const Tensor c = ops::mul(b, a);
    const Tensor loss = ops::sum(c);
    std::vector<std::size_t> visited;
    tape.backward(loss, [&](std::size_t i) { visited.push_back(i); });
    REQUIRE(visited.size() == tape.size());
    for (std::size_t k = 0; k < visited.size(); ++k) CHECK(visited[k] == tape.size() - 1 - k);
    CHECK(x.has_grad());
}

TEST_CASE("ops reject non-finite results") {
    const Tensor x = Tensor::from({2}, {1e308, 1e308});
    CHECK_THROWS_AS(ops::add(x, x), NumericError);
}

TEST_CASE("flops counter is additive and scoped") {
    std::mt19937_64 rng(17);
    const Tensor a = oracle::random_tensor({4, 5}, rng);
    const Tensor b = oracle::random_tensor({5, 3}, rng);
    const Tensor img = oracle::random_tensor({2, 6, 6}, rng);
    const Tensor w = oracle::random_tensor({4, 2, 3, 3}, rng);

    FlopsCounter total;
    {
        FlopsCounter::Scope s("first");
        ops::matmul(a, b);
    }
    {
        FlopsCounter::Scope s("second");
        ops::conv2d(img, w, Tensor());
    }
    CHECK(total.get("first") == 4u * 5u * 3u);
    CHECK(total.get("second") == 4u * 2u * 9u * 36u);
    CHECK(total.total() == total.get("first") + total.get("second"));
}

TEST_CASE("adamw update rule") {
    SUBCASE("zero gradient and no decay leaves params unchanged") {
        ModelParams p;
        p.add(ParamGroup::head, "w", Tensor::from({2}, {0.3, -0.7}));
        p.get("head/w").grad_buffer();
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        AdamW opt(cfg);
        opt.step(p, 1);
        CHECK(p.get("head/w").data()[0] == 0.3);
        CHECK(p.get("head/w").data()[1] == -0.7);
    }
    SUBCASE("scalar hand evaluation over two steps") {
        ModelParams p;
        p.add(ParamGroup::decoder, "w", Tensor::from({1}, {1.0}));
        AdamWConfig cfg;
        AdamW opt(cfg);
        const double lr = 5e-5, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double theta = 1.0, m = 0.0, v = 0.0;
        const double grads[] = {0.5, -0.25};
        for (int t = 1; t <= 2; ++t) {
            p.get("decoder/w").grad_buffer()[0] = grads[t - 1];
            opt.step(p, static_cast<std::uint64_t>(t));
            p.zero_grads();
            const double g = grads[t - 1];
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            theta = theta - lr * wd * theta;
            theta = theta - lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
            CHECK(p.get("decoder/w").data()[0] == doctest::Approx(theta).epsilon(1e-15));
        }
    }
    SUBCASE("per-group learning rates") {
        AdamW opt(AdamWConfig{});
        CHECK(opt.learning_rate(ParamGroup::backbone) == 5e-6);
        CHECK(opt.learning_rate(ParamGroup::decoder) == 5e-5);
        CHECK(opt.learning_rate(ParamGroup::head) == 5e-5);
        CHECK(opt.learning_rate(ParamGroup::fusion) == 5e-5);

        // The first Adam step moves each parameter by about lr.
        ModelParams p;
        p.add(ParamGroup::backbone, "a", Tensor::from({1}, {0.0}));
        p.add(ParamGroup::fusion, "b", Tensor::from({1}, {0.0}));
        p.get("backbone/a").grad_buffer()[0] = 1.0;
        p.get("fusion/b").grad_buffer()[0] = 1.0;
        opt.step(p, 1);
        CHECK(p.get("backbone/a").data()[0] == doctest::Approx(-5e-6).epsilon(1e-6));
        CHECK(p.get("fusion/b").data()[0] == doctest::Approx(-5e-5).epsilon(1e-6));
    }
    SUBCASE("invalid learning rate or step") {
        AdamWConfig cfg;
        cfg.lr_other = 0.0;
        CHECK_THROWS_AS(AdamW{cfg}, ParameterError);
        ModelParams p;
        AdamW opt(AdamWConfig{});
        CHECK_THROWS_AS(opt.step(p, 0), ContractError);
    }
}

TEST_CASE("identical inputs give bit-identical outputs") {
    std::mt19937_64 r1(21), r2(21);
    const Tensor x1 = oracle::random_tensor({2, 8, 8}, r1), x2 = oracle::random_tensor({2, 8, 8}, r2);
    const Tensor w1 = oracle::random_tensor({3, 2, 3, 3}, r1), w2 = oracle::random_tensor({3, 2, 3, 3}, r2);
    const Tensor y1 = ops::bilinear_resize(ops::conv2d(x1, w1, Tensor()), 5, 11);
    const Tensor y2 = ops::bilinear_resize(ops::conv2d(x2, w2, Tensor()), 5, 11);
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1.data()[i] == y2.data()[i]);
}
