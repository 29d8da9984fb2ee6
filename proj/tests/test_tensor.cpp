#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "segcrowd/ops.hpp"

using namespace segcrowd;
using segcrowd::testing::max_grad_rel_error;
using segcrowd::testing::random_tensor;

TEST_CASE("conv2d: all-ones 3x3 input and kernel, padding 1") {
    Tensor x = Tensor::from({1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor w = Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor b(std::vector<std::size_t>{1});
    ConvSpec spec{3, 3, 1, 1, 1, 1, 1};
    Tensor y = conv2d(x, spec, w, b);
    CHECK(y.dims() == std::vector<std::size_t>{1, 3, 3});
    CHECK(y.at(0, 1, 1) == doctest::Approx(9.0));
    CHECK(y.at(0, 0, 0) == doctest::Approx(4.0));
}

TEST_CASE("conv2d: identity kernel is the identity map") {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({1, 5, 6}, rng);
    Tensor w(std::vector<std::size_t>{1, 1, 3, 3});
    w.values()[4] = 1.0;  // center tap
    Tensor b(std::vector<std::size_t>{1});
    ConvSpec spec{3, 3, 1, 1, 1, 1, 1};
    Tensor y = conv2d(x, spec, w, b);
    REQUIRE(y.dims() == x.dims());
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(y.value(i) == doctest::Approx(x.value(i)));
}

TEST_CASE("conv2d: dilation 2 shrinks 7x7 to 3x3") {
    Tensor x(std::vector<std::size_t>{1, 7, 7});
    Tensor w(std::vector<std::size_t>{1, 1, 3, 3});
    Tensor b(std::vector<std::size_t>{1});
    ConvSpec spec{3, 3, 1, 1, 2, 1, 0};
    Tensor y = conv2d(x, spec, w, b);
    CHECK(y.dims() == std::vector<std::size_t>{1, 3, 3});
}

TEST_CASE("conv2d: linear in input with zero bias") {
    std::mt19937_64 rng(11);
    Tensor a = random_tensor({2, 6, 6}, rng);
    Tensor c = random_tensor({2, 6, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b(std::vector<std::size_t>{3});
    ConvSpec spec{3, 3, 2, 3, 1, 1, 1};
    Tensor sum_in = add_elementwise(a, c);
    Tensor y1 = conv2d(sum_in, spec, w, b);
    Tensor y2 = add_elementwise(conv2d(a, spec, w, b), conv2d(c, spec, w, b));
    for (std::size_t i = 0; i < y1.size(); ++i)
        CHECK(y1.value(i) == doctest::Approx(y2.value(i)));
}

TEST_CASE("conv2d: shape mismatch errors name the axis") {
    Tensor x(std::vector<std::size_t>{2, 4, 4});
    Tensor w(std::vector<std::size_t>{1, 1, 3, 3});
    Tensor b(std::vector<std::size_t>{1});
    ConvSpec spec{3, 3, 1, 1, 1, 1, 1};
    CHECK_THROWS_WITH_AS(conv2d(x, spec, w, b),
                         doctest::Contains("channels"), std::invalid_argument);
    spec.in_channels = 2;
    CHECK_THROWS_AS(conv2d(x, spec, w, b), std::invalid_argument);
}

TEST_CASE("max_pool2d basics") {
    Tensor x = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
    Tensor y = max_pool2d(x);
    CHECK(y.dims() == std::vector<std::size_t>{1, 1, 1});
    CHECK(y.value() == 4.0);

    Tensor c = Tensor::from({1, 4, 4}, std::vector<double>(16, 0.7));
    Tensor yc = max_pool2d(c);
    CHECK(yc.dims() == std::vector<std::size_t>{1, 2, 2});
    for (double v : yc.values()) CHECK(v == 0.7);

    Tensor tiny(std::vector<std::size_t>{1, 1, 4});
    CHECK_THROWS_AS(max_pool2d(tiny), std::invalid_argument);
}

TEST_CASE("max_pool2d gradient is a partition of unity per window") {
    std::mt19937_64 rng(3);
    Tensor x = random_tensor({2, 4, 4}, rng);
    x.set_requires_grad();
    Tensor loss = sum_all(max_pool2d(x));
    backward(loss);
    // each 2x2 window routes exactly one unit of gradient
    const auto& g = x.grad();
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t oh = 0; oh < 2; ++oh)
            for (std::size_t ow = 0; ow < 2; ++ow) {
                double s = 0.0;
                int nonzero = 0;
                for (std::size_t dh = 0; dh < 2; ++dh)
                    for (std::size_t dw = 0; dw < 2; ++dw) {
                        const double gi = g[(c * 4 + 2 * oh + dh) * 4 + 2 * ow + dw];
                        s += gi;
                        if (gi != 0.0) ++nonzero;
                    }
                CHECK(s == doctest::Approx(1.0));
                CHECK(nonzero == 1);
            }
}

TEST_CASE("max_pool2d tie-break routes to first cell in scan order") {
    Tensor x = Tensor::from({1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
    x.set_requires_grad();
    backward(sum_all(max_pool2d(x)));
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 0.0);
    CHECK(x.grad()[2] == 0.0);
    CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("prelu definition and relu collapse") {
    Tensor x = Tensor::from({2}, {-2.0, 3.0});
    Tensor a = Tensor::from({1}, {0.25});
    Tensor y = prelu(x, a);
    CHECK(y.value(0) == doctest::Approx(-0.5));
    CHECK(y.value(1) == doctest::Approx(3.0));

    Tensor zero_slope = Tensor::from({1}, {0.0});
    std::mt19937_64 rng(5);
    Tensor r = random_tensor({8}, rng);
    Tensor p = prelu(r, zero_slope);
    Tensor q = relu(r);
    for (std::size_t i = 0; i < r.size(); ++i)
        CHECK(p.value(i) == q.value(i));
}

TEST_CASE("softmax: uniform logits, sums to one, in (0,1)") {
    Tensor z = Tensor::from({5}, std::vector<double>(5, 1.3));
    Tensor s = softmax(z);
    double total = 0.0;
    for (double v : s.values()) {
        CHECK(v == doctest::Approx(0.2));
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

    std::mt19937_64 rng(9);
    for (int t = 0; t < 20; ++t) {
        Tensor r = random_tensor({5}, rng, -5.0, 5.0);
        Tensor sr = softmax(r);
        double sum = 0.0;
        for (double v : sr.values()) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("spp: output length depends only on channels and levels") {
    std::mt19937_64 rng(13);
    const std::vector<std::size_t> levels{1, 2, 4};
    Tensor a = random_tensor({3, 13, 17}, rng);
    Tensor b = random_tensor({3, 32, 24}, rng);
    CHECK(spp(a, levels).size() == 3 * 21);
    CHECK(spp(b, levels).size() == 3 * 21);

    Tensor c = Tensor::from({2, 9, 9}, std::vector<double>(162, 0.4));
    Tensor y = spp(c, levels);
    for (double v : y.values()) CHECK(v == 0.4);

    Tensor small(std::vector<std::size_t>{1, 3, 3});
    CHECK_THROWS_AS(spp(small, levels), std::invalid_argument);
}

TEST_CASE("fully_connected examples") {
    Tensor x = Tensor::from({2}, {1.0, 2.0});
    Tensor w = Tensor::from({1, 2}, {3.0, 4.0});
    Tensor b = Tensor::from({1}, {-1.0});
    CHECK(fully_connected(x, w, b).value() == doctest::Approx(10.0));

    Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor zb(std::vector<std::size_t>{2});
    Tensor y = fully_connected(x, eye, zb);
    CHECK(y.value(0) == 1.0);
    CHECK(y.value(1) == 2.0);

    Tensor zw(std::vector<std::size_t>{2, 2});
    Tensor bb = Tensor::from({2}, {5.0, -3.0});
    Tensor yb = fully_connected(x, zw, bb);
    CHECK(yb.value(0) == 5.0);
    CHECK(yb.value(1) == -3.0);

    Tensor bad = Tensor::from({3}, {1, 2, 3});
    CHECK_THROWS_AS(fully_connected(bad, w, b), std::invalid_argument);
}

TEST_CASE("add_elementwise examples") {
    Tensor a = Tensor::from({1, 2}, {1.0, 2.0});
    Tensor b = Tensor::from({1, 2}, {3.0, 4.0});
    Tensor c = add_elementwise(a, b);
    CHECK(c.value(0) == 4.0);
    CHECK(c.value(1) == 6.0);
    Tensor c2 = add_elementwise(b, a);
    CHECK(c.values() == c2.values());

    Tensor z(std::vector<std::size_t>{1, 2});
    Tensor az = add_elementwise(a, z);
    CHECK(az.values() == a.values());

    Tensor wrong(std::vector<std::size_t>{2, 1});
    CHECK_THROWS_AS(add_elementwise(a, wrong), std::invalid_argument);
}

TEST_CASE("backward basics") {
    Tensor x = Tensor::from({4}, {1, 2, 3, 4});
    x.set_requires_grad();
    backward(sum_all(x));
    for (double g : x.grad()) CHECK(g == 1.0);

    Tensor neg = Tensor::from({3}, {-1, -2, -3});
    neg.set_requires_grad();
    backward(sum_all(relu(neg)));
    for (double g : neg.grad()) CHECK(g == 0.0);

    Tensor v = Tensor::from({2}, {1, 2});
    CHECK_THROWS_AS(backward(v), std::invalid_argument);
}

TEST_CASE("finite differences: every operator at randomized small shapes") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 3; ++trial) {
        Tensor x = random_tensor({2, 6, 6}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({3}, rng);
        x.set_requires_grad();
        w.set_requires_grad();
        b.set_requires_grad();
        ConvSpec spec{3, 3, 2, 3, trial == 2 ? 2u : 1u, 1, 2};
        auto conv_loss = [&] { return sum_all(sigmoid(conv2d(x, spec, w, b))); };
        CHECK(max_grad_rel_error(conv_loss, {x, w, b}) < 1e-4);
    }

    {
        Tensor x = random_tensor({2, 8, 8}, rng);
        x.set_requires_grad();
        auto loss = [&] { return sum_all(sigmoid(max_pool2d(x))); };
        CHECK(max_grad_rel_error(loss, {x}) < 1e-4);
    }
    {
        Tensor x = random_tensor({3, 8, 8}, rng);
        x.set_requires_grad();
        auto loss = [&] {
            return sum_all(sigmoid(spp(x, {1, 2, 4})));
        };
        CHECK(max_grad_rel_error(loss, {x}) < 1e-4);
    }
    {
        Tensor x = random_tensor({4, 5, 5}, rng);
        Tensor a = random_tensor({4}, rng, 0.05, 0.5);
        x.set_requires_grad();
        a.set_requires_grad();
        auto loss = [&] { return sum_all(sigmoid(prelu(x, a))); };
        CHECK(max_grad_rel_error(loss, {x, a}) < 1e-4);
    }
    {
        Tensor z = random_tensor({5}, rng, -2.0, 2.0);
        z.set_requires_grad();
        auto loss = [&] {
            Tensor s = softmax(z);
            return sum_all(mul_elementwise(s, s));
        };
        CHECK(max_grad_rel_error(loss, {z}) < 1e-4);
    }
    {
        Tensor x = random_tensor({6}, rng);
        Tensor w = random_tensor({4, 6}, rng);
        Tensor b = random_tensor({4}, rng);
        x.set_requires_grad();
        w.set_requires_grad();
        b.set_requires_grad();
        auto loss = [&] { return sum_all(sigmoid(fully_connected(x, w, b))); };
        CHECK(max_grad_rel_error(loss, {x, w, b}) < 1e-4);
    }
    {
        Tensor a = random_tensor({2, 4, 4}, rng);
        Tensor c = random_tensor({2, 4, 4}, rng);
        a.set_requires_grad();
        c.set_requires_grad();
        auto loss = [&] {
            return sum_all(sigmoid(add_elementwise(a, c)));
        };
        CHECK(max_grad_rel_error(loss, {a, c}) < 1e-4);
    }
    {
        // composite chain: conv -> relu -> pool -> fc
        Tensor x = random_tensor({1, 8, 8}, rng);
        Tensor w = random_tensor({2, 1, 3, 3}, rng);
        Tensor b = random_tensor({2}, rng);
        Tensor fw = random_tensor({3, 2 * 16}, rng);
        Tensor fb = random_tensor({3}, rng);
        for (Tensor* t : {&x, &w, &b, &fw, &fb}) t->set_requires_grad();
        ConvSpec spec{3, 3, 1, 2, 1, 1, 1};
        auto loss = [&] {
            Tensor h = max_pool2d(relu(conv2d(x, spec, w, b)));
            h = reshape(h, {h.size()});
            return sum_all(sigmoid(fully_connected(h, fw, fb)));
        };
        CHECK(max_grad_rel_error(loss, {x, w, b, fw, fb}) < 1e-4);
    }
}
