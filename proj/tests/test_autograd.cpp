#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "jscc/autograd.hpp"
#include "test_util.hpp"

using namespace jscc;
using jscc_test::gradcheck;
using jscc_test::rand_tensor;

namespace {
ag::Var leaf(Tensor t) { return ag::Var(std::move(t), /*requires_grad=*/true); }
}  // namespace

TEST_CASE("elementwise values") {
    auto x = leaf(Tensor::from_data({4}, {-2.0, -0.5, 0.0, 1.5}));
    auto y = leaf(Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0}));

    const Tensor s = ag::add(x, y).value();
    CHECK(s[0] == -1.0);
    CHECK(s[3] == 5.5);
    const Tensor p = ag::mul(x, y).value();
    CHECK(p[1] == -1.0);
    const Tensor a = ag::axpy(x, y, 2.0, -1.0).value();
    CHECK(a[0] == -5.0);
    const Tensor r = ag::relu(x).value();
    CHECK(r[0] == 0.0);
    CHECK(r[3] == 1.5);
    const Tensor sg = ag::sigmoid(ag::constant(Tensor::from_data({1}, {0.0}))).value();
    CHECK(sg[0] == doctest::Approx(0.5));
    CHECK(ag::mean_all(y).value().item() == doctest::Approx(2.5));
    CHECK(ag::mse(x, y).value().item() ==
          doctest::Approx((9.0 + 6.25 + 9.0 + 6.25) / 4.0));
}

TEST_CASE("gradients of elementwise ops") {
    auto x = leaf(rand_tensor({2, 5}, 1, 0.2, 1.5));
    auto y = leaf(rand_tensor({2, 5}, 2, 0.2, 1.5));
    CHECK(gradcheck([&] { return ag::mean_all(ag::add(x, y)); }, {x, y}) < 1e-6);
    CHECK(gradcheck([&] { return ag::mean_all(ag::mul(x, y)); }, {x, y}) < 1e-6);
    CHECK(gradcheck([&] { return ag::mean_all(ag::axpy(x, y, 0.7, -1.3)); }, {x, y}) < 1e-6);
    CHECK(gradcheck([&] { return ag::mean_all(ag::mul_scalar(x, -2.5)); }, {x}) < 1e-6);
    CHECK(gradcheck([&] { return ag::mean_all(ag::sigmoid(x)); }, {x}) < 1e-6);
    CHECK(gradcheck([&] { return ag::mse(x, y); }, {x, y}) < 1e-6);
    // relu away from the kink
    CHECK(gradcheck([&] { return ag::mean_all(ag::relu(x)); }, {x}) < 1e-6);
}

TEST_CASE("pow_shift gradient and value") {
    auto x = leaf(rand_tensor({3, 4}, 3, 0.5, 2.0));
    const Tensor v = ag::pow_shift(x, -0.5, 1e-6).value();
    CHECK(v[0] == doctest::Approx(1.0 / std::sqrt(x.value()[0] + 1e-6)));
    CHECK(gradcheck([&] { return ag::mean_all(ag::pow_shift(x, -0.5, 1e-6)); }, {x}) < 1e-5);
    CHECK(gradcheck([&] { return ag::mean_all(ag::pow_shift(x, 0.5, 1e-6)); }, {x}) < 1e-5);
}

TEST_CASE("prelu per-channel slope") {
    auto x = leaf(rand_tensor({2, 3, 4, 4}, 4, -1.5, 1.5));
    auto s = leaf(Tensor::from_data({3}, {0.25, 0.5, 0.1}));
    const Tensor y = ag::prelu(x, s).value();
    for (size_t b = 0; b < 2; ++b)
        for (size_t c = 0; c < 3; ++c)
            for (size_t i = 0; i < 4; ++i)
                for (size_t j = 0; j < 4; ++j) {
                    const double xv = x.value().at4(b, c, i, j);
                    const double want = xv >= 0 ? xv : s.value()[c] * xv;
                    CHECK(y.at4(b, c, i, j) == doctest::Approx(want));
                }
    CHECK(gradcheck([&] { return ag::mean_all(ag::prelu(x, s)); }, {x, s}, 1e-6) < 1e-4);
}

TEST_CASE("reshape and concat") {
    auto x = leaf(rand_tensor({2, 3, 2, 2}, 5));
    auto y = leaf(rand_tensor({2, 2, 2, 2}, 6));
    const Tensor cat = ag::concat_channels(x, y).value();
    CHECK(cat.shape() == std::vector<size_t>{2, 5, 2, 2});
    CHECK(cat.at4(1, 0, 1, 1) == x.value().at4(1, 0, 1, 1));
    CHECK(cat.at4(1, 3, 0, 1) == y.value().at4(1, 0, 0, 1));
    CHECK(gradcheck([&] { return ag::mean_all(ag::concat_channels(x, y)); }, {x, y}) < 1e-6);
    CHECK(gradcheck([&] { return ag::mean_all(ag::reshape(x, {2, 12})); }, {x}) < 1e-6);

    auto a = leaf(rand_tensor({3, 2}, 7));
    auto b = leaf(rand_tensor({3, 4}, 8));
    const Tensor cc = ag::concat_cols(a, b).value();
    CHECK(cc.shape() == std::vector<size_t>{3, 6});
    CHECK(cc.at2(2, 0) == a.value().at2(2, 0));
    CHECK(cc.at2(0, 5) == b.value().at2(0, 3));
    CHECK(gradcheck([&] { return ag::mean_all(ag::concat_cols(a, b)); }, {a, b}) < 1e-6);
}

TEST_CASE("pixel shuffle layout") {
    // (1, 4, 1, 2) with r=2 -> (1, 1, 2, 4); out(y, x) = in(c = 2*(y%2) + x%2, y/2, x/2).
    auto x = leaf(Tensor::from_data({1, 4, 1, 2}, {0, 1, 2, 3, 4, 5, 6, 7}));
    const Tensor y = ag::pixel_shuffle(x, 2).value();
    REQUIRE(y.shape() == std::vector<size_t>{1, 1, 2, 4});
    CHECK(y.at4(0, 0, 0, 0) == 0);  // c0 x0
    CHECK(y.at4(0, 0, 0, 1) == 2);  // c1 x0
    CHECK(y.at4(0, 0, 0, 2) == 1);  // c0 x1
    CHECK(y.at4(0, 0, 0, 3) == 3);
    CHECK(y.at4(0, 0, 1, 0) == 4);  // c2 x0
    CHECK(y.at4(0, 0, 1, 3) == 7);
    auto z = leaf(rand_tensor({2, 8, 3, 3}, 9));
    CHECK(gradcheck([&] { return ag::mean_all(ag::pixel_shuffle(z, 2)); }, {z}) < 1e-6);
}

TEST_CASE("dense layer") {
    auto x = leaf(Tensor::from_data({1, 2}, {1.0, 2.0}));
    auto w = leaf(Tensor::from_data({2, 2}, {1.0, 0.0, 3.0, -1.0}));
    auto b = leaf(Tensor::from_data({2}, {0.5, -0.5}));
    const Tensor y = ag::dense(x, w, b).value();
    CHECK(y.at2(0, 0) == doctest::Approx(1.5));
    CHECK(y.at2(0, 1) == doctest::Approx(0.5));

    auto xr = leaf(rand_tensor({3, 4}, 10));
    auto wr = leaf(rand_tensor({5, 4}, 11));
    auto br = leaf(rand_tensor({5}, 12));
    CHECK(gradcheck([&] { return ag::mean_all(ag::dense(xr, wr, br)); }, {xr, wr, br}) < 1e-5);
}

TEST_CASE("conv2d values against a hand computation") {
    // 1x1x3x3 input, 1x1x2x2 kernel, stride 1, no padding.
    auto x = leaf(Tensor::from_data({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    auto w = leaf(Tensor::from_data({1, 1, 2, 2}, {1, 0, 0, -1}));
    auto b = leaf(Tensor::from_data({1}, {10.0}));
    const Tensor y = ag::conv2d(x, w, b, 1, 0).value();
    REQUIRE(y.shape() == std::vector<size_t>{1, 1, 2, 2});
    CHECK(y.at4(0, 0, 0, 0) == doctest::Approx(1 - 5 + 10));
    CHECK(y.at4(0, 0, 0, 1) == doctest::Approx(2 - 6 + 10));
    CHECK(y.at4(0, 0, 1, 0) == doctest::Approx(4 - 8 + 10));
    CHECK(y.at4(0, 0, 1, 1) == doctest::Approx(5 - 9 + 10));
}

TEST_CASE("conv2d gradients") {
    auto x = leaf(rand_tensor({2, 3, 6, 6}, 13));
    auto w = leaf(rand_tensor({4, 3, 3, 3}, 14, -0.5, 0.5));
    auto b = leaf(rand_tensor({4}, 15));
    CHECK(gradcheck([&] { return ag::mean_all(ag::conv2d(x, w, b, 1, 1)); }, {x, w, b}, 1e-5) <
          1e-5);

    auto w5 = leaf(rand_tensor({2, 3, 5, 5}, 16, -0.3, 0.3));
    auto b5 = leaf(rand_tensor({2}, 17));
    CHECK(gradcheck([&] { return ag::mean_all(ag::conv2d(x, w5, b5, 2, 2)); }, {x, w5, b5},
                    1e-5) < 1e-5);

    auto w1 = leaf(rand_tensor({5, 3, 1, 1}, 18));
    auto b1 = leaf(rand_tensor({5}, 19));
    CHECK(gradcheck([&] { return ag::mean_all(ag::conv2d(x, w1, b1, 1, 0)); }, {x, w1, b1},
                    1e-5) < 1e-5);
}

TEST_CASE("global average pool and channel scaling") {
    auto x = leaf(rand_tensor({2, 3, 4, 4}, 20));
    const Tensor g = ag::global_avg_pool(x).value();
    REQUIRE(g.shape() == std::vector<size_t>{2, 3});
    double want = 0.0;
    for (size_t i = 0; i < 4; ++i)
        for (size_t j = 0; j < 4; ++j) want += x.value().at4(1, 2, i, j);
    CHECK(g.at2(1, 2) == doctest::Approx(want / 16.0));
    CHECK(gradcheck([&] { return ag::mean_all(ag::global_avg_pool(x)); }, {x}) < 1e-6);

    auto gate = leaf(rand_tensor({2, 3}, 21, 0.1, 0.9));
    const Tensor sc = ag::scale_channels(x, gate).value();
    CHECK(sc.at4(1, 2, 3, 3) == doctest::Approx(x.value().at4(1, 2, 3, 3) * gate.value().at2(1, 2)));
    CHECK(gradcheck([&] { return ag::mean_all(ag::scale_channels(x, gate)); }, {x, gate}) < 1e-5);
}

TEST_CASE("power normalization pins every row's energy") {
    auto x = leaf(rand_tensor({3, 8}, 22, -2.0, 2.0));
    const double target = 4.0;  // 4 complex symbols at unit power = 8 reals
    const Tensor y = ag::power_normalize_rows(x, target).value();
    for (size_t r = 0; r < 3; ++r) {
        double ss = 0.0;
        for (size_t j = 0; j < 8; ++j) ss += y.at2(r, j) * y.at2(r, j);
        CHECK(ss == doctest::Approx(target).epsilon(1e-12));
    }
    CHECK(gradcheck([&] { return ag::mse(ag::power_normalize_rows(x, target),
                                         ag::constant(rand_tensor({3, 8}, 23))); },
                    {x}, 1e-5) < 1e-5);

    auto zero_row = leaf(Tensor({2, 4}, 0.0));
    CHECK_THROWS_AS(ag::power_normalize_rows(zero_row, 1.0), DomainError);
}

TEST_CASE("gradients accumulate across shared subgraphs") {
    auto x = leaf(Tensor::from_data({2}, {1.5, -0.5}));
    // y = mean(x*x + x): dy/dx = (2x + 1) / 2
    ag::Var y = ag::mean_all(ag::add(ag::mul(x, x), x));
    x.zero_grad();
    y.backward();
    CHECK(x.grad()[0] == doctest::Approx((2 * 1.5 + 1) / 2.0));
    CHECK(x.grad()[1] == doctest::Approx((2 * -0.5 + 1) / 2.0));

    // Rebuilding the graph and calling backward again after zeroing is clean.
    ag::Var y2 = ag::mean_all(ag::mul(x, x));
    x.zero_grad();
    y2.backward();
    CHECK(x.grad()[0] == doctest::Approx(1.5));
}

TEST_CASE("backward from a non-scalar root is rejected") {
    auto x = leaf(rand_tensor({2, 2}, 24));
    ag::Var y = ag::mul(x, x);
    CHECK_THROWS_AS(y.backward(), ConfigError);
}

TEST_CASE("composite normalization expression matches finite differences") {
    // x / sqrt(1x1-conv(x^2) + bias), the shape of a divisive normalization.
    auto x = leaf(rand_tensor({2, 3, 4, 4}, 25, 0.3, 1.0));
    auto g = leaf(rand_tensor({3, 3, 1, 1}, 26, 0.05, 0.3));
    auto beta = leaf(rand_tensor({3}, 27, 0.5, 1.0));
    auto build = [&] {
        ag::Var x2 = ag::mul(x, x);
        ag::Var denom = ag::conv2d(x2, g, beta, 1, 0);
        ag::Var inv = ag::pow_shift(denom, -0.5, 1e-6);
        return ag::mean_all(ag::mul(x, inv));
    };
    CHECK(gradcheck(build, {x, g, beta}, 1e-5) < 1e-5);
}
