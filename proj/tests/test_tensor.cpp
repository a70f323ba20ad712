#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scenefit/nn.hpp"
#include "scenefit/rng.hpp"
#include "scenefit/tensor.hpp"

using namespace scenefit;

namespace {

Var random_leaf(Shape shape, Rng& rng, bool rg = true) {
    const size_t n = static_cast<size_t>(numel(shape));
    return leaf(std::move(shape), rng.normal_vec(n), rg);
}

}  // namespace

TEST_CASE("elementwise forward values") {
    Var a = leaf({2, 2}, {1.0, -2.0, 3.0, 0.5});
    Var b = leaf({2, 2}, {0.5, 4.0, -1.0, 2.0});
    CHECK(add(a, b).data()[1] == doctest::Approx(2.0));
    CHECK(mul(a, b).data()[2] == doctest::Approx(-3.0));
    CHECK(sub(a, b).data()[3] == doctest::Approx(-1.5));
    CHECK(scenefit::exp(scalar(0.0)).item() == doctest::Approx(1.0));
    CHECK(scenefit::sqrt(scalar(9.0)).item() == doctest::Approx(3.0));
    CHECK(relu(scalar(-3.0)).item() == 0.0);
    CHECK(leaky_relu(scalar(-2.0), 0.1).item() == doctest::Approx(-0.2));
}

TEST_CASE("matmul against hand computation") {
    Var a = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    Var b = leaf({3, 2}, {7, 8, 9, 10, 11, 12});
    Var c = matmul(a, b);
    CHECK(c.data()[0] == doctest::Approx(58));
    CHECK(c.data()[1] == doctest::Approx(64));
    CHECK(c.data()[2] == doctest::Approx(139));
    CHECK(c.data()[3] == doctest::Approx(154));
}

TEST_CASE("conv2d matches direct summation") {
    Rng rng(7);
    Var x = random_leaf({2, 3, 5, 6}, rng, false);
    Var w = random_leaf({4, 3, 3, 3}, rng, false);
    const int stride = 2, pad = 1;
    Var y = conv2d(x, w, stride, pad);
    REQUIRE(y.shape() == Shape({2, 4, 3, 3}));
    // independent direct evaluation
    for (int n = 0; n < 2; n++) {
        for (int o = 0; o < 4; o++) {
            for (int oi = 0; oi < 3; oi++) {
                for (int oj = 0; oj < 3; oj++) {
                    double s = 0.0;
                    for (int c = 0; c < 3; c++) {
                        for (int ki = 0; ki < 3; ki++) {
                            for (int kj = 0; kj < 3; kj++) {
                                int ii = oi * stride - pad + ki;
                                int jj = oj * stride - pad + kj;
                                if (ii < 0 || ii >= 5 || jj < 0 || jj >= 6) {
                                    continue;
                                }
                                s += x.data()[((n * 3 + c) * 5 + ii) * 6 + jj] *
                                     w.data()[((o * 3 + c) * 3 + ki) * 3 + kj];
                            }
                        }
                    }
                    CHECK(y.data()[((n * 4 + o) * 3 + oi) * 3 + oj] ==
                          doctest::Approx(s).epsilon(1e-10));
                }
            }
        }
    }
}

TEST_CASE("gradient checks on composite expressions") {
    Rng rng(11);

    SUBCASE("dense + activations") {
        Var x = random_leaf({3, 4}, rng, false);
        Var w = random_leaf({4, 5}, rng);
        Var b = random_leaf({5}, rng);
        auto loss = [&]() {
            Var h = tanh(add(matmul(x, w), broadcast_rows(b, 3)));
            return mean_all(mul(h, sigmoid(h)));
        };
        CHECK(rel_grad_error(loss, w, 1e-5) < 1e-6);
        CHECK(rel_grad_error(loss, b, 1e-5) < 1e-6);
    }

    SUBCASE("conv chain with pooling and concat") {
        Var x = random_leaf({2, 2, 4, 4}, rng, false);
        Var w1 = random_leaf({3, 2, 3, 3}, rng);
        Var w2 = random_leaf({1, 5, 1, 1}, rng);
        auto loss = [&]() {
            Var h = leaky_relu(conv2d(x, w1, 1, 1), 0.2);
            Var cat = concat_c({h, slice_c(x, 0, 2)});
            Var y = conv2d(cat, w2, 1, 0);
            return mean_all(square(avgpool2x(y)));
        };
        CHECK(rel_grad_error(loss, w1, 1e-5) < 1e-6);
        CHECK(rel_grad_error(loss, w2, 1e-5) < 1e-6);
    }

    SUBCASE("broadcast reduce pairs") {
        Var x = random_leaf({2, 3, 2, 2}, rng, false);
        Var s = random_leaf({2, 3}, rng);
        Var c = random_leaf({3}, rng);
        auto loss = [&]() {
            Var h = mul(x, broadcast_nc(s, 2, 2));
            h = add(h, broadcast_c(c, 2, 2, 2));
            Var nrm = channel_unit_norm(h);
            return mean_all(abs(nrm));
        };
        CHECK(rel_grad_error(loss, s, 1e-5) < 1e-6);
        CHECK(rel_grad_error(loss, c, 1e-5) < 1e-6);
    }

    SUBCASE("upsample and sum_hw") {
        Var x = random_leaf({2, 2, 3, 3}, rng, false);
        Var w = random_leaf({2, 2, 3, 3}, rng);
        auto loss = [&]() {
            Var h = upsample2x(mul(x, w));
            return mean_all(square(sum_hw(h)));
        };
        CHECK(rel_grad_error(loss, w, 1e-5) < 1e-6);
    }
}

TEST_CASE("second-order: grad of gradient-norm penalties") {
    Rng rng(23);

    SUBCASE("quadratic has exact hessian action") {
        // f(x) = sum(x^2); d/dx = 2x; penalty = sum((df/dx)^2) = 4 sum(x^2)
        // d(penalty)/dx = 8x
        Var x = leaf({3}, {1.0, -2.0, 0.5}, true);
        Var f = sum_all(square(x));
        Var gx = grad(f, {x})[0];
        Var penalty = sum_all(square(gx));
        CHECK(penalty.item() == doctest::Approx(4.0 * (1 + 4 + 0.25)));
        Var gp = grad(penalty, {x})[0];
        CHECK(gp.data()[0] == doctest::Approx(8.0));
        CHECK(gp.data()[1] == doctest::Approx(-16.0));
        CHECK(gp.data()[2] == doctest::Approx(4.0));
    }

    SUBCASE("R1-style penalty on a small conv net, numeric check") {
        Var w1 = random_leaf({2, 1, 3, 3}, rng);
        Var b1 = random_leaf({2}, rng);
        Var w2 = random_leaf({24, 1}, rng);
        Var x_in = random_leaf({2, 1, 4, 3}, rng, false);
        auto penalty_fn = [&]() {
            Var x = leaf(x_in.shape(), x_in.data(), true);
            Var h = leaky_relu(
                add(conv2d(x, w1, 1, 1), broadcast_c(b1, 2, 4, 3)), 0.2);
            Var logits = matmul(reshape(h, {2, 24}), w2);
            Var gx = grad(sum_all(logits), {x})[0];
            return mean_all(square(gx));
        };
        CHECK(rel_grad_error(penalty_fn, w1, 1e-5) < 1e-5);
        CHECK(rel_grad_error(penalty_fn, w2, 1e-5) < 1e-5);
    }

    SUBCASE("path-length-style penalty through matmul chain") {
        Var a = random_leaf({4, 6}, rng);
        Var y = random_leaf({2, 6}, rng, false);
        auto penalty_fn = [&]() {
            Var w = leaf({2, 4}, {0.3, -0.2, 0.7, 0.1, -0.5, 0.4, 0.2, 0.9},
                         true);
            Var out = tanh(matmul(w, a));
            Var s = sum_all(mul(out, y));
            Var gw = grad(s, {w})[0];
            Var len = sqrt(add_scalar(sum_all(square(gw)), 1e-8));
            return square(add_scalar(len, -1.0));
        };
        CHECK(rel_grad_error(penalty_fn, a, 1e-5) < 1e-5);
    }
}

TEST_CASE("adam reduces a quadratic") {
    Var x = leaf({4}, {2.0, -3.0, 1.5, 0.7}, true);
    Adam opt({x}, 0.1);
    for (int i = 0; i < 200; i++) {
        Var loss = sum_all(square(x));
        auto g = grad(loss, {x});
        opt.step(g);
    }
    for (double v : x.data()) {
        CHECK(std::abs(v) < 1e-2);
    }
}

TEST_CASE("masked l1 semantics") {
    Var a = full({1, 3, 2, 2}, 0.5);
    Var b = full({1, 3, 2, 2}, 0.4);
    SUBCASE("full mask gives plain mean abs difference") {
        Var m = full({1, 1, 2, 2}, 1.0);
        CHECK(masked_l1(a, b, m).item() == doctest::Approx(0.1));
    }
    SUBCASE("empty mask gives zero") {
        Var m = zeros({1, 1, 2, 2});
        CHECK(masked_l1(a, b, m).item() == 0.0);
    }
    SUBCASE("half mask still normalizes to mean over masked pixels") {
        Var m = leaf({1, 1, 2, 2}, {1, 1, 0, 0});
        CHECK(masked_l1(a, b, m).item() == doctest::Approx(0.1));
    }
}

TEST_CASE("determinism of rng streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; i++) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(43);
    CHECK(c.next_u64() != d.next_u64());
    CHECK(derive_seed(1, "vae") != derive_seed(1, "gan"));
    CHECK(derive_seed(1, "vae") == derive_seed(1, "vae"));
}

TEST_CASE("rng normal moments") {
    Rng rng(5);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; i++) {
        double x = rng.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}
