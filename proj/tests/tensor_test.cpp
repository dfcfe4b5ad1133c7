#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sgm/tensor.hpp"
#include "sgm/nn.hpp"
#include "sgm/train.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

using namespace sgm;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (hi - lo) * detail::uniform_unit(rng);
    return v;
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
    auto n = shape_numel(shape);
    return Tensor<double>(std::move(shape),
                          random_vec(static_cast<std::size_t>(n), seed));
}

// Direct nested-loop convolution, deliberately sharing nothing with the
// im2col path it checks.
std::vector<double> conv_reference(const Tensor<double>& x,
                                   const Tensor<double>& kernel,
                                   const Tensor<double>& bias,
                                   std::int64_t dilation) {
    const std::int64_t B = x.extent(0), Cin = x.extent(1);
    const std::int64_t H = x.extent(2), W = x.extent(3);
    const std::int64_t Cout = kernel.extent(0), k = kernel.extent(2);
    const std::int64_t ctr = (k - 1) / 2;
    std::vector<double> out(static_cast<std::size_t>(B * Cout * H * W), 0.0);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t oc = 0; oc < Cout; ++oc)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t xx = 0; xx < W; ++xx) {
                    double acc = bias.data()[oc];
                    for (std::int64_t ic = 0; ic < Cin; ++ic)
                        for (std::int64_t ki = 0; ki < k; ++ki)
                            for (std::int64_t kj = 0; kj < k; ++kj) {
                                const std::int64_t sy = y + dilation * (ki - ctr);
                                const std::int64_t sx = xx + dilation * (kj - ctr);
                                if (sy < 0 || sy >= H || sx < 0 || sx >= W)
                                    continue;
                                acc += x.data()[((b * Cin + ic) * H + sy) * W + sx] *
                                       kernel.data()[((oc * Cin + ic) * k + ki) * k + kj];
                            }
                    out[static_cast<std::size_t>(
                        ((b * Cout + oc) * H + y) * W + xx)] = acc;
                }
    return out;
}

}  // namespace

TEST_CASE("elementwise arithmetic values") {
    Tensor<double> a({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> b({2, 2}, {0.5, -1.0, 2.0, 0.0});
    CHECK(add(a, b).vec() == std::vector<double>{1.5, 1.0, 5.0, 4.0});
    CHECK(sub(a, b).vec() == std::vector<double>{0.5, 3.0, 1.0, 4.0});
    CHECK(mul(a, b).vec() == std::vector<double>{0.5, -2.0, 6.0, 0.0});
    CHECK(scalar_mul(a, 2.0).vec() == std::vector<double>{2.0, 4.0, 6.0, 8.0});
    CHECK(scalar_add(a, -1.0).vec() == std::vector<double>{0.0, 1.0, 2.0, 3.0});
    CHECK(scalar_sub(1.0, b).vec() == std::vector<double>{0.5, 2.0, -1.0, 1.0});
    CHECK(reduce_mean(a).item() == doctest::Approx(2.5).epsilon(1e-15));
    CHECK_THROWS(add(a, Tensor<double>::zeros({3})));
}

TEST_CASE("elementwise gradients") {
    Tape<double> tape;
    Tensor<double> a({4}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> b({4}, {0.5, -1.0, 2.0, 0.25});
    a.attach(&tape, tape.leaf(4));
    b.attach(&tape, tape.leaf(4));
    // loss = mean((a*b + (1-a))^2)
    Tensor<double> y = add(mul(a, b), scalar_sub(1.0, a));
    Tensor<double> loss = reduce_mean(mul(y, y));
    tape.backward(loss);
    auto ga = tape.grad(a);
    auto gb = tape.grad(b);
    for (int i = 0; i < 4; ++i) {
        const double yi = a.data()[i] * b.data()[i] + 1.0 - a.data()[i];
        CHECK(ga[i] == doctest::Approx(2.0 * yi * (b.data()[i] - 1.0) / 4.0)
                           .epsilon(1e-12));
        CHECK(gb[i] == doctest::Approx(2.0 * yi * a.data()[i] / 4.0)
                           .epsilon(1e-12));
    }
}

TEST_CASE("backward requires scalar loss on the same tape") {
    Tape<double> tape;
    Tensor<double> a = random_tensor({2, 3}, 1);
    a.attach(&tape, tape.leaf(a.numel()));
    Tensor<double> y = mul(a, a);
    CHECK_THROWS(tape.backward(y));  // not scalar
    Tape<double> other;
    CHECK_THROWS(other.backward(reduce_mean(y)));  // wrong tape
}

TEST_CASE("unreachable leaf gradient stays exactly zero") {
    Tape<double> tape;
    Tensor<double> a = random_tensor({4}, 2);
    Tensor<double> unused = random_tensor({4}, 3);
    a.attach(&tape, tape.leaf(4));
    unused.attach(&tape, tape.leaf(4));
    tape.backward(reduce_mean(mul(a, a)));
    for (double g : tape.grad(unused)) CHECK(g == 0.0);
}

TEST_CASE("concat and slice are inverse and route gradients") {
    Tensor<double> a = random_tensor({2, 3, 4, 5}, 4);
    Tensor<double> b = random_tensor({2, 2, 4, 5}, 5);
    Tape<double> tape;
    a.attach(&tape, tape.leaf(a.numel()));
    b.attach(&tape, tape.leaf(b.numel()));
    Tensor<double> cat = concat_channels(a, b);
    CHECK(cat.shape() == Shape{2, 5, 4, 5});
    CHECK(slice_channels(cat, 0, 3).vec() == a.vec());
    CHECK(slice_channels(cat, 3, 2).vec() == b.vec());
    tape.backward(reduce_mean(mul(slice_channels(cat, 3, 2),
                                  slice_channels(cat, 3, 2))));
    for (double g : tape.grad(a)) CHECK(g == 0.0);
    bool any = false;
    for (double g : tape.grad(b)) any = any || g != 0.0;
    CHECK(any);
    CHECK_THROWS(slice_channels(cat, 4, 2));
    CHECK_THROWS(concat_channels(a, Tensor<double>::zeros({2, 2, 4, 4})));
}

TEST_CASE("activation values and derivatives") {
    Tensor<double> x({5}, {-30.0, -1.0, 0.0, 1.0, 30.0});
    Tensor<double> s = sigmoid(x);
    CHECK(s.data()[2] == 0.5);
    CHECK(s.data()[0] == doctest::Approx(std::exp(-30.0)).epsilon(1e-10));
    CHECK(s.data()[4] == doctest::Approx(1.0).epsilon(1e-12));
    Tensor<double> w = swish(x);
    CHECK(w.data()[2] == 0.0);
    CHECK(w.data()[3] ==
          doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(tanh_act(x).data()[3] == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));

    // Finite differences on each activation.
    for (auto f : {&sigmoid<double>, &tanh_act<double>, &swish<double>}) {
        Tensor<double> v = random_tensor({8}, 11);
        Tape<double> tape;
        v.attach(&tape, tape.leaf(8));
        tape.backward(reduce_mean(f(v)));
        auto grad = tape.grad(v);
        for (int i = 0; i < 8; ++i) {
            const double h = 1e-6;
            Tensor<double> vp = v.detached();
            Tensor<double> vm = v.detached();
            std::vector<double> up(v.vec()), um(v.vec());
            up[i] += h;
            um[i] -= h;
            const double fd = (reduce_mean(f(Tensor<double>({8}, up))).item() -
                               reduce_mean(f(Tensor<double>({8}, um))).item()) /
                              (2.0 * h);
            CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("conv2d matches the nested-loop reference") {
    struct Case {
        std::int64_t B, Cin, Cout, H, W, k, dilation;
    };
    for (const Case& c : {Case{1, 1, 1, 5, 5, 3, 1}, Case{2, 3, 4, 6, 7, 3, 1},
                          Case{1, 4, 2, 9, 9, 3, 2}, Case{1, 2, 3, 11, 8, 5, 1},
                          Case{1, 2, 2, 12, 12, 3, 4}}) {
        Tensor<double> x = random_tensor({c.B, c.Cin, c.H, c.W}, 100 + c.k);
        Tensor<double> kernel =
            random_tensor({c.Cout, c.Cin, c.k, c.k}, 200 + c.dilation);
        Tensor<double> bias = random_tensor({c.Cout}, 300);
        Tensor<double> y = conv2d(x, kernel, bias, c.dilation);
        auto ref = conv_reference(x, kernel, bias, c.dilation);
        REQUIRE(y.numel() == static_cast<std::int64_t>(ref.size()));
        for (std::int64_t i = 0; i < y.numel(); ++i)
            CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d argument validation") {
    Tensor<double> x = random_tensor({1, 2, 4, 4}, 1);
    Tensor<double> k3 = random_tensor({3, 2, 3, 3}, 2);
    Tensor<double> b3 = random_tensor({3}, 3);
    CHECK_THROWS(conv2d(random_tensor({2, 4, 4}, 4), k3, b3));
    CHECK_THROWS(conv2d(x, random_tensor({3, 5, 3, 3}, 5), b3));  // channels
    CHECK_THROWS(conv2d(x, random_tensor({3, 2, 2, 2}, 6),
                        b3));  // even kernel
    CHECK_THROWS(conv2d(x, k3, random_tensor({4}, 7)));  // bias extent
    CHECK_THROWS(conv2d(x, k3, b3, 0));                  // dilation
}

TEST_CASE("conv2d gradients match finite differences") {
    Tensor<double> x = random_tensor({1, 2, 5, 5}, 21);
    Tensor<double> kernel = random_tensor({2, 2, 3, 3}, 22);
    Tensor<double> bias = random_tensor({2}, 23);

    Tape<double> tape;
    x.attach(&tape, tape.leaf(x.numel()));
    kernel.attach(&tape, tape.leaf(kernel.numel()));
    bias.attach(&tape, tape.leaf(bias.numel()));
    Tensor<double> y = conv2d(x, kernel, bias, 2);
    tape.backward(reduce_mean(mul(y, y)));

    auto fd_loss = [&](const Tensor<double>& xx, const Tensor<double>& kk,
                       const Tensor<double>& bb) {
        Tensor<double> yy = conv2d(xx.detached(), kk.detached(), bb.detached(), 2);
        return reduce_mean(mul(yy, yy)).item();
    };
    const double h = 1e-6;
    auto check_grad = [&](Tensor<double>& t, const std::vector<double>& grad) {
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + h;
            const double lp = fd_loss(x, kernel, bias);
            t.data()[i] = saved - h;
            const double lm = fd_loss(x, kernel, bias);
            t.data()[i] = saved;
            CHECK(grad[i] ==
                  doctest::Approx((lp - lm) / (2.0 * h)).epsilon(1e-6));
        }
    };
    check_grad(bias, tape.grad(bias));
    check_grad(kernel, tape.grad(kernel));
    check_grad(x, tape.grad(x));
}

TEST_CASE("conv2d linearity in the input") {
    Tensor<double> a = random_tensor({1, 3, 6, 6}, 31);
    Tensor<double> b = random_tensor({1, 3, 6, 6}, 32);
    Tensor<double> kernel = random_tensor({2, 3, 3, 3}, 33);
    Tensor<double> zero_bias = Tensor<double>::zeros({2});
    Tensor<double> lhs = conv2d(add(a, b), kernel, zero_bias);
    Tensor<double> rhs =
        add(conv2d(a, kernel, zero_bias), conv2d(b, kernel, zero_bias));
    for (std::int64_t i = 0; i < lhs.numel(); ++i)
        CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-12));
}

TEST_CASE("conv2d is bitwise deterministic across runs") {
    Tensor<double> x = random_tensor({2, 4, 8, 8}, 41);
    Tensor<double> kernel = random_tensor({4, 4, 3, 3}, 42);
    Tensor<double> bias = random_tensor({4}, 43);
    Tensor<double> y1 = conv2d(x, kernel, bias);
    Tensor<double> y2 = conv2d(x, kernel, bias);
    CHECK(std::memcmp(y1.data(), y2.data(),
                      sizeof(double) * static_cast<std::size_t>(y1.numel())) == 0);
}

TEST_CASE("gradcheck passes for a small conv chain over ten seeds") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ConvLayer<double> l1 = init_conv<double>(3, 2, 3, seed * 7 + 1, 1,
                                                 Activation::swish);
        ConvLayer<double> l2 = init_conv<double>(1, 3, 3, seed * 7 + 2, 2,
                                                 Activation::sigmoid);
        ParamRegistry<double> params;
        params.add_layer("l1", &l1);
        params.add_layer("l2", &l2);
        Tensor<double> x = random_tensor({1, 2, 6, 6}, seed * 7 + 3);
        auto loss_fn = [&](Tape<double>&) {
            Tensor<double> y = l2(l1(x));
            return reduce_mean(mul(y, y));
        };
        GradCheckReport report = gradcheck(params, loss_fn, 1e-6, 0, seed);
        INFO("seed ", seed, " worst ", report.worst_param, " err ",
             report.max_rel_err);
        CHECK(report.pass);
    }
}

TEST_CASE("tensor shape and buffer checks") {
    CHECK_THROWS(Tensor<double>({2, 3}, {1.0, 2.0}));
    Tensor<double> s = Tensor<double>::scalar(2.5);
    CHECK(s.item() == 2.5);
    CHECK_THROWS(Tensor<double>::zeros({2}).item());
    Tensor<float> f = s.cast<float>();
    CHECK(f.item() == 2.5f);
    CHECK(all_finite(s));
    Tensor<double> bad({1}, {std::nan("")});
    CHECK_FALSE(all_finite(bad));
}
