#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sgm/hdr.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace sgm;

TEST_CASE("mu-law endpoints are exact") {
    Tensor<double> ends({2}, {0.0, 1.0});
    Tensor<double> mapped = mu_law(ends);
    CHECK(mapped.data()[0] == 0.0);
    CHECK(mapped.data()[1] == 1.0);
}

TEST_CASE("mu-law midpoint value") {
    // log1p(2500) / log1p(5000), evaluated independently and frozen.
    Tensor<double> y = mu_law(Tensor<double>::scalar(0.5));
    CHECK(y.item() == doctest::Approx(0.9186432718796463).epsilon(1e-14));
}

TEST_CASE("mu-law is a strictly increasing bijection of [0,1]") {
    const int n = 10000;
    std::vector<double> grid(n + 1);
    for (int i = 0; i <= n; ++i) grid[i] = static_cast<double>(i) / n;
    Tensor<double> mapped = mu_law(Tensor<double>({n + 1}, grid));
    for (int i = 1; i <= n; ++i)
        CHECK(mapped.data()[i] > mapped.data()[i - 1]);
    CHECK(mapped.data()[0] == 0.0);
    CHECK(mapped.data()[n] == 1.0);
}

TEST_CASE("mu-law input validation") {
    CHECK_THROWS(mu_law(Tensor<double>::scalar(-0.01)));
    CHECK_THROWS(mu_law(Tensor<double>::scalar(0.5), TonemapConfig{0.0}));
    // Tiny negatives from numerical noise are clamped, not rejected.
    CHECK(mu_law(Tensor<double>::scalar(-1e-9)).item() == 0.0);
}

TEST_CASE("tonemapped loss on the single-pixel example") {
    Tensor<double> y = Tensor<double>::scalar(0.5);
    Tensor<double> gt = Tensor<double>::scalar(1.0);
    CHECK(tonemapped_loss(y, gt).item() ==
          doctest::Approx(0.006618917210449144).epsilon(1e-12));
}

TEST_CASE("psnr of a known mse and the infinity sentinel") {
    // mse == 0.01 exactly (as the nearest double): d = sqrt(0.01).
    const double d = std::sqrt(0.01);
    Tensor<double> y = Tensor<double>::full({10}, d);
    Tensor<double> gt = Tensor<double>::zeros({10});
    CHECK(psnr_linear(y, gt) == 20.0);
    CHECK(std::isinf(psnr_linear(gt, gt)));
    CHECK(psnr_linear(gt, gt) > 0.0);
}

TEST_CASE("tonemapped psnr on the single-pixel example") {
    Tensor<double> y = Tensor<double>::scalar(0.5);
    Tensor<double> gt = Tensor<double>::scalar(1.0);
    CHECK(psnr_tonemapped(y, gt) ==
          doctest::Approx(21.79213051042021).epsilon(1e-12));
}

TEST_CASE("mu-law gradient matches finite differences") {
    std::vector<double> vals = {0.0, 1e-5, 0.01, 0.2, 0.7, 1.0};
    Tensor<double> x({static_cast<std::int64_t>(vals.size())}, vals);
    Tape<double> tape;
    x.attach(&tape, tape.leaf(x.numel()));
    tape.backward(reduce_mean(mu_law(x)));
    auto grad = tape.grad(x);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double h = 1e-8;
        auto vp = vals, vm = vals;
        vp[i] += h;
        vm[i] = std::max(vm[i] - h, 0.0);
        const double fd =
            (reduce_mean(mu_law(Tensor<double>(x.shape(), vp))).item() -
             reduce_mean(mu_law(Tensor<double>(x.shape(), vm))).item()) /
            (vp[i] - vm[i]);
        // The curve bends sharply near zero, so central differences carry
        // visible truncation error there.
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("loss gradient points from prediction toward target") {
    Tensor<double> y = Tensor<double>::full({4}, 0.3);
    Tensor<double> gt = Tensor<double>::full({4}, 0.8);
    Tape<double> tape;
    y.attach(&tape, tape.leaf(y.numel()));
    tape.backward(tonemapped_loss(y, gt));
    for (double g : tape.grad(y)) CHECK(g < 0.0);  // increase y to reduce loss
}
