#pragma once

// HDR-domain math: mu-law tonemap, training loss and PSNR metrics.

#include "sgm/tensor.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sgm {

struct TonemapConfig {
    double mu = 5000.0;
};

// T(y) = log(1 + mu*y) / log(1 + mu), a strictly increasing bijection of
// [0,1] onto [0,1]. Differentiable; recorded on the tape when the input is.
template <class T>
Tensor<T> mu_law(const Tensor<T>& y, const TonemapConfig& cfg = {}) {
    if (!(cfg.mu > 0)) throw std::invalid_argument("mu_law: mu must be positive");
    const T mu = static_cast<T>(cfg.mu);
    const T denom = std::log1p(mu);
    for (std::int64_t i = 0; i < y.numel(); ++i)
        if (y.data()[i] < T(-1e-6))
            throw std::invalid_argument("mu_law: negative input " +
                                        std::to_string(y.data()[i]));
    return map_unary(
        y,
        [mu, denom](T v) {
            return std::log1p(mu * std::max(v, T(0))) / denom;
        },
        [mu, denom](T v) {
            return mu / ((T(1) + mu * std::max(v, T(0))) * denom);
        });
}

// Mean squared error between the tonemapped prediction and ground truth.
template <class T>
Tensor<T> tonemapped_loss(const Tensor<T>& y, const Tensor<T>& y_gt,
                          const TonemapConfig& cfg = {}) {
    detail::check_same_shape(y, y_gt, "loss");
    Tensor<T> d = sub(mu_law(y, cfg), mu_law(y_gt, cfg));
    return reduce_mean(mul(d, d));
}

// PSNR with peak 1; identical inputs yield +infinity.
template <class T>
double psnr_linear(const Tensor<T>& y, const Tensor<T>& y_gt) {
    detail::check_same_shape(y, y_gt, "psnr");
    double mse = 0.0;
    for (std::int64_t i = 0; i < y.numel(); ++i) {
        const double d = static_cast<double>(y.data()[i]) -
                         static_cast<double>(y_gt.data()[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(y.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

template <class T>
double psnr_tonemapped(const Tensor<T>& y, const Tensor<T>& y_gt,
                       const TonemapConfig& cfg = {}) {
    return psnr_linear(mu_law(y.detached(), cfg), mu_law(y_gt.detached(), cfg));
}

}  // namespace sgm
