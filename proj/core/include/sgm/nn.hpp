#pragma once

// Convolution layers with a fused activation, fan-balanced initialization
// and a name -> parameter registry with stable iteration order.

#include "sgm/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sgm {

enum class Activation { none, sigmoid, tanh, swish };

namespace detail {

// Uniform double in [0,1) built from the top 53 bits of the generator,
// independent of the standard library's distribution implementation.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

template <class T>
struct ConvLayer {
    Tensor<T> kernel;  // (out, in, k, k)
    Tensor<T> bias;    // (out)
    std::int64_t dilation = 1;
    Activation act = Activation::none;

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> y = conv2d(x, kernel, bias, dilation);
        switch (act) {
            case Activation::none: return y;
            case Activation::sigmoid: return sigmoid(y);
            case Activation::tanh: return tanh_act(y);
            case Activation::swish: return swish(y);
        }
        throw std::logic_error("conv layer: unknown activation");
    }

    std::int64_t in_channels() const { return kernel.extent(1); }
    std::int64_t out_channels() const { return kernel.extent(0); }
    std::int64_t param_count() const { return kernel.numel() + bias.numel(); }
};

// Kernel ~ U[-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)),
// fans counted as channels * k^2. Bias starts at zero. Fully determined
// by the seed.
template <class T>
ConvLayer<T> init_conv(std::int64_t out_ch, std::int64_t in_ch, std::int64_t k,
                       std::uint64_t seed, std::int64_t dilation = 1,
                       Activation act = Activation::none) {
    if (out_ch < 1 || in_ch < 1 || k < 1)
        throw std::invalid_argument("init_conv: extents must be positive");
    const double fan_in = static_cast<double>(in_ch * k * k);
    const double fan_out = static_cast<double>(out_ch * k * k);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::mt19937_64 rng(seed);
    std::vector<T> w(static_cast<std::size_t>(out_ch * in_ch * k * k));
    for (auto& v : w)
        v = static_cast<T>((2.0 * detail::uniform_unit(rng) - 1.0) * limit);
    ConvLayer<T> layer;
    layer.kernel = Tensor<T>(Shape{out_ch, in_ch, k, k}, std::move(w));
    layer.bias = Tensor<T>::zeros(Shape{out_ch});
    layer.dilation = dilation;
    layer.act = act;
    return layer;
}

// Ordered map from hierarchical name to a parameter tensor owned by the
// model. Iteration order is insertion order and stable across runs.
template <class T>
class ParamRegistry {
public:
    void add(const std::string& name, Tensor<T>* param) {
        for (const auto& [n, p] : entries_)
            if (n == name)
                throw std::invalid_argument("registry: duplicate name " + name);
        entries_.emplace_back(name, param);
    }

    void add_layer(const std::string& prefix, ConvLayer<T>* layer) {
        add(prefix + ".kernel", &layer->kernel);
        add(prefix + ".bias", &layer->bias);
    }

    const std::vector<std::pair<std::string, Tensor<T>*>>& entries() const {
        return entries_;
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const auto& [n, p] : entries_) total += p->numel();
        return total;
    }

    std::int64_t param_count(const std::string& prefix) const {
        std::int64_t total = 0;
        for (const auto& [n, p] : entries_)
            if (n.rfind(prefix, 0) == 0) total += p->numel();
        return total;
    }

    Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, p] : entries_)
            if (n == name) return p;
        return nullptr;
    }

    void attach(Tape<T>& tape) {
        for (auto& [n, p] : entries_) p->attach(&tape, tape.leaf(p->numel()));
    }

    void detach() {
        for (auto& [n, p] : entries_) p->detach();
    }

private:
    std::vector<std::pair<std::string, Tensor<T>*>> entries_;
};

}  // namespace sgm
