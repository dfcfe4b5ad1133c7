#pragma once

// End-to-end fusion model: shared encoder, two independent recurrent
// cells run over the sequence in opposite directions, and a decoder of
// stacked dilated-convolution blocks with a final sigmoid layer.

#include "sgm/cells.hpp"
#include "sgm/nn.hpp"
#include "sgm/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgm {

enum class Mode { unidirectional, bidirectional };

inline std::string mode_name(Mode m) {
    return m == Mode::bidirectional ? "bi" : "uni";
}

inline Mode parse_mode(const std::string& name) {
    if (name == "bi") return Mode::bidirectional;
    if (name == "uni") return Mode::unidirectional;
    throw std::invalid_argument("unknown mode: " + name);
}

// Four parallel 3x3 convolutions with dilations {1,2,4,8}, concatenated
// along channels to cover several receptive fields at once.
template <class T>
struct SdcBlock {
    std::vector<ConvLayer<T>> branches;  // dilations 1, 2, 4, 8

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> a = concat_channels(branches[0](x), branches[1](x));
        Tensor<T> b = concat_channels(branches[2](x), branches[3](x));
        return concat_channels(a, b);
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const auto& l : branches) total += l.param_count();
        return total;
    }
};

template <class T>
SdcBlock<T> make_sdc_block(std::int64_t in_ch, std::int64_t out_ch,
                           std::uint64_t seed) {
    if (out_ch % 4 != 0)
        throw std::invalid_argument("sdc block: output channels must be divisible by 4");
    SdcBlock<T> block;
    std::int64_t dilation = 1;
    for (int i = 0; i < 4; ++i, dilation *= 2)
        block.branches.push_back(init_conv<T>(out_ch / 4, in_ch, 3,
                                              seed ^ (0xD1B54A32D192ED03ull * (i + 1)),
                                              dilation, Activation::swish));
    return block;
}

template <class T>
void register_sdc_block(ParamRegistry<T>& registry, const std::string& prefix,
                        SdcBlock<T>& block) {
    const char* names[4] = {"d1", "d2", "d4", "d8"};
    for (int i = 0; i < 4; ++i)
        registry.add_layer(prefix + "." + names[i], &block.branches[i]);
}

template <class T>
struct FusionNet {
    CellKind kind = CellKind::Sgm;
    Mode mode = Mode::bidirectional;
    std::int64_t channels = 64;

    ConvLayer<T> enc1, enc2;
    Cell<T> fwd_cell;
    std::optional<Cell<T>> rev_cell;  // bidirectional only
    SdcBlock<T> dec_block1, dec_block2;
    ConvLayer<T> dec_final;

    FusionNet() = default;
    FusionNet(const FusionNet&) = delete;
    FusionNet& operator=(const FusionNet&) = delete;
    FusionNet(FusionNet&&) = default;
    FusionNet& operator=(FusionNet&&) = default;

    // Rebuild after any move; entries point into this object.
    ParamRegistry<T> registry() {
        ParamRegistry<T> r;
        r.add_layer("encoder.conv1", &enc1);
        r.add_layer("encoder.conv2", &enc2);
        register_cell(r, "fwd_cell", fwd_cell);
        if (rev_cell) register_cell(r, "rev_cell", *rev_cell);
        register_sdc_block(r, "decoder.block1", dec_block1);
        register_sdc_block(r, "decoder.block2", dec_block2);
        r.add_layer("decoder.final", &dec_final);
        return r;
    }
};

template <class T>
FusionNet<T> make_fusion_net(CellKind kind, Mode mode, std::uint64_t seed,
                             std::int64_t channels = 64) {
    FusionNet<T> net;
    net.kind = kind;
    net.mode = mode;
    net.channels = channels;
    const std::int64_t ch = channels;
    net.enc1 = init_conv<T>(ch, 12, 3, seed ^ 0x1ull, 1, Activation::swish);
    net.enc2 = init_conv<T>(ch, ch, 3, seed ^ 0x2ull, 1, Activation::swish);
    net.fwd_cell = make_cell<T>(kind, seed ^ 0x100ull, ch);
    if (mode == Mode::bidirectional)
        net.rev_cell = make_cell<T>(kind, seed ^ 0x200ull, ch);
    const std::int64_t dec_in = mode == Mode::bidirectional ? 2 * ch : ch;
    net.dec_block1 = make_sdc_block<T>(dec_in, ch, seed ^ 0x300ull);
    net.dec_block2 = make_sdc_block<T>(ch, ch, seed ^ 0x400ull);
    net.dec_final = init_conv<T>(3, ch, 3, seed ^ 0x500ull, 1, Activation::sigmoid);
    return net;
}

namespace detail {

template <class T>
void check_ldr_frame(const Tensor<T>& frame, T exposure) {
    if (frame.shape().size() != 4 || frame.extent(1) != 3)
        throw std::invalid_argument("encode: LDR frame must be (B,3,H,W), got " +
                                    shape_str(frame.shape()));
    if (!(exposure > T(0)))
        throw std::invalid_argument("encode: exposure time must be positive");
    constexpr T slack = T(1e-6);
    for (std::int64_t i = 0; i < frame.numel(); ++i) {
        const T v = frame.data()[i];
        if (v < -slack || v > T(1) + slack)
            throw std::invalid_argument("encode: LDR value " + std::to_string(v) +
                                        " outside [0,1]");
    }
}

// Gamma-lifted radiance estimate H = I^2.2 / t; plain data, no tape.
template <class T>
Tensor<T> gamma_lift(const Tensor<T>& frame, T exposure) {
    std::vector<T> out(frame.numel());
    for (std::int64_t i = 0; i < frame.numel(); ++i)
        out[i] = std::pow(std::max(frame.data()[i], T(0)), T(2.2)) / exposure;
    return Tensor<T>(frame.shape(), std::move(out));
}

}  // namespace detail

// E_n = encoder(I_n (+) H_n (+) I_ref (+) H_ref), 12 input channels.
template <class T>
Tensor<T> encode(const FusionNet<T>& net, const Tensor<T>& frame, T exposure,
                 const Tensor<T>& ref_frame, T ref_exposure) {
    detail::check_ldr_frame(frame, exposure);
    detail::check_ldr_frame(ref_frame, ref_exposure);
    Tensor<T> x_n =
        concat_channels(frame.detached(), detail::gamma_lift(frame, exposure));
    Tensor<T> x_ref = concat_channels(ref_frame.detached(),
                                      detail::gamma_lift(ref_frame, ref_exposure));
    return net.enc2(net.enc1(concat_channels(x_n, x_ref)));
}

// Drives the forward cell over E_1..E_N and, in bidirectional mode, the
// reverse cell over E_N..E_1, both from zero states. Returns the final
// hidden map per direction (second undefined in unidirectional mode).
template <class T>
std::pair<Tensor<T>, Tensor<T>> unroll(const FusionNet<T>& net,
                                       const std::vector<Tensor<T>>& features) {
    if (features.empty())
        throw std::invalid_argument("unroll: empty feature sequence");
    const auto& f0 = features.front();
    for (const auto& f : features)
        if (f.shape() != f0.shape())
            throw std::invalid_argument("unroll: feature shape mismatch");

    CellState<T> state = zero_state<T>(f0.extent(0), f0.extent(2),
                                       f0.extent(3), net.channels);
    Tensor<T> h_fwd;
    for (const auto& e : features) {
        auto [h, next] = cell_step(net.fwd_cell, e, state);
        h_fwd = h;
        state = next;
    }
    Tensor<T> h_rev;
    if (net.mode == Mode::bidirectional) {
        CellState<T> rstate = zero_state<T>(f0.extent(0), f0.extent(2),
                                            f0.extent(3), net.channels);
        for (auto it = features.rbegin(); it != features.rend(); ++it) {
            auto [h, next] = cell_step(*net.rev_cell, *it, rstate);
            h_rev = h;
            rstate = next;
        }
    }
    return {h_fwd, h_rev};
}

template <class T>
Tensor<T> decode(const FusionNet<T>& net, const Tensor<T>& h_fwd,
                 const Tensor<T>& h_rev) {
    Tensor<T> x;
    if (net.mode == Mode::bidirectional) {
        if (!h_rev.defined())
            throw std::invalid_argument("decode: bidirectional mode needs both directions");
        x = concat_channels(h_fwd, h_rev);
    } else {
        x = h_fwd;
    }
    return net.dec_final(net.dec_block2(net.dec_block1(x)));
}

// Full pipeline on one sequence of frames (each (B,3,H,W), values in [0,1]).
template <class T>
Tensor<T> forward(const FusionNet<T>& net, const std::vector<Tensor<T>>& frames,
                  const std::vector<T>& exposures, std::size_t ref_index) {
    if (frames.empty()) throw std::invalid_argument("forward: empty sequence");
    if (frames.size() != exposures.size())
        throw std::invalid_argument("forward: frame/exposure count mismatch");
    if (ref_index >= frames.size())
        throw std::invalid_argument("forward: reference index out of range");
    std::vector<Tensor<T>> features;
    features.reserve(frames.size());
    for (std::size_t n = 0; n < frames.size(); ++n)
        features.push_back(encode(net, frames[n], exposures[n],
                                  frames[ref_index], exposures[ref_index]));
    auto [h_fwd, h_rev] = unroll(net, features);
    return decode(net, h_fwd, h_rev);
}

}  // namespace sgm
