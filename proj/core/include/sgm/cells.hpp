#pragma once

// Recurrent cell zoo: the self-gated memory cell, its seven ablation
// variants and the baseline convolutional LSTM / GRU / vanilla cells.
// Every kind exposes the same step signature (E_n, state) -> (h_n, state).

#include "sgm/nn.hpp"
#include "sgm/tensor.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sgm {

enum class CellKind {
    Sgm,
    SgmType1,
    SgmType2,
    SgmType3,
    SgmType4,
    SgmType5,
    SgmType6,
    SgmType7,
    Lstm,
    Gru,
    Vanilla,
};

inline const std::array<CellKind, 11>& all_cell_kinds() {
    static const std::array<CellKind, 11> kinds = {
        CellKind::Sgm,      CellKind::SgmType1, CellKind::SgmType2,
        CellKind::SgmType3, CellKind::SgmType4, CellKind::SgmType5,
        CellKind::SgmType6, CellKind::SgmType7, CellKind::Lstm,
        CellKind::Gru,      CellKind::Vanilla,
    };
    return kinds;
}

inline std::string cell_kind_name(CellKind kind) {
    switch (kind) {
        case CellKind::Sgm: return "sgm";
        case CellKind::SgmType1: return "type1";
        case CellKind::SgmType2: return "type2";
        case CellKind::SgmType3: return "type3";
        case CellKind::SgmType4: return "type4";
        case CellKind::SgmType5: return "type5";
        case CellKind::SgmType6: return "type6";
        case CellKind::SgmType7: return "type7";
        case CellKind::Lstm: return "lstm";
        case CellKind::Gru: return "gru";
        case CellKind::Vanilla: return "vanilla";
    }
    throw std::logic_error("unknown cell kind");
}

inline CellKind parse_cell_kind(const std::string& name) {
    for (CellKind kind : all_cell_kinds())
        if (cell_kind_name(kind) == name) return kind;
    throw std::invalid_argument("unknown cell kind: " + name);
}

template <class T>
struct CellState {
    Tensor<T> h;
    Tensor<T> c;
};

template <class T>
CellState<T> zero_state(std::int64_t batch, std::int64_t height,
                        std::int64_t width, std::int64_t channels = 64) {
    Shape s{batch, channels, height, width};
    return CellState<T>{Tensor<T>::zeros(s), Tensor<T>::zeros(s)};
}

template <class T>
struct Cell {
    CellKind kind = CellKind::Sgm;
    std::int64_t channels = 64;
    std::vector<std::pair<std::string, ConvLayer<T>>> gates;

    ConvLayer<T>& gate(const std::string& name) {
        for (auto& [n, l] : gates)
            if (n == name) return l;
        throw std::logic_error("cell has no gate named " + name);
    }
    const ConvLayer<T>& gate(const std::string& name) const {
        return const_cast<Cell*>(this)->gate(name);
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const auto& [n, l] : gates) total += l.param_count();
        return total;
    }
};

// All gates are 3x3 with `channels` filters; inputs are either one
// feature map (ch) or a two-map concatenation (2ch).
template <class T>
Cell<T> make_cell(CellKind kind, std::uint64_t seed,
                  std::int64_t channels = 64) {
    const std::int64_t ch = channels;
    const std::int64_t ch2 = 2 * channels;
    Cell<T> cell;
    cell.kind = kind;
    cell.channels = channels;
    std::uint64_t i = 0;
    auto gate = [&](const std::string& name, std::int64_t in,
                    Activation act) {
        std::uint64_t gate_seed = seed ^ (0x9E3779B97F4A7C15ull * (++i));
        cell.gates.emplace_back(name, init_conv<T>(ch, in, 3, gate_seed, 1, act));
    };
    switch (kind) {
        case CellKind::Sgm:
            gate("input_gate", ch2, Activation::swish);
            gate("transform_gate", ch, Activation::swish);
            gate("update_gate", ch2, Activation::sigmoid);
            gate("output_gate", ch2, Activation::swish);
            break;
        case CellKind::SgmType1:
        case CellKind::SgmType3:
            gate("input_gate", ch2, Activation::swish);
            gate("transform_gate", ch, Activation::swish);
            gate("update_gate", ch2, Activation::sigmoid);
            gate("output_gate", ch, Activation::swish);
            break;
        case CellKind::SgmType2:
            gate("input_gate", ch2, Activation::swish);
            gate("transform_gate", ch, Activation::swish);
            gate("update_gate", ch2, Activation::sigmoid);
            gate("output_gate", ch2, Activation::swish);
            break;
        case CellKind::SgmType4:
        case CellKind::SgmType6:
        case CellKind::SgmType7:
            gate("input_gate", ch2, Activation::swish);
            gate("update_gate", ch2, Activation::sigmoid);
            gate("output_gate", ch2, Activation::swish);
            break;
        case CellKind::SgmType5:
            gate("input_gate_tanh", ch2, Activation::tanh);
            gate("input_gate_sig", ch2, Activation::sigmoid);
            gate("transform_gate_tanh", ch, Activation::tanh);
            gate("transform_gate_sig", ch, Activation::sigmoid);
            gate("update_gate", ch2, Activation::sigmoid);
            gate("output_gate_sig", ch2, Activation::sigmoid);
            gate("output_gate_tanh", ch, Activation::tanh);
            break;
        case CellKind::Lstm:
            gate("forget_gate", ch2, Activation::sigmoid);
            gate("input_gate", ch2, Activation::sigmoid);
            gate("output_gate", ch2, Activation::sigmoid);
            gate("candidate", ch2, Activation::tanh);
            break;
        case CellKind::Gru:
            gate("update_gate", ch2, Activation::sigmoid);
            gate("reset_gate", ch2, Activation::sigmoid);
            gate("candidate", ch2, Activation::tanh);
            break;
        case CellKind::Vanilla:
            gate("recurrent", ch2, Activation::tanh);
            break;
    }
    return cell;
}

template <class T>
void register_cell(ParamRegistry<T>& registry, const std::string& prefix,
                   Cell<T>& cell) {
    for (auto& [name, layer] : cell.gates)
        registry.add_layer(prefix + "." + name, &layer);
}

// One recurrence step. `e` is the encoded frame (B, ch, H, W).
template <class T>
std::pair<Tensor<T>, CellState<T>> cell_step(const Cell<T>& cell,
                                             const Tensor<T>& e,
                                             const CellState<T>& state) {
    if (e.shape() != state.h.shape() || e.shape() != state.c.shape())
        throw std::invalid_argument("cell_step: input " + shape_str(e.shape()) +
                                    " does not match state " +
                                    shape_str(state.h.shape()));
    const Tensor<T>& h_prev = state.h;
    const Tensor<T>& c_prev = state.c;
    Tensor<T> h, c;
    switch (cell.kind) {
        case CellKind::Sgm: {
            Tensor<T> i = cell.gate("input_gate")(concat_channels(h_prev, e));
            Tensor<T> t = cell.gate("transform_gate")(c_prev);
            Tensor<T> w = cell.gate("update_gate")(concat_channels(i, t));
            c = add(mul(w, t), mul(scalar_sub(T(1), w), i));
            h = cell.gate("output_gate")(concat_channels(c_prev, add(c, e)));
            break;
        }
        case CellKind::SgmType1: {
            // No c_{n-1} block feeding the output gate.
            Tensor<T> i = cell.gate("input_gate")(concat_channels(h_prev, e));
            Tensor<T> t = cell.gate("transform_gate")(c_prev);
            Tensor<T> w = cell.gate("update_gate")(concat_channels(i, t));
            c = add(mul(w, t), mul(scalar_sub(T(1), w), i));
            h = cell.gate("output_gate")(add(c, e));
            break;
        }
        case CellKind::SgmType2: {
            // E_n is not concatenated into the output gate.
            Tensor<T> i = cell.gate("input_gate")(concat_channels(h_prev, e));
            Tensor<T> t = cell.gate("transform_gate")(c_prev);
            Tensor<T> w = cell.gate("update_gate")(concat_channels(i, t));
            c = add(mul(w, t), mul(scalar_sub(T(1), w), i));
            h = cell.gate("output_gate")(concat_channels(c_prev, c));
            break;
        }
        case CellKind::SgmType3: {
            // Output gate reads only the new internal state.
            Tensor<T> i = cell.gate("input_gate")(concat_channels(h_prev, e));
            Tensor<T> t = cell.gate("transform_gate")(c_prev);
            Tensor<T> w = cell.gate("update_gate")(concat_channels(i, t));
            c = add(mul(w, t), mul(scalar_sub(T(1), w), i));
            h = cell.gate("output_gate")(c);
            break;
        }
        case CellKind::SgmType4: {
            // Transform gate deleted; raw c_{n-1} stands in for t_n.
            Tensor<T> i = cell.gate("input_gate")(concat_channels(h_prev, e));
            Tensor<T> w = cell.gate("update_gate")(concat_channels(i, c_prev));
            c = add(mul(w, c_prev), mul(scalar_sub(T(1), w), i));
            h = cell.gate("output_gate")(concat_channels(c_prev, add(c, e)));
            break;
        }
        case CellKind::SgmType5: {
            // Self-gating split into separate tanh and sigmoid layers;
            // the output gate wires like an LSTM: a sigmoid over the
            // h-path multiplying a tanh over the new state.
            Tensor<T> x = concat_channels(h_prev, e);
            Tensor<T> i = mul(cell.gate("input_gate_tanh")(x),
                              cell.gate("input_gate_sig")(x));
            Tensor<T> t = mul(cell.gate("transform_gate_tanh")(c_prev),
                              cell.gate("transform_gate_sig")(c_prev));
            Tensor<T> w = cell.gate("update_gate")(concat_channels(i, t));
            c = add(mul(w, t), mul(scalar_sub(T(1), w), i));
            h = mul(cell.gate("output_gate_sig")(x),
                    cell.gate("output_gate_tanh")(c));
            break;
        }
        case CellKind::SgmType6: {
            // LSTM-style forgetting: the weight map ignores c_{n-1}.
            Tensor<T> x = concat_channels(h_prev, e);
            Tensor<T> i = cell.gate("input_gate")(x);
            Tensor<T> w = cell.gate("update_gate")(x);
            c = add(mul(w, c_prev), mul(scalar_sub(T(1), w), i));
            h = cell.gate("output_gate")(concat_channels(c_prev, add(c, e)));
            break;
        }
        case CellKind::SgmType7: {
            // Forget first, then integrate the filtered input unweighted.
            Tensor<T> x = concat_channels(h_prev, e);
            Tensor<T> w = cell.gate("update_gate")(x);
            Tensor<T> i = cell.gate("input_gate")(x);
            c = add(mul(w, c_prev), i);
            h = cell.gate("output_gate")(concat_channels(c_prev, add(c, e)));
            break;
        }
        case CellKind::Lstm: {
            Tensor<T> x = concat_channels(h_prev, e);
            Tensor<T> f = cell.gate("forget_gate")(x);
            Tensor<T> i = cell.gate("input_gate")(x);
            Tensor<T> o = cell.gate("output_gate")(x);
            Tensor<T> g = cell.gate("candidate")(x);
            c = add(mul(f, c_prev), mul(i, g));
            h = mul(o, tanh_act(c));
            break;
        }
        case CellKind::Gru: {
            Tensor<T> x = concat_channels(h_prev, e);
            Tensor<T> z = cell.gate("update_gate")(x);
            Tensor<T> r = cell.gate("reset_gate")(x);
            Tensor<T> g =
                cell.gate("candidate")(concat_channels(mul(r, h_prev), e));
            h = add(mul(z, h_prev), mul(scalar_sub(T(1), z), g));
            c = c_prev;  // unused, carried as zeros
            break;
        }
        case CellKind::Vanilla: {
            h = cell.gate("recurrent")(concat_channels(h_prev, e));
            c = c_prev;  // unused, carried as zeros
            break;
        }
    }
    return {h, CellState<T>{h, c}};
}

// Kinds whose state update is the convex blend c = w*t + (1-w)*i.
inline bool has_update_blend(CellKind kind) {
    switch (kind) {
        case CellKind::Sgm:
        case CellKind::SgmType1:
        case CellKind::SgmType2:
        case CellKind::SgmType3:
        case CellKind::SgmType5:
            return true;
        default:
            return false;
    }
}

}  // namespace sgm
