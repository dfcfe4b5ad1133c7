#pragma once

// Dense NCHW tensors with a reverse-mode differentiation tape.
// A tape is confined to one logical thread; every op records a backward
// rule when at least one input is attached. Accumulation order is fixed
// so repeated runs are bitwise identical.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgm {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                           std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

template <class T>
class Tape;

template <class T>
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)),
          buf_(std::make_shared<std::vector<T>>(std::move(data))) {
        if (shape_numel(shape_) != static_cast<std::int64_t>(buf_->size()))
            throw std::invalid_argument("tensor: buffer length " +
                                        std::to_string(buf_->size()) +
                                        " does not match shape " +
                                        shape_str(shape_));
    }

    static Tensor zeros(Shape shape) {
        auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)));
    }
    static Tensor full(Shape shape, T value) {
        auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(n, value));
    }
    static Tensor scalar(T value) { return Tensor({}, {value}); }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_numel(shape_); }
    std::int64_t extent(std::size_t axis) const { return shape_.at(axis); }
    bool defined() const { return buf_ != nullptr; }

    const T* data() const { return buf_->data(); }
    T* data() { return buf_->data(); }
    const std::vector<T>& vec() const { return *buf_; }
    std::shared_ptr<const std::vector<T>> buffer() const { return buf_; }

    T item() const {
        if (numel() != 1)
            throw std::invalid_argument("item(): tensor is not scalar, shape " +
                                        shape_str(shape_));
        return (*buf_)[0];
    }

    Tape<T>* tape() const { return tape_; }
    int node() const { return node_; }
    bool attached() const { return tape_ != nullptr && node_ >= 0; }
    void attach(Tape<T>* tape, int node) {
        tape_ = tape;
        node_ = node;
    }
    void detach() {
        tape_ = nullptr;
        node_ = -1;
    }
    Tensor detached() const {
        Tensor t = *this;
        t.detach();
        return t;
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(buf_->size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<U>((*buf_)[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> buf_;
    Tape<T>* tape_ = nullptr;
    int node_ = -1;
};

// Reverse-mode tape. Nodes are recorded in execution order; backward()
// replays them last-to-first. A leaf has no backward rule. Gradients of
// leaves never reached by the loss stay exactly zero.
template <class T>
class Tape {
public:
    using BackFn = std::function<void(Tape&, const std::vector<T>&)>;

    int leaf(std::int64_t size) {
        nodes_.push_back(Node{size, nullptr, {}, false});
        return static_cast<int>(nodes_.size()) - 1;
    }

    int record(std::int64_t out_size, BackFn back) {
        nodes_.push_back(Node{out_size, std::move(back), {}, false});
        return static_cast<int>(nodes_.size()) - 1;
    }

    // Lazily sized gradient buffer for accumulation inside backward rules.
    std::vector<T>& grad_buf(int node) {
        Node& n = nodes_.at(static_cast<std::size_t>(node));
        if (!n.seeded) {
            n.grad.assign(static_cast<std::size_t>(n.size), T(0));
            n.seeded = true;
        }
        return n.grad;
    }

    void backward(const Tensor<T>& loss) {
        if (!loss.attached() || loss.tape() != this)
            throw std::invalid_argument("backward: loss is not on this tape");
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, shape " +
                                        shape_str(loss.shape()));
        grad_buf(loss.node())[0] += T(1);
        for (int i = loss.node(); i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back && n.seeded) n.back(*this, n.grad);
        }
    }

    // Gradient of a tensor after backward(); zeros when unreachable.
    std::vector<T> grad(const Tensor<T>& t) const {
        if (!t.attached() || t.tape() != this)
            return std::vector<T>(static_cast<std::size_t>(t.numel()), T(0));
        const Node& n = nodes_.at(static_cast<std::size_t>(t.node()));
        if (!n.seeded)
            return std::vector<T>(static_cast<std::size_t>(n.size), T(0));
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::int64_t size;
        BackFn back;
        std::vector<T> grad;
        bool seeded;
    };
    std::vector<Node> nodes_;
};

namespace detail {

template <class T>
Tape<T>* op_tape(const Tensor<T>& a) {
    return a.attached() ? a.tape() : nullptr;
}

template <class T>
Tape<T>* op_tape(const Tensor<T>& a, const Tensor<T>& b) {
    Tape<T>* ta = op_tape(a);
    Tape<T>* tb = op_tape(b);
    if (ta && tb && ta != tb)
        throw std::invalid_argument("op: operands live on different tapes");
    return ta ? ta : tb;
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

template <class T>
void accumulate(Tape<T>& tape, int node, const std::vector<T>& g) {
    if (node < 0) return;
    std::vector<T>& dst = tape.grad_buf(node);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (equal shapes or tensor-scalar; no partial
// broadcasting).

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "add");
    Tape<T>* tape = detail::op_tape(a, b);
    std::vector<T> out(a.vec());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] += b.data()[i];
    Tensor<T> r(a.shape(), std::move(out));
    if (tape) {
        int na = a.node(), nb = b.node();
        r.attach(tape, tape->record(r.numel(), [na, nb](Tape<T>& t, const std::vector<T>& g) {
                     detail::accumulate(t, na, g);
                     detail::accumulate(t, nb, g);
                 }));
    }
    return r;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    Tape<T>* tape = detail::op_tape(a, b);
    std::vector<T> out(a.vec());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] -= b.data()[i];
    Tensor<T> r(a.shape(), std::move(out));
    if (tape) {
        int na = a.node(), nb = b.node();
        r.attach(tape, tape->record(r.numel(), [na, nb](Tape<T>& t, const std::vector<T>& g) {
                     detail::accumulate(t, na, g);
                     if (nb >= 0) {
                         std::vector<T>& dst = t.grad_buf(nb);
                         for (std::size_t i = 0; i < dst.size(); ++i)
                             dst[i] -= g[i];
                     }
                 }));
    }
    return r;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "mul");
    Tape<T>* tape = detail::op_tape(a, b);
    std::vector<T> out(a.vec());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] *= b.data()[i];
    Tensor<T> r(a.shape(), std::move(out));
    if (tape) {
        int na = a.node(), nb = b.node();
        auto abuf = a.buffer();
        auto bbuf = b.buffer();
        r.attach(tape, tape->record(r.numel(), [na, nb, abuf, bbuf](Tape<T>& t, const std::vector<T>& g) {
                     if (na >= 0) {
                         std::vector<T>& dst = t.grad_buf(na);
                         for (std::size_t i = 0; i < dst.size(); ++i)
                             dst[i] += g[i] * (*bbuf)[i];
                     }
                     if (nb >= 0) {
                         std::vector<T>& dst = t.grad_buf(nb);
                         for (std::size_t i = 0; i < dst.size(); ++i)
                             dst[i] += g[i] * (*abuf)[i];
                     }
                 }));
    }
    return r;
}

template <class T>
Tensor<T> scalar_mul(const Tensor<T>& a, T s) {
    Tape<T>* tape = detail::op_tape(a);
    std::vector<T> out(a.vec());
    for (auto& v : out) v *= s;
    Tensor<T> r(a.shape(), std::move(out));
    if (tape) {
        int na = a.node();
        r.attach(tape, tape->record(r.numel(), [na, s](Tape<T>& t, const std::vector<T>& g) {
                     if (na >= 0) {
                         std::vector<T>& dst = t.grad_buf(na);
                         for (std::size_t i = 0; i < dst.size(); ++i)
                             dst[i] += g[i] * s;
                     }
                 }));
    }
    return r;
}

template <class T>
Tensor<T> scalar_add(const Tensor<T>& a, T s) {
    Tape<T>* tape = detail::op_tape(a);
    std::vector<T> out(a.vec());
    for (auto& v : out) v += s;
    Tensor<T> r(a.shape(), std::move(out));
    if (tape) {
        int na = a.node();
        r.attach(tape, tape->record(r.numel(), [na](Tape<T>& t, const std::vector<T>& g) {
                     detail::accumulate(t, na, g);
                 }));
    }
    return r;
}

// s - a, used for gate complements like (1 - w).
template <class T>
Tensor<T> scalar_sub(T s, const Tensor<T>& a) {
    Tape<T>* tape = detail::op_tape(a);
    std::vector<T> out(a.numel());
    for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = s - a.data()[i];
    Tensor<T> r(a.shape(), std::move(out));
    if (tape) {
        int na = a.node();
        r.attach(tape, tape->record(r.numel(), [na](Tape<T>& t, const std::vector<T>& g) {
                     if (na >= 0) {
                         std::vector<T>& dst = t.grad_buf(na);
                         for (std::size_t i = 0; i < dst.size(); ++i)
                             dst[i] -= g[i];
                     }
                 }));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Channel concatenation / slicing on NCHW tensors.

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 4 || b.shape().size() != 4)
        throw std::invalid_argument("concat_channels: rank-4 tensors required, got " +
                                    shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    for (std::size_t ax : {std::size_t{0}, std::size_t{2}, std::size_t{3}})
        if (a.extent(ax) != b.extent(ax))
            throw std::invalid_argument("concat_channels: non-channel extent mismatch " +
                                        shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    const std::int64_t B = a.extent(0), Ca = a.extent(1), Cb = b.extent(1);
    const std::int64_t HW = a.extent(2) * a.extent(3);
    Shape oshape{B, Ca + Cb, a.extent(2), a.extent(3)};
    std::vector<T> out(static_cast<std::size_t>(B * (Ca + Cb) * HW));
    for (std::int64_t n = 0; n < B; ++n) {
        std::memcpy(out.data() + n * (Ca + Cb) * HW, a.data() + n * Ca * HW,
                    sizeof(T) * static_cast<std::size_t>(Ca * HW));
        std::memcpy(out.data() + n * (Ca + Cb) * HW + Ca * HW,
                    b.data() + n * Cb * HW,
                    sizeof(T) * static_cast<std::size_t>(Cb * HW));
    }
    Tape<T>* tape = detail::op_tape(a, b);
    Tensor<T> r(std::move(oshape), std::move(out));
    if (tape) {
        int na = a.node(), nb = b.node();
        r.attach(tape, tape->record(r.numel(), [=](Tape<T>& t, const std::vector<T>& g) {
                     if (na >= 0) {
                         std::vector<T>& da = t.grad_buf(na);
                         for (std::int64_t n = 0; n < B; ++n)
                             for (std::int64_t i = 0; i < Ca * HW; ++i)
                                 da[n * Ca * HW + i] += g[n * (Ca + Cb) * HW + i];
                     }
                     if (nb >= 0) {
                         std::vector<T>& db = t.grad_buf(nb);
                         for (std::int64_t n = 0; n < B; ++n)
                             for (std::int64_t i = 0; i < Cb * HW; ++i)
                                 db[n * Cb * HW + i] +=
                                     g[n * (Ca + Cb) * HW + Ca * HW + i];
                     }
                 }));
    }
    return r;
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin,
                         std::int64_t count) {
    if (x.shape().size() != 4)
        throw std::invalid_argument("slice_channels: rank-4 tensor required");
    const std::int64_t B = x.extent(0), C = x.extent(1);
    const std::int64_t HW = x.extent(2) * x.extent(3);
    if (begin < 0 || count < 0 || begin + count > C)
        throw std::invalid_argument("slice_channels: range [" +
                                    std::to_string(begin) + "," +
                                    std::to_string(begin + count) +
                                    ") out of " + std::to_string(C) +
                                    " channels");
    std::vector<T> out(static_cast<std::size_t>(B * count * HW));
    for (std::int64_t n = 0; n < B; ++n)
        std::memcpy(out.data() + n * count * HW,
                    x.data() + n * C * HW + begin * HW,
                    sizeof(T) * static_cast<std::size_t>(count * HW));
    Tape<T>* tape = detail::op_tape(x);
    Tensor<T> r(Shape{B, count, x.extent(2), x.extent(3)}, std::move(out));
    if (tape) {
        int nx = x.node();
        r.attach(tape, tape->record(r.numel(), [=](Tape<T>& t, const std::vector<T>& g) {
                     if (nx >= 0) {
                         std::vector<T>& dx = t.grad_buf(nx);
                         for (std::int64_t n = 0; n < B; ++n)
                             for (std::int64_t i = 0; i < count * HW; ++i)
                                 dx[n * C * HW + begin * HW + i] +=
                                     g[n * count * HW + i];
                     }
                 }));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Activations.

namespace detail {

template <class T>
T sigmoid_scalar(T x) {
    // Split on sign to avoid exp overflow at extreme inputs.
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

// Generic recorded elementwise map. `f` is the forward scalar function,
// `dfdx` its derivative as a function of the input value.
template <class T, class F, class G>
Tensor<T> map_unary(const Tensor<T>& x, F f, G dfdx) {
    Tape<T>* tape = detail::op_tape(x);
    std::vector<T> out(x.numel());
    for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = f(x.data()[i]);
    Tensor<T> r(x.shape(), std::move(out));
    if (tape) {
        int nx = x.node();
        auto xbuf = x.buffer();
        r.attach(tape, tape->record(r.numel(), [nx, xbuf, dfdx](Tape<T>& t, const std::vector<T>& g) {
                     if (nx >= 0) {
                         std::vector<T>& dst = t.grad_buf(nx);
                         for (std::size_t i = 0; i < dst.size(); ++i)
                             dst[i] += g[i] * dfdx((*xbuf)[i]);
                     }
                 }));
    }
    return r;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return map_unary(
        x, [](T v) { return detail::sigmoid_scalar(v); },
        [](T v) {
            T s = detail::sigmoid_scalar(v);
            return s * (T(1) - s);
        });
}

template <class T>
Tensor<T> tanh_act(const Tensor<T>& x) {
    return map_unary(
        x, [](T v) { return std::tanh(v); },
        [](T v) {
            T y = std::tanh(v);
            return T(1) - y * y;
        });
}

// Self-gating: psi(x) = x * sigmoid(x).
template <class T>
Tensor<T> swish(const Tensor<T>& x) {
    return map_unary(
        x, [](T v) { return v * detail::sigmoid_scalar(v); },
        [](T v) {
            T s = detail::sigmoid_scalar(v);
            return s + v * s * (T(1) - s);
        });
}

// ---------------------------------------------------------------------------
// 2-D convolution (cross-correlation), "same" zero padding, stride 1.
// x: (B, Cin, H, W), kernel: (Cout, Cin, k, k), bias: (Cout).
// The inner contraction runs through a GEMM over an im2col matrix; the
// loop nest and GEMM blocking are fixed, so results are deterministic.

namespace detail {

template <class T>
using MatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Scatter one image's channels into a (Cin*k*k, H*W) patch matrix.
template <class T>
void im2col(const T* x, std::int64_t Cin, std::int64_t H, std::int64_t W,
            std::int64_t k, std::int64_t dilation, T* col) {
    const std::int64_t ctr = (k - 1) / 2;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < Cin; ++c) {
        const T* plane = x + c * H * W;
        for (std::int64_t ki = 0; ki < k; ++ki) {
            const std::int64_t dy = dilation * (ki - ctr);
            for (std::int64_t kj = 0; kj < k; ++kj, ++row) {
                const std::int64_t dx = dilation * (kj - ctr);
                T* dst = col + row * H * W;
                for (std::int64_t y = 0; y < H; ++y) {
                    const std::int64_t sy = y + dy;
                    T* drow = dst + y * W;
                    if (sy < 0 || sy >= H) {
                        std::fill(drow, drow + W, T(0));
                        continue;
                    }
                    const T* srow = plane + sy * W;
                    const std::int64_t x0 = std::clamp<std::int64_t>(-dx, 0, W);
                    const std::int64_t x1 = std::clamp<std::int64_t>(W - dx, x0, W);
                    if (x0 > 0) std::fill(drow, drow + x0, T(0));
                    if (x1 > x0)
                        std::memcpy(drow + x0, srow + x0 + dx,
                                    sizeof(T) * static_cast<std::size_t>(x1 - x0));
                    if (x1 < W) std::fill(drow + x1, drow + W, T(0));
                }
            }
        }
    }
}

// Inverse of im2col: accumulate patch-matrix gradients back into the image.
template <class T>
void col2im(const T* col, std::int64_t Cin, std::int64_t H, std::int64_t W,
            std::int64_t k, std::int64_t dilation, T* gx) {
    const std::int64_t ctr = (k - 1) / 2;
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < Cin; ++c) {
        T* plane = gx + c * H * W;
        for (std::int64_t ki = 0; ki < k; ++ki) {
            const std::int64_t dy = dilation * (ki - ctr);
            for (std::int64_t kj = 0; kj < k; ++kj, ++row) {
                const std::int64_t dx = dilation * (kj - ctr);
                const T* src = col + row * H * W;
                for (std::int64_t y = 0; y < H; ++y) {
                    const std::int64_t sy = y + dy;
                    if (sy < 0 || sy >= H) continue;
                    T* drow = plane + sy * W;
                    const T* srow = src + y * W;
                    const std::int64_t x0 = std::clamp<std::int64_t>(-dx, 0, W);
                    const std::int64_t x1 = std::clamp<std::int64_t>(W - dx, x0, W);
                    for (std::int64_t xx = x0; xx < x1; ++xx)
                        drow[xx + dx] += srow[xx];
                }
            }
        }
    }
}

}  // namespace detail

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel,
                 const Tensor<T>& bias, std::int64_t dilation = 1) {
    if (x.shape().size() != 4)
        throw std::invalid_argument("conv2d: input must be rank 4, got " +
                                    shape_str(x.shape()));
    if (kernel.shape().size() != 4)
        throw std::invalid_argument("conv2d: kernel must be rank 4, got " +
                                    shape_str(kernel.shape()));
    const std::int64_t B = x.extent(0), Cin = x.extent(1);
    const std::int64_t H = x.extent(2), W = x.extent(3);
    const std::int64_t Cout = kernel.extent(0), k = kernel.extent(2);
    if (kernel.extent(1) != Cin)
        throw std::invalid_argument("conv2d: channel mismatch, input " +
                                    shape_str(x.shape()) + " vs kernel " +
                                    shape_str(kernel.shape()));
    if (kernel.extent(3) != k || k % 2 == 0)
        throw std::invalid_argument("conv2d: kernel must be square with odd extent, got " +
                                    shape_str(kernel.shape()));
    if (bias.shape() != Shape{Cout})
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                    " does not match " + std::to_string(Cout) +
                                    " output channels");
    if (dilation < 1) throw std::invalid_argument("conv2d: dilation must be >= 1");

    const std::int64_t HW = H * W;
    const std::int64_t K = Cin * k * k;
    std::vector<T> out(static_cast<std::size_t>(B * Cout * HW));
    std::vector<T> col(static_cast<std::size_t>(K * HW));
    Eigen::Map<const detail::MatRM<T>> km(kernel.data(), Cout, K);
    for (std::int64_t n = 0; n < B; ++n) {
        detail::im2col(x.data() + n * Cin * HW, Cin, H, W, k, dilation,
                       col.data());
        Eigen::Map<const detail::MatRM<T>> cm(col.data(), K, HW);
        Eigen::Map<detail::MatRM<T>> om(out.data() + n * Cout * HW, Cout, HW);
        om.noalias() = km * cm;
        for (std::int64_t oc = 0; oc < Cout; ++oc)
            om.row(oc).array() += bias.data()[oc];
    }

    Tape<T>* tape = detail::op_tape(x, kernel);
    Tape<T>* tb = detail::op_tape(bias);
    if (tape && tb && tape != tb)
        throw std::invalid_argument("conv2d: operands live on different tapes");
    if (!tape) tape = tb;
    Tensor<T> r(Shape{B, Cout, H, W}, std::move(out));
    if (tape) {
        int nx = x.node(), nk = kernel.node(), nb = bias.node();
        auto xbuf = x.buffer();
        auto kbuf = kernel.buffer();
        r.attach(tape, tape->record(r.numel(), [=](Tape<T>& t, const std::vector<T>& g) {
                     std::vector<T> col(static_cast<std::size_t>(K * HW));
                     std::vector<T> gcol;
                     Eigen::Map<const detail::MatRM<T>> km(kbuf->data(), Cout, K);
                     for (std::int64_t n = 0; n < B; ++n) {
                         Eigen::Map<const detail::MatRM<T>> gm(
                             g.data() + n * Cout * HW, Cout, HW);
                         if (nk >= 0) {
                             detail::im2col(xbuf->data() + n * Cin * HW, Cin, H,
                                            W, k, dilation, col.data());
                             Eigen::Map<const detail::MatRM<T>> cm(col.data(), K, HW);
                             Eigen::Map<detail::MatRM<T>> gk(
                                 t.grad_buf(nk).data(), Cout, K);
                             gk.noalias() += gm * cm.transpose();
                         }
                         if (nb >= 0) {
                             std::vector<T>& gb = t.grad_buf(nb);
                             for (std::int64_t oc = 0; oc < Cout; ++oc)
                                 gb[oc] += gm.row(oc).sum();
                         }
                         if (nx >= 0) {
                             gcol.assign(static_cast<std::size_t>(K * HW), T(0));
                             Eigen::Map<detail::MatRM<T>> gcm(gcol.data(), K, HW);
                             gcm.noalias() = km.transpose() * gm;
                             detail::col2im(gcol.data(), Cin, H, W, k, dilation,
                                            t.grad_buf(nx).data() + n * Cin * HW);
                         }
                     }
                 }));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
Tensor<T> reduce_mean(const Tensor<T>& x) {
    const std::int64_t n = x.numel();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) acc += x.data()[i];
    Tensor<T> r = Tensor<T>::scalar(acc / static_cast<T>(n));
    Tape<T>* tape = detail::op_tape(x);
    if (tape) {
        int nx = x.node();
        r.attach(tape, tape->record(1, [nx, n](Tape<T>& t, const std::vector<T>& g) {
                     if (nx >= 0) {
                         std::vector<T>& dst = t.grad_buf(nx);
                         const T share = g[0] / static_cast<T>(n);
                         for (auto& v : dst) v += share;
                     }
                 }));
    }
    return r;
}

template <class T>
bool all_finite(const Tensor<T>& x) {
    for (std::int64_t i = 0; i < x.numel(); ++i)
        if (!std::isfinite(x.data()[i])) return false;
    return true;
}

}  // namespace sgm
