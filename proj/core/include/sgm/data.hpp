#pragma once

// Deterministic synthetic multi-exposure scenes: a smooth radiance map
// of Gaussian blobs, one of which moves between frames, rendered through
// a pure gamma-1/2.2 camera at exposure-bracketed shutter times.

#include "sgm/tensor.hpp"
#include "sgm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace sgm {

struct SceneSpec {
    std::uint64_t seed = 0;
    std::int64_t height = 64;
    std::int64_t width = 64;
    int num_frames = 3;
    int num_blobs = 5;
    std::vector<double> stops;      // empty: evenly spaced over [-2, +2]
    double motion_amplitude = 6.0;  // pixels of travel for the moving blob
    bool quantize_8bit = true;
};

template <class T>
struct ExposureSequence {
    std::vector<Tensor<T>> frames;  // each (3, H, W), values in [0,1]
    std::vector<T> exposure_times;  // strictly positive, seconds
    std::size_t ref_index = 0;
    std::optional<Tensor<T>> hdr_gt;  // (3, H, W) in [0,1], ref geometry

    void validate() const {
        if (frames.empty() || frames.size() != exposure_times.size())
            throw std::invalid_argument("sequence: frame/exposure count mismatch");
        if (ref_index >= frames.size())
            throw std::invalid_argument("sequence: reference index out of range");
        for (const auto& t : exposure_times)
            if (!(t > T(0)))
                throw std::invalid_argument("sequence: nonpositive exposure time");
    }
};

inline std::vector<double> default_stops(int num_frames) {
    std::vector<double> stops(static_cast<std::size_t>(num_frames));
    if (num_frames == 1) {
        stops[0] = 0.0;
        return stops;
    }
    for (int i = 0; i < num_frames; ++i)
        stops[static_cast<std::size_t>(i)] =
            -2.0 + 4.0 * static_cast<double>(i) / (num_frames - 1);
    return stops;
}

namespace detail {

struct Blob {
    double cx, cy, sigma, amp;
    double color[3];
};

// Radiance of the scene with the moving blob displaced by (dx, dy),
// scaled by `scale` and clamped to [0,1].
template <class T>
Tensor<T> render_radiance(const std::vector<Blob>& blobs, double grad_mix,
                          std::int64_t H, std::int64_t W, double dx, double dy,
                          double scale) {
    Tensor<T> r = Tensor<T>::zeros({3, H, W});
    for (std::int64_t y = 0; y < H; ++y) {
        const double yn = H > 1 ? static_cast<double>(y) / (H - 1) : 0.0;
        for (std::int64_t x = 0; x < W; ++x) {
            const double xn = W > 1 ? static_cast<double>(x) / (W - 1) : 0.0;
            const double base =
                0.15 + 0.35 * (grad_mix * xn + (1.0 - grad_mix) * yn);
            double acc[3] = {base, base, base};
            for (std::size_t k = 0; k < blobs.size(); ++k) {
                const Blob& b = blobs[k];
                const double bx = b.cx + (k == 0 ? dx : 0.0);
                const double by = b.cy + (k == 0 ? dy : 0.0);
                const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                const double g = b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
                for (int c = 0; c < 3; ++c) acc[c] += g * b.color[c];
            }
            for (int c = 0; c < 3; ++c) {
                double v = acc[c] * scale;
                v = std::min(std::max(v, 0.0), 1.0);
                r.data()[c * H * W + y * W + x] = static_cast<T>(v);
            }
        }
    }
    return r;
}

}  // namespace detail

// Fully determined by the spec's seed. The reference frame is the middle
// one; the ground truth is the radiance map with the moving blob frozen
// at its reference position, so it does not depend on the other frames'
// motion realization.
template <class T>
ExposureSequence<T> generate(const SceneSpec& spec) {
    if (spec.num_frames < 1)
        throw std::invalid_argument("generate: need at least one frame");
    if (spec.num_blobs < 1)
        throw std::invalid_argument("generate: need at least one blob");
    if (spec.motion_amplitude < 0)
        throw std::invalid_argument("generate: motion amplitude must be >= 0");
    std::vector<double> stops =
        spec.stops.empty() ? default_stops(spec.num_frames) : spec.stops;
    if (static_cast<int>(stops.size()) != spec.num_frames)
        throw std::invalid_argument("generate: stop count does not match frames");
    for (std::size_t i = 1; i < stops.size(); ++i)
        if (stops[i] < stops[i - 1])
            throw std::invalid_argument("generate: stops must ascend");

    const std::int64_t H = spec.height, W = spec.width;
    std::mt19937_64 rng(spec.seed);
    auto uni = [&rng](double lo, double hi) {
        return lo + (hi - lo) * detail::uniform_unit(rng);
    };

    const double grad_mix = uni(0.0, 1.0);
    std::vector<detail::Blob> blobs(static_cast<std::size_t>(spec.num_blobs));
    for (auto& b : blobs) {
        b.cx = uni(0.0, static_cast<double>(W - 1));
        b.cy = uni(0.0, static_cast<double>(H - 1));
        b.sigma = uni(0.08, 0.25) * static_cast<double>(std::min(H, W));
        b.amp = uni(0.4, 1.2);
        for (int c = 0; c < 3; ++c) b.color[c] = uni(0.25, 1.0);
    }
    const double angle = uni(0.0, 2.0 * 3.14159265358979323846);

    const int N = spec.num_frames;
    const std::size_t ref = static_cast<std::size_t>(N / 2);

    // Normalize against the static (reference) configuration.
    Tensor<double> raw = detail::render_radiance<double>(blobs, grad_mix, H, W,
                                                         0.0, 0.0, 1.0);
    double maxval = 0.0;
    for (std::int64_t i = 0; i < raw.numel(); ++i)
        maxval = std::max(maxval, raw.data()[i]);
    const double scale = maxval > 0.0 ? 1.0 / maxval : 1.0;

    ExposureSequence<T> seq;
    seq.ref_index = ref;
    seq.hdr_gt =
        detail::render_radiance<T>(blobs, grad_mix, H, W, 0.0, 0.0, scale);

    for (int n = 0; n < N; ++n) {
        const double travel =
            N > 1 ? static_cast<double>(n - static_cast<int>(ref)) / (N - 1) : 0.0;
        const double dx = spec.motion_amplitude * std::cos(angle) * travel;
        const double dy = spec.motion_amplitude * std::sin(angle) * travel;
        Tensor<double> radiance =
            detail::render_radiance<double>(blobs, grad_mix, H, W, dx, dy, scale);
        const double t = std::exp2(stops[static_cast<std::size_t>(n)]);
        Tensor<T> frame = Tensor<T>::zeros({3, H, W});
        for (std::int64_t i = 0; i < radiance.numel(); ++i) {
            double v = std::pow(radiance.data()[i] * t, 1.0 / 2.2);
            v = std::min(std::max(v, 0.0), 1.0);
            if (spec.quantize_8bit) v = std::round(v * 255.0) / 255.0;
            frame.data()[i] = static_cast<T>(v);
        }
        seq.frames.push_back(std::move(frame));
        seq.exposure_times.push_back(static_cast<T>(t));
    }
    seq.validate();
    return seq;
}

// Frames reshaped to the (1,3,H,W) batch layout the network consumes.
template <class T>
std::vector<Tensor<T>> batched_frames(const ExposureSequence<T>& seq) {
    std::vector<Tensor<T>> out;
    out.reserve(seq.frames.size());
    for (const auto& f : seq.frames)
        out.push_back(
            Tensor<T>(Shape{1, 3, f.extent(1), f.extent(2)}, f.vec()));
    return out;
}

// Contiguous window of `n` frames containing the reference.
template <class T>
ExposureSequence<T> subsequence(const ExposureSequence<T>& seq, int n) {
    const int full = static_cast<int>(seq.frames.size());
    if (n < 1 || n > full)
        throw std::invalid_argument("subsequence: bad length " +
                                    std::to_string(n));
    const int start = std::min(
        std::max(static_cast<int>(seq.ref_index) - n / 2, 0), full - n);
    ExposureSequence<T> out;
    for (int i = start; i < start + n; ++i) {
        out.frames.push_back(seq.frames[static_cast<std::size_t>(i)]);
        out.exposure_times.push_back(
            seq.exposure_times[static_cast<std::size_t>(i)]);
    }
    out.ref_index = static_cast<std::size_t>(static_cast<int>(seq.ref_index) - start);
    out.hdr_gt = seq.hdr_gt;
    out.validate();
    return out;
}

}  // namespace sgm
