#pragma once

// Training engine: Adam with the halving learning-rate schedule,
// seeded batch sampling with optional exposure-order shuffling and
// variable-length subsequences, metric logging, checkpointing, and a
// finite-difference gradient-check harness.

#include "sgm/checkpoint.hpp"
#include "sgm/data.hpp"
#include "sgm/hdr.hpp"
#include "sgm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgm {

struct TrainConfig {
    double learning_rate = 2e-4;
    int batch_size = 4;
    int epochs = 200;
    int halve_every = 25;  // epochs between halvings
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int patch_size = 64;
    std::uint64_t seed = 0;
    CellKind cell_kind = CellKind::Sgm;
    Mode mode = Mode::bidirectional;
    bool shuffle_exposure_order = false;
    std::vector<int> variable_length_set;  // empty: use full sequences
    double mu = 5000.0;
    int eval_interval = 10;       // steps between metric rows
    int checkpoint_interval = 0;  // epochs between checkpoints; 0 = end only

    void validate() const {
        if (!(learning_rate > 0))
            throw std::invalid_argument("config: learning rate must be positive");
        if (batch_size < 1)
            throw std::invalid_argument("config: batch size must be >= 1");
        if (patch_size % 2 != 0)
            throw std::invalid_argument("config: patch size must be even");
        if (epochs < 0) throw std::invalid_argument("config: negative epochs");
        if (halve_every < 1)
            throw std::invalid_argument("config: halve_every must be >= 1");
    }

    std::string canonical_text() const {
        std::ostringstream os;
        os << "lr=" << learning_rate << ";batch=" << batch_size
           << ";epochs=" << epochs << ";halve=" << halve_every
           << ";patch=" << patch_size << ";seed=" << seed
           << ";cell=" << cell_kind_name(cell_kind) << ";mode=" << mode_name(mode)
           << ";shuffle=" << shuffle_exposure_order << ";varlen=";
        for (int n : variable_length_set) os << n << ",";
        os << ";mu=" << mu;
        return os.str();
    }
};

// Pure function of the 1-based epoch index.
inline double scheduled_lr(double base, int epoch, int halve_every) {
    return base * std::pow(0.5, (epoch - 1) / halve_every);
}

template <class T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    std::int64_t step = 0;

    static AdamState init(const ParamRegistry<T>& params) {
        AdamState s;
        for (const auto& [name, p] : params.entries()) {
            s.m.emplace_back(static_cast<std::size_t>(p->numel()), T(0));
            s.v.emplace_back(static_cast<std::size_t>(p->numel()), T(0));
        }
        return s;
    }
};

// One bias-corrected Adam update. Aborts on non-finite gradients,
// naming the offending parameter.
template <class T>
void adam_step(ParamRegistry<T>& params,
               const std::vector<std::vector<T>>& grads, AdamState<T>& state,
               double lr, const TrainConfig& cfg) {
    if (grads.size() != params.entries().size())
        throw std::invalid_argument("adam: gradient count mismatch");
    state.step += 1;
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < grads.size(); ++pi) {
        Tensor<T>* p = params.entries()[pi].second;
        const std::vector<T>& g = grads[pi];
        std::vector<T>& m = state.m[pi];
        std::vector<T>& v = state.v[pi];
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            if (!std::isfinite(gi))
                throw std::runtime_error("adam: non-finite gradient in " +
                                         params.entries()[pi].first);
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p->data()[i] = static_cast<T>(static_cast<double>(p->data()[i]) -
                                          lr * mhat /
                                              (std::sqrt(vhat) + cfg.epsilon));
        }
    }
}

struct StepInfo {
    std::int64_t step;
    int epoch;
    double lr;
    double loss;
    double psnr_l;
    double psnr_t;
};

// Returns false to stop training early.
using StepCallback = std::function<bool(const StepInfo&)>;

namespace detail {

// Crop window shared by every frame of one sequence.
struct Crop {
    std::int64_t y0, x0, h, w;
};

template <class T>
Tensor<T> crop_chw(const Tensor<T>& img, const Crop& c) {
    Tensor<T> out = Tensor<T>::zeros({1, 3, c.h, c.w});
    const std::int64_t H = img.extent(1), W = img.extent(2);
    for (std::int64_t ch = 0; ch < 3; ++ch)
        for (std::int64_t y = 0; y < c.h; ++y)
            std::memcpy(out.data() + (ch * c.h + y) * c.w,
                        img.data() + (ch * H + c.y0 + y) * W + c.x0,
                        sizeof(T) * static_cast<std::size_t>(c.w));
    return out;
}

}  // namespace detail

// Seeded training loop. Each step averages the tonemapped l2 loss over
// `batch_size` independently sampled patches; gradients are accumulated
// in registry order so runs with the same seed match bitwise. Writes the
// metric log as CSV when `metrics` is given, and the checkpoint to
// `checkpoint_path` (plus periodic snapshots) when nonempty. On a
// non-finite loss the last good checkpoint is kept and the run aborts.
template <class T>
void train(FusionNet<T>& net, const std::vector<ExposureSequence<T>>& dataset,
           const TrainConfig& cfg,
           const std::filesystem::path& checkpoint_path = {},
           std::ostream* metrics = nullptr, const StepCallback& callback = {}) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& seq : dataset) seq.validate();

    ParamRegistry<T> params = net.registry();
    AdamState<T> adam = AdamState<T>::init(params);
    std::mt19937_64 rng(cfg.seed);
    const std::uint64_t digest = fnv1a_digest(cfg.canonical_text());

    auto save = [&](std::uint64_t step) {
        if (checkpoint_path.empty()) return;
        save_checkpoint(checkpoint_path, params,
                        CheckpointMeta{cfg.cell_kind, cfg.mode, dtype_code<T>(),
                                       step, digest});
    };
    auto rand_index = [&](std::size_t n) {
        return static_cast<std::size_t>(detail::uniform_unit(rng) *
                                        static_cast<double>(n)) %
               n;
    };

    if (metrics) *metrics << "step,epoch,lr,loss,psnr_l,psnr_t\n";
    save(0);

    const std::size_t steps_per_epoch =
        (dataset.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    std::int64_t step = 0;
    bool stopped = false;
    for (int epoch = 1; epoch <= cfg.epochs && !stopped; ++epoch) {
        const double lr = scheduled_lr(cfg.learning_rate, epoch, cfg.halve_every);
        for (std::size_t s = 0; s < steps_per_epoch && !stopped; ++s) {
            ++step;
            Tape<T> tape;
            params.attach(tape);

            std::optional<int> step_len;
            if (!cfg.variable_length_set.empty())
                step_len = cfg.variable_length_set[rand_index(
                    cfg.variable_length_set.size())];

            Tensor<T> loss;
            double mse_l = 0.0, mse_t = 0.0;
            for (int b = 0; b < cfg.batch_size; ++b) {
                const ExposureSequence<T>& seq = dataset[rand_index(dataset.size())];
                if (!seq.hdr_gt)
                    throw std::invalid_argument("train: sequence lacks ground truth");
                const int full_n = static_cast<int>(seq.frames.size());

                // Variable-length mode: a window around the reference.
                int n = full_n, start = 0;
                if (step_len) {
                    n = std::min(*step_len, full_n);
                    start = std::clamp(static_cast<int>(seq.ref_index) - n / 2, 0,
                                       full_n - n);
                }
                int ref = static_cast<int>(seq.ref_index) - start;

                std::vector<int> order(static_cast<std::size_t>(n));
                for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = start + i;
                if (cfg.shuffle_exposure_order) {
                    // Fisher-Yates on the frame order; the reference frame
                    // keeps its identity, only its position moves.
                    for (int i = n - 1; i > 0; --i) {
                        int j = static_cast<int>(rand_index(static_cast<std::size_t>(i + 1)));
                        std::swap(order[static_cast<std::size_t>(i)],
                                  order[static_cast<std::size_t>(j)]);
                    }
                    for (int i = 0; i < n; ++i)
                        if (order[static_cast<std::size_t>(i)] ==
                            static_cast<int>(seq.ref_index))
                            ref = i;
                }

                const std::int64_t H = seq.frames[0].extent(1);
                const std::int64_t W = seq.frames[0].extent(2);
                detail::Crop crop{0, 0, std::min<std::int64_t>(cfg.patch_size, H),
                                  std::min<std::int64_t>(cfg.patch_size, W)};
                if (H > crop.h)
                    crop.y0 = static_cast<std::int64_t>(rand_index(
                        static_cast<std::size_t>(H - crop.h + 1)));
                if (W > crop.w)
                    crop.x0 = static_cast<std::int64_t>(rand_index(
                        static_cast<std::size_t>(W - crop.w + 1)));

                std::vector<Tensor<T>> frames;
                std::vector<T> times;
                for (int i = 0; i < n; ++i) {
                    const int src = order[static_cast<std::size_t>(i)];
                    frames.push_back(detail::crop_chw(
                        seq.frames[static_cast<std::size_t>(src)], crop));
                    times.push_back(seq.exposure_times[static_cast<std::size_t>(src)]);
                }
                Tensor<T> gt = detail::crop_chw(*seq.hdr_gt, crop);

                Tensor<T> y = forward(net, frames, times,
                                      static_cast<std::size_t>(ref));
                Tensor<T> item_loss = tonemapped_loss(y, gt, TonemapConfig{cfg.mu});
                loss = loss.defined() ? add(loss, item_loss) : item_loss;

                Tensor<T> yd = y.detached();
                Tensor<T> tm_y = mu_law(yd, TonemapConfig{cfg.mu});
                Tensor<T> tm_gt = mu_law(gt, TonemapConfig{cfg.mu});
                for (std::int64_t i = 0; i < yd.numel(); ++i) {
                    const double dl = static_cast<double>(yd.data()[i]) -
                                      static_cast<double>(gt.data()[i]);
                    const double dt = static_cast<double>(tm_y.data()[i]) -
                                      static_cast<double>(tm_gt.data()[i]);
                    mse_l += dl * dl / static_cast<double>(yd.numel());
                    mse_t += dt * dt / static_cast<double>(yd.numel());
                }
            }
            loss = scalar_mul(loss, T(1) / static_cast<T>(cfg.batch_size));
            mse_l /= cfg.batch_size;
            mse_t /= cfg.batch_size;

            const double loss_value = static_cast<double>(loss.item());
            if (!std::isfinite(loss_value)) {
                params.detach();
                throw std::runtime_error(
                    "train: non-finite loss at step " + std::to_string(step) +
                    "; last good checkpoint retained");
            }

            tape.backward(loss);
            std::vector<std::vector<T>> grads;
            grads.reserve(params.entries().size());
            for (const auto& [name, p] : params.entries())
                grads.push_back(tape.grad(*p));
            params.detach();
            adam_step(params, grads, adam, lr, cfg);

            StepInfo info{step, epoch, lr, loss_value,
                          mse_l > 0 ? 10.0 * std::log10(1.0 / mse_l)
                                    : std::numeric_limits<double>::infinity(),
                          mse_t > 0 ? 10.0 * std::log10(1.0 / mse_t)
                                    : std::numeric_limits<double>::infinity()};
            if (metrics && (step % cfg.eval_interval == 0 || step == 1))
                *metrics << info.step << "," << info.epoch << "," << info.lr << ","
                         << info.loss << "," << info.psnr_l << "," << info.psnr_t
                         << "\n";
            if (callback && !callback(info)) stopped = true;
        }
        if (cfg.checkpoint_interval > 0 && epoch % cfg.checkpoint_interval == 0)
            save(static_cast<std::uint64_t>(step));
    }
    save(static_cast<std::uint64_t>(step));
}

// ---------------------------------------------------------------------------
// Gradient checking.

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t coords_checked = 0;
    bool pass = false;
};

// Compares reverse-mode gradients against central differences on a
// seeded subsample of coordinates (up to `max_coords` per tensor;
// max_coords <= 0 checks every coordinate). The loss callback must
// build the scalar loss from the current parameter values on the given
// tape; it is also evaluated off-tape for the difference quotients.
template <class T, class LossFn>
GradCheckReport gradcheck(ParamRegistry<T>& params, LossFn&& loss_fn,
                          double tolerance, int max_coords = 200,
                          std::uint64_t seed = 0) {
    Tape<T> tape;
    params.attach(tape);
    Tensor<T> loss = loss_fn(tape);
    tape.backward(loss);
    std::vector<std::vector<T>> analytic;
    for (const auto& [name, p] : params.entries())
        analytic.push_back(tape.grad(*p));
    params.detach();

    auto eval = [&]() {
        Tape<T> scratch;
        return static_cast<double>(loss_fn(scratch).item());
    };

    std::mt19937_64 rng(seed);
    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.entries().size(); ++pi) {
        Tensor<T>* p = params.entries()[pi].second;
        const std::int64_t n = p->numel();
        std::vector<std::int64_t> coords;
        if (max_coords <= 0 || n <= max_coords) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (int i = 0; i < max_coords; ++i)
                coords.push_back(static_cast<std::int64_t>(
                    detail::uniform_unit(rng) * static_cast<double>(n)));
        }
        for (std::int64_t ci : coords) {
            const T saved = p->data()[ci];
            const double h =
                1e-4 * std::max(1.0, std::abs(static_cast<double>(saved)));
            p->data()[ci] = static_cast<T>(static_cast<double>(saved) + h);
            const double lp = eval();
            p->data()[ci] = static_cast<T>(static_cast<double>(saved) - h);
            const double lm = eval();
            p->data()[ci] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = static_cast<double>(analytic[pi][static_cast<std::size_t>(ci)]);
            double err = std::abs(ad - fd);
            const double mag = std::max(std::abs(ad), std::abs(fd));
            if (mag > 1e-6) err /= mag;
            ++report.coords_checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = params.entries()[pi].first + "[" +
                                     std::to_string(ci) + "]";
            }
        }
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

}  // namespace sgm
