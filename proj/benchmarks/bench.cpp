#include <benchmark/benchmark.h>

#include "sgm/cells.hpp"
#include "sgm/hdr.hpp"
#include "sgm/model.hpp"

#include <random>
#include <vector>

using namespace sgm;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed, float lo,
                            float hi) {
    std::mt19937_64 rng(seed);
    std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v)
        x = lo + (hi - lo) * static_cast<float>(detail::uniform_unit(rng));
    return Tensor<float>(std::move(shape), std::move(v));
}

}  // namespace

static void BM_Conv2dForward(benchmark::State& state) {
    const std::int64_t hw = state.range(0);
    Tensor<float> x = random_tensor({1, 64, hw, hw}, 1, -1.0f, 1.0f);
    Tensor<float> kernel = random_tensor({64, 64, 3, 3}, 2, -0.1f, 0.1f);
    Tensor<float> bias = Tensor<float>::zeros({64});
    for (auto _ : state) {
        Tensor<float> y = conv2d(x, kernel, bias);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv2dBackward(benchmark::State& state) {
    const std::int64_t hw = state.range(0);
    Tensor<float> x = random_tensor({1, 64, hw, hw}, 1, -1.0f, 1.0f);
    Tensor<float> kernel = random_tensor({64, 64, 3, 3}, 2, -0.1f, 0.1f);
    Tensor<float> bias = Tensor<float>::zeros({64});
    for (auto _ : state) {
        Tape<float> tape;
        x.attach(&tape, tape.leaf(x.numel()));
        kernel.attach(&tape, tape.leaf(kernel.numel()));
        bias.attach(&tape, tape.leaf(bias.numel()));
        tape.backward(reduce_mean(conv2d(x, kernel, bias)));
        benchmark::DoNotOptimize(tape.grad(kernel).data());
        x.detach();
        kernel.detach();
        bias.detach();
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv2dBackward)->Arg(32)->Arg(64);

static void BM_CellStep(benchmark::State& state) {
    const CellKind kind = static_cast<CellKind>(state.range(0));
    Cell<float> cell = make_cell<float>(kind, 3);
    CellState<float> st{random_tensor({1, 64, 32, 32}, 4, -1.0f, 1.0f),
                        random_tensor({1, 64, 32, 32}, 5, -1.0f, 1.0f)};
    Tensor<float> e = random_tensor({1, 64, 32, 32}, 6, -1.0f, 1.0f);
    for (auto _ : state) {
        auto [h, next] = cell_step(cell, e, st);
        benchmark::DoNotOptimize(h.data());
    }
    state.SetLabel(cell_kind_name(kind));
}
BENCHMARK(BM_CellStep)
    ->Arg(static_cast<int>(CellKind::Sgm))
    ->Arg(static_cast<int>(CellKind::Lstm))
    ->Arg(static_cast<int>(CellKind::Gru))
    ->Arg(static_cast<int>(CellKind::Vanilla));

static void BM_FullForward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    FusionNet<float> net =
        make_fusion_net<float>(CellKind::Sgm, Mode::bidirectional, 7);
    std::vector<Tensor<float>> frames;
    std::vector<float> times;
    for (std::size_t i = 0; i < n; ++i) {
        frames.push_back(random_tensor({1, 3, 64, 64}, 10 + i, 0.0f, 1.0f));
        times.push_back(std::exp2(static_cast<float>(i) - 1.0f));
    }
    for (auto _ : state) {
        Tensor<float> y = forward(net, frames, times, n / 2);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_FullForward)->Arg(3)->Arg(5)->Arg(7)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
