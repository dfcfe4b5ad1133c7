#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sgm/cells.hpp"
#include "sgm/train.hpp"

#include <algorithm>
#include <cstring>
#include <random>
#include <vector>

using namespace sgm;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = lo + (hi - lo) * detail::uniform_unit(rng);
    return Tensor<double>(std::move(shape), std::move(v));
}

void zero_gate(Cell<double>& cell, const std::string& name, double bias = 0.0) {
    ConvLayer<double>& g = cell.gate(name);
    std::fill(g.kernel.data(), g.kernel.data() + g.kernel.numel(), 0.0);
    std::fill(g.bias.data(), g.bias.data() + g.bias.numel(), bias);
}

CellState<double> random_state(std::uint64_t seed, std::int64_t ch = 4,
                               std::int64_t hw = 5) {
    return CellState<double>{random_tensor({1, ch, hw, hw}, seed),
                             random_tensor({1, ch, hw, hw}, seed + 1)};
}

}  // namespace

TEST_CASE("cell kind names round-trip") {
    CHECK(all_cell_kinds().size() == 11);
    for (CellKind kind : all_cell_kinds())
        CHECK(parse_cell_kind(cell_kind_name(kind)) == kind);
    CHECK_THROWS(parse_cell_kind("sgm2"));
}

TEST_CASE("per-kind gate inventory and parameter arithmetic") {
    auto count = [](CellKind kind) {
        return make_cell<float>(kind, 0).param_count();
    };
    // Removing the 64-channel c_{n-1} block from the output gate drops
    // exactly 64*64*9 kernel weights.
    CHECK(count(CellKind::Sgm) - count(CellKind::SgmType1) == 36864);
    CHECK(count(CellKind::SgmType2) == count(CellKind::Sgm));
    CHECK(count(CellKind::SgmType3) == count(CellKind::SgmType1));
    CHECK(count(CellKind::Vanilla) == 73792);
    CHECK(count(CellKind::Gru) == 3 * 73792);
}

TEST_CASE("saturated update gate selects the transform path") {
    Cell<double> cell = make_cell<double>(CellKind::Sgm, 11, 4);
    zero_gate(cell, "update_gate", 40.0);  // w = sigmoid(40) ~= 1
    CellState<double> state = random_state(100);
    Tensor<double> e = random_tensor({1, 4, 5, 5}, 200);
    auto [h, next] = cell_step(cell, e, state);
    Tensor<double> t = cell.gate("transform_gate")(state.c);
    for (std::int64_t i = 0; i < t.numel(); ++i)
        CHECK(next.c.data()[i] == doctest::Approx(t.data()[i]).epsilon(1e-12));
}

TEST_CASE("suppressed update gate selects the input path") {
    Cell<double> cell = make_cell<double>(CellKind::Sgm, 12, 4);
    zero_gate(cell, "update_gate", -40.0);  // w ~= 0
    CellState<double> state = random_state(101);
    Tensor<double> e = random_tensor({1, 4, 5, 5}, 201);
    auto [h, next] = cell_step(cell, e, state);
    Tensor<double> i_gate =
        cell.gate("input_gate")(concat_channels(state.h, e));
    for (std::int64_t i = 0; i < i_gate.numel(); ++i)
        CHECK(next.c.data()[i] ==
              doctest::Approx(i_gate.data()[i]).epsilon(1e-12));
}

TEST_CASE("state update is a convex blend for the blend kinds") {
    for (CellKind kind : all_cell_kinds()) {
        if (!has_update_blend(kind)) continue;
        Cell<double> cell = make_cell<double>(kind, 21, 4);
        CellState<double> state = random_state(300 + static_cast<int>(kind));
        Tensor<double> e = random_tensor({1, 4, 5, 5}, 400 + static_cast<int>(kind));

        // Recompute the two blend endpoints through the same gates.
        Tensor<double> x = concat_channels(state.h, e);
        Tensor<double> i, t;
        if (kind == CellKind::SgmType5) {
            i = mul(cell.gate("input_gate_tanh")(x), cell.gate("input_gate_sig")(x));
            t = mul(cell.gate("transform_gate_tanh")(state.c),
                    cell.gate("transform_gate_sig")(state.c));
        } else {
            i = cell.gate("input_gate")(x);
            t = cell.gate("transform_gate")(state.c);
        }
        auto [h, next] = cell_step(cell, e, state);
        for (std::int64_t k = 0; k < i.numel(); ++k) {
            const double lo = std::min(i.data()[k], t.data()[k]);
            const double hi = std::max(i.data()[k], t.data()[k]);
            CHECK(next.c.data()[k] >= lo - 1e-12);
            CHECK(next.c.data()[k] <= hi + 1e-12);
        }
    }
}

TEST_CASE("type3 hidden output ignores the frame once the input gate is dead") {
    Cell<double> t3 = make_cell<double>(CellKind::SgmType3, 31, 4);
    zero_gate(t3, "input_gate");
    CellState<double> state = random_state(500);
    Tensor<double> e1 = random_tensor({1, 4, 5, 5}, 501);
    Tensor<double> e2 = random_tensor({1, 4, 5, 5}, 502);
    Tensor<double> h1 = cell_step(t3, e1, state).first;
    Tensor<double> h2 = cell_step(t3, e2, state).first;
    CHECK(std::memcmp(h1.data(), h2.data(),
                      sizeof(double) * static_cast<std::size_t>(h1.numel())) == 0);

    // The final cell keeps a direct E_n path into the output gate.
    Cell<double> full = make_cell<double>(CellKind::Sgm, 31, 4);
    zero_gate(full, "input_gate");
    Tensor<double> f1 = cell_step(full, e1, state).first;
    Tensor<double> f2 = cell_step(full, e2, state).first;
    CHECK(std::memcmp(f1.data(), f2.data(),
                      sizeof(double) * static_cast<std::size_t>(f1.numel())) != 0);
}

TEST_CASE("lstm with open forget gate and closed input gate carries memory") {
    Cell<double> cell = make_cell<double>(CellKind::Lstm, 41, 4);
    zero_gate(cell, "forget_gate", 40.0);
    zero_gate(cell, "input_gate", -40.0);
    CellState<double> state = random_state(600);
    Tensor<double> e = random_tensor({1, 4, 5, 5}, 601);
    auto [h, next] = cell_step(cell, e, state);
    for (std::int64_t i = 0; i < next.c.numel(); ++i)
        CHECK(next.c.data()[i] ==
              doctest::Approx(state.c.data()[i]).epsilon(1e-12));
}

TEST_CASE("gru with saturated update gate keeps the previous hidden state") {
    Cell<double> cell = make_cell<double>(CellKind::Gru, 42, 4);
    zero_gate(cell, "update_gate", 40.0);
    CellState<double> state = random_state(700);
    Tensor<double> e = random_tensor({1, 4, 5, 5}, 701);
    auto [h, next] = cell_step(cell, e, state);
    for (std::int64_t i = 0; i < h.numel(); ++i)
        CHECK(h.data()[i] == doctest::Approx(state.h.data()[i]).epsilon(1e-12));
}

TEST_CASE("zeroed vanilla cell emits exactly zero") {
    Cell<double> cell = make_cell<double>(CellKind::Vanilla, 43, 4);
    zero_gate(cell, "recurrent");
    CellState<double> state = random_state(800);
    Tensor<double> e = random_tensor({1, 4, 5, 5}, 801);
    Tensor<double> h = cell_step(cell, e, state).first;
    for (std::int64_t i = 0; i < h.numel(); ++i) CHECK(h.data()[i] == 0.0);
}

TEST_CASE("cell_step rejects mismatched state shapes") {
    Cell<double> cell = make_cell<double>(CellKind::Sgm, 1, 4);
    CellState<double> state = zero_state<double>(1, 5, 5, 4);
    CHECK_THROWS(cell_step(cell, random_tensor({1, 4, 6, 6}, 1), state));
}

TEST_CASE("two recurrence steps pass gradcheck for every kind") {
    Tensor<double> e1 = random_tensor({1, 4, 4, 4}, 900, 0.0, 1.0);
    Tensor<double> e2 = random_tensor({1, 4, 4, 4}, 901, 0.0, 1.0);
    for (CellKind kind : all_cell_kinds()) {
        Cell<double> cell = make_cell<double>(kind, 50 + static_cast<int>(kind), 4);
        ParamRegistry<double> params;
        register_cell(params, "cell", cell);
        auto loss_fn = [&](Tape<double>&) {
            CellState<double> state = zero_state<double>(1, 4, 4, 4);
            state = cell_step(cell, e1, state).second;
            Tensor<double> h = cell_step(cell, e2, state).first;
            return reduce_mean(mul(h, h));
        };
        GradCheckReport report = gradcheck(params, loss_fn, 1e-5, 24,
                                           1000 + static_cast<int>(kind));
        INFO(cell_kind_name(kind), " worst ", report.worst_param, " err ",
             report.max_rel_err);
        CHECK(report.pass);
    }
}
