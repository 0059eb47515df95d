#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "slowfast/averaging.hpp"
#include "slowfast/integrate.hpp"
#include "slowfast/model_zoo.hpp"
#include "slowfast/mollify.hpp"
#include "slowfast/noise.hpp"

namespace {

using namespace slowfast;

void BM_PhiloxBlock(benchmark::State& state) {
    Philox4x32::Counter ctr{0, 0, 0, 0};
    const Philox4x32::Key key{0x12345678u, 0x9abcdef0u};
    for (auto _ : state) {
        ++ctr[0];
        benchmark::DoNotOptimize(Philox4x32::block(ctr, key));
    }
    state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_PhiloxBlock);

void BM_NoiseIncrements(benchmark::State& state) {
    NoiseSource w(7, 0, Channel::W1, 1);
    std::vector<double> out(1);
    for (auto _ : state) {
        w.next_increment(1e-3, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_NoiseIncrements);

void BM_BrownianBridge(benchmark::State& state) {
    const auto substeps = static_cast<std::size_t>(state.range(0));
    NoiseSource w(7, 0, Channel::W2, 1);
    std::vector<double> total{0.1}, out(substeps);
    std::uint64_t k = 0;
    for (auto _ : state) {
        w.bridge(k++, 1.0 / 256, total, substeps, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BrownianBridge)->Arg(4)->Arg(64)->Arg(1024);

void BM_CoupledStep(benchmark::State& state) {
    const auto sys = get_zoo("ou-smooth").system(1.0 / 64);
    CoupledWorkspace ws(sys);
    std::vector<double> x{0.0}, y{0.5};
    const std::vector<double> dw1{0.01}, dw2{0.01};
    for (auto _ : state) {
        em_step_coupled(sys, x, y, 0.0, 1e-4, dw1, dw2, ws);
        x[0] = std::fmod(x[0], 4.0);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_CoupledStep);

void BM_CoupledPath(benchmark::State& state) {
    const double eps = 1.0 / static_cast<double>(state.range(0));
    const auto sys = get_zoo("ou-smooth").system(eps);
    const auto plan = StepPlan::for_epsilon(1.0 / 256, 1.0, eps);
    std::uint64_t p = 0;
    for (auto _ : state) benchmark::DoNotOptimize(simulate_coupled(sys, plan, p++, 1).size());
}
BENCHMARK(BM_CoupledPath)->Arg(16)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_InvariantMeasure(benchmark::State& state) {
    const auto sys = get_zoo("ou-smooth").system();
    const std::vector<double> y{1.0};
    const auto frozen = sys.freeze(y);
    InvariantMeasureConfig cfg;
    cfg.count = static_cast<std::size_t>(state.range(0));
    cfg.burn_in = 1.0;
    for (auto _ : state)
        benchmark::DoNotOptimize(
            estimate_invariant_measure(frozen, cfg, NoiseSource(3, 0, Channel::Aux, 1)).ess);
}
BENCHMARK(BM_InvariantMeasure)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_SpdSqrt(benchmark::State& state) {
    const auto n = state.range(0);
    Matrix a = Matrix::Random(n, n);
    const Matrix m = a * a.transpose() + Matrix::Identity(n, n);
    for (auto _ : state) benchmark::DoNotOptimize(spd_sqrt(m).data());
}
BENCHMARK(BM_SpdSqrt)->Arg(1)->Arg(4)->Arg(16);

void BM_MollifiedEval(benchmark::State& state) {
    const CoefficientField f(
        "holder", Arity{false, false, true}, Shape{1, 1},
        [](double, std::span<const double>, std::span<const double> y, std::span<double> out) {
            out[0] = std::min(std::sqrt(std::abs(y[0])), 1.0);
        },
        HolderMeta{1.0, 0.5, std::nullopt}, 1.0);
    const MollifiedField fn(f, static_cast<unsigned>(state.range(0)));
    std::vector<double> x, y{0.3}, out(1);
    for (auto _ : state) {
        fn.eval(0.0, x, y, out);
        benchmark::DoNotOptimize(out[0]);
    }
}
BENCHMARK(BM_MollifiedEval)->Arg(4)->Arg(64);

}  // namespace
BENCHMARK_MAIN();
