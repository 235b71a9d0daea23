#include "shc/analytic.hpp"
#include "shc/harness/experiments.hpp"
#include "shc/pmp.hpp"
#include "shc/riccati.hpp"
#include "shc/tensorkit.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace shc;

constexpr Index kHorizon = 24;
constexpr Index kBatch = 256;
constexpr Index kRank = 8;

Matrix batch_states(const harness::OrthogonalInstance& inst, Index n) {
    Rng rng(7);
    return inst.bases.front() * rng.normal_matrix(inst.bases.front().cols(), n) +
           0.1 * rng.normal_matrix(inst.stack.dim(), n);
}

void BM_BaseForward(benchmark::State& state) {
    const Index d = state.range(0);
    const auto inst = harness::make_orthogonal_instance(d, kRank, kHorizon, 1.0, 1);
    const Matrix x0 = batch_states(inst, kBatch);
    Matrix x(d, kBatch), next(d, kBatch);
    for (auto _ : state) {
        x = x0;
        for (Index t = 0; t < kHorizon; ++t) {
            next.noalias() = inst.stack[t] * x;
            x.swap(next);
        }
        benchmark::DoNotOptimize(x.data());
    }
    state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_BaseForward)->Arg(16)->Arg(64)->Arg(256);

void BM_AnalyticForward(benchmark::State& state) {
    const Index d = state.range(0);
    const auto inst = harness::make_orthogonal_instance(d, kRank, kHorizon, 1.0, 1);
    const Matrix x0 = batch_states(inst, kBatch);
    analytic::BatchForward fwd(inst.stack, inst.gains);
    Matrix x(d, kBatch);
    for (auto _ : state) {
        x = x0;
        fwd.run(x);
        benchmark::DoNotOptimize(x.data());
    }
    state.SetItemsProcessed(state.iterations() * kBatch);
}
BENCHMARK(BM_AnalyticForward)->Arg(16)->Arg(64)->Arg(256);

void BM_AnalyticFeedbackSingle(benchmark::State& state) {
    const Index d = state.range(0);
    const auto inst = harness::make_orthogonal_instance(d, kRank, kHorizon, 1.0, 1);
    const Vector x = inst.x0 + inst.z;
    for (auto _ : state) benchmark::DoNotOptimize(analytic::analytic_feedback(x, inst.bases.front(), 0.5));
}
BENCHMARK(BM_AnalyticFeedbackSingle)->Arg(64)->Arg(256);

void BM_RiccatiBackward(benchmark::State& state) {
    const Index d = state.range(0);
    const auto inst = harness::make_orthogonal_instance(d, kRank, 12, 1.0, 1);
    for (auto _ : state) benchmark::DoNotOptimize(riccati::riccati_backward(inst.stack, inst.costs, 1.0));
}
BENCHMARK(BM_RiccatiBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LambdaSchedule(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(analytic::lambda_schedule(1.0, state.range(0)));
}
BENCHMARK(BM_LambdaSchedule)->Arg(24)->Arg(1024);

void BM_MsaBatch(benchmark::State& state) {
    const Index d = state.range(0);
    const auto inst = harness::make_orthogonal_instance(d, kRank, kHorizon, 1.0, 1);
    const Matrix x0 = batch_states(inst, kBatch);
    const auto loss = harness::instance_loss(inst);
    pmp::MsaConfig cfg;
    cfg.max_outer_iters = 10;
    cfg.tolerance = std::numeric_limits<double>::min();
    for (auto _ : state) benchmark::DoNotOptimize(pmp::msa_solve_batch(inst.stack, x0, loss, cfg));
}
BENCHMARK(BM_MsaBatch)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Hosvd(benchmark::State& state) {
    const Index n = state.range(0);
    Rng rng(3);
    tensorkit::Tensor3 t(n, 8, 64);
    for (auto& v : t.data()) v = rng.normal();
    for (auto _ : state) benchmark::DoNotOptimize(tensorkit::hosvd(t));
}
BENCHMARK(BM_Hosvd)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
