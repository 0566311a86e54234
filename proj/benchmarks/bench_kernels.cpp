// Microbenchmarks for the kernels that dominate a solve: spectral transforms
// versus scattered spline interpolation, one transport step per scheme, and
// the preconditioner application.

#include <benchmark/benchmark.h>

#include "veloreg/fft.hpp"
#include "veloreg/interp.hpp"
#include "veloreg/precond.hpp"
#include "veloreg/problems.hpp"
#include "veloreg/spectral.hpp"
#include "veloreg/transport.hpp"

using namespace veloreg;

namespace {

void BM_Fft(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Grid g(n, n);
    ScalarField u = problems::randomBandLimitedField(g, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fft::inverse(fft::forward(u), g));
    }
}
BENCHMARK(BM_Fft)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

void BM_Interpolation(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Grid g(n, n);
    ScalarField u = problems::randomBandLimitedField(g, 2);
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g);
    transport::Characteristics ch =
        transport::traceCharacteristics(v, 0.1, transport::TraceDirection::Forward);
    for (auto _ : state) {
        benchmark::DoNotOptimize(interp::evaluate(interp::prefilter(u), ch.departure));
    }
}
BENCHMARK(BM_Interpolation)->Arg(64)->Arg(128)->Arg(256)->Arg(512);

void BM_StateStep(benchmark::State& state) {
    const auto scheme = static_cast<transport::Scheme>(state.range(0));
    const int n = static_cast<int>(state.range(1));
    const Grid g(n, n);
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g);
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g);
    transport::SchemeConfig cfg{scheme, 0.2, 1};
    transport::Solver solver(v, transport::TimeGrid(1), cfg);
    for (auto _ : state) {
        benchmark::DoNotOptimize(solver.solveStateFinal(m0));
    }
}
BENCHMARK(BM_StateStep)
    ->Args({static_cast<long>(transport::Scheme::RK2A), 128})
    ->Args({static_cast<long>(transport::Scheme::SL), 128})
    ->Args({static_cast<long>(transport::Scheme::RK2A), 256})
    ->Args({static_cast<long>(transport::Scheme::SL), 256});

void BM_TwoLevelApply(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Grid g(n, n);
    ScalarField mR = problems::smoothReference(problems::SmoothVariant::A, g);
    VectorField vStar = problems::smoothVelocity(problems::SmoothVariant::A, g);
    problems::RegistrationProblem pair =
        problems::makeSyntheticPair(vStar, mR, {transport::Scheme::SL, 0.2, std::nullopt});

    inverse::Model model;
    precond::CoarseOperator coarse(vStar, pair, model,
                                   {transport::Scheme::SL, 5.0, std::nullopt});
    precond::PrecondChoice choice;
    choice.kind = precond::PrecondKind::TwoLevel;
    choice.coarseSolver = precond::CoarseSolverKind::Cheb;
    choice.chebIters = 10;
    VectorField r = problems::randomBandLimitedVelocity(g, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(precond::applyTwoLevel(r, coarse, choice, 1e-6, 1.0, 200.0));
    }
}
BENCHMARK(BM_TwoLevelApply)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
