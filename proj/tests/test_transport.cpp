#include <doctest.h>

#include <cmath>

#include "veloreg/problems.hpp"
#include "veloreg/spectral.hpp"
#include "veloreg/transport.hpp"
#include "test_util.hpp"

using namespace veloreg;
using testutil::sampled;
using transport::Scheme;
using transport::SchemeConfig;
using transport::TimeGrid;
using transport::TraceDirection;

namespace {
const Grid g64(64, 64);

VectorField curlField(const Grid& g) {
    ScalarField psi = sampled(g, [](double x1, double x2) { return std::sin(x1) * std::cos(x2); });
    VectorField gp = spectral::gradient(psi);
    VectorField v(g);
    v[0] = -1.0 * gp[1];
    v[1] = gp[0];
    return v;
}
}  // namespace

TEST_CASE("time step derivation from the CFL number") {
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g64);
    CHECK(transport::deriveSteps(v, 0.2) == 26);
    CHECK(transport::deriveSteps(v, 1.0) == 6);
    CHECK(transport::deriveSteps(v, 5.0) == 2);
    CHECK(transport::deriveSteps(v, 10.0) == 2);  // floor of two steps
    CHECK_THROWS(transport::deriveSteps(v, 0.0));
    CHECK_THROWS(transport::deriveSteps(v, 21.0));

    VectorField b = problems::smoothVelocity(problems::SmoothVariant::B, g64);
    CHECK(transport::deriveSteps(b, 0.2) == 51);  // unit amplitude, max_i |v^i|/h
}

TEST_CASE("characteristics: stationary and constant flows") {
    VectorField zero(g64);
    transport::Characteristics c0 = transport::traceCharacteristics(zero, 0.1, TraceDirection::Forward);
    for (int i1 = 0; i1 < 4; ++i1) {
        const std::size_t p = static_cast<std::size_t>(g64.index(i1 * 7, i1 * 3));
        CHECK(c0.departure.x1[p] == doctest::Approx(g64.coord(0, i1 * 7)).epsilon(1e-15));
    }

    VectorField cv(g64);
    cv[0] = ScalarField(g64, 0.3);
    cv[1] = ScalarField(g64, -0.1);
    transport::Characteristics cc = transport::traceCharacteristics(cv, 0.05, TraceDirection::Forward);
    const std::size_t p = static_cast<std::size_t>(g64.index(5, 9));
    CHECK(cc.departure.x1[p] == doctest::Approx(g64.coord(0, 5) - 0.05 * 0.3).epsilon(1e-14));
    CHECK(cc.departure.x2[p] == doctest::Approx(g64.coord(1, 9) + 0.05 * 0.1).epsilon(1e-14));

    // backward family displaces with the sign-flipped velocity
    transport::Characteristics cb = transport::traceCharacteristics(cv, 0.05, TraceDirection::Backward);
    CHECK(cb.departure.x1[p] == doctest::Approx(g64.coord(0, 5) + 0.05 * 0.3).epsilon(1e-14));
}

TEST_CASE("characteristics: rigid rotation matches the exact flow") {
    // v = (-x2, x1) rotates; only nodes well inside the domain are checked
    // since the field is not periodic
    VectorField v(g64);
    v[0] = sampled(g64, [](double, double x2) { return -x2; });
    v[1] = sampled(g64, [](double x1, double) { return x1; });
    const double ht = 0.01;
    transport::Characteristics ch = transport::traceCharacteristics(v, ht, TraceDirection::Forward);
    double worst = 0.0;
    for (int i1 = 0; i1 < g64.n[0]; ++i1) {
        for (int i2 = 0; i2 < g64.n[1]; ++i2) {
            const double x1 = g64.coord(0, i1), x2 = g64.coord(1, i2);
            if (std::hypot(x1, x2) >= kPi / 2) continue;
            // departure point = rotation by angle -ht
            const double e1 = std::cos(ht) * x1 + std::sin(ht) * x2;
            const double e2 = -std::sin(ht) * x1 + std::cos(ht) * x2;
            const std::size_t p = static_cast<std::size_t>(g64.index(i1, i2));
            worst = std::max({worst, std::abs(ch.departure.x1[p] - e1),
                              std::abs(ch.departure.x2[p] - e2)});
        }
    }
    CHECK(worst <= 1e-5);
}

TEST_CASE("characteristics displacement bound") {
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::B, g64);
    const double ht = 0.25;
    transport::Characteristics ch = transport::traceCharacteristics(v, ht, TraceDirection::Forward);
    const double bound = ht * normLinf(v) * 1.2 * std::sqrt(2.0);
    for (int i1 = 0; i1 < g64.n[0]; ++i1)
        for (int i2 = 0; i2 < g64.n[1]; ++i2) {
            const std::size_t p = static_cast<std::size_t>(g64.index(i1, i2));
            const double d = std::hypot(ch.departure.x1[p] - g64.coord(0, i1),
                                        ch.departure.x2[p] - g64.coord(1, i2));
            REQUIRE(d <= bound);
        }
}

TEST_CASE("zero velocity transports nothing, every scheme") {
    VectorField zero(g64);
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g64);
    for (Scheme s : {Scheme::RK2, Scheme::RK2A, Scheme::SL}) {
        SchemeConfig cfg{s, 0.2, 4};
        transport::Trajectory traj = transport::solveState(zero, m0, TimeGrid(4), cfg);
        for (int j = 0; j <= 4; ++j) CHECK(normLinf(traj.at(j) - m0) <= 1e-14);
        transport::Trajectory adj = transport::solveAdjoint(zero, m0, TimeGrid(4), cfg);
        for (int j = 0; j <= 4; ++j) CHECK(normLinf(adj.at(j) - m0) <= 1e-14);
    }
}

TEST_CASE("RK2 and RK2A right-hand sides agree for divergence-free velocity") {
    VectorField v = curlField(g64);
    ScalarField m0 = sampled(g64, [](double x1, double x2) { return std::cos(x1) * std::cos(x2); });
    TimeGrid tg(1);
    ScalarField a = transport::solveState(v, m0, tg, {Scheme::RK2, 0.2, 1}).last();
    ScalarField b = transport::solveState(v, m0, tg, {Scheme::RK2A, 0.2, 1}).last();
    CHECK(normLinf(a - b) <= 1e-10);
}

TEST_CASE("SL transports a full period back onto itself") {
    VectorField v(g64);
    v[0] = ScalarField(g64, 2.0 * kPi);
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g64);
    SchemeConfig cfg{Scheme::SL, 0.2, 8};
    ScalarField m1 = transport::solveState(v, m0, TimeGrid(8), cfg).last();
    CHECK(normLinf(m1 - m0) <= 1e-3);
}

TEST_CASE("adjoint transport conserves mass and shifts against the flow") {
    // divergence-free: the SL source vanishes and total mass is conserved
    VectorField v = curlField(g64);
    ScalarField lam1 = problems::smoothReference(problems::SmoothVariant::A, g64);
    SchemeConfig cfg{Scheme::SL, 0.2, std::nullopt};
    TimeGrid tg = transport::makeTimeGrid(v, cfg);
    transport::Trajectory adj = transport::solveAdjoint(v, lam1, tg, cfg);
    const double h2 = g64.h[0] * g64.h[1];
    const double massEnd = h2 * mean(adj.at(0)) * g64.points();
    const double massStart = h2 * mean(lam1) * g64.points();
    CHECK(std::abs(massEnd - massStart) <= 1e-6 * std::abs(massStart));

    // constant velocity: lambda(0) equals lambda(1) shifted by +v
    VectorField cv(g64);
    cv[0] = ScalarField(g64, 0.5);
    SchemeConfig cfgc{Scheme::SL, 0.2, 16};
    transport::Trajectory adjc = transport::solveAdjoint(cv, lam1, TimeGrid(16), cfgc);
    ScalarField expected = sampled(g64, [](double x1, double x2) {
        const double s1 = x1 + 0.5;
        return 0.25 * (1.0 + std::cos(s1)) * (1.0 + std::cos(x2));
    });
    CHECK(normLinf(adjc.at(0) - expected) <= 1e-3);
}

TEST_CASE("mass conservation across schemes at CFL 0.2") {
    // RK2 and RK2A are conservative to roundoff at any resolution (the
    // spectral divergence has exact zero mean)
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g64);
    ScalarField lam1 = problems::smoothReference(problems::SmoothVariant::A, g64);
    for (Scheme s : {Scheme::RK2, Scheme::RK2A}) {
        SchemeConfig cfg{s, 0.2, std::nullopt};
        TimeGrid tg = transport::makeTimeGrid(v, cfg);
        transport::Trajectory adj = transport::solveAdjoint(v, lam1, tg, cfg);
        CHECK(std::abs(mean(adj.at(0)) - mean(lam1)) <= 1e-12 * std::abs(mean(lam1)));
    }

    // the SL gather step is conservative only up to its discretization error;
    // checked at the resolution the scheme is normally run at
    const Grid g256(256, 256);
    VectorField v256 = problems::smoothVelocity(problems::SmoothVariant::A, g256);
    ScalarField lam256 = problems::smoothReference(problems::SmoothVariant::A, g256);
    SchemeConfig cfg{Scheme::SL, 0.2, std::nullopt};
    TimeGrid tg = transport::makeTimeGrid(v256, cfg);
    ScalarField lam0 = transport::Solver(v256, tg, cfg).solveAdjointFinal(lam256);
    CHECK(std::abs(mean(lam0) - mean(lam256)) <= 1e-6 * std::abs(mean(lam256)));
}

TEST_CASE("incremental state: zero direction, linearity, derivative order") {
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g64);
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g64);
    SchemeConfig cfg{Scheme::RK2A, 0.2, std::nullopt};
    TimeGrid tg = transport::makeTimeGrid(v, cfg);
    transport::Solver solver(v, tg, cfg);
    transport::TransportSolution state = solver.solveState(m0);

    VectorField zero(g64);
    transport::Trajectory mtZero = solver.solveIncState(zero, state);
    for (int j = 0; j <= tg.nt; ++j) CHECK(normLinf(mtZero.at(j)) <= 1e-15);

    VectorField dir = problems::randomBandLimitedVelocity(g64, 51);
    transport::Trajectory mt1 = solver.solveIncState(dir, state);
    transport::Trajectory mt2 = solver.solveIncState(2.5 * dir, state);
    CHECK(normLinf(mt2.last() - 2.5 * mt1.last()) <= 1e-12 * (1.0 + normLinf(mt1.last())));

    // directional derivative of the nonlinear solve
    double errs[2];
    int k = 0;
    for (double eps : {1e-2, 1e-3}) {
        VectorField vp = v;
        axpy(eps, dir, vp);
        ScalarField mp = transport::Solver(vp, tg, cfg).solveState(m0).nodes.last();
        ScalarField lin = state.nodes.last();
        axpy(eps, mt1.last(), lin);
        errs[k++] = normL2(mp - lin);
    }
    const double order = std::log10(errs[0] / errs[1]);
    CHECK(order >= 1.9);
}

TEST_CASE("incremental adjoint modes") {
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g64);
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g64);
    SchemeConfig cfg{Scheme::RK2A, 0.2, 10};
    TimeGrid tg(10);
    transport::Solver solver(v, tg, cfg);
    transport::TransportSolution adj = solver.solveAdjoint(m0);

    VectorField dir = problems::randomBandLimitedVelocity(g64, 61);
    ScalarField zeroField(g64);

    // zero final condition in GN mode stays zero
    transport::Trajectory z =
        solver.solveIncAdjoint(dir, zeroField, nullptr, transport::HessianMode::GaussNewton);
    for (int j = 0; j <= tg.nt; ++j) CHECK(normLinf(z.at(j)) <= 1e-15);

    // GN mode is exactly the adjoint solve with the incremental final condition
    transport::Trajectory gn =
        solver.solveIncAdjoint(dir, m0, nullptr, transport::HessianMode::GaussNewton);
    for (int j = 0; j <= tg.nt; ++j) CHECK(normLinf(gn.at(j) - adj.nodes.at(j)) == 0.0);

    // full Newton with a zero direction reduces to GN
    transport::Trajectory fn =
        solver.solveIncAdjoint(VectorField(g64), m0, &adj, transport::HessianMode::FullNewton);
    for (int j = 0; j <= tg.nt; ++j) CHECK(normLinf(fn.at(j) - gn.at(j)) <= 1e-15);

    CHECK_THROWS(solver.solveIncAdjoint(dir, m0, nullptr, transport::HessianMode::FullNewton));
}

TEST_CASE("jacobian determinant") {
    SchemeConfig cfg{Scheme::SL, 0.2, std::nullopt};

    VectorField zero(g64);
    ScalarField j0 = transport::jacobianDet(zero, TimeGrid(2), cfg);
    CHECK(normLinf(j0 - ScalarField(g64, 1.0)) <= 1e-14);

    VectorField df = curlField(g64);
    TimeGrid tg = transport::makeTimeGrid(df, cfg);
    ScalarField j1 = transport::jacobianDet(df, tg, cfg);
    CHECK(normLinf(j1 - ScalarField(g64, 1.0)) <= 1e-2);

    // compressible: the sign of J-1 follows the sign of div v
    VectorField comp(g64);
    comp[0] = sampled(g64, [](double x1, double) { return 0.05 * std::sin(x1); });
    ScalarField divv = spectral::divergence(comp);
    ScalarField jc = transport::jacobianDet(comp, TimeGrid(8), {Scheme::SL, 0.2, 8});
    const double dmax = normLinf(divv);
    for (int i1 = 0; i1 < g64.n[0]; ++i1)
        for (int i2 = 0; i2 < g64.n[1]; ++i2) {
            const std::size_t p = static_cast<std::size_t>(g64.index(i1, i2));
            if (std::abs(divv.v[p]) < 0.5 * dmax) continue;
            REQUIRE((jc.v[p] - 1.0) * divv.v[p] > 0.0);
        }
}

TEST_CASE("SL converges to the RK2A reference as the CFL number shrinks") {
    // time-error isolation: both schemes on one grid, RK2A(0.2) as reference;
    // 128^2 keeps the same-grid reference floor below the two-order window
    const Grid g(128, 128);
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::A, g);
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::A, g);
    SchemeConfig refCfg{Scheme::RK2A, 0.2, std::nullopt};
    ScalarField ref = transport::Solver(v, transport::makeTimeGrid(v, refCfg), refCfg)
                          .solveStateFinal(m0);
    double prev = 1e300;
    std::vector<double> errs;
    for (double cfl : {10.0, 2.0, 1.0, 0.2}) {  // distinct step counts at this grid
        SchemeConfig cfg{Scheme::SL, cfl, std::nullopt};
        ScalarField sol = transport::Solver(v, transport::makeTimeGrid(v, cfg), cfg)
                              .solveStateFinal(m0);
        const double err = normL2(sol - ref) / normL2(ref);
        CHECK(err < prev);
        prev = err;
        errs.push_back(err);
    }
    CHECK(errs.back() <= errs.front() / 100.0);  // two orders between cfl 10 and 0.2
}

TEST_CASE("blow-up guard trips on an unstable spectral RK2 solve") {
    // constant velocity makes the modes exact eigenvectors: |R(i k v ht)|
    // grows like (k v ht)^2/2 per step, far past the guard in two steps
    VectorField v(g64);
    v[0] = ScalarField(g64, 2.0);
    ScalarField m0 = problems::randomBandLimitedField(g64, 5);
    SchemeConfig cfg{Scheme::RK2, 0.2, 2};
    CHECK_THROWS_AS(transport::solveState(v, m0, TimeGrid(2), cfg), transport::BlowupError);
}

TEST_CASE("SL stability bound across CFL numbers") {
    ScalarField m0 = problems::smoothReference(problems::SmoothVariant::B, g64);
    VectorField v = problems::smoothVelocity(problems::SmoothVariant::B, g64);
    for (double cfl : {1.0, 5.0, 10.0}) {
        SchemeConfig cfg{Scheme::SL, cfl, std::nullopt};
        TimeGrid tg = transport::makeTimeGrid(v, cfg);
        transport::Trajectory traj = transport::solveState(v, m0, tg, cfg);
        for (int j = 0; j <= tg.nt; ++j) REQUIRE(normLinf(traj.at(j)) <= 1.2 * normLinf(m0));
    }
}
