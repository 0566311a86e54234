#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "veloreg/precond.hpp"
#include "veloreg/problems.hpp"
#include "veloreg/spectral.hpp"
#include "test_util.hpp"

using namespace veloreg;
using inverse::Model;
using problems::SmoothVariant;
using transport::Scheme;
using transport::SchemeConfig;
using transport::TimeGrid;

namespace {

problems::RegistrationProblem smoothPair(const Grid& g) {
    ScalarField mR = problems::smoothReference(SmoothVariant::A, g);
    VectorField vStar = problems::smoothVelocity(SmoothVariant::A, g);
    return problems::makeSyntheticPair(vStar, mR, {Scheme::SL, 0.2, std::nullopt});
}

// split-preconditioned Hessian application, test-side composition
VectorField splitApply(const inverse::HessianOperator& hess, const VectorField& s) {
    VectorField t = spectral::applyInvReg(s, hess.weights(), hess.model().betaV, -0.5);
    VectorField q = hess.applyDataTerm(t);
    VectorField out = spectral::applyInvReg(q, hess.weights(), hess.model().betaV, -0.5);
    axpy(1.0, s, out);
    return out;
}

}  // namespace

TEST_CASE("regularization preconditioner inverts the regularization operator") {
    const Grid g(32, 32);
    auto w = spectral::SpectralWeights::make(g, spectral::RegNorm::H2Semi);
    VectorField u = problems::randomBandLimitedVelocity(g, 3);
    for (int i = 0; i < kDim; ++i) {
        const double mu = mean(u[i]);
        for (double& x : u[i].v) x -= mu;
    }
    VectorField round = precond::applyRegPrecond(spectral::applyReg(u, w, 0.05), w, 0.05);
    CHECK(normLinf(round - u) <= 1e-10 * (1.0 + normLinf(u)));

    VectorField c(g);
    c[0] = ScalarField(g, 1.0);
    VectorField pc = precond::applyRegPrecond(c, w, 0.05);
    CHECK(pc[0].v[0] == doctest::Approx(20.0).epsilon(1e-12));  // zero mode scaled by 1/beta
}

TEST_CASE("split-preconditioned Hessian spectrum has the analytic floor at one") {
    const Grid g(32, 32);
    problems::RegistrationProblem pair = smoothPair(g);
    Model model;
    model.betaV = 1e-2;
    VectorField zero(g);
    SchemeConfig cfg{Scheme::SL, 5.0, std::nullopt};
    TimeGrid tg(2);
    inverse::HessianOperator hess(zero, pair, model, tg, cfg, transport::HessianMode::GaussNewton);

    // 20-step Lanczos tridiagonal; its smallest Ritz value bounds the spectrum
    // floor from above and must sit at 1 up to roundoff
    std::vector<VectorField> basis;
    std::vector<double> alpha, beta;
    VectorField q = problems::randomBandLimitedVelocity(g, 17);
    scale(q, 1.0 / normL2(q));
    basis.push_back(q);
    for (int j = 0; j < 20; ++j) {
        VectorField w = splitApply(hess, basis[j]);
        if (j > 0) axpy(-beta[j - 1], basis[j - 1], w);
        alpha.push_back(dot(w, basis[j]));
        axpy(-alpha[j], basis[j], w);
        for (const auto& qi : basis) axpy(-dot(w, qi), qi, w);
        const double b = normL2(w);
        if (b < 1e-12) break;
        beta.push_back(b);
        scale(w, 1.0 / b);
        basis.push_back(std::move(w));
    }
    // smallest eigenvalue of the tridiagonal by bisection
    const int m = static_cast<int>(alpha.size());
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i < m; ++i) {
        const double off =
            (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i < m - 1 ? std::abs(beta[i]) : 0.0);
        lo = std::min(lo, alpha[i] - off);
        hi = std::max(hi, alpha[i] + off);
    }
    auto countBelow = [&](double x) {
        int count = 0;
        double d = 1.0;
        for (int i = 0; i < m; ++i) {
            const double offsq = i > 0 ? beta[i - 1] * beta[i - 1] : 0.0;
            d = alpha[i] - x - offsq / d;
            if (d == 0.0) d = -1e-300;
            if (d < 0.0) ++count;
        }
        return count;
    };
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (countBelow(mid) >= 1)
            hi = mid;
        else
            lo = mid;
    }
    CHECK(0.5 * (lo + hi) >= 1.0 - 1e-6);
}

TEST_CASE("eigenvalue estimation") {
    const Grid g(64, 64);
    problems::RegistrationProblem pair = smoothPair(g);
    Model model;
    const SchemeConfig coarse{Scheme::SL, 5.0, std::nullopt};

    model.betaV = 1e3;  // regularization dominates: spectrum collapses to one
    auto [eMinBig, eMaxBig] = precond::estimateEigs(pair, model, coarse);
    CHECK(eMinBig == 1.0);
    CHECK(eMaxBig <= 1.1);
    CHECK(eMaxBig >= 1.0 - 1e-12);

    // (eMax - 1) * beta stays constant under beta changes
    std::vector<double> gaps;
    for (double beta : {1e-1, 1e-2, 1e-3}) {
        model.betaV = beta;
        auto [eMin, eMax] = precond::estimateEigs(pair, model, coarse);
        CHECK(eMin == 1.0);
        gaps.push_back((eMax - 1.0) * beta);
    }
    for (double gap : gaps) {
        CHECK(gap <= gaps[0] * 1.05);
        CHECK(gap >= gaps[0] * 0.95);
    }

    // rescaling rule
    model.betaV = 1e-2;
    auto [eMin2, eMax2] = precond::estimateEigs(pair, model, coarse);
    (void)eMin2;
    CHECK(precond::rescaleEmax(eMax2, 1e-2, 1e-3) ==
          doctest::Approx(1.0 + (eMax2 - 1.0) * 10.0).epsilon(1e-12));
}

TEST_CASE("Chebyshev solve") {
    const Grid g(32, 32);

    // k = 0 returns the zero field
    precond::LinOp ident = [](const VectorField& x) { return x; };
    VectorField rhs = problems::randomBandLimitedVelocity(g, 5);
    CHECK(normLinf(precond::chebyshevSolve(ident, rhs, 0, 1.0, 2.0)) == 0.0);

    // identity operator with a tight interval converges in one application
    VectorField x1 = precond::chebyshevSolve(ident, rhs, 1, 1.0 - 1e-9, 1.0 + 1e-9);
    CHECK(normLinf(x1 - rhs) <= 1e-8 * normLinf(rhs));

    // diagonal operator with spectrum filling [1,10]: the error contraction
    // tracks the Chebyshev bound 2 ((sqrt(k)-1)/(sqrt(k)+1))^n
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(1.0, 10.0);
    ScalarField d(g);
    for (double& x : d.v) x = uni(rng);
    d.v[0] = 1.0;
    d.v[1] = 10.0;  // pin the extremes
    precond::LinOp diag = [&](const VectorField& x) {
        VectorField out = x;
        for (int i = 0; i < kDim; ++i)
            for (std::size_t p = 0; p < out[i].v.size(); ++p) out[i].v[p] *= d.v[p];
        return out;
    };
    const int k = 20;
    VectorField sol = precond::chebyshevSolve(diag, rhs, k, 1.0, 10.0);
    VectorField exact = rhs;
    for (int i = 0; i < kDim; ++i)
        for (std::size_t p = 0; p < exact[i].v.size(); ++p) exact[i].v[p] /= d.v[p];
    const double errRatio = normL2(sol - exact) / normL2(exact);
    const double kappa = 10.0;
    const double bound = 2.0 * std::pow((std::sqrt(kappa) - 1.0) / (std::sqrt(kappa) + 1.0), k);
    CHECK(errRatio <= 3.0 * bound);
    CHECK(errRatio >= bound / 3.0);

    CHECK_THROWS(precond::chebyshevSolve(ident, rhs, 3, 2.0, 1.0));
}

TEST_CASE("regularization preconditioner commutes with the Leray projection") {
    const Grid g(32, 32);
    auto w = spectral::SpectralWeights::make(g, spectral::RegNorm::H2Semi);
    VectorField b = problems::randomBandLimitedVelocity(g, 77);
    VectorField a1 = spectral::projectDivFree(precond::applyRegPrecond(b, w, 0.02));
    VectorField a2 = precond::applyRegPrecond(spectral::projectDivFree(b), w, 0.02);
    CHECK(normLinf(a1 - a2) <= 1e-12 * (1.0 + normLinf(a1)));
}

TEST_CASE("two-level application: high band passes through") {
    const Grid g(64, 64);
    problems::RegistrationProblem pair = smoothPair(g);
    Model model;
    VectorField v = *pair.groundTruthVelocity;
    const SchemeConfig coarse{Scheme::SL, 5.0, std::nullopt};
    precond::CoarseOperator op(v, pair, model, coarse);

    precond::PrecondChoice choice;
    choice.kind = precond::PrecondKind::TwoLevel;
    choice.coarseSolver = precond::CoarseSolverKind::Cheb;
    choice.chebIters = 10;

    VectorField r = problems::randomBandLimitedVelocity(g, 31);
    VectorField rHigh = spectral::cutoffFilter(r, spectral::Band::High);
    VectorField out = precond::applyTwoLevel(rHigh, op, choice, 1e-6, 1.0, 50.0);
    CHECK(normLinf(out - rHigh) <= 1e-12 * (1.0 + normLinf(rHigh)));
}

TEST_CASE("two-level with a constant template acts as the identity on the low band") {
    const Grid g(64, 64);
    problems::RegistrationProblem flat;
    flat.reference = ScalarField(g, 0.5);
    flat.templateImage = ScalarField(g, 0.5);
    Model model;
    VectorField zero(g);
    const SchemeConfig coarse{Scheme::SL, 5.0, std::nullopt};
    precond::CoarseOperator op(zero, flat, model, coarse);

    precond::PrecondChoice choice;
    choice.kind = precond::PrecondKind::TwoLevel;
    choice.coarseSolver = precond::CoarseSolverKind::Cheb;
    choice.chebIters = 10;

    VectorField r = spectral::cutoffFilter(problems::randomBandLimitedVelocity(g, 41),
                                           spectral::Band::Low);
    VectorField out = precond::applyTwoLevel(r, op, choice, 1e-6, 1.0, 1.0 + 1e-6);
    CHECK(normLinf(out - r) <= 1e-6 * (1.0 + normLinf(r)));
}

TEST_CASE("KKT solves agree across preconditioners") {
    const Grid g(64, 64);
    problems::RegistrationProblem pair = smoothPair(g);
    Model model;
    model.betaV = 1e-2;
    const VectorField& vStar = *pair.groundTruthVelocity;
    VectorField target = -0.5 * vStar;
    const SchemeConfig coarse{Scheme::SL, 5.0, std::nullopt};

    SchemeConfig fine{Scheme::SL, 5.0, std::nullopt};
    TimeGrid tg = transport::makeTimeGrid(vStar, fine);
    inverse::HessianOperator hess(vStar, pair, model, tg, fine, transport::HessianMode::GaussNewton);

    VectorField rhs = spectral::applyInvReg(target, hess.weights(), model.betaV, 1.0);
    axpy(1.0, hess.applyDataTerm(target), rhs);

    precond::PrecondChoice reg;
    precond::KktResult a = precond::solveKkt(hess, rhs, 1e-12, 2000, reg, pair, vStar, coarse);
    CHECK(a.converged);
    CHECK(normL2(a.solution - target) / normL2(target) <= 1e-10);

    precond::PrecondChoice twoCheb;
    twoCheb.kind = precond::PrecondKind::TwoLevel;
    twoCheb.coarseSolver = precond::CoarseSolverKind::Cheb;
    twoCheb.chebIters = 10;
    precond::KktResult b = precond::solveKkt(hess, rhs, 1e-12, 2000, twoCheb, pair, vStar, coarse);
    CHECK(b.converged);
    CHECK(normL2(b.solution - target) / normL2(target) <= 1e-10);
    CHECK(b.iterations <= a.iterations);

    CHECK(normL2(a.solution - b.solution) / normL2(target) <= 1e-10);
}
