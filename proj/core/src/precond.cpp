#include "veloreg/precond.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "veloreg/spectral.hpp"

namespace veloreg::precond {

namespace {

// Safety margin on the Lanczos estimate: the spectrum drifts slightly away
// from the v=0 estimate during an inversion and Chebyshev must not see
// eigenvalues above its upper bound.
constexpr double kEmaxInflation = 1.05;

VectorField applySplitHessianOf(const inverse::HessianOperator& hess, const VectorField& s) {
    VectorField t = spectral::applyInvReg(s, hess.weights(), hess.model().betaV, -0.5);
    VectorField q = hess.applyDataTerm(t);
    VectorField out = spectral::applyInvReg(q, hess.weights(), hess.model().betaV, -0.5);
    axpy(1.0, s, out);
    return out;
}

struct PcgOut {
    VectorField x;
    int iterations = 0;
    bool converged = false;
    bool negativeCurvature = false;
    bool indefinitePreconditioner = false;
    double relResidual = 0.0;
};

// PCG with the residual measured in the preconditioned norm sqrt(r'M r).
PcgOut pcg(const LinOp& A, const VectorField& b, const LinOp& M, double tol, int maxIter) {
    PcgOut out;
    out.x = VectorField(b.grid());

    VectorField r = b;
    VectorField z = M ? M(r) : r;
    double rz = dot(r, z);
    if (rz < 0.0 || !std::isfinite(rz)) {
        out.indefinitePreconditioner = true;
        return out;
    }
    const double norm0 = std::sqrt(std::max(rz, 0.0));
    if (!(norm0 > 0.0)) {
        out.converged = true;
        return out;
    }
    VectorField p = z;
    for (int it = 0; it < maxIter; ++it) {
        VectorField Ap = A(p);
        const double pAp = dot(p, Ap);
        if (!(pAp > 0.0)) {
            out.negativeCurvature = true;
            out.relResidual = std::sqrt(std::max(rz, 0.0)) / norm0;
            return out;
        }
        const double alpha = rz / pAp;
        axpy(alpha, p, out.x);
        axpy(-alpha, Ap, r);
        z = M ? M(r) : r;
        const double rzNew = dot(r, z);
        out.iterations = it + 1;
        if (rzNew < 0.0 || !std::isfinite(rzNew)) {
            // r'Mr < 0: the preconditioner is not positive definite here
            out.indefinitePreconditioner = true;
            return out;
        }
        out.relResidual = std::sqrt(rzNew) / norm0;
        if (out.relResidual <= tol) {
            out.converged = true;
            return out;
        }
        const double beta = rzNew / rz;
        rz = rzNew;
        scale(p, beta);
        axpy(1.0, z, p);
    }
    return out;
}

// Largest eigenvalue of a symmetric tridiagonal matrix via Sturm bisection.
double tridiagMaxEig(const std::vector<double>& alpha, const std::vector<double>& beta) {
    const int m = static_cast<int>(alpha.size());
    if (m == 1) return alpha[0];
    double lo = alpha[0], hi = alpha[0];
    for (int i = 0; i < m; ++i) {
        const double off = (i > 0 ? std::abs(beta[i - 1]) : 0.0) +
                           (i < m - 1 ? std::abs(beta[i]) : 0.0);
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
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (countBelow(mid) >= m)
            hi = mid;
        else
            lo = mid;
    }
    return 0.5 * (lo + hi);
}

double powerIterationEmax(const LinOp& op, const Grid& g, std::uint64_t seed) {
    VectorField q = problems::randomBandLimitedVelocity(g, seed);
    double lambda = 1.0;
    scale(q, 1.0 / normL2(q));
    for (int it = 0; it < 50; ++it) {
        VectorField w = op(q);
        lambda = dot(q, w);
        const double nw = normL2(w);
        if (!(nw > 0.0)) break;
        scale(w, 1.0 / nw);
        q = std::move(w);
    }
    return lambda;
}

double lanczosEmax(const LinOp& op, const Grid& g, int steps, std::uint64_t seed) {
    std::vector<VectorField> basis;
    std::vector<double> alpha, beta;

    VectorField q = problems::randomBandLimitedVelocity(g, seed);
    const double nq = normL2(q);
    if (!(nq > 0.0)) return 1.0;
    scale(q, 1.0 / nq);
    basis.push_back(q);

    for (int j = 0; j < steps; ++j) {
        VectorField w = op(basis[j]);
        if (j > 0) axpy(-beta[j - 1], basis[j - 1], w);
        const double a = dot(w, basis[j]);
        alpha.push_back(a);
        axpy(-a, basis[j], w);
        for (const VectorField& qi : basis) axpy(-dot(w, qi), qi, w);  // full reorthogonalization
        const double b = normL2(w);
        if (!std::isfinite(b)) return powerIterationEmax(op, g, seed ^ 0x1234567);
        if (b < 1e-12) break;  // invariant subspace found; estimates are exact
        beta.push_back(b);
        scale(w, 1.0 / b);
        basis.push_back(std::move(w));
    }
    if (alpha.empty()) return powerIterationEmax(op, g, seed ^ 0x1234567);
    beta.resize(alpha.size() - 1);
    return tridiagMaxEig(alpha, beta);
}

problems::RegistrationProblem restrictProblem(const problems::RegistrationProblem& problem,
                                              const Grid& coarse) {
    problems::RegistrationProblem out;
    out.reference = spectral::resample(problem.reference, coarse);
    out.templateImage = spectral::resample(problem.templateImage, coarse);
    out.provenance = problem.provenance;
    out.smoothingSigma = problem.smoothingSigma;
    return out;
}

}  // namespace

VectorField applyRegPrecond(const VectorField& r, const spectral::SpectralWeights& w, double betaV,
                            double power) {
    return spectral::applyInvReg(r, w, betaV, power);
}

VectorField chebyshevSolve(const LinOp& op, const VectorField& rhs, int k, double eMin, double eMax) {
    if (!(eMax > eMin) || !(eMin > 0.0))
        throw std::invalid_argument("chebyshevSolve: need eMax > eMin > 0");
    VectorField x(rhs.grid());
    if (k <= 0) return x;

    const double theta = 0.5 * (eMax + eMin);
    const double delta = 0.5 * (eMax - eMin);
    const double sigma = theta / delta;
    double rho = 1.0 / sigma;

    VectorField r = rhs;
    VectorField d = (1.0 / theta) * r;
    for (int it = 1; it <= k; ++it) {
        if (it > 1) {
            const double rhoNew = 1.0 / (2.0 * sigma - rho);
            VectorField dNew = (rhoNew * rho) * d;
            axpy(2.0 * rhoNew / delta, r, dNew);
            d = std::move(dNew);
            rho = rhoNew;
        }
        axpy(1.0, d, x);
        axpy(-1.0, op(d), r);
    }
    return x;
}

struct CoarseOperator::Impl {
    Grid coarseGrid;
    problems::RegistrationProblem coarseProblem;
    inverse::Model model;
    transport::TimeGrid tg;
    transport::SchemeConfig scheme;
    std::unique_ptr<inverse::HessianOperator> hess;

    Impl(const VectorField& vFine, const problems::RegistrationProblem& problem,
         const inverse::Model& mdl, const transport::SchemeConfig& coarseScheme)
        : coarseGrid(problem.grid().coarsened()),
          coarseProblem(restrictProblem(problem, coarseGrid)),
          model(mdl),
          scheme(coarseScheme) {
        VectorField vc = spectral::resample(vFine, coarseGrid);
        tg = transport::makeTimeGrid(vc, scheme);
        hess = std::make_unique<inverse::HessianOperator>(vc, coarseProblem, model, tg, scheme,
                                                          transport::HessianMode::GaussNewton);
    }
};

CoarseOperator::CoarseOperator(const VectorField& vFine, const problems::RegistrationProblem& problem,
                               const inverse::Model& model,
                               const transport::SchemeConfig& coarseScheme)
    : impl_(std::make_unique<Impl>(vFine, problem, model, coarseScheme)) {}

CoarseOperator::~CoarseOperator() = default;
CoarseOperator::CoarseOperator(CoarseOperator&&) noexcept = default;

const Grid& CoarseOperator::grid() const { return impl_->coarseGrid; }

VectorField CoarseOperator::applySplitHessian(const VectorField& s) const {
    return applySplitHessianOf(*impl_->hess, s);
}

std::pair<double, double> estimateEigsAt(const VectorField& v,
                                         const problems::RegistrationProblem& problem,
                                         const inverse::Model& model,
                                         const transport::SchemeConfig& coarseScheme,
                                         std::uint64_t seed) {
    CoarseOperator coarse(v, problem, model, coarseScheme);
    LinOp op = [&](const VectorField& s) { return coarse.applySplitHessian(s); };
    const double eMax = lanczosEmax(op, coarse.grid(), 30, seed);
    return {1.0, eMax};
}

std::pair<double, double> estimateEigs(const problems::RegistrationProblem& problem,
                                       const inverse::Model& model,
                                       const transport::SchemeConfig& coarseScheme,
                                       std::uint64_t seed) {
    return estimateEigsAt(VectorField(problem.grid()), problem, model, coarseScheme, seed);
}

double rescaleEmax(double eMax, double betaFrom, double betaTo) {
    return 1.0 + (eMax - 1.0) * betaFrom / betaTo;
}

VectorField applyTwoLevel(const VectorField& r, const CoarseOperator& coarse,
                          const PrecondChoice& choice, double outerTol, double eMin, double eMax) {
    VectorField rLow = spectral::cutoffFilter(r, spectral::Band::Low);
    VectorField rHigh = spectral::cutoffFilter(r, spectral::Band::High);
    VectorField rc = spectral::resample(rLow, coarse.grid());

    LinOp op = [&](const VectorField& s) { return coarse.applySplitHessian(s); };
    VectorField sc(coarse.grid());
    if (choice.coarseSolver == CoarseSolverKind::Cheb) {
        sc = chebyshevSolve(op, rc, choice.chebIters, eMin, kEmaxInflation * eMax);
    } else {
        PcgOut out = pcg(op, rc, LinOp(), choice.epsScale * outerTol, 500);
        sc = std::move(out.x);
    }
    for (int i = 0; i < kDim; ++i) {
        for (double x : sc[i].v) {
            if (!std::isfinite(x)) {
                std::fprintf(stderr, "precond: coarse solve diverged, falling back to identity\n");
                return r;  // split coordinates: the regularization smoother is the identity
            }
        }
    }
    VectorField out = spectral::resample(sc, r.grid());
    axpy(1.0, rHigh, out);
    return out;
}

KktResult solveKkt(const inverse::HessianOperator& hess, const VectorField& rhs, double tol,
                   int maxIter, const PrecondChoice& choice,
                   const problems::RegistrationProblem& problem, const VectorField& v,
                   const transport::SchemeConfig& coarseScheme) {
    if (choice.kind == PrecondKind::TwoLevel) {
        if (choice.coarseSolver == CoarseSolverKind::Pcg &&
            !(choice.epsScale > 0.0 && choice.epsScale < 1.0))
            throw std::invalid_argument("solveKkt: epsScale must lie in (0,1)");
        if (choice.coarseSolver == CoarseSolverKind::Cheb && choice.chebIters < 1)
            throw std::invalid_argument("solveKkt: chebIters must be >= 1");
        if (choice.eigEstimate &&
            !(choice.eigEstimate->second > choice.eigEstimate->first &&
              choice.eigEstimate->first > 0.0))
            throw std::invalid_argument("solveKkt: need eMax > eMin > 0");
    }

    const spectral::SpectralWeights& w = hess.weights();
    const double betaV = hess.model().betaV;
    const auto t0 = std::chrono::steady_clock::now();
    double precondTime = 0.0;

    VectorField rhsSplit = spectral::applyInvReg(rhs, w, betaV, -0.5);
    LinOp A = [&](const VectorField& s) { return applySplitHessianOf(hess, s); };

    LinOp M;  // identity for the plain regularization preconditioner
    std::unique_ptr<CoarseOperator> coarse;
    double eMin = 1.0, eMax = 10.0;
    if (choice.kind == PrecondKind::TwoLevel) {
        coarse = std::make_unique<CoarseOperator>(v, problem, hess.model(), coarseScheme);
        if (choice.coarseSolver == CoarseSolverKind::Cheb) {
            if (choice.eigEstimate) {
                eMin = choice.eigEstimate->first;
                eMax = choice.eigEstimate->second;
            } else {
                std::tie(eMin, eMax) = estimateEigs(problem, hess.model(), coarseScheme);
            }
        }
        M = [&choice, &coarse, tol, &eMin, &eMax, &precondTime](const VectorField& r) {
            const auto tp = std::chrono::steady_clock::now();
            VectorField out = applyTwoLevel(r, *coarse, choice, tol, eMin, eMax);
            precondTime += std::chrono::duration<double>(std::chrono::steady_clock::now() - tp)
                               .count();
            return out;
        };
    }

    PcgOut out = pcg(A, rhsSplit, M, tol, maxIter);
    if (out.indefinitePreconditioner && choice.kind == PrecondKind::TwoLevel &&
        choice.coarseSolver == CoarseSolverKind::Cheb) {
        // the spectrum drifted above the Chebyshev bound; re-estimate on the
        // coarse operator at this iterate and retry once
        LinOp op = [&](const VectorField& s) { return coarse->applySplitHessian(s); };
        eMax = lanczosEmax(op, coarse->grid(), 30, 0x5eed);
        std::fprintf(stderr, "precond: re-estimated Chebyshev bound eMax=%.6g after breakdown\n",
                     eMax);
        out = pcg(A, rhsSplit, M, tol, maxIter);
    }

    KktResult res;
    res.solution = spectral::applyInvReg(out.x, w, betaV, -0.5);
    res.iterations = out.iterations;
    res.negativeCurvature = out.negativeCurvature;
    res.converged = out.converged;
    res.relResidual = out.relResidual;
    res.totalTimeSec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.precondTimeSec = precondTime;
    return res;
}

}  // namespace veloreg::precond
