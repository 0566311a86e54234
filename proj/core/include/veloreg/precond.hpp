#ifndef VELOREG_PRECOND_HPP
#define VELOREG_PRECOND_HPP

#include <functional>
#include <memory>
#include <optional>
#include <utility>

#include "veloreg/inverse.hpp"

namespace veloreg::precond {

enum class PrecondKind { Reg, TwoLevel };
enum class CoarseSolverKind { Pcg, Cheb };

struct PrecondChoice {
    PrecondKind kind = PrecondKind::Reg;
    CoarseSolverKind coarseSolver = CoarseSolverKind::Cheb;
    double epsScale = 0.1;  // coarse PCG tolerance = epsScale * outer tolerance
    int chebIters = 10;
    std::optional<std::pair<double, double>> eigEstimate;  // (eMin,eMax); else estimate at v=0
    bool reestimateEachIteration = false;
};

using LinOp = std::function<VectorField(const VectorField&)>;

/// Split regularization preconditioner: per-mode scaling by
/// (beta_v*gammaRegularized)^power with power -1 or -1/2.
VectorField applyRegPrecond(const VectorField& r, const spectral::SpectralWeights& w,
                            double betaV, double power = -1.0);

/// Chebyshev semi-iteration on [eMin,eMax], zero initial guess, exactly k
/// operator applications. Deterministic.
VectorField chebyshevSolve(const LinOp& op, const VectorField& rhs, int k, double eMin, double eMax);

/// Largest eigenvalue of the split-preconditioned coarse Gauss-Newton Hessian
/// at v=0 via plain Lanczos (30 steps, full reorthogonalization); the smallest
/// is the analytic floor 1.
std::pair<double, double> estimateEigs(const problems::RegistrationProblem& problem,
                                       const inverse::Model& model,
                                       const transport::SchemeConfig& coarseScheme,
                                       std::uint64_t seed = 0x5eed);

/// Same estimate at an arbitrary velocity iterate.
std::pair<double, double> estimateEigsAt(const VectorField& v,
                                         const problems::RegistrationProblem& problem,
                                         const inverse::Model& model,
                                         const transport::SchemeConfig& coarseScheme,
                                         std::uint64_t seed = 0x5eed);

/// Rescaling of the largest eigenvalue under a change of beta_v.
double rescaleEmax(double eMax, double betaFrom, double betaTo);

/// Half-resolution context for the two-level scheme: restricted velocity,
/// SL characteristics and spectral weights on the coarse grid.
class CoarseOperator {
public:
    CoarseOperator(const VectorField& vFine, const problems::RegistrationProblem& problem,
                   const inverse::Model& model, const transport::SchemeConfig& coarseScheme);
    ~CoarseOperator();
    CoarseOperator(CoarseOperator&&) noexcept;

    const Grid& grid() const;
    /// Split-preconditioned coarse GN Hessian application.
    VectorField applySplitHessian(const VectorField& s) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Two-level application in split coordinates: the low band is restricted,
/// solved on the coarse grid (PCG(eps) or CHEB(k)), prolonged; the high band
/// passes through unchanged.
VectorField applyTwoLevel(const VectorField& r, const CoarseOperator& coarse,
                          const PrecondChoice& choice, double outerTol,
                          double eMin, double eMax);

struct KktResult {
    VectorField solution;      // delta-v in physical coordinates
    int iterations = 0;
    bool negativeCurvature = false;
    bool converged = false;
    double relResidual = 0.0;
    double totalTimeSec = 0.0;
    double precondTimeSec = 0.0;
};

/// Solve H delta-v = rhs through the split-preconditioned system
/// (I + Ainv^{1/2} Q Ainv^{1/2}) s = Ainv^{1/2} rhs by PCG. The two-level
/// preconditioner (if chosen) acts on the split system.
KktResult solveKkt(const inverse::HessianOperator& hess, const VectorField& rhs, double tol,
                   int maxIter, const PrecondChoice& choice,
                   const problems::RegistrationProblem& problem, const VectorField& v,
                   const transport::SchemeConfig& coarseScheme);

}  // namespace veloreg::precond

#endif
