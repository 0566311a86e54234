#ifndef VELOREG_INVERSE_HPP
#define VELOREG_INVERSE_HPP

#include <memory>
#include <optional>
#include <vector>

#include "veloreg/field.hpp"
#include "veloreg/problems.hpp"
#include "veloreg/spectral.hpp"
#include "veloreg/transport.hpp"

namespace veloreg::inverse {

enum class Deformation { Compressible, Incompressible, NearIncompressible };

struct Model {
    spectral::RegNorm norm = spectral::RegNorm::H2Semi;
    double betaV = 1e-2;
    Deformation deformation = Deformation::Compressible;
    double betaW = 1e-1;  // H1 penalty weight on div(v), near-incompressible only
};

struct NewtonConfig {
    int maxOuterIter = 50;
    double tolRelGrad = 1e-2;
    double tolAbsGrad = 1e-5;
    int maxInnerIter = 500;
    double forcingCap = 0.5;
    double lsC1 = 1e-4;
    double lsShrink = 0.5;
    int lsMaxSteps = 20;
    transport::HessianMode hessianMode = transport::HessianMode::GaussNewton;
    transport::SchemeConfig gradScheme{transport::Scheme::SL, 1.0, std::nullopt};
    std::optional<transport::SchemeConfig> hessScheme;  // defaults to gradScheme

    const transport::SchemeConfig& hessianScheme() const {
        return hessScheme ? *hessScheme : gradScheme;
    }
};

struct GradientResult {
    VectorField g;
    VectorField bodyForce;
    double objective = 0.0;
    double mismatch = 0.0;
    double regTerm = 0.0;
    double penaltyTerm = 0.0;  // near-incompressible divergence penalty
    transport::TransportSolution state;
    transport::TransportSolution adjoint;
    transport::TimeGrid timeGrid;
};

struct ObjectiveResult {
    double objective = 0.0;
    double mismatch = 0.0;
    double regTerm = 0.0;
    double penaltyTerm = 0.0;
    transport::TransportSolution state;
};

ObjectiveResult evaluateObjective(const VectorField& v, const problems::RegistrationProblem& problem,
                                  const Model& model, const transport::TimeGrid& tg,
                                  const transport::SchemeConfig& cfg);

GradientResult evaluateGradient(const VectorField& v, const problems::RegistrationProblem& problem,
                                const Model& model, const transport::TimeGrid& tg,
                                const transport::SchemeConfig& cfg,
                                const transport::TransportSolution* reuseState = nullptr);

/// Everything needed to apply the reduced Hessian at one iterate. Keeps the
/// transport context and the state (and, for full Newton, adjoint)
/// trajectories alive; apply() is reentrant.
class HessianOperator {
public:
    HessianOperator(const VectorField& v, const problems::RegistrationProblem& problem,
                    const Model& model, const transport::TimeGrid& tg,
                    const transport::SchemeConfig& cfg, transport::HessianMode mode,
                    const transport::TransportSolution* state = nullptr,
                    const transport::TransportSolution* adjoint = nullptr);
    HessianOperator(const HessianOperator&) = delete;
    HessianOperator& operator=(const HessianOperator&) = delete;
    ~HessianOperator();

    /// beta_v A[vt] (+ penalty) + K[data term].
    VectorField apply(const VectorField& vtilde) const;
    /// K[data term] + penalty only; used by the split KKT system.
    VectorField applyDataTerm(const VectorField& vtilde) const;

    const Model& model() const;
    const spectral::SpectralWeights& weights() const;
    const Grid& grid() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Reduced Hessian matvec at the iterate described by (v, gradient result).
VectorField hessianMatvec(const VectorField& vtilde, const VectorField& v,
                          const problems::RegistrationProblem& problem, const Model& model,
                          const transport::TimeGrid& tg, const transport::SchemeConfig& cfg,
                          transport::HessianMode mode);

enum class SolveStatus { Converged, IterationLimit, LineSearchFailure };

struct IterationRecord {
    int iter = 0;
    double gradNormInf = 0.0;
    double gradNormRel = 0.0;
    double objective = 0.0;
    double mismatch = 0.0;
    int innerIterations = 0;
    int lineSearchSteps = 0;
    double stepLength = 0.0;
    double searchDirDivRatio = 0.0;  // max|div dv| / max|dv|
    double wallTimeSec = 0.0;
    long long ffts = 0;
    long long interps = 0;
};

struct SolverReport {
    std::vector<IterationRecord> iterations;
    SolveStatus status = SolveStatus::IterationLimit;
    double finalGradNormRel = 0.0;
    double finalResidualRel = 0.0;  // ||m1 - mR|| / ||mT - mR||
    double jacMin = 1.0;
    double jacMax = 1.0;
    double totalTimeSec = 0.0;
};

}  // namespace veloreg::inverse

#endif
