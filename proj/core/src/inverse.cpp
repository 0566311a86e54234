#include "veloreg/inverse.hpp"

#include <cmath>
#include <stdexcept>

#include "veloreg/spectral.hpp"

namespace veloreg::inverse {

namespace {

using transport::Scheme;
using transport::TransportSolution;

/// -beta_w * grad((1 - Lap)(div v)), the first variation of the H1 penalty on
/// the divergence (near-incompressible model, mass source eliminated).
VectorField divergencePenaltyGradient(const VectorField& v, double betaW) {
    ScalarField w = spectral::divergence(v);
    VectorField out = spectral::gradient(spectral::applyHelmholtz(w));
    scale(out, -betaW);
    return out;
}

double divergencePenaltyValue(const VectorField& v, double betaW) {
    ScalarField w = spectral::divergence(v);
    VectorField gw = spectral::gradient(w);
    return 0.5 * betaW * (dot(w, w) + dot(gw, gw));
}

/// Transpose of the antisymmetric transport form in the velocity slot:
/// S(m)^T mu = (mu grad m - m grad mu + grad(mu m)) / 2.
VectorField antisymmetricForceTerm(const ScalarField& m, const ScalarField& mu) {
    VectorField gm = spectral::gradient(m);
    VectorField gmu = spectral::gradient(mu);
    VectorField gprod = spectral::gradient(hadamard(mu, m));
    VectorField out(m.grid);
    for (int i = 0; i < kDim; ++i) {
        out[i] = hadamard(mu, gm[i]);
        axpy(-1.0, hadamard(m, gmu[i]), out[i]);
        axpy(1.0, gprod[i], out[i]);
        scale(out[i], 0.5);
    }
    return out;
}

/// Body force int lambda grad(m) dt, discretized per scheme. For the RK2
/// schemes the quadrature pairs node fields with the opposite solve's Heun
/// predictor fields, which makes it the exact transpose of the linearized
/// forward solve; for SL it is the trapezoid rule on node values.
VectorField assembleBodyForce(Scheme scheme, const TransportSolution& state,
                              const TransportSolution& adjointFamily, double ht) {
    const Grid& g = state.nodes.initial().grid;
    const int nt = state.nodes.steps();
    if (adjointFamily.nodes.steps() != nt)
        throw std::invalid_argument("assembleBodyForce: trajectory length mismatch");

    VectorField b(g);
    if (scheme == Scheme::SL) {
        for (int j = 0; j <= nt; ++j) {
            const double w = ht * ((j == 0 || j == nt) ? 0.5 : 1.0);
            VectorField gm = spectral::gradient(state.nodes.at(j));
            for (int i = 0; i < kDim; ++i) axpy(w, hadamard(adjointFamily.nodes.at(j), gm[i]), b[i]);
        }
        return b;
    }

    if (!state.hasStages() || !adjointFamily.hasStages())
        throw std::invalid_argument("assembleBodyForce: RK2 assembly requires stage fields");

    for (int j = 1; j <= nt; ++j) {
        const ScalarField& mPrev = state.nodes.at(j - 1);
        const ScalarField& mStage = state.stages[j - 1];
        const ScalarField& lamNode = adjointFamily.nodes.at(j);
        const ScalarField& lamStage = adjointFamily.stages[j - 1];
        if (scheme == Scheme::RK2A) {
            axpy(0.5 * ht, antisymmetricForceTerm(mPrev, lamStage), b);
            axpy(0.5 * ht, antisymmetricForceTerm(mStage, lamNode), b);
        } else {
            VectorField gPrev = spectral::gradient(mPrev);
            VectorField gStage = spectral::gradient(mStage);
            for (int i = 0; i < kDim; ++i) {
                axpy(0.5 * ht, hadamard(lamStage, gPrev[i]), b[i]);
                axpy(0.5 * ht, hadamard(lamNode, gStage[i]), b[i]);
            }
        }
    }
    return b;
}

VectorField applyProjection(const VectorField& b, const Model& model) {
    return model.deformation == Deformation::Incompressible ? spectral::projectDivFree(b) : b;
}

}  // namespace

ObjectiveResult evaluateObjective(const VectorField& v, const problems::RegistrationProblem& problem,
                                  const Model& model, const transport::TimeGrid& tg,
                                  const transport::SchemeConfig& cfg) {
    if (problem.reference.grid != v.grid())
        throw std::invalid_argument("evaluateObjective: problem and velocity grids differ");
    transport::Solver solver(v, tg, cfg);
    ObjectiveResult res;
    res.state = solver.solveState(problem.templateImage);

    ScalarField resid = res.state.nodes.last() - problem.reference;
    res.mismatch = 0.5 * dot(resid, resid);

    spectral::SpectralWeights w = spectral::SpectralWeights::make(v.grid(), model.norm);
    res.regTerm = 0.5 * dot(spectral::applyReg(v, w, model.betaV), v);
    if (model.deformation == Deformation::NearIncompressible)
        res.penaltyTerm = divergencePenaltyValue(v, model.betaW);
    res.objective = res.mismatch + res.regTerm + res.penaltyTerm;
    return res;
}

GradientResult evaluateGradient(const VectorField& v, const problems::RegistrationProblem& problem,
                                const Model& model, const transport::TimeGrid& tg,
                                const transport::SchemeConfig& cfg,
                                const transport::TransportSolution* reuseState) {
    if (problem.reference.grid != v.grid())
        throw std::invalid_argument("evaluateGradient: problem and velocity grids differ");
    transport::Solver solver(v, tg, cfg);

    GradientResult res;
    res.timeGrid = tg;
    res.state = reuseState ? *reuseState : solver.solveState(problem.templateImage);
    if (res.state.nodes.steps() != tg.nt)
        throw std::invalid_argument("evaluateGradient: reused state has wrong step count");

    ScalarField resid = res.state.nodes.last() - problem.reference;
    res.mismatch = 0.5 * dot(resid, resid);

    ScalarField lambda1 = -1.0 * resid;
    res.adjoint = solver.solveAdjoint(lambda1);

    res.bodyForce = assembleBodyForce(cfg.scheme, res.state, res.adjoint, tg.ht);

    spectral::SpectralWeights w = spectral::SpectralWeights::make(v.grid(), model.norm);
    res.g = spectral::applyReg(v, w, model.betaV);
    res.regTerm = 0.5 * dot(res.g, v);
    if (model.deformation == Deformation::NearIncompressible) {
        res.penaltyTerm = divergencePenaltyValue(v, model.betaW);
        axpy(1.0, divergencePenaltyGradient(v, model.betaW), res.g);
    }
    axpy(1.0, applyProjection(res.bodyForce, model), res.g);
    res.objective = res.mismatch + res.regTerm + res.penaltyTerm;
    return res;
}

struct HessianOperator::Impl {
    transport::Solver solver;
    Model model;
    spectral::SpectralWeights weights;
    transport::HessianMode mode;
    transport::TransportSolution state;
    transport::TransportSolution adjoint;  // full Newton only

    Impl(const VectorField& v, const problems::RegistrationProblem& problem, const Model& mdl,
         const transport::TimeGrid& tg, const transport::SchemeConfig& cfg,
         transport::HessianMode hmode, const transport::TransportSolution* reuseState,
         const transport::TransportSolution* reuseAdjoint)
        : solver(v, tg, cfg),
          model(mdl),
          weights(spectral::SpectralWeights::make(v.grid(), mdl.norm)),
          mode(hmode) {
        state = reuseState ? *reuseState : solver.solveState(problem.templateImage);
        if (mode == transport::HessianMode::FullNewton) {
            if (reuseAdjoint) {
                adjoint = *reuseAdjoint;
            } else {
                ScalarField lambda1 = -1.0 * (state.nodes.last() - problem.reference);
                adjoint = solver.solveAdjoint(lambda1);
            }
        }
    }

    VectorField dataTerm(const VectorField& vtilde) const {
        const transport::TimeGrid& tg = solver.timeGrid();
        transport::Trajectory mt = solver.solveIncState(vtilde, state);
        ScalarField lamt1 = -1.0 * mt.last();

        VectorField b(vtilde.grid());
        if (mode == transport::HessianMode::GaussNewton) {
            // the GN incremental adjoint is the adjoint solve seeded with -mt(1)
            transport::TransportSolution incAdj = solver.solveAdjoint(lamt1);
            b = assembleBodyForce(solver.config().scheme, state, incAdj, tg.ht);
        } else {
            transport::TransportSolution incAdj;
            incAdj.nodes = solver.solveIncAdjoint(vtilde, lamt1, &adjoint,
                                                  transport::HessianMode::FullNewton);
            // trapezoid assembly on node values for both coupling terms
            const int nt = tg.nt;
            TransportSolution mtSol;
            mtSol.nodes = std::move(mt);
            for (int j = 0; j <= nt; ++j) {
                const double w = tg.ht * ((j == 0 || j == nt) ? 0.5 : 1.0);
                VectorField term(vtilde.grid());
                if (solver.config().scheme == Scheme::RK2A) {
                    term = antisymmetricForceTerm(state.nodes.at(j), incAdj.nodes.at(j));
                    axpy(1.0, antisymmetricForceTerm(mtSol.nodes.at(j), adjoint.nodes.at(j)), term);
                } else {
                    VectorField gm = spectral::gradient(state.nodes.at(j));
                    VectorField gmt = spectral::gradient(mtSol.nodes.at(j));
                    for (int i = 0; i < kDim; ++i) {
                        term[i] = hadamard(incAdj.nodes.at(j), gm[i]);
                        axpy(1.0, hadamard(adjoint.nodes.at(j), gmt[i]), term[i]);
                    }
                }
                axpy(w, term, b);
            }
        }

        VectorField out = applyProjection(b, model);
        if (model.deformation == Deformation::NearIncompressible)
            axpy(1.0, divergencePenaltyGradient(vtilde, model.betaW), out);
        return out;
    }
};

HessianOperator::HessianOperator(const VectorField& v, const problems::RegistrationProblem& problem,
                                 const Model& model, const transport::TimeGrid& tg,
                                 const transport::SchemeConfig& cfg, transport::HessianMode mode,
                                 const transport::TransportSolution* state,
                                 const transport::TransportSolution* adjoint)
    : impl_(std::make_unique<Impl>(v, problem, model, tg, cfg, mode, state, adjoint)) {}

HessianOperator::~HessianOperator() = default;

VectorField HessianOperator::apply(const VectorField& vtilde) const {
    VectorField out = spectral::applyReg(vtilde, impl_->weights, impl_->model.betaV);
    axpy(1.0, impl_->dataTerm(vtilde), out);
    return out;
}

VectorField HessianOperator::applyDataTerm(const VectorField& vtilde) const {
    return impl_->dataTerm(vtilde);
}

const Model& HessianOperator::model() const { return impl_->model; }
const spectral::SpectralWeights& HessianOperator::weights() const { return impl_->weights; }
const Grid& HessianOperator::grid() const { return impl_->solver.velocity().grid(); }

VectorField hessianMatvec(const VectorField& vtilde, const VectorField& v,
                          const problems::RegistrationProblem& problem, const Model& model,
                          const transport::TimeGrid& tg, const transport::SchemeConfig& cfg,
                          transport::HessianMode mode) {
    HessianOperator op(v, problem, model, tg, cfg, mode);
    return op.apply(vtilde);
}

}  // namespace veloreg::inverse
