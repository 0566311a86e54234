#include "veloreg/newton.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "veloreg/counters.hpp"
#include "veloreg/spectral.hpp"

namespace veloreg::inverse {

namespace {

// Coarse-grid PDE solver of the two-level scheme: semi-Lagrangian at CFL 5.
const transport::SchemeConfig kCoarseScheme{transport::Scheme::SL, 5.0, std::nullopt};

double seconds(std::chrono::steady_clock::time_point from) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

}  // namespace

std::pair<VectorField, SolverReport> newtonSolve(const problems::RegistrationProblem& problem,
                                                 const Model& model, const NewtonConfig& cfg,
                                                 const precond::PrecondChoice& pc) {
    const Grid& g = problem.grid();
    const auto tStart = std::chrono::steady_clock::now();
    const auto counters0 = counters::snapshot();

    VectorField v(g);  // zero initial guess
    SolverReport report;
    spectral::SpectralWeights weights = spectral::SpectralWeights::make(g, model.norm);

    precond::PrecondChoice choice = pc;
    if (choice.kind == precond::PrecondKind::TwoLevel &&
        choice.coarseSolver == precond::CoarseSolverKind::Cheb && !choice.eigEstimate &&
        !choice.reestimateEachIteration) {
        choice.eigEstimate = precond::estimateEigs(problem, model, kCoarseScheme);
    }

    double g0inf = 0.0;
    int ntRatchet = 0;  // step counts never shrink within one solve
    std::optional<transport::TransportSolution> carriedState;
    ScalarField finalDeformed = problem.templateImage;

    for (int iter = 0; iter < cfg.maxOuterIter; ++iter) {
        const auto tIter = std::chrono::steady_clock::now();
        ntRatchet = std::max(ntRatchet, cfg.gradScheme.ntOverride
                                            ? *cfg.gradScheme.ntOverride
                                            : transport::deriveSteps(v, cfg.gradScheme.cfl));
        transport::TimeGrid tg(ntRatchet);

        const transport::TransportSolution* reuse =
            carriedState && carriedState->nodes.steps() == tg.nt ? &*carriedState : nullptr;
        GradientResult gr = evaluateGradient(v, problem, model, tg, cfg.gradScheme, reuse);
        finalDeformed = gr.state.nodes.last();

        const double ginf = normLinf(gr.g);
        if (iter == 0) g0inf = std::max(ginf, 1e-300);
        const double grel = ginf / g0inf;

        IterationRecord rec;
        rec.iter = iter;
        rec.gradNormInf = ginf;
        rec.gradNormRel = grel;
        rec.objective = gr.objective;
        rec.mismatch = gr.mismatch;
        const auto cs = counters::snapshot() - counters0;
        rec.ffts = cs.ffts;
        rec.interps = cs.interps;

        report.finalGradNormRel = grel;
        if (grel <= cfg.tolRelGrad || ginf <= cfg.tolAbsGrad) {
            rec.wallTimeSec = seconds(tIter);
            report.iterations.push_back(rec);
            report.status = SolveStatus::Converged;
            break;
        }

        // Newton step with an Eisenstat-Walker-style forcing tolerance
        const double eta = std::min(cfg.forcingCap, std::sqrt(grel));
        const transport::SchemeConfig& hcfg = cfg.hessianScheme();
        transport::TimeGrid htg =
            (&hcfg == &cfg.gradScheme || (!cfg.hessScheme))
                ? tg
                : transport::TimeGrid(hcfg.ntOverride ? *hcfg.ntOverride
                                                      : transport::deriveSteps(v, hcfg.cfl));
        const bool sameDiscretization = htg.nt == tg.nt && hcfg.scheme == cfg.gradScheme.scheme;
        HessianOperator hess(v, problem, model, htg, hcfg, cfg.hessianMode,
                             sameDiscretization ? &gr.state : nullptr,
                             sameDiscretization ? &gr.adjoint : nullptr);

        VectorField rhs = -1.0 * gr.g;
        precond::KktResult kkt =
            precond::solveKkt(hess, rhs, eta, cfg.maxInnerIter, choice, problem, v, kCoarseScheme);
        rec.innerIterations = kkt.iterations;
        VectorField dv = kkt.solution;

        double gdotd = dot(gr.g, dv);
        if (!std::isfinite(gdotd) || gdotd >= 0.0) {
            // inner solve broke down: Sobolev-gradient fallback direction
            dv = -1.0 * spectral::applyInvReg(gr.g, weights, model.betaV, -1.0);
            gdotd = dot(gr.g, dv);
        }
        rec.searchDirDivRatio =
            normLinf(spectral::divergence(dv)) / std::max(normLinf(dv), 1e-300);

        // Armijo backtracking on the objective at this iteration's time grid
        double alpha = 1.0;
        bool accepted = false;
        int lsSteps = 0;
        for (; lsSteps < cfg.lsMaxSteps; ++lsSteps) {
            VectorField trial = v;
            axpy(alpha, dv, trial);
            ObjectiveResult ob;
            bool blewUp = false;
            try {
                ob = evaluateObjective(trial, problem, model, tg, cfg.gradScheme);
            } catch (const transport::BlowupError&) {
                blewUp = true;
            }
            if (!blewUp && ob.objective <= gr.objective + cfg.lsC1 * alpha * gdotd) {
                v = std::move(trial);
                carriedState = std::move(ob.state);
                finalDeformed = carriedState->nodes.last();
                accepted = true;
                break;
            }
            alpha *= cfg.lsShrink;
        }

        rec.lineSearchSteps = lsSteps + (accepted ? 1 : 0);
        rec.stepLength = accepted ? alpha : 0.0;
        rec.wallTimeSec = seconds(tIter);
        const auto ce = counters::snapshot() - counters0;
        rec.ffts = ce.ffts;
        rec.interps = ce.interps;
        report.iterations.push_back(rec);

        if (!accepted) {
            report.status = SolveStatus::LineSearchFailure;
            break;
        }
        if (iter + 1 == cfg.maxOuterIter) report.status = SolveStatus::IterationLimit;
    }

    // final diagnostics
    const double residDenom = normL2(problem.templateImage - problem.reference);
    const double residNum = normL2(finalDeformed - problem.reference);
    report.finalResidualRel = residDenom > 0.0 ? residNum / residDenom : 0.0;

    transport::SchemeConfig jacCfg{transport::Scheme::SL, 0.2, std::nullopt};
    ScalarField jac = transport::jacobianDet(v, transport::makeTimeGrid(v, jacCfg), jacCfg);
    report.jacMin = *std::min_element(jac.v.begin(), jac.v.end());
    report.jacMax = *std::max_element(jac.v.begin(), jac.v.end());
    report.totalTimeSec = seconds(tStart);
    return {std::move(v), std::move(report)};
}

}  // namespace veloreg::inverse
