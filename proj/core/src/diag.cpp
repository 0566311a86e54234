#include "veloreg/diag.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "veloreg/counters.hpp"
#include "veloreg/spectral.hpp"

namespace veloreg::diag {

namespace {

using json = nlohmann::json;

std::string cellToString(const Cell& c) {
    std::ostringstream os;
    if (std::holds_alternative<double>(c)) {
        os.precision(12);
        os << std::scientific << std::get<double>(c);
    } else if (std::holds_alternative<long long>(c)) {
        os << std::get<long long>(c);
    } else {
        os << std::get<std::string>(c);
    }
    return os.str();
}

json cellToJson(const Cell& c) {
    if (std::holds_alternative<double>(c)) return std::get<double>(c);
    if (std::holds_alternative<long long>(c)) return std::get<long long>(c);
    return std::get<std::string>(c);
}

double timedSeconds(std::chrono::steady_clock::time_point from) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

VectorField probeDirection(const Grid& g, const inverse::Model& model, std::uint64_t seed) {
    VectorField d = problems::randomBandLimitedVelocity(g, seed);
    if (model.deformation == inverse::Deformation::Incompressible)
        d = spectral::projectDivFree(d);
    return d;
}

}  // namespace

std::string ErrorReport::toCsv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cellToString(row[i]);
        os << "\n";
    }
    return os.str();
}

std::string ErrorReport::toJson() const {
    json j;
    j["protocol"] = protocol;
    j["columns"] = columns;
    json jr = json::array();
    for (const auto& row : rows) {
        json r = json::array();
        for (const auto& c : row) r.push_back(cellToJson(c));
        jr.push_back(std::move(r));
    }
    j["rows"] = std::move(jr);
    json js;
    for (const auto& [k, c] : summary) js[k] = cellToJson(c);
    j["summary"] = std::move(js);
    return j.dump(2);
}

double fourierRelError(const ScalarField& u, const ScalarField& uFine) {
    ScalarField prolonged = spectral::resample(u, uFine.grid);
    return normL2(prolonged - uFine) / normL2(uFine);
}

ErrorReport selfConvergence(problems::SmoothVariant variant, transport::Scheme scheme, double cfl,
                            const std::vector<int>& grids) {
    if (grids.size() < 2 && grids.empty())
        throw std::invalid_argument("selfConvergence: need at least one grid");
    ErrorReport report;
    report.protocol = "self-convergence";
    report.columns = {"equation", "grid", "nt", "rel_error", "time_sec", "ffts", "interps"};
    report.summary["variant"] = std::string(variant == problems::SmoothVariant::A ? "A" : "B");
    report.summary["cfl"] = cfl;

    transport::SchemeConfig cfg{scheme, cfl, std::nullopt};

    auto solveOn = [&](int n, bool adjointEq, int& ntOut) -> ScalarField {
        Grid g(n, n);
        VectorField v = problems::smoothVelocity(variant, g);
        ScalarField data = problems::smoothReference(variant, g);
        transport::TimeGrid tg = transport::makeTimeGrid(v, cfg);
        ntOut = tg.nt;
        transport::Solver solver(v, tg, cfg);
        return adjointEq ? solver.solveAdjointFinal(data) : solver.solveStateFinal(data);
    };

    for (int pass = 0; pass < 2; ++pass) {
        const bool adjointEq = pass == 1;
        const char* eq = adjointEq ? "adjoint" : "state";
        for (int n : grids) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto c0 = counters::snapshot();
            int nt = 0, ntFine = 0;
            try {
                ScalarField coarse = solveOn(n, adjointEq, nt);
                ScalarField fine = solveOn(2 * n, adjointEq, ntFine);
                const double err = fourierRelError(coarse, fine);
                const auto c = counters::snapshot() - c0;
                report.addRow({std::string(eq), static_cast<long long>(n),
                               static_cast<long long>(nt), err, timedSeconds(t0), c.ffts,
                               c.interps});
            } catch (const transport::BlowupError&) {
                const auto c = counters::snapshot() - c0;
                report.addRow({std::string(eq), static_cast<long long>(n),
                               static_cast<long long>(nt), std::string(kUnstable),
                               timedSeconds(t0), c.ffts, c.interps});
            }
        }
    }
    return report;
}

ErrorReport adjointError(const VectorField& v, const ScalarField& m0,
                         const std::vector<int>& ntList) {
    ErrorReport report;
    report.protocol = "adjoint-error";
    report.columns = {"nt", "sl", "rk2a"};

    auto delta = [&](transport::Scheme scheme, int nt) {
        transport::SchemeConfig cfg{scheme, 0.2, nt};
        transport::TimeGrid tg(nt);
        transport::Solver solver(v, tg, cfg);
        ScalarField fwd = solver.solveStateFinal(m0);
        ScalarField back = solver.solveAdjointFinal(fwd);
        const double num = std::abs(dot(fwd, fwd) - dot(back, m0));
        return num / std::abs(dot(fwd, fwd));
    };

    for (int nt : ntList)
        report.addRow({static_cast<long long>(nt), delta(transport::Scheme::SL, nt),
                       delta(transport::Scheme::RK2A, nt)});
    return report;
}

ErrorReport gradientCheck(const problems::RegistrationProblem& problem, const inverse::Model& model,
                          const transport::SchemeConfig& cfg, const VectorField& v,
                          std::uint64_t seed) {
    ErrorReport report;
    report.protocol = "gradient-check";
    report.columns = {"step", "fd_value", "gradient_value", "rel_error"};
    report.summary["seed"] = static_cast<long long>(seed);

    VectorField vEval = model.deformation == inverse::Deformation::Incompressible
                            ? spectral::projectDivFree(v)
                            : v;
    VectorField dir = probeDirection(problem.grid(), model, seed);

    // one fixed time grid for every probe so all evaluations share a
    // discretization
    transport::TimeGrid tg = transport::makeTimeGrid(vEval, cfg);
    inverse::GradientResult gr = inverse::evaluateGradient(vEval, problem, model, tg, cfg);
    const double directional = dot(gr.g, dir);

    double minErr = 1.0;
    std::vector<double> errs, steps;
    for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
        VectorField plus = vEval, minus = vEval;
        axpy(eps, dir, plus);
        axpy(-eps, dir, minus);
        const double jp = inverse::evaluateObjective(plus, problem, model, tg, cfg).objective;
        const double jm = inverse::evaluateObjective(minus, problem, model, tg, cfg).objective;
        const double fd = (jp - jm) / (2.0 * eps);
        const double denom = std::max(std::abs(fd), 1e-300);
        const double rel = std::abs(fd - directional) / denom;
        minErr = std::min(minErr, rel);
        errs.push_back(rel);
        steps.push_back(eps);
        report.addRow({eps, fd, directional, rel});
    }
    report.summary["min_rel_error"] = minErr;
    // observed order of the FD truncation over the first step pair
    if (errs.size() >= 2 && errs[1] > 0.0 && errs[0] > 0.0)
        report.summary["observed_order"] =
            std::log(errs[0] / errs[1]) / std::log(steps[0] / steps[1]);
    return report;
}

ErrorReport hessianSymmetryCheck(const problems::RegistrationProblem& problem,
                                 const inverse::Model& model, const transport::SchemeConfig& cfg,
                                 const VectorField& v, int probePairs, std::uint64_t seed) {
    ErrorReport report;
    report.protocol = "hessian-symmetry";
    report.columns = {"probe", "defect", "curvature_u", "curvature_w"};
    report.summary["seed"] = static_cast<long long>(seed);

    VectorField vEval = model.deformation == inverse::Deformation::Incompressible
                            ? spectral::projectDivFree(v)
                            : v;
    transport::TimeGrid tg = transport::makeTimeGrid(vEval, cfg);
    inverse::HessianOperator hess(vEval, problem, model, tg, cfg,
                                  transport::HessianMode::GaussNewton);

    double maxDefect = 0.0, minCurv = 0.0;
    for (int p = 0; p < probePairs; ++p) {
        VectorField u = probeDirection(problem.grid(), model, seed + 2 * p);
        VectorField w = probeDirection(problem.grid(), model, seed + 2 * p + 1);
        VectorField Hu = hess.apply(u);
        VectorField Hw = hess.apply(w);
        const double defect =
            std::abs(dot(Hu, w) - dot(u, Hw)) / (normL2(u) * normL2(w));
        const double cu = dot(Hu, u) / dot(u, u);
        const double cw = dot(Hw, w) / dot(w, w);
        maxDefect = std::max(maxDefect, defect);
        minCurv = std::min({minCurv, cu, cw});
        report.addRow({static_cast<long long>(p), defect, cu, cw});
    }
    report.summary["max_defect"] = maxDefect;
    report.summary["min_curvature"] = minCurv;
    return report;
}

ErrorReport kktBenchmark(const problems::RegistrationProblem& problem, const inverse::Model& model,
                         const std::vector<double>& betaList, const std::vector<int>& grids,
                         const std::vector<KktBenchmarkSetup>& setups, double iterTol) {
    if (!problem.groundTruthVelocity)
        throw std::invalid_argument("kktBenchmark: problem needs a ground-truth velocity");
    ErrorReport report;
    report.protocol = "kkt-benchmark";
    report.columns = {"beta",     "grid",        "setup",       "iters",
                      "time_sec", "pc_share",    "recon_error", "recon_iters"};

    const transport::SchemeConfig coarseScheme{transport::Scheme::SL, 5.0, std::nullopt};

    std::vector<int> gridList = grids;
    if (gridList.empty()) gridList.push_back(problem.grid().n[0]);

    double worstAgreement = 0.0;
    for (int n : gridList) {
        const Grid g(n, n * problem.grid().n[1] / problem.grid().n[0]);
        problems::RegistrationProblem prob;
        prob.reference = spectral::resample(problem.reference, g);
        prob.templateImage = spectral::resample(problem.templateImage, g);
        prob.provenance = problem.provenance;
        prob.groundTruthVelocity = spectral::resample(*problem.groundTruthVelocity, g);
        const VectorField& vStar = *prob.groundTruthVelocity;
        VectorField target = -0.5 * vStar;  // constructed solution

        for (double beta : betaList) {
            inverse::Model m = model;
            m.betaV = beta;
            std::optional<std::pair<double, double>> eigs;

            std::vector<VectorField> solutions;
            for (const auto& setup : setups) {
                transport::TimeGrid tg = transport::makeTimeGrid(vStar, setup.scheme);
                inverse::HessianOperator hess(vStar, prob, m, tg, setup.scheme,
                                              transport::HessianMode::GaussNewton);
                precond::PrecondChoice choice = setup.choice;
                if (choice.kind == precond::PrecondKind::TwoLevel &&
                    choice.coarseSolver == precond::CoarseSolverKind::Cheb &&
                    !choice.eigEstimate) {
                    // bounds for the benchmark iterate itself
                    if (!eigs) eigs = precond::estimateEigsAt(vStar, prob, m, coarseScheme);
                    choice.eigEstimate = eigs;
                }

                // iteration-count experiment: Newton-step system at the true solution
                inverse::GradientResult gr =
                    inverse::evaluateGradient(vStar, prob, m, tg, setup.scheme);
                precond::KktResult step = precond::solveKkt(hess, -1.0 * gr.g, iterTol, 2000,
                                                            choice, prob, vStar, coarseScheme);
                const double pcShare =
                    step.totalTimeSec > 0.0 ? step.precondTimeSec / step.totalTimeSec : 0.0;

                // reconstruction experiment at tolerance 1e-12 against a known solution
                VectorField rhs = spectral::applyInvReg(target, hess.weights(), beta, 1.0);
                axpy(1.0, hess.applyDataTerm(target), rhs);
                precond::KktResult recon =
                    precond::solveKkt(hess, rhs, 1e-12, 4000, choice, prob, vStar, coarseScheme);
                const double reconErr = normL2(recon.solution - target) / normL2(target);

                solutions.push_back(recon.solution);
                report.addRow({beta, static_cast<long long>(n), setup.label,
                               static_cast<long long>(step.iterations), step.totalTimeSec, pcShare,
                               reconErr, static_cast<long long>(recon.iterations)});
            }
            // pairwise agreement between the reconstructed solutions
            for (std::size_t i = 0; i < solutions.size(); ++i) {
                for (std::size_t j = i + 1; j < solutions.size(); ++j) {
                    const double agree = normL2(solutions[i] - solutions[j]) / normL2(target);
                    worstAgreement = std::max(worstAgreement, agree);
                }
            }
        }
    }
    report.summary["worst_pairwise_agreement"] = worstAgreement;
    return report;
}

ErrorReport operationCounts(const problems::RegistrationProblem& problem, int nt) {
    ErrorReport report;
    report.protocol = "operation-counts";
    report.columns = {"equation", "ffts", "interps", "interp_formula", "deviation"};

    const VectorField v = problem.groundTruthVelocity
                              ? *problem.groundTruthVelocity
                              : problems::randomBandLimitedVelocity(problem.grid(), 7);
    transport::TimeGrid tg(nt);
    transport::SchemeConfig cfg{transport::Scheme::SL, 0.2, nt};

    {
        transport::Solver solver(v, tg, cfg);
        const auto c0 = counters::snapshot();
        solver.solveState(problem.templateImage);
        const auto c = counters::snapshot() - c0;
        const long long formula = kDim + nt;
        report.addRow({std::string("state"), c.ffts, c.interps, formula, c.interps - formula});
    }
    {
        transport::Solver solver(v, tg, cfg);
        const auto c0 = counters::snapshot();
        solver.solveAdjoint(problem.reference);
        const auto c = counters::snapshot() - c0;
        const long long formula = kDim + nt + 1;
        report.addRow({std::string("adjoint"), c.ffts, c.interps, formula, c.interps - formula});
    }
    return report;
}

ErrorReport eigenvalueScaling(const problems::RegistrationProblem& problem,
                              const inverse::Model& model, const std::vector<double>& betaList) {
    ErrorReport report;
    report.protocol = "eigenvalue-scaling";
    report.columns = {"beta", "e_min", "e_max", "scaled_gap"};

    const transport::SchemeConfig coarseScheme{transport::Scheme::SL, 5.0, std::nullopt};
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (double beta : betaList) {
        inverse::Model m = model;
        m.betaV = beta;
        auto [eMin, eMax] = precond::estimateEigs(problem, m, coarseScheme);
        const double gap = (eMax - 1.0) * beta;
        if (first) {
            lo = hi = gap;
            first = false;
        } else {
            lo = std::min(lo, gap);
            hi = std::max(hi, gap);
        }
        report.addRow({beta, eMin, eMax, gap});
    }
    report.summary["gap_spread"] = hi > 0.0 ? (hi - lo) / hi : 0.0;
    return report;
}

}  // namespace veloreg::diag
