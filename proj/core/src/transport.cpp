#include "veloreg/transport.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>
#include <optional>

#include "veloreg/spectral.hpp"

namespace veloreg::transport {

namespace {

constexpr double kBlowupFactor = 1e3;

void checkGuard(const ScalarField& m, double threshold, const char* eq, int step) {
    if (normLinf(m) > threshold)
        throw BlowupError(std::string(eq) + " solve exceeded the blow-up guard at step " +
                          std::to_string(step));
}

// v . grad(m), gradients taken spectrally.
ScalarField advectBy(const VectorField& v, const ScalarField& m) {
    VectorField g = spectral::gradient(m);
    ScalarField out = hadamard(v[0], g[0]);
    axpy(1.0, hadamard(v[1], g[1]), out);
    return out;
}

// div(m v)
ScalarField divOfProduct(const VectorField& v, const ScalarField& m) {
    VectorField mv;
    mv[0] = hadamard(m, v[0]);
    mv[1] = hadamard(m, v[1]);
    return spectral::divergence(mv);
}

}  // namespace

TimeGrid::TimeGrid(int steps) : nt(steps), ht(1.0 / steps) {
    if (steps < 1) throw std::invalid_argument("TimeGrid: nt must be >= 1");
}

int deriveSteps(const VectorField& v, double cfl) {
    if (!(cfl > 0.0) || cfl > 20.0) throw std::invalid_argument("cfl must lie in (0, 20]");
    double ratio = 0.0;
    for (int i = 0; i < kDim; ++i) ratio = std::max(ratio, normLinf(v[i]) / (cfl * v.grid().h[i]));
    const int nt = static_cast<int>(std::ceil(ratio));
    return std::max(2, nt);
}

TimeGrid makeTimeGrid(const VectorField& v, const SchemeConfig& cfg) {
    if (cfg.ntOverride) return TimeGrid(*cfg.ntOverride);
    if (cfg.scheme != Scheme::SL && cfg.cfl > 0.5)
        std::fprintf(stderr, "transport: warning: CFL %.3g > 0.5 with an explicit RK2 scheme\n",
                     cfg.cfl);
    return TimeGrid(deriveSteps(v, cfg.cfl));
}

Characteristics traceCharacteristics(const VectorField& v, double ht, TraceDirection dir) {
    if (!(ht > 0.0)) throw std::invalid_argument("traceCharacteristics: ht must be positive");
    checkFinite(v, "traceCharacteristics velocity");
    const Grid& g = v.grid();
    const double sgn = dir == TraceDirection::Forward ? 1.0 : -1.0;

    interp::SplineCoefficients c1 = interp::prefilter(v[0]);
    interp::SplineCoefficients c2 = interp::prefilter(v[1]);

    interp::PointSet star(g);
    for (int i1 = 0; i1 < g.n[0]; ++i1) {
        for (int i2 = 0; i2 < g.n[1]; ++i2) {
            const std::size_t p = static_cast<std::size_t>(g.index(i1, i2));
            star.x1[p] = g.coord(0, i1) - sgn * ht * v[0].v[p];
            star.x2[p] = g.coord(1, i2) - sgn * ht * v[1].v[p];
        }
    }
    ScalarField v1s = interp::evaluate(c1, star);
    ScalarField v2s = interp::evaluate(c2, star);

    Characteristics out{interp::PointSet(g), dir, ht};
    for (int i1 = 0; i1 < g.n[0]; ++i1) {
        for (int i2 = 0; i2 < g.n[1]; ++i2) {
            const std::size_t p = static_cast<std::size_t>(g.index(i1, i2));
            out.departure.x1[p] = g.coord(0, i1) - sgn * 0.5 * ht * (v[0].v[p] + v1s.v[p]);
            out.departure.x2[p] = g.coord(1, i2) - sgn * 0.5 * ht * (v[1].v[p] + v2s.v[p]);
        }
    }
    return out;
}

struct Solver::Impl {
    VectorField v;
    TimeGrid tg;
    SchemeConfig cfg;

    mutable std::mutex mutex;
    mutable std::optional<Characteristics> charFwd, charBwd;
    mutable std::optional<ScalarField> divv;
    mutable std::optional<ScalarField> divvDepFwd, divvDepBwd;

    Impl(const VectorField& vel, const TimeGrid& grid, const SchemeConfig& config)
        : v(vel), tg(grid), cfg(config) {}

    bool isSL() const { return cfg.scheme == Scheme::SL; }
    bool antisymmetric() const { return cfg.scheme == Scheme::RK2A; }

    const Characteristics& characteristics(TraceDirection dir) const {
        std::lock_guard<std::mutex> lock(mutex);
        auto& slot = dir == TraceDirection::Forward ? charFwd : charBwd;
        if (!slot) slot = traceCharacteristics(v, tg.ht, dir);
        return *slot;
    }

    const ScalarField& divVelocity() const {
        std::lock_guard<std::mutex> lock(mutex);
        if (!divv) divv = spectral::divergence(v);
        return *divv;
    }

    const ScalarField& divVelocityAtDeparture(TraceDirection dir) const {
        const ScalarField& dv = divVelocity();
        const Characteristics& ch = characteristics(dir);
        std::lock_guard<std::mutex> lock(mutex);
        auto& slot = dir == TraceDirection::Forward ? divvDepFwd : divvDepBwd;
        if (!slot) slot = interp::evaluate(interp::prefilter(dv), ch.departure);
        return *slot;
    }

    // Right-hand side of d_t m = F(m) for the forward equations.
    ScalarField forwardRhs(const ScalarField& m) const {
        if (!antisymmetric()) {
            ScalarField out = advectBy(v, m);
            scale(out, -1.0);
            return out;
        }
        ScalarField out = advectBy(v, m);
        axpy(1.0, divOfProduct(v, m), out);
        axpy(-1.0, hadamard(m, divVelocity()), out);
        scale(out, -0.5);
        return out;
    }

    // Right-hand side of d_tau lambda = B(lambda) for the reversed-time
    // equations; tau = 1 - t. The discrete operator is exactly minus the
    // transpose of forwardRhs.
    ScalarField backwardRhs(const ScalarField& lam) const {
        if (!antisymmetric()) return divOfProduct(v, lam);
        ScalarField out = divOfProduct(v, lam);
        axpy(1.0, advectBy(v, lam), out);
        axpy(1.0, hadamard(lam, divVelocity()), out);
        scale(out, 0.5);
        return out;
    }

    TransportSolution heunForward(const ScalarField& m0, bool guard) const {
        TransportSolution out;
        out.nodes.frames.reserve(tg.nt + 1);
        out.stages.reserve(tg.nt);
        out.nodes.frames.push_back(m0);
        const double threshold = kBlowupFactor * normLinf(m0);
        ScalarField m = m0;
        for (int j = 1; j <= tg.nt; ++j) {
            ScalarField k1 = forwardRhs(m);
            ScalarField pred = m;
            axpy(tg.ht, k1, pred);
            ScalarField k2 = forwardRhs(pred);
            axpy(0.5 * tg.ht, k1, m);
            axpy(0.5 * tg.ht, k2, m);
            if (guard) checkGuard(m, threshold, "state", j);
            out.stages.push_back(std::move(pred));
            out.nodes.frames.push_back(m);
        }
        return out;
    }

    TransportSolution heunBackward(const ScalarField& lam1, bool guard) const {
        TransportSolution out;
        out.nodes.frames.assign(static_cast<std::size_t>(tg.nt) + 1, ScalarField());
        out.stages.assign(static_cast<std::size_t>(tg.nt), ScalarField());
        out.nodes.frames[tg.nt] = lam1;
        const double threshold = kBlowupFactor * normLinf(lam1);
        ScalarField lam = lam1;
        for (int j = tg.nt; j >= 1; --j) {
            ScalarField k1 = backwardRhs(lam);
            ScalarField pred = lam;
            axpy(tg.ht, k1, pred);
            ScalarField k2 = backwardRhs(pred);
            axpy(0.5 * tg.ht, k1, lam);
            axpy(0.5 * tg.ht, k2, lam);
            if (guard) checkGuard(lam, threshold, "adjoint", j);
            out.stages[j - 1] = std::move(pred);
            out.nodes.frames[j - 1] = lam;
        }
        return out;
    }

    // One semi-Lagrangian step of d/dt u = u * divv along the given family:
    // Heun on the source with the transported value interpolated at the
    // departure points.
    ScalarField slContinuityStep(const ScalarField& u, TraceDirection dir) const {
        const Characteristics& ch = characteristics(dir);
        const ScalarField& dv = divVelocity();
        const ScalarField& dvDep = divVelocityAtDeparture(dir);
        ScalarField uD = interp::evaluate(interp::prefilter(u), ch.departure);
        ScalarField out = uD;
        for (std::size_t i = 0; i < out.v.size(); ++i) {
            const double f0 = uD.v[i] * dvDep.v[i];
            const double pred = uD.v[i] + tg.ht * f0;
            out.v[i] = uD.v[i] + 0.5 * tg.ht * (f0 + pred * dv.v[i]);
        }
        return out;
    }

    TransportSolution slState(const ScalarField& m0, bool guard) const {
        const Characteristics& ch = characteristics(TraceDirection::Forward);
        TransportSolution out;
        out.nodes.frames.reserve(tg.nt + 1);
        out.nodes.frames.push_back(m0);
        const double threshold = kBlowupFactor * normLinf(m0);
        ScalarField m = m0;
        for (int j = 1; j <= tg.nt; ++j) {
            m = interp::evaluate(interp::prefilter(m), ch.departure);
            if (guard) checkGuard(m, threshold, "state", j);
            out.nodes.frames.push_back(m);
        }
        return out;
    }

    TransportSolution slAdjoint(const ScalarField& lam1, bool guard) const {
        TransportSolution out;
        out.nodes.frames.assign(static_cast<std::size_t>(tg.nt) + 1, ScalarField());
        out.nodes.frames[tg.nt] = lam1;
        const double threshold = kBlowupFactor * normLinf(lam1);
        ScalarField lam = lam1;
        for (int j = tg.nt; j >= 1; --j) {
            lam = slContinuityStep(lam, TraceDirection::Backward);
            if (guard) checkGuard(lam, threshold, "adjoint", j);
            out.nodes.frames[j - 1] = lam;
        }
        return out;
    }
};

Solver::Solver(const VectorField& v, const TimeGrid& tg, const SchemeConfig& cfg)
    : impl_(std::make_unique<Impl>(v, tg, cfg)) {
    checkFinite(v, "transport velocity");
}

Solver::~Solver() = default;
Solver::Solver(Solver&&) noexcept = default;
Solver& Solver::operator=(Solver&&) noexcept = default;

const VectorField& Solver::velocity() const { return impl_->v; }
const TimeGrid& Solver::timeGrid() const { return impl_->tg; }
const SchemeConfig& Solver::config() const { return impl_->cfg; }

TransportSolution Solver::solveState(const ScalarField& m0) const {
    checkSameGrid(m0, impl_->v[0]);
    return impl_->isSL() ? impl_->slState(m0, true) : impl_->heunForward(m0, true);
}

TransportSolution Solver::solveAdjoint(const ScalarField& lambda1) const {
    checkSameGrid(lambda1, impl_->v[0]);
    return impl_->isSL() ? impl_->slAdjoint(lambda1, true) : impl_->heunBackward(lambda1, true);
}

ScalarField Solver::solveStateFinal(const ScalarField& m0) const {
    checkSameGrid(m0, impl_->v[0]);
    const double threshold = kBlowupFactor * normLinf(m0);
    ScalarField m = m0;
    if (impl_->isSL()) {
        const Characteristics& ch = impl_->characteristics(TraceDirection::Forward);
        for (int j = 1; j <= impl_->tg.nt; ++j) {
            m = interp::evaluate(interp::prefilter(m), ch.departure);
            checkGuard(m, threshold, "state", j);
        }
        return m;
    }
    for (int j = 1; j <= impl_->tg.nt; ++j) {
        ScalarField k1 = impl_->forwardRhs(m);
        ScalarField pred = m;
        axpy(impl_->tg.ht, k1, pred);
        ScalarField k2 = impl_->forwardRhs(pred);
        axpy(0.5 * impl_->tg.ht, k1, m);
        axpy(0.5 * impl_->tg.ht, k2, m);
        checkGuard(m, threshold, "state", j);
    }
    return m;
}

ScalarField Solver::solveAdjointFinal(const ScalarField& lambda1) const {
    checkSameGrid(lambda1, impl_->v[0]);
    const double threshold = kBlowupFactor * normLinf(lambda1);
    ScalarField lam = lambda1;
    for (int j = impl_->tg.nt; j >= 1; --j) {
        if (impl_->isSL()) {
            lam = impl_->slContinuityStep(lam, TraceDirection::Backward);
        } else {
            ScalarField k1 = impl_->backwardRhs(lam);
            ScalarField pred = lam;
            axpy(impl_->tg.ht, k1, pred);
            ScalarField k2 = impl_->backwardRhs(pred);
            axpy(0.5 * impl_->tg.ht, k1, lam);
            axpy(0.5 * impl_->tg.ht, k2, lam);
        }
        checkGuard(lam, threshold, "adjoint", j);
    }
    return lam;
}

Trajectory Solver::solveIncState(const VectorField& vtilde, const TransportSolution& state) const {
    const TimeGrid& tg = impl_->tg;
    if (state.nodes.steps() != tg.nt)
        throw std::invalid_argument("solveIncState: trajectory length mismatch");
    checkSameGrid(vtilde[0], impl_->v[0]);
    const Grid& g = impl_->v.grid();

    Trajectory out;
    out.frames.reserve(tg.nt + 1);
    out.frames.emplace_back(g);  // incremental state starts from zero

    if (impl_->isSL()) {
        const Characteristics& ch = impl_->characteristics(TraceDirection::Forward);
        ScalarField vt1D = interp::evaluate(interp::prefilter(vtilde[0]), ch.departure);
        ScalarField vt2D = interp::evaluate(interp::prefilter(vtilde[1]), ch.departure);
        VectorField gradPrev = spectral::gradient(state.nodes.at(0));
        ScalarField mt(g);
        for (int j = 1; j <= tg.nt; ++j) {
            ScalarField g1D = interp::evaluate(interp::prefilter(gradPrev[0]), ch.departure);
            ScalarField g2D = interp::evaluate(interp::prefilter(gradPrev[1]), ch.departure);
            VectorField gradCur = spectral::gradient(state.nodes.at(j));
            ScalarField mtD = interp::evaluate(interp::prefilter(mt), ch.departure);
            for (std::size_t i = 0; i < mt.v.size(); ++i) {
                const double sPrevD = -(vt1D.v[i] * g1D.v[i] + vt2D.v[i] * g2D.v[i]);
                const double sCur =
                    -(vtilde[0].v[i] * gradCur[0].v[i] + vtilde[1].v[i] * gradCur[1].v[i]);
                mt.v[i] = mtD.v[i] + 0.5 * tg.ht * (sPrevD + sCur);
            }
            gradPrev = std::move(gradCur);
            out.frames.push_back(mt);
        }
        return out;
    }

    if (!state.hasStages())
        throw std::invalid_argument("solveIncState: state solution lacks the RK2 stage fields");

    // Source -S(m)[vtilde]; for RK2A, S is the antisymmetric transport form in
    // vtilde. Stage-2 sources are evaluated at the forward predictor fields so
    // that the incremental solve is the exact derivative of the state solve.
    std::optional<ScalarField> divvt;
    if (impl_->antisymmetric()) divvt = spectral::divergence(vtilde);
    auto source = [&](const ScalarField& m) {
        ScalarField s = advectBy(vtilde, m);
        if (impl_->antisymmetric()) {
            axpy(1.0, divOfProduct(vtilde, m), s);
            axpy(-1.0, hadamard(m, *divvt), s);
            scale(s, -0.5);
        } else {
            scale(s, -1.0);
        }
        return s;
    };

    ScalarField mt(g);
    for (int j = 1; j <= tg.nt; ++j) {
        ScalarField k1 = impl_->forwardRhs(mt);
        axpy(1.0, source(state.nodes.at(j - 1)), k1);
        ScalarField pred = mt;
        axpy(tg.ht, k1, pred);
        ScalarField k2 = impl_->forwardRhs(pred);
        axpy(1.0, source(state.stages[j - 1]), k2);
        axpy(0.5 * tg.ht, k1, mt);
        axpy(0.5 * tg.ht, k2, mt);
        out.frames.push_back(mt);
    }
    return out;
}

Trajectory Solver::solveIncAdjoint(const VectorField& vtilde, const ScalarField& lambdaTilde1,
                                   const TransportSolution* adjoint, HessianMode mode) const {
    const TimeGrid& tg = impl_->tg;
    checkSameGrid(lambdaTilde1, impl_->v[0]);
    const bool fullNewton = mode == HessianMode::FullNewton;
    if (fullNewton) {
        if (adjoint == nullptr)
            throw std::invalid_argument("solveIncAdjoint: full Newton mode requires the adjoint trajectory");
        if (adjoint->nodes.steps() != tg.nt)
            throw std::invalid_argument("solveIncAdjoint: trajectory length mismatch");
    }

    if (!fullNewton) {
        // Gauss-Newton drops every term in lambda: same operator as the adjoint.
        return (impl_->isSL() ? impl_->slAdjoint(lambdaTilde1, false)
                              : impl_->heunBackward(lambdaTilde1, false))
            .nodes;
    }

    Trajectory out;
    out.frames.assign(static_cast<std::size_t>(tg.nt) + 1, ScalarField());
    out.frames[tg.nt] = lambdaTilde1;

    if (impl_->isSL()) {
        // Source div(lambda vtilde) evaluated spectrally per time point and
        // interpolated at the departure points.
        const Characteristics& ch = impl_->characteristics(TraceDirection::Backward);
        const ScalarField& dv = impl_->divVelocity();
        const ScalarField& dvDep = impl_->divVelocityAtDeparture(TraceDirection::Backward);
        ScalarField lamT = lambdaTilde1;
        ScalarField qCur = divOfProduct(vtilde, adjoint->nodes.at(tg.nt));
        for (int j = tg.nt; j >= 1; --j) {
            ScalarField qCurD = interp::evaluate(interp::prefilter(qCur), ch.departure);
            ScalarField qPrev = divOfProduct(vtilde, adjoint->nodes.at(j - 1));
            ScalarField lamTD = interp::evaluate(interp::prefilter(lamT), ch.departure);
            for (std::size_t i = 0; i < lamT.v.size(); ++i) {
                const double f0 = lamTD.v[i] * dvDep.v[i] + qCurD.v[i];
                const double pred = lamTD.v[i] + tg.ht * f0;
                lamT.v[i] = lamTD.v[i] + 0.5 * tg.ht * (f0 + pred * dv.v[i] + qPrev.v[i]);
            }
            qCur = std::move(qPrev);
            out.frames[j - 1] = lamT;
        }
        return out;
    }

    if (!adjoint->hasStages())
        throw std::invalid_argument("solveIncAdjoint: adjoint solution lacks the RK2 stage fields");

    std::optional<ScalarField> divvt;
    if (impl_->antisymmetric()) divvt = spectral::divergence(vtilde);
    auto source = [&](const ScalarField& lam) {
        ScalarField q = divOfProduct(vtilde, lam);
        if (impl_->antisymmetric()) {
            axpy(1.0, advectBy(vtilde, lam), q);
            axpy(1.0, hadamard(lam, *divvt), q);
            scale(q, 0.5);
        }
        return q;
    };

    ScalarField lamT = lambdaTilde1;
    for (int j = tg.nt; j >= 1; --j) {
        ScalarField k1 = impl_->backwardRhs(lamT);
        axpy(1.0, source(adjoint->nodes.at(j)), k1);
        ScalarField pred = lamT;
        axpy(tg.ht, k1, pred);
        ScalarField k2 = impl_->backwardRhs(pred);
        axpy(1.0, source(adjoint->stages[j - 1]), k2);
        axpy(0.5 * tg.ht, k1, lamT);
        axpy(0.5 * tg.ht, k2, lamT);
        out.frames[j - 1] = lamT;
    }
    return out;
}

ScalarField Solver::jacobianDeterminant() const {
    const TimeGrid& tg = impl_->tg;
    const Grid& g = impl_->v.grid();
    ScalarField jac(g, 1.0);

    if (impl_->isSL()) {
        for (int j = 1; j <= tg.nt; ++j) jac = impl_->slContinuityStep(jac, TraceDirection::Forward);
        return jac;
    }

    const ScalarField& dv = impl_->divVelocity();
    auto rhs = [&](const ScalarField& J) {
        ScalarField out = advectBy(impl_->v, J);
        scale(out, -1.0);
        axpy(1.0, hadamard(J, dv), out);
        return out;
    };
    for (int j = 1; j <= tg.nt; ++j) {
        ScalarField k1 = rhs(jac);
        ScalarField pred = jac;
        axpy(tg.ht, k1, pred);
        ScalarField k2 = rhs(pred);
        axpy(0.5 * tg.ht, k1, jac);
        axpy(0.5 * tg.ht, k2, jac);
    }
    return jac;
}

Trajectory solveState(const VectorField& v, const ScalarField& m0, const TimeGrid& tg,
                      const SchemeConfig& cfg) {
    return Solver(v, tg, cfg).solveState(m0).nodes;
}

Trajectory solveAdjoint(const VectorField& v, const ScalarField& lambda1, const TimeGrid& tg,
                        const SchemeConfig& cfg) {
    return Solver(v, tg, cfg).solveAdjoint(lambda1).nodes;
}

Trajectory solveIncState(const VectorField& v, const VectorField& vtilde,
                         const TransportSolution& state, const TimeGrid& tg,
                         const SchemeConfig& cfg) {
    return Solver(v, tg, cfg).solveIncState(vtilde, state);
}

Trajectory solveIncAdjoint(const VectorField& v, const VectorField& vtilde,
                           const ScalarField& lambdaTilde1, const TransportSolution* adjoint,
                           HessianMode mode, const TimeGrid& tg, const SchemeConfig& cfg) {
    return Solver(v, tg, cfg).solveIncAdjoint(vtilde, lambdaTilde1, adjoint, mode);
}

ScalarField jacobianDet(const VectorField& v, const TimeGrid& tg, const SchemeConfig& cfg) {
    return Solver(v, tg, cfg).jacobianDeterminant();
}

}  // namespace veloreg::transport
