#ifndef VELOREG_TRANSPORT_HPP
#define VELOREG_TRANSPORT_HPP

#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "veloreg/field.hpp"
#include "veloreg/interp.hpp"

namespace veloreg::transport {

enum class Scheme { RK2, RK2A, SL };
enum class TraceDirection { Forward, Backward };
enum class HessianMode { GaussNewton, FullNewton };

struct TimeGrid {
    int nt = 1;
    double ht = 1.0;
    explicit TimeGrid(int steps);
    TimeGrid() = default;
};

struct SchemeConfig {
    Scheme scheme = Scheme::SL;
    double cfl = 0.2;
    std::optional<int> ntOverride;  // bypasses the CFL-derived step count
};

/// CFL-derived step count: ceil(max_i max_x |v^i| / (cfl*h^i)), floored at 2.
int deriveSteps(const VectorField& v, double cfl);
TimeGrid makeTimeGrid(const VectorField& v, const SchemeConfig& cfg);

/// Thrown when a solve exceeds 1e3 times the initial max-norm.
struct BlowupError : std::runtime_error {
    explicit BlowupError(const std::string& what) : std::runtime_error(what) {}
};

/// Departure points of one Heun-traced time step of size ht. The forward
/// family (used by equations marched forward in time) displaces against v;
/// the backward family against -v.
struct Characteristics {
    interp::PointSet departure;
    TraceDirection direction = TraceDirection::Forward;
    double ht = 0.0;
};

Characteristics traceCharacteristics(const VectorField& v, double ht, TraceDirection dir);

struct Trajectory {
    std::vector<ScalarField> frames;  // nt+1 fields at t^0..t^nt

    int steps() const { return static_cast<int>(frames.size()) - 1; }
    const ScalarField& at(int j) const { return frames[static_cast<std::size_t>(j)]; }
    const ScalarField& initial() const { return frames.front(); }
    const ScalarField& last() const { return frames.back(); }
};

/// Node values plus, for the RK2 schemes, the Heun predictor fields
/// (stage[j-1] is the predictor used when stepping t^{j-1} -> t^j, resp.
/// t^j -> t^{j-1} for backward solves). Empty for SL.
struct TransportSolution {
    Trajectory nodes;
    std::vector<ScalarField> stages;
    bool hasStages() const { return !stages.empty(); }
};

/// Shared per-velocity context: characteristics, div(v) and interpolated
/// variants are computed once and reused by every solve at this iterate.
class Solver {
public:
    Solver(const VectorField& v, const TimeGrid& tg, const SchemeConfig& cfg);
    ~Solver();
    Solver(Solver&&) noexcept;
    Solver& operator=(Solver&&) noexcept;
    Solver(const Solver&) = delete;
    Solver& operator=(const Solver&) = delete;

    const VectorField& velocity() const;
    const TimeGrid& timeGrid() const;
    const SchemeConfig& config() const;

    TransportSolution solveState(const ScalarField& m0) const;
    TransportSolution solveAdjoint(const ScalarField& lambda1) const;
    Trajectory solveIncState(const VectorField& vtilde, const TransportSolution& state) const;
    Trajectory solveIncAdjoint(const VectorField& vtilde, const ScalarField& lambdaTilde1,
                               const TransportSolution* adjoint, HessianMode mode) const;

    /// Final-time-only state/adjoint solves; nothing but two frames is kept.
    ScalarField solveStateFinal(const ScalarField& m0) const;
    ScalarField solveAdjointFinal(const ScalarField& lambda1) const;

    /// Determinant of the deformation gradient at t=1, J(t=0)=1.
    ScalarField jacobianDeterminant() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Free-function forms; each builds a fresh Solver.
Trajectory solveState(const VectorField& v, const ScalarField& m0, const TimeGrid& tg,
                      const SchemeConfig& cfg);
Trajectory solveAdjoint(const VectorField& v, const ScalarField& lambda1, const TimeGrid& tg,
                        const SchemeConfig& cfg);
Trajectory solveIncState(const VectorField& v, const VectorField& vtilde,
                         const TransportSolution& state, const TimeGrid& tg,
                         const SchemeConfig& cfg);
Trajectory solveIncAdjoint(const VectorField& v, const VectorField& vtilde,
                           const ScalarField& lambdaTilde1, const TransportSolution* adjoint,
                           HessianMode mode, const TimeGrid& tg, const SchemeConfig& cfg);
ScalarField jacobianDet(const VectorField& v, const TimeGrid& tg, const SchemeConfig& cfg);

}  // namespace veloreg::transport

#endif
