#ifndef VELOREG_DIAG_HPP
#define VELOREG_DIAG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "veloreg/inverse.hpp"
#include "veloreg/precond.hpp"
#include "veloreg/problems.hpp"

namespace veloreg::diag {

using Cell = std::variant<double, long long, std::string>;

/// One measurement table: a header row plus one row per measurement, and a
/// flat key/value summary. Serialized as CSV and JSON (schema in the README).
struct ErrorReport {
    std::string protocol;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
    std::map<std::string, Cell> summary;

    void addRow(std::vector<Cell> row) { rows.push_back(std::move(row)); }
    std::string toCsv() const;
    std::string toJson() const;
};

/// Sentinel written in place of an error value when a solve blew up.
inline constexpr const char* kUnstable = "***";

/// Fourier-domain relative l2 error between u (grid n) and uFine (grid 2n).
double fourierRelError(const ScalarField& u, const ScalarField& uFine);

/// Table-2-style protocol: per grid size, relative error between solutions on
/// n and 2n for the state and adjoint equations. Grids must double.
ErrorReport selfConvergence(problems::SmoothVariant variant, transport::Scheme scheme, double cfl,
                            const std::vector<int>& grids);

/// Forward/adjoint operator mismatch
/// |<Cm0,Cm0> - <C^T C m0, m0>| / |<Cm0,Cm0>| per nt, SL and RK2A columns.
ErrorReport adjointError(const VectorField& v, const ScalarField& m0,
                         const std::vector<int>& ntList);

/// Central finite-difference check of the reduced gradient over a decade of
/// step sizes; reports the per-step relative error and the observed order.
ErrorReport gradientCheck(const problems::RegistrationProblem& problem, const inverse::Model& model,
                          const transport::SchemeConfig& cfg, const VectorField& v,
                          std::uint64_t seed);

/// Symmetry defect |<Hu,w>-<u,Hw>| / (||u|| ||w||) on seeded probe pairs.
ErrorReport hessianSymmetryCheck(const problems::RegistrationProblem& problem,
                                 const inverse::Model& model, const transport::SchemeConfig& cfg,
                                 const VectorField& v, int probePairs, std::uint64_t seed);

struct KktBenchmarkSetup {
    std::string label;
    precond::PrecondChoice choice;
    transport::SchemeConfig scheme;  // PDE solver for the fine Hessian
};

/// KKT-solve benchmark at a constructed solution: per (beta, grid, setup),
/// iteration counts at the given tolerance plus a tol-1e-12 reconstruction of
/// a known solution and the pairwise agreement between preconditioner
/// variants. The problem (and its tagged velocity) is resampled spectrally
/// onto each requested grid; an empty grid list means the problem's own grid.
ErrorReport kktBenchmark(const problems::RegistrationProblem& problem, const inverse::Model& model,
                         const std::vector<double>& betaList, const std::vector<int>& grids,
                         const std::vector<KktBenchmarkSetup>& setups, double iterTol);

/// Measured FFT/interpolation counts for single transport solves against the
/// closed-form complexity estimates.
ErrorReport operationCounts(const problems::RegistrationProblem& problem, int nt);

/// Largest-eigenvalue estimates at v=0 across a list of beta_v values.
ErrorReport eigenvalueScaling(const problems::RegistrationProblem& problem,
                              const inverse::Model& model, const std::vector<double>& betaList);

}  // namespace veloreg::diag

#endif
