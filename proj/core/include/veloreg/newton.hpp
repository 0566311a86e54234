#ifndef VELOREG_NEWTON_HPP
#define VELOREG_NEWTON_HPP

#include "veloreg/inverse.hpp"
#include "veloreg/precond.hpp"

namespace veloreg::inverse {

/// Globalized inexact (Gauss-)Newton-Krylov outer loop, zero initial guess.
std::pair<VectorField, SolverReport> newtonSolve(const problems::RegistrationProblem& problem,
                                                 const Model& model, const NewtonConfig& cfg,
                                                 const precond::PrecondChoice& pc);

}  // namespace veloreg::inverse

#endif
