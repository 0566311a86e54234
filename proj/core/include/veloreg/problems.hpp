#ifndef VELOREG_PROBLEMS_HPP
#define VELOREG_PROBLEMS_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "veloreg/field.hpp"
#include "veloreg/transport.hpp"

namespace veloreg::problems {

struct RegistrationProblem {
    ScalarField reference;      // m_R
    ScalarField templateImage;  // m_T
    std::string provenance;     // "synthetic" or "file"
    double smoothingSigma = 0.0;
    std::optional<VectorField> groundTruthVelocity;

    const Grid& grid() const { return reference.grid; }
};

enum class SmoothVariant { A, B };

/// Band-limited analytic test problems. Variant A: single bump, velocity
/// magnitude in [-0.5,0.5]; variant B: two bumps, mode-2 velocity with unit
/// amplitude. The template is generated by a forward SL solve at CFL 0.2.
std::pair<RegistrationProblem, VectorField> makeSmoothProblem(SmoothVariant variant, const Grid& g);

/// The closed-form ingredients of makeSmoothProblem.
VectorField smoothVelocity(SmoothVariant variant, const Grid& g);
ScalarField smoothReference(SmoothVariant variant, const Grid& g);

/// Transport mR with vStar to obtain the template of a synthetic pair.
RegistrationProblem makeSyntheticPair(const VectorField& vStar, const ScalarField& mR,
                                      const transport::SchemeConfig& cfg);

/// Gaussian smoothing (sigma in grid points) followed by normalization to
/// [0,1]; a constant image maps to 0.
ScalarField preprocess(const ScalarField& image, double sigmaGridPoints);

/// Seeded random fields with the top third of modes zeroed, max-norm one.
ScalarField randomBandLimitedField(const Grid& g, std::uint64_t seed);
VectorField randomBandLimitedVelocity(const Grid& g, std::uint64_t seed);

}  // namespace veloreg::problems

#endif
