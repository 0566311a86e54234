#ifndef VELOREG_SPECTRAL_HPP
#define VELOREG_SPECTRAL_HPP

#include <vector>

#include "veloreg/field.hpp"

namespace veloreg::spectral {

enum class RegNorm { H1Semi, H2Semi, H3Semi };

/// Per-mode symbol of the regularization operator: |k|^2, |k|^4 or |k|^6,
/// stored over the full n1 x n2 mode layout (row-major, column index fastest).
/// gammaRegularized replaces the zero entry at k=0 by one so the operator can
/// be inverted analytically.
struct SpectralWeights {
    RegNorm norm = RegNorm::H2Semi;
    Grid grid;
    std::vector<double> gamma;
    std::vector<double> gammaRegularized;

    static SpectralWeights make(const Grid& g, RegNorm norm);
};

/// Fourier gradient. First-derivative symbols zero the Nyquist mode so that
/// d_i stays exactly antisymmetric on real data.
VectorField gradient(const ScalarField& u);
ScalarField divergence(const VectorField& v);

/// beta * A[v] with A the chosen seminorm operator (PSD sign convention).
VectorField applyReg(const VectorField& v, const SpectralWeights& w, double beta);

/// Per-mode multiplication by (beta*gammaRegularized)^power, power in {-1,-1/2}.
VectorField applyInvReg(const VectorField& v, const SpectralWeights& w, double beta, double power);

/// Leray projection onto divergence-free fields; preserves the mean.
VectorField projectDivFree(const VectorField& b);

/// Spectral restriction (band truncation) or prolongation (zero padding).
/// Both preserve the mean exactly. Target sizes must be even.
ScalarField resample(const ScalarField& u, const Grid& target);
VectorField resample(const VectorField& u, const Grid& target);

enum class Band { Low, High };

/// Ideal cut-off filter at half the representable frequency: the low band
/// holds modes with |k_i| < n_i/4 on both axes, the high band the rest.
ScalarField cutoffFilter(const ScalarField& u, Band band);
VectorField cutoffFilter(const VectorField& u, Band band);

/// Gaussian kernel exp(-|k|^2 sigma^2 / 2) with sigma given in grid points.
ScalarField gaussianSmooth(const ScalarField& u, double sigmaGridPoints);

/// Multiply the spectrum by (1 + |k|^2), Nyquist convention matching the
/// first-derivative symbols.
ScalarField applyHelmholtz(const ScalarField& u);

}  // namespace veloreg::spectral

#endif
