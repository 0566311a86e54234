#ifndef VELOREG_FFT_HPP
#define VELOREG_FFT_HPP

#include <complex>
#include <vector>

#include "veloreg/field.hpp"

namespace veloreg::fft {

/// Half-complex spectrum of a real n1 x n2 field: n1 rows of n2/2+1 columns.
using Spectrum = std::vector<std::complex<double>>;

int specCols(const Grid& g);

/// Unnormalized forward transform. Counts one FFT.
Spectrum forward(const ScalarField& u);

/// Inverse transform carrying the 1/N factor. Counts one FFT.
ScalarField inverse(const Spectrum& s, const Grid& g);

/// Signed wavenumber of row/column index idx on an axis with n points.
/// idx in [0, n/2] maps to idx, idx in (n/2, n) maps to idx - n.
int wavenumber(int idx, int n);

/// True if idx is the Nyquist index n/2.
bool isNyquist(int idx, int n);

}  // namespace veloreg::fft

#endif
