#include "veloreg/spectral.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "veloreg/fft.hpp"

namespace veloreg::spectral {

namespace {

using fft::Spectrum;

// Applies a real per-mode multiplier in the half-complex layout.
template <typename Symbol>
ScalarField applyRealSymbol(const ScalarField& u, Symbol&& sym) {
    const Grid& g = u.grid;
    Spectrum s = fft::forward(u);
    const int cols = fft::specCols(g);
    for (int r = 0; r < g.n[0]; ++r) {
        const int k1 = fft::wavenumber(r, g.n[0]);
        for (int c = 0; c < cols; ++c) {
            const int k2 = fft::wavenumber(c, g.n[1]);
            s[static_cast<std::size_t>(r) * cols + c] *= sym(r, c, k1, k2);
        }
    }
    return fft::inverse(s, g);
}

double nyquistZeroedWave(int idx, int n) {
    return fft::isNyquist(idx, n) ? 0.0 : static_cast<double>(fft::wavenumber(idx, n));
}

int normOrder(RegNorm norm) {
    switch (norm) {
        case RegNorm::H1Semi: return 1;
        case RegNorm::H2Semi: return 2;
        case RegNorm::H3Semi: return 3;
    }
    return 2;
}

}  // namespace

SpectralWeights SpectralWeights::make(const Grid& g, RegNorm norm) {
    SpectralWeights w;
    w.norm = norm;
    w.grid = g;
    w.gamma.resize(static_cast<std::size_t>(g.points()));
    w.gammaRegularized.resize(w.gamma.size());
    const int order = normOrder(norm);
    for (int r = 0; r < g.n[0]; ++r) {
        const double k1 = fft::wavenumber(r, g.n[0]);
        for (int c = 0; c < g.n[1]; ++c) {
            const double k2 = fft::wavenumber(c, g.n[1]);
            const double ksq = k1 * k1 + k2 * k2;
            double val = 1.0;
            for (int p = 0; p < order; ++p) val *= ksq;
            const std::size_t i = static_cast<std::size_t>(g.index(r, c));
            w.gamma[i] = val;
            w.gammaRegularized[i] = val == 0.0 ? 1.0 : val;
        }
    }
    return w;
}

VectorField gradient(const ScalarField& u) {
    const Grid& g = u.grid;
    Spectrum s = fft::forward(u);
    const int cols = fft::specCols(g);
    VectorField out(g);
    for (int axis = 0; axis < kDim; ++axis) {
        Spectrum d(s.size());
        for (int r = 0; r < g.n[0]; ++r) {
            const double k1 = nyquistZeroedWave(r, g.n[0]);
            for (int c = 0; c < cols; ++c) {
                const double k2 = nyquistZeroedWave(c, g.n[1]);
                const double k = axis == 0 ? k1 : k2;
                const std::size_t i = static_cast<std::size_t>(r) * cols + c;
                d[i] = std::complex<double>(0.0, k) * s[i];
            }
        }
        out[axis] = fft::inverse(d, g);
    }
    return out;
}

ScalarField divergence(const VectorField& v) {
    checkSameGrid(v[0], v[1]);
    const Grid& g = v.grid();
    const int cols = fft::specCols(g);
    Spectrum acc(static_cast<std::size_t>(g.n[0]) * cols, {0.0, 0.0});
    for (int axis = 0; axis < kDim; ++axis) {
        Spectrum s = fft::forward(v[axis]);
        for (int r = 0; r < g.n[0]; ++r) {
            const double k1 = nyquistZeroedWave(r, g.n[0]);
            for (int c = 0; c < cols; ++c) {
                const double k2 = nyquistZeroedWave(c, g.n[1]);
                const double k = axis == 0 ? k1 : k2;
                const std::size_t i = static_cast<std::size_t>(r) * cols + c;
                acc[i] += std::complex<double>(0.0, k) * s[i];
            }
        }
    }
    return fft::inverse(acc, g);
}

VectorField applyReg(const VectorField& v, const SpectralWeights& w, double beta) {
    if (beta <= 0.0) throw std::invalid_argument("applyReg: beta must be positive");
    const Grid& g = v.grid();
    VectorField out(g);
    for (int axis = 0; axis < kDim; ++axis) {
        out[axis] = applyRealSymbol(v[axis], [&](int r, int c, int, int) {
            return beta * w.gamma[static_cast<std::size_t>(g.index(r, c))];
        });
    }
    return out;
}

VectorField applyInvReg(const VectorField& v, const SpectralWeights& w, double beta, double power) {
    if (beta <= 0.0) throw std::invalid_argument("applyInvReg: beta must be positive");
    const Grid& g = v.grid();
    VectorField out(g);
    for (int axis = 0; axis < kDim; ++axis) {
        out[axis] = applyRealSymbol(v[axis], [&](int r, int c, int, int) {
            return std::pow(beta * w.gammaRegularized[static_cast<std::size_t>(g.index(r, c))], power);
        });
    }
    return out;
}

VectorField projectDivFree(const VectorField& b) {
    checkSameGrid(b[0], b[1]);
    const Grid& g = b.grid();
    const int cols = fft::specCols(g);
    Spectrum s1 = fft::forward(b[0]);
    Spectrum s2 = fft::forward(b[1]);
    for (int r = 0; r < g.n[0]; ++r) {
        const double k1 = nyquistZeroedWave(r, g.n[0]);
        for (int c = 0; c < cols; ++c) {
            const double k2 = nyquistZeroedWave(c, g.n[1]);
            const double ksq = k1 * k1 + k2 * k2;
            if (ksq == 0.0) continue;  // mean and pure-Nyquist modes pass through
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            const std::complex<double> kdotb = k1 * s1[i] + k2 * s2[i];
            s1[i] -= k1 * kdotb / ksq;
            s2[i] -= k2 * kdotb / ksq;
        }
    }
    VectorField out(g);
    out[0] = fft::inverse(s1, g);
    out[1] = fft::inverse(s2, g);
    return out;
}

ScalarField resample(const ScalarField& u, const Grid& target) {
    const Grid& src = u.grid;
    if (src == target) return u;
    Spectrum s = fft::forward(u);
    const int srcCols = fft::specCols(src);
    const int tgtCols = fft::specCols(target);
    Spectrum t(static_cast<std::size_t>(target.n[0]) * tgtCols, {0.0, 0.0});
    const int band1 = std::min(src.n[0], target.n[0]) / 2;
    const int band2 = std::min(src.n[1], target.n[1]) / 2;
    const double amp = static_cast<double>(target.points()) / static_cast<double>(src.points());
    for (int rt = 0; rt < target.n[0]; ++rt) {
        const int k1 = fft::wavenumber(rt, target.n[0]);
        if (std::abs(k1) >= band1) continue;
        const int rs = k1 >= 0 ? k1 : k1 + src.n[0];
        for (int c = 0; c < tgtCols; ++c) {
            const int k2 = fft::wavenumber(c, target.n[1]);
            if (std::abs(k2) >= band2) continue;
            t[static_cast<std::size_t>(rt) * tgtCols + c] =
                amp * s[static_cast<std::size_t>(rs) * srcCols + c];
        }
    }
    return fft::inverse(t, target);
}

VectorField resample(const VectorField& u, const Grid& target) {
    VectorField out;
    out[0] = resample(u[0], target);
    out[1] = resample(u[1], target);
    return out;
}

ScalarField cutoffFilter(const ScalarField& u, Band band) {
    const Grid& g = u.grid;
    const int cut1 = g.n[0] / 4;
    const int cut2 = g.n[1] / 4;
    return applyRealSymbol(u, [&](int, int, int k1, int k2) {
        const bool low = std::abs(k1) < cut1 && std::abs(k2) < cut2;
        return (band == Band::Low) == low ? 1.0 : 0.0;
    });
}

VectorField cutoffFilter(const VectorField& u, Band band) {
    VectorField out;
    out[0] = cutoffFilter(u[0], band);
    out[1] = cutoffFilter(u[1], band);
    return out;
}

ScalarField gaussianSmooth(const ScalarField& u, double sigmaGridPoints) {
    const Grid& g = u.grid;
    const double s1 = sigmaGridPoints * g.h[0];
    const double s2 = sigmaGridPoints * g.h[1];
    return applyRealSymbol(u, [&](int, int, int k1, int k2) {
        return std::exp(-0.5 * (k1 * k1 * s1 * s1 + k2 * k2 * s2 * s2));
    });
}

ScalarField applyHelmholtz(const ScalarField& u) {
    // same Nyquist convention as the first-derivative symbols so that the
    // composition with gradient/divergence stays an exact adjoint pair
    const Grid& g = u.grid;
    return applyRealSymbol(u, [&](int r, int c, int, int) {
        const double k1 = nyquistZeroedWave(r, g.n[0]);
        const double k2 = nyquistZeroedWave(c, g.n[1]);
        return 1.0 + k1 * k1 + k2 * k2;
    });
}

}  // namespace veloreg::spectral
