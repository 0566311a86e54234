#include "veloreg/problems.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "veloreg/fft.hpp"
#include "veloreg/spectral.hpp"

namespace veloreg::problems {

namespace {

template <typename F>
ScalarField sampled(const Grid& g, F&& f) {
    ScalarField out(g);
    for (int i1 = 0; i1 < g.n[0]; ++i1)
        for (int i2 = 0; i2 < g.n[1]; ++i2) out(i1, i2) = f(g.coord(0, i1), g.coord(1, i2));
    return out;
}

}  // namespace

VectorField smoothVelocity(SmoothVariant variant, const Grid& g) {
    VectorField v(g);
    if (variant == SmoothVariant::A) {
        v[0] = sampled(g, [](double x1, double x2) { return 0.5 * std::sin(x2) * std::cos(x1); });
        v[1] = sampled(g, [](double x1, double x2) { return 0.5 * std::sin(x1) * std::cos(x2); });
    } else {
        v[0] = sampled(g, [](double x1, double x2) { return std::sin(2.0 * x2) * std::cos(2.0 * x1); });
        v[1] = sampled(g, [](double x1, double x2) { return std::sin(2.0 * x1) * std::cos(2.0 * x2); });
    }
    return v;
}

ScalarField smoothReference(SmoothVariant variant, const Grid& g) {
    if (variant == SmoothVariant::A) {
        return sampled(g, [](double x1, double x2) {
            return 0.25 * (1.0 + std::cos(x1)) * (1.0 + std::cos(x2));
        });
    }
    return sampled(g, [](double x1, double x2) {
        return 0.25 * (1.0 - std::cos(2.0 * x1)) * (1.0 + std::cos(x2));
    });
}

std::pair<RegistrationProblem, VectorField> makeSmoothProblem(SmoothVariant variant, const Grid& g) {
    VectorField v = smoothVelocity(variant, g);
    ScalarField mR = smoothReference(variant, g);
    transport::SchemeConfig cfg{transport::Scheme::SL, 0.2, std::nullopt};
    RegistrationProblem problem = makeSyntheticPair(v, mR, cfg);
    return {std::move(problem), std::move(v)};
}

RegistrationProblem makeSyntheticPair(const VectorField& vStar, const ScalarField& mR,
                                      const transport::SchemeConfig& cfg) {
    checkSameGrid(vStar[0], mR);
    transport::TimeGrid tg = transport::makeTimeGrid(vStar, cfg);
    transport::Solver solver(vStar, tg, cfg);

    RegistrationProblem problem;
    problem.reference = mR;
    problem.templateImage = solver.solveStateFinal(mR);
    problem.provenance = "synthetic";
    problem.groundTruthVelocity = vStar;
    return problem;
}

ScalarField preprocess(const ScalarField& image, double sigmaGridPoints) {
    checkFinite(image, "preprocess");
    ScalarField out = sigmaGridPoints > 0.0 ? spectral::gaussianSmooth(image, sigmaGridPoints)
                                            : image;
    double lo = out.v.front(), hi = out.v.front();
    for (double x : out.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double range = hi - lo;
    if (range <= 1e-14 * std::max({std::abs(lo), std::abs(hi), 1.0})) {
        // degenerate (constant) image maps to zero
        return ScalarField(out.grid, 0.0);
    }
    for (double& x : out.v) x = (x - lo) / range;
    return out;
}

ScalarField randomBandLimitedField(const Grid& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ScalarField noise(g);
    for (double& x : noise.v) x = gauss(rng);

    // zero the top third of the spectrum so finite differences of transported
    // quantities are not dominated by aliasing
    fft::Spectrum s = fft::forward(noise);
    const int cols = fft::specCols(g);
    const int cut1 = g.n[0] / 3;
    const int cut2 = g.n[1] / 3;
    for (int r = 0; r < g.n[0]; ++r) {
        const int k1 = fft::wavenumber(r, g.n[0]);
        for (int c = 0; c < cols; ++c) {
            const int k2 = fft::wavenumber(c, g.n[1]);
            if (std::abs(k1) >= cut1 || std::abs(k2) >= cut2)
                s[static_cast<std::size_t>(r) * cols + c] = 0.0;
        }
    }
    ScalarField out = fft::inverse(s, g);
    const double m = normLinf(out);
    if (m > 0.0) scale(out, 1.0 / m);
    return out;
}

VectorField randomBandLimitedVelocity(const Grid& g, std::uint64_t seed) {
    VectorField out(g);
    out[0] = randomBandLimitedField(g, seed);
    out[1] = randomBandLimitedField(g, seed ^ 0x9e3779b97f4a7c15ull);
    return out;
}

}  // namespace veloreg::problems
