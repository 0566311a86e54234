#include "veloreg/interp.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "veloreg/counters.hpp"

namespace veloreg::interp {

namespace {

// Cyclic tridiagonal solve for the periodic prefilter system
//   (c_{i-1} + 4 c_i + c_{i+1}) / 6 = f_i
// via Sherman-Morrison on top of the Thomas algorithm.
class CyclicSpline1D {
public:
    explicit CyclicSpline1D(int n) : n_(n), diag_(n), work_(n), q_(n) {
        const double a = 1.0 / 6.0, b = 2.0 / 3.0;
        gamma_ = -b;
        for (int i = 0; i < n_; ++i) diag_[i] = b;
        diag_[0] = b - gamma_;
        diag_[n_ - 1] = b - a * a / gamma_;
        std::vector<double> u(n_, 0.0);
        u[0] = gamma_;
        u[n_ - 1] = a;
        thomas(u.data(), 1, q_.data());
    }

    // Solves in place on a strided view of length n_.
    void solve(double* f, int stride) {
        const double a = 1.0 / 6.0;
        thomas(f, stride, work_.data());
        const double vy = work_[0] + (a / gamma_) * work_[n_ - 1];
        const double vq = q_[0] + (a / gamma_) * q_[n_ - 1];
        const double fact = vy / (1.0 + vq);
        for (int i = 0; i < n_; ++i) f[static_cast<std::size_t>(i) * stride] = work_[i] - fact * q_[i];
    }

private:
    void thomas(const double* rhs, int stride, double* out) const {
        const double a = 1.0 / 6.0;
        std::vector<double> cp(n_);
        double beta = diag_[0];
        out[0] = rhs[0] / beta;
        for (int i = 1; i < n_; ++i) {
            cp[i] = a / beta;
            beta = diag_[i] - a * cp[i];
            out[i] = (rhs[static_cast<std::size_t>(i) * stride] - a * out[i - 1]) / beta;
        }
        for (int i = n_ - 2; i >= 0; --i) out[i] -= cp[i + 1] * out[i + 1];
    }

    int n_;
    double gamma_;
    std::vector<double> diag_, work_, q_;
};

inline void bsplineWeights(double f, double w[4]) {
    const double f2 = f * f, f3 = f2 * f;
    w[0] = (1.0 - 3.0 * f + 3.0 * f2 - f3) / 6.0;
    w[1] = (3.0 * f3 - 6.0 * f2 + 4.0) / 6.0;
    w[2] = (-3.0 * f3 + 3.0 * f2 + 3.0 * f + 1.0) / 6.0;
    w[3] = f3 / 6.0;
}

inline int wrapIndex(long long i, int n) {
    long long m = i % n;
    if (m < 0) m += n;
    return static_cast<int>(m);
}

}  // namespace

SplineCoefficients prefilter(const ScalarField& u) {
    checkFinite(u, "prefilter");
    const Grid& g = u.grid;
    SplineCoefficients out{g, u.v};

    CyclicSpline1D rowSolver(g.n[1]);
    for (int r = 0; r < g.n[0]; ++r) rowSolver.solve(out.c.data() + static_cast<std::size_t>(r) * g.n[1], 1);
    CyclicSpline1D colSolver(g.n[0]);
    for (int c = 0; c < g.n[1]; ++c) colSolver.solve(out.c.data() + c, g.n[1]);
    return out;
}

ScalarField evaluate(const SplineCoefficients& coeffs, const PointSet& pts) {
    const Grid& g = coeffs.grid;
    if (pts.x1.size() != coeffs.c.size() || pts.grid != g)
        throw std::invalid_argument("evaluate: point set does not match coefficient grid");
    for (std::size_t i = 0; i < pts.x1.size(); ++i)
        if (!std::isfinite(pts.x1[i]) || !std::isfinite(pts.x2[i]))
            throw std::invalid_argument("evaluate: non-finite point coordinate");

    ScalarField out(pts.grid);
    const int n1 = g.n[0], n2 = g.n[1];
    const double twoPi = 2.0 * kPi;

    for (std::size_t p = 0; p < pts.x1.size(); ++p) {
        // wrap into [-pi,pi) first so shifts by full periods land on the same cell
        double x1 = pts.x1[p] - twoPi * std::floor((pts.x1[p] + kPi) / twoPi);
        double x2 = pts.x2[p] - twoPi * std::floor((pts.x2[p] + kPi) / twoPi);
        const double s1 = (x1 + kPi) / g.h[0];
        const double s2 = (x2 + kPi) / g.h[1];
        const long long b1 = static_cast<long long>(std::floor(s1));
        const long long b2 = static_cast<long long>(std::floor(s2));
        double w1[4], w2[4];
        bsplineWeights(s1 - static_cast<double>(b1), w1);
        bsplineWeights(s2 - static_cast<double>(b2), w2);

        int i1[4], i2[4];
        for (int t = 0; t < 4; ++t) {
            i1[t] = wrapIndex(b1 - 1 + t, n1);
            i2[t] = wrapIndex(b2 - 1 + t, n2);
        }
        double acc = 0.0;
        for (int a = 0; a < 4; ++a) {
            const double* row = coeffs.c.data() + static_cast<std::size_t>(i1[a]) * n2;
            double rowAcc = 0.0;
            for (int b = 0; b < 4; ++b) rowAcc += w2[b] * row[i2[b]];
            acc += w1[a] * rowAcc;
        }
        out.v[p] = acc;
    }
    counters::addInterp();
    return out;
}

}  // namespace veloreg::interp
