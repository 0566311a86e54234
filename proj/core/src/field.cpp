#include "veloreg/field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace veloreg {

Grid::Grid(int n1, int n2) : n{n1, n2} {
    for (int ni : n) {
        if (ni < 4 || ni % 2 != 0)
            throw std::invalid_argument("Grid: axis sizes must be even and >= 4");
    }
    h = {2.0 * kPi / n[0], 2.0 * kPi / n[1]};
}

Grid Grid::coarsened() const { return Grid(n[0] / 2, n[1] / 2); }

void checkSameGrid(const ScalarField& a, const ScalarField& b) {
    if (a.grid != b.grid) throw std::invalid_argument("field grids do not match");
}

void checkFinite(const ScalarField& a, const char* what) {
    for (double x : a.v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

void checkFinite(const VectorField& a, const char* what) {
    checkFinite(a[0], what);
    checkFinite(a[1], what);
}

void axpy(double a, const ScalarField& x, ScalarField& y) {
    checkSameGrid(x, y);
    for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += a * x.v[i];
}

void axpy(double a, const VectorField& x, VectorField& y) {
    axpy(a, x[0], y[0]);
    axpy(a, x[1], y[1]);
}

void scale(ScalarField& x, double a) {
    for (double& xi : x.v) xi *= a;
}

void scale(VectorField& x, double a) {
    scale(x[0], a);
    scale(x[1], a);
}

double dot(const ScalarField& u, const ScalarField& w) {
    checkSameGrid(u, w);
    double s = 0.0;
    for (std::size_t i = 0; i < u.v.size(); ++i) s += u.v[i] * w.v[i];
    return u.grid.h[0] * u.grid.h[1] * s;
}

double dot(const VectorField& u, const VectorField& w) { return dot(u[0], w[0]) + dot(u[1], w[1]); }

double normL2(const ScalarField& u) { return std::sqrt(dot(u, u)); }
double normL2(const VectorField& u) { return std::sqrt(dot(u, u)); }

double normLinf(const ScalarField& u) {
    double m = 0.0;
    for (double x : u.v) m = std::max(m, std::abs(x));
    return m;
}

double normLinf(const VectorField& u) { return std::max(normLinf(u[0]), normLinf(u[1])); }

double mean(const ScalarField& u) {
    double s = 0.0;
    for (double x : u.v) s += x;
    return s / static_cast<double>(u.v.size());
}

ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    ScalarField r = a;
    axpy(1.0, b, r);
    return r;
}

ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    ScalarField r = a;
    axpy(-1.0, b, r);
    return r;
}

ScalarField operator*(double a, const ScalarField& b) {
    ScalarField r = b;
    scale(r, a);
    return r;
}

VectorField operator+(const VectorField& a, const VectorField& b) {
    VectorField r = a;
    axpy(1.0, b, r);
    return r;
}

VectorField operator-(const VectorField& a, const VectorField& b) {
    VectorField r = a;
    axpy(-1.0, b, r);
    return r;
}

VectorField operator*(double a, const VectorField& b) {
    VectorField r = b;
    scale(r, a);
    return r;
}

ScalarField hadamard(const ScalarField& a, const ScalarField& b) {
    checkSameGrid(a, b);
    ScalarField r = a;
    for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] *= b.v[i];
    return r;
}

}  // namespace veloreg
