#ifndef VELOREG_FIELD_HPP
#define VELOREG_FIELD_HPP

#include <array>
#include <cstddef>
#include <vector>

namespace veloreg {

inline constexpr int kDim = 2;
inline constexpr double kPi = 3.14159265358979323846;

/// Regular periodic grid on (-pi,pi)^2. Node a of axis i sits at -pi + a*h[i];
/// the right endpoint is identified with the left one.
struct Grid {
    std::array<int, kDim> n{};
    std::array<double, kDim> h{};

    Grid() = default;
    Grid(int n1, int n2);

    int points() const { return n[0] * n[1]; }
    int index(int i1, int i2) const { return i1 * n[1] + i2; }
    double coord(int axis, int i) const { return -kPi + h[axis] * i; }
    Grid coarsened() const;  // half the points per axis

    bool operator==(const Grid& o) const { return n == o.n; }
    bool operator!=(const Grid& o) const { return n != o.n; }
};

/// Real-valued samples on a Grid, row-major (second axis fastest).
struct ScalarField {
    Grid grid;
    std::vector<double> v;

    ScalarField() = default;
    explicit ScalarField(const Grid& g, double fill = 0.0)
        : grid(g), v(static_cast<std::size_t>(g.points()), fill) {}

    double& operator()(int i1, int i2) { return v[grid.index(i1, i2)]; }
    double operator()(int i1, int i2) const { return v[grid.index(i1, i2)]; }
    int size() const { return grid.points(); }
};

struct VectorField {
    std::array<ScalarField, kDim> comp;

    VectorField() = default;
    explicit VectorField(const Grid& g) : comp{ScalarField(g), ScalarField(g)} {}

    const Grid& grid() const { return comp[0].grid; }
    ScalarField& operator[](int i) { return comp[i]; }
    const ScalarField& operator[](int i) const { return comp[i]; }
};

// Field algebra. All binary operations require matching grids.
void checkSameGrid(const ScalarField& a, const ScalarField& b);
void checkFinite(const ScalarField& a, const char* what);
void checkFinite(const VectorField& a, const char* what);

void axpy(double a, const ScalarField& x, ScalarField& y);  // y += a*x
void axpy(double a, const VectorField& x, VectorField& y);
void scale(ScalarField& x, double a);
void scale(VectorField& x, double a);

/// Discrete L2 inner product (midpoint rule): h1*h2*sum(u*w).
double dot(const ScalarField& u, const ScalarField& w);
double dot(const VectorField& u, const VectorField& w);
double normL2(const ScalarField& u);
double normL2(const VectorField& u);
double normLinf(const ScalarField& u);
double normLinf(const VectorField& u);
double mean(const ScalarField& u);

ScalarField operator+(const ScalarField& a, const ScalarField& b);
ScalarField operator-(const ScalarField& a, const ScalarField& b);
ScalarField operator*(double a, const ScalarField& b);
VectorField operator+(const VectorField& a, const VectorField& b);
VectorField operator-(const VectorField& a, const VectorField& b);
VectorField operator*(double a, const VectorField& b);

/// Pointwise product.
ScalarField hadamard(const ScalarField& a, const ScalarField& b);

}  // namespace veloreg

#endif
