#ifndef VELOREG_INTERP_HPP
#define VELOREG_INTERP_HPP

#include <vector>

#include "veloreg/field.hpp"

namespace veloreg::interp {

/// Cubic B-spline coefficients after the periodic prefilter. Evaluating the
/// expansion at the grid nodes reproduces the source samples.
struct SplineCoefficients {
    Grid grid;
    std::vector<double> c;
};

/// One evaluation point per grid node. Coordinates are unconstrained reals;
/// they are wrapped into (-pi,pi)^2 at evaluation time.
struct PointSet {
    Grid grid;
    std::vector<double> x1, x2;

    PointSet() = default;
    explicit PointSet(const Grid& g)
        : grid(g), x1(static_cast<std::size_t>(g.points())), x2(static_cast<std::size_t>(g.points())) {}
};

/// Periodic prefilter via a cyclic tridiagonal solve (circulant [1/6,2/3,1/6]
/// per axis); no padding is required.
SplineCoefficients prefilter(const ScalarField& u);

/// Tensor-product cubic B-spline evaluation with periodic wrap.
/// Counts one interpolation.
ScalarField evaluate(const SplineCoefficients& c, const PointSet& pts);

}  // namespace veloreg::interp

#endif
