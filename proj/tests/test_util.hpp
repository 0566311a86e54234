#ifndef VELOREG_TEST_UTIL_HPP
#define VELOREG_TEST_UTIL_HPP

#include <cmath>
#include <functional>

#include "veloreg/field.hpp"

namespace veloreg::testutil {

inline ScalarField sampled(const Grid& g, const std::function<double(double, double)>& f) {
    ScalarField out(g);
    for (int i1 = 0; i1 < g.n[0]; ++i1)
        for (int i2 = 0; i2 < g.n[1]; ++i2) out(i1, i2) = f(g.coord(0, i1), g.coord(1, i2));
    return out;
}

inline double maxAbsDiff(const ScalarField& a, const ScalarField& b) {
    return normLinf(a - b);
}

inline double maxAbsDiff(const VectorField& a, const VectorField& b) {
    return normLinf(a - b);
}

}  // namespace veloreg::testutil

#endif
