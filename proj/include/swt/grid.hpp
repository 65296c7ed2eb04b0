#pragma once

#include <vector>

namespace swt {

// r(s) = core * sinh(kappa s), s in [0,1], kappa = asinh(r_out / core).
// Dense near 0 on the scale `core`, roughly geometric beyond it.
struct RadialGrid {
    std::vector<double> s, r, drds;
    double core = 0, kappa = 0;

    int size() const { return static_cast<int>(r.size()); }
    double r_out() const { return r.back(); }
};

RadialGrid make_sinh_grid(double r_out, double core, int n);

// Fornberg weights for the m-th derivative at z from nodes x
std::vector<double> fd_weights(double z, const std::vector<double>& x, int m);

// d/dr of nodal values with a 5-point stencil (one-sided at the ends)
std::vector<double> fd_derivative(const std::vector<double>& r, const std::vector<double>& u);

// weights for int g r dr by the trapezoid rule in s
std::vector<double> area_weights(const RadialGrid& g);

}  // namespace swt
