#include "swt/grid.hpp"

#include <algorithm>
#include <cmath>

#include "swt/errors.hpp"

namespace swt {

RadialGrid make_sinh_grid(double r_out, double core, int n) {
    if (n < 8 || !(r_out > 0) || !(core > 0)) throw Error(Errc::BadConfig, "radial grid needs n >= 8, r_out > 0, core > 0");
    RadialGrid g;
    g.core = core;
    g.kappa = std::asinh(r_out / core);
    g.s.resize(n);
    g.r.resize(n);
    g.drds.resize(n);
    for (int j = 0; j < n; ++j) {
        double s = static_cast<double>(j) / (n - 1);
        g.s[j] = s;
        g.r[j] = core * std::sinh(g.kappa * s);
        g.drds[j] = core * g.kappa * std::cosh(g.kappa * s);
    }
    g.r.back() = r_out;
    return g;
}

std::vector<double> fd_weights(double z, const std::vector<double>& x, int m) {
    const int n = static_cast<int>(x.size()) - 1;
    std::vector<std::vector<double>> c(n + 1, std::vector<double>(m + 1, 0.0));
    double c1 = 1, c4 = x[0] - z;
    c[0][0] = 1;
    for (int i = 1; i <= n; ++i) {
        int mn = std::min(i, m);
        double c2 = 1, c5 = c4;
        c4 = x[i] - z;
        for (int j = 0; j < i; ++j) {
            double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(n + 1);
    for (int i = 0; i <= n; ++i) w[i] = c[i][m];
    return w;
}

std::vector<double> fd_derivative(const std::vector<double>& r, const std::vector<double>& u) {
    const int n = static_cast<int>(r.size());
    std::vector<double> du(n);
    for (int j = 0; j < n; ++j) {
        int lo = std::clamp(j - 2, 0, n - 5);
        std::vector<double> xs(r.begin() + lo, r.begin() + lo + 5);
        auto w = fd_weights(r[j], xs, 1);
        double d = 0;
        for (int k = 0; k < 5; ++k) d += w[k] * u[lo + k];
        du[j] = d;
    }
    return du;
}

std::vector<double> area_weights(const RadialGrid& g) {
    const int n = g.size();
    const double ds = 1.0 / (n - 1);
    std::vector<double> w(n);
    for (int j = 0; j < n; ++j) w[j] = (j == 0 || j == n - 1 ? 0.5 : 1.0) * ds * g.drds[j] * g.r[j];
    return w;
}

}  // namespace swt
