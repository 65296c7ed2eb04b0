#include "swt/profile.hpp"

#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <cmath>

#include "swt/errors.hpp"

namespace swt {

namespace {

constexpr double kSeries = 9.0 / 64.0;  // w = w0 + kSeries e^{2 w0} rho^2 + ...
constexpr double kRhoMin = 1e-6;
constexpr int kMaxNewton = 200;

double dF(double x, double H) { return 2.25 * std::exp(3 * x) * std::cosh(2 * H); }

double k0(double tau) { return boost::math::cyl_bessel_k(0, tau); }
double k1(double tau) { return boost::math::cyl_bessel_k(1, tau); }

// tridiagonal solve, sub/diag/sup overwritten
void thomas(std::vector<double>& a, std::vector<double>& b, std::vector<double>& c, std::vector<double>& d) {
    const size_t n = b.size();
    for (size_t i = 1; i < n; ++i) {
        double m = a[i] / b[i - 1];
        b[i] -= m * c[i - 1];
        d[i] -= m * d[i - 1];
    }
    d[n - 1] /= b[n - 1];
    for (size_t i = n - 1; i-- > 0;) d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
}

struct Hermite {
    double v, d;
};

Hermite hermite(double t, double h, double y0, double y1, double m0, double m1) {
    double t2 = t * t, t3 = t2 * t;
    double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    double v = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
    double g00 = 6 * t2 - 6 * t, g10 = 3 * t2 - 4 * t + 1, g01 = -6 * t2 + 6 * t, g11 = 3 * t2 - 2 * t;
    double d = (g00 * y0 + g01 * y1) / h + g10 * m0 + g11 * m1;
    return {v, d};
}

}  // namespace

double ProfileH::w0() const { return -std::log(a0); }

double profile_rhs(double x, double H) { return 1.125 * std::exp(3 * x) * std::sinh(2 * H); }

std::vector<double> numerov_residual(double x0, double hx, const std::vector<double>& H) {
    const size_t n = H.size();
    std::vector<double> r(n, 0.0);
    for (size_t j = 1; j + 1 < n; ++j) {
        double xm = x0 + (j - 1) * hx, xj = xm + hx, xp = xj + hx;
        r[j] = (H[j + 1] - 2 * H[j] + H[j - 1]) / (hx * hx) -
               (profile_rhs(xp, H[j + 1]) + 10 * profile_rhs(xj, H[j]) + profile_rhs(xm, H[j - 1])) / 12.0;
    }
    return r;
}

ProfileH solve_profile(double rho_max, int n_points, double tol) {
    if (rho_max < 10 || n_points < 200 || !(tol > 0))
        throw Error(Errc::BadConfig, "solve_profile needs rho_max >= 10, n_points >= 200, tol > 0");

    const int n = n_points;
    const double x0 = std::log(kRhoMin), x1 = std::log(rho_max);
    const double h = (x1 - x0) / (n - 1);
    std::vector<double> x(n), H(n);
    for (int j = 0; j < n; ++j) {
        x[j] = x0 + j * h;
        // linear solution with the right log coefficient at the origin
        H[j] = k0(std::exp(1.5 * x[j])) / 3.0;
    }
    const double tauN = std::exp(1.5 * x[n - 1]), tauM = std::exp(1.5 * x[n - 2]);
    const double tail_ratio = k0(tauN) / k0(tauM);

    auto residual = [&](const std::vector<double>& u, std::vector<double>& r) {
        r.assign(n, 0.0);
        double w0 = u[0] + 0.5 * x[0], w1 = u[1] + 0.5 * x[1];
        r[0] = w1 - w0 - kSeries * std::exp(2 * w0) * (std::exp(2 * x[1]) - std::exp(2 * x[0]));
        for (int j = 1; j < n - 1; ++j)
            r[j] = u[j + 1] - 2 * u[j] + u[j - 1] -
                   h * h / 12.0 * (profile_rhs(x[j + 1], u[j + 1]) + 10 * profile_rhs(x[j], u[j]) + profile_rhs(x[j - 1], u[j - 1]));
        r[n - 1] = u[n - 1] - tail_ratio * u[n - 2];
    };
    auto maxabs = [](const std::vector<double>& v) {
        double m = 0;
        for (double e : v) m = std::max(m, std::abs(e));
        return m;
    };

    std::vector<double> r, a(n), b(n), c(n), d(n), trial(n), rt;
    residual(H, r);
    double rn = maxabs(r);
    bool converged = false;
    for (int it = 0; it < kMaxNewton; ++it) {
        double w0 = H[0] + 0.5 * x[0];
        double e = kSeries * (std::exp(2 * x[1]) - std::exp(2 * x[0])) * 2 * std::exp(2 * w0);
        std::fill(a.begin(), a.end(), 0.0);
        std::fill(c.begin(), c.end(), 0.0);
        b[0] = -1 - e;
        c[0] = 1;
        for (int j = 1; j < n - 1; ++j) {
            a[j] = 1 - h * h / 12.0 * dF(x[j - 1], H[j - 1]);
            b[j] = -2 - h * h / 12.0 * 10 * dF(x[j], H[j]);
            c[j] = 1 - h * h / 12.0 * dF(x[j + 1], H[j + 1]);
        }
        a[n - 1] = -tail_ratio;
        b[n - 1] = 1;
        for (int j = 0; j < n; ++j) d[j] = -r[j];
        thomas(a, b, c, d);

        double step = 1.0;
        double dn = maxabs(d);
        if (dn > 1.0) step = 1.0 / dn;  // damping: cap the update at unit size
        for (;;) {
            for (int j = 0; j < n; ++j) trial[j] = H[j] + step * d[j];
            residual(trial, rt);
            double rtn = maxabs(rt);
            if (rtn < rn || step < 1e-6 || (rtn <= 10 * rn && rn < 1e-13)) {
                H.swap(trial);
                r.swap(rt);
                rn = rtn;
                break;
            }
            step *= 0.5;
        }
        if (step * dn < 1e-15 * (1 + maxabs(H)) || rn < 1e-16) {
            converged = true;
            break;
        }
    }
    if (!converged && rn > 1e-12) throw Error(Errc::NonConvergence, "profile Newton did not converge");

    ProfileH p;
    p.rho_max = rho_max;
    p.x0 = x0;
    p.hx = h;
    p.H = H;
    p.rho.resize(n);
    p.Hx.resize(n);
    p.dH.resize(n);
    p.f.resize(n);
    for (int j = 0; j < n; ++j) p.rho[j] = std::exp(x[j]);
    const double w0 = H[0] + 0.5 * x[0] - kSeries * std::exp(2 * (H[0] + 0.5 * x[0])) * std::exp(2 * x[0]);
    p.a0 = std::exp(-w0);
    p.Hx[0] = 2 * kSeries * std::exp(2 * w0) * std::exp(2 * x[0]) - 0.5;
    for (int j = 1; j < n - 1; ++j)
        p.Hx[j] = (H[j + 1] - H[j - 1]) / (2 * h) - h * (profile_rhs(x[j + 1], H[j + 1]) - profile_rhs(x[j - 1], H[j - 1])) / 12.0;
    p.Hx[n - 1] = -H[n - 1] * 1.5 * tauN * k1(tauN) / k0(tauN);
    for (int j = 0; j < n; ++j) p.dH[j] = p.Hx[j] / p.rho[j];
    // f from f_x = F/2, accumulated with the end-corrected trapezoid rule; avoids
    // the cancellation in 1/4 + H_x/2 where H_x is close to -1/2
    std::vector<double> F(n), Fx(n);
    for (int j = 0; j < n; ++j) {
        F[j] = profile_rhs(x[j], H[j]);
        Fx[j] = 3 * F[j] + dF(x[j], H[j]) * p.Hx[j];
    }
    p.f[0] = kSeries * std::exp(2 * w0) * p.rho[0] * p.rho[0];
    for (int j = 0; j + 1 < n; ++j)
        p.f[j + 1] = p.f[j] + 0.5 * (0.5 * h * (F[j] + F[j + 1]) - h * h / 12.0 * (Fx[j + 1] - Fx[j]));
    // rescale the increments so the right end meets 1/4 + H_x/2, where that form is exact
    const double f_end = 0.25 + 0.5 * p.Hx[n - 1];
    const double scale = (f_end - p.f[0]) / (p.f[n - 1] - p.f[0]);
    for (int j = 1; j < n; ++j) p.f[j] = p.f[0] + scale * (p.f[j] - p.f[0]);
    p.tail_amp = H[n - 1] / k0(tauN);

    auto nr = numerov_residual(x0, h, H);
    p.residual_norm = maxabs(nr);
    if (p.residual_norm > tol)
        throw Error(Errc::GridTooCoarse, "profile residual " + std::to_string(p.residual_norm) + " above tol");
    return p;
}

namespace {

// locate x in the grid; returns index j and local coordinate t in [0,1]
void locate(const ProfileH& p, double rho, int& j, double& t) {
    double x = std::log(rho);
    double s = (x - p.x0) / p.hx;
    int n = static_cast<int>(p.H.size());
    j = std::clamp(static_cast<int>(std::floor(s)), 0, n - 2);
    t = s - j;
}

}  // namespace

HVal eval_H(const ProfileH& p, double rho) {
    if (rho > p.rho_max * (1 + 1e-14)) throw Error(Errc::OutOfRange, "eval_H beyond rho_max");
    if (rho < p.rho.front()) {
        double w0 = p.w0();
        double w = w0 + kSeries * std::exp(2 * w0) * rho * rho;
        double dw = 2 * kSeries * std::exp(2 * w0) * rho;
        return {w - 0.5 * std::log(rho), dw - 0.5 / rho};
    }
    int j;
    double t;
    locate(p, rho, j, t);
    auto hv = hermite(t, p.hx, p.H[j], p.H[j + 1], p.Hx[j], p.Hx[j + 1]);
    return {hv.v, hv.d / rho};
}

HVal eval_W(const ProfileH& p, double rho) {
    if (rho < p.rho.front()) {
        double w0 = p.w0();
        return {w0 + kSeries * std::exp(2 * w0) * rho * rho, 2 * kSeries * std::exp(2 * w0) * rho};
    }
    auto h = eval_H(p, rho);
    return {h.H + 0.5 * std::log(rho), h.dH + 0.5 / rho};
}

double eval_f(const ProfileH& p, double rho) {
    if (rho > p.rho_max * (1 + 1e-14)) throw Error(Errc::OutOfRange, "eval_f beyond rho_max");
    if (rho < p.rho.front()) {
        double w0 = p.w0();
        return kSeries * std::exp(2 * w0) * rho * rho;
    }
    int j;
    double t;
    locate(p, rho, j, t);
    double x = p.x0 + j * p.hx;
    double m0 = 0.5 * profile_rhs(x, p.H[j]), m1 = 0.5 * profile_rhs(x + p.hx, p.H[j + 1]);
    return hermite(t, p.hx, p.f[j], p.f[j + 1], m0, m1).v;
}

double eval_df(const ProfileH& p, double rho) {
    if (rho <= 0) return 0.0;
    auto h = eval_H(p, rho);
    return 0.5 * profile_rhs(std::log(rho), h.H) / rho;
}

HVal eval_tail(const ProfileH& p, double rho) {
    if (rho < p.rho_max * (1 - 1e-12)) throw Error(Errc::ProfileRangeExceeded, "tail used inside rho_max");
    double tau = std::pow(rho, 1.5);
    double v = p.tail_amp * k0(tau);
    double dv = -p.tail_amp * k1(tau) * 1.5 * std::sqrt(rho);
    return {v, dv};
}

HVal eval_H_any(const ProfileH& p, double rho) { return rho <= p.rho_max ? eval_H(p, rho) : eval_tail(p, rho); }

double eval_f_any(const ProfileH& p, double rho) {
    if (rho <= p.rho_max) return eval_f(p, rho);
    return 0.25 + 0.5 * rho * eval_tail(p, rho).dH;
}

double eval_df_any(const ProfileH& p, double rho) {
    if (rho <= 0) return 0.0;
    double H = eval_H_any(p, rho).H;
    return 0.5 * profile_rhs(std::log(rho), H) / rho;
}

HVal eval_W_any(const ProfileH& p, double rho) {
    if (rho <= p.rho_max) return eval_W(p, rho);
    auto t = eval_tail(p, rho);
    return {t.H + 0.5 * std::log(rho), t.dH + 0.5 / rho};
}

double truncation_residual(const ProfileH& p) {
    const auto& H = p.H;
    const int n = static_cast<int>(H.size());
    const double h = p.hx;
    static constexpr double c6[7] = {1.0 / 90, -3.0 / 20, 1.5, -49.0 / 18, 1.5, -3.0 / 20, 1.0 / 90};
    double m = 0;
    for (int j = 3; j < n - 3; ++j) {
        double d2 = 0;
        for (int k = 0; k < 7; ++k) d2 += c6[k] * H[j - 3 + k];
        d2 /= h * h;
        m = std::max(m, std::abs(d2 - profile_rhs(p.x0 + j * h, H[j])));
    }
    return m;
}

}  // namespace swt
