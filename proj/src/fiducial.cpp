#include "swt/fiducial.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>

#include "swt/errors.hpp"

namespace swt {

namespace {

cx fourier(const std::vector<std::pair<int, cx>>& modes, double w, double t, bool deriv) {
    cx s = 0;
    for (auto [n, z] : modes) {
        cx e = std::exp(I * (n * w * t));
        s += deriv ? I * (n * w) * z * e : z * e;
    }
    return s;
}

// per-point quantities of the de-singularized configuration
struct Local {
    double rho, s;  // rho_t(r) and (eps/Khat)^{1/3}
    double eW, emW;  // e^W and e^{-W} rho, so alpha ~ eW s c and beta ~ emW s d
    double rhoHp;    // rho dH/drho = rho W' - 1/2, finite at 0
    double f, df_rho;  // f and rho df/drho
};

Local local(const ProfileH& p, double eps, double kh, double r) {
    Local L;
    L.s = std::cbrt(eps / kh);
    L.rho = std::pow(kh / eps, 2.0 / 3.0) * r;
    auto W = eval_W_any(p, L.rho);
    L.eW = std::exp(W.H);
    L.emW = std::exp(-W.H) * L.rho;
    // rho H' directly away from the axis; rho W' - 1/2 loses it to cancellation in the tail
    L.rhoHp = L.rho > 1 ? L.rho * eval_H_any(p, L.rho).dH : L.rho * W.dH - 0.5;
    L.f = eval_f_any(p, L.rho);
    L.df_rho = L.rho * eval_df_any(p, L.rho);
    return L;
}

}  // namespace

BoundaryData BoundaryData::constant(cx c, cx d) {
    BoundaryData b;
    b.c_modes = {{0, c}};
    b.d_modes = {{0, d}};
    return b;
}

cx BoundaryData::c(double t) const { return fourier(c_modes, 2 * M_PI / t_period, t, false); }
cx BoundaryData::d(double t) const { return fourier(d_modes, 2 * M_PI / t_period, t, false); }
cx BoundaryData::c_dot(double t) const { return fourier(c_modes, 2 * M_PI / t_period, t, true); }
cx BoundaryData::d_dot(double t) const { return fourier(d_modes, 2 * M_PI / t_period, t, true); }

double BoundaryData::S_dot(double t) const {
    return 2 * std::real(std::conj(c(t)) * c_dot(t) + std::conj(d(t)) * d_dot(t));
}

bool BoundaryData::t_constant() const {
    for (auto& m : {c_modes, d_modes})
        for (auto [n, z] : m)
            if (n != 0 && z != cx(0)) return false;
    return true;
}

void BoundaryData::validate(int samples) const {
    if (!(t_period > 0)) throw Error(Errc::BadConfig, "t_period must be positive");
    for (int i = 0; i < samples; ++i) {
        double t = t_period * i / samples;
        if (!(S(t) > 1e-12)) throw Error(Errc::AssumptionViolated, "|c|^2 + |d|^2 vanishes at t = " + std::to_string(t));
    }
}

double K_of(const BoundaryData& bd, double t) { return std::sqrt(2.0 / 3.0 * bd.S(t)); }
double khat(const BoundaryData& bd, double t, double factor) { return factor * K_of(bd, t); }

PointSpinor TubeField::at(int it, int ir, double theta) const {
    cx eb = std::exp(-I * theta);
    return {a1(it, ir), b1(it, ir) * eb, a2(it, ir), b2(it, ir) * eb};
}

namespace {

TubeField skeleton(const BoundaryData& bd, const FiducialOptions& opt) {
    bd.validate();
    if (!(opt.eps > 0) || opt.n_t < 4 || (opt.n_t & (opt.n_t - 1)))
        throw Error(Errc::BadConfig, "need eps > 0 and n_t a power of two >= 4");
    TubeField F;
    F.eps = opt.eps;
    F.lambda = opt.tube_radius();
    F.khat_factor = opt.khat_factor;
    F.t_period = bd.t_period;
    F.grid = make_sinh_grid(F.lambda, opt.core * std::pow(opt.eps, 2.0 / 3.0), opt.n_r);
    const int nt = opt.n_t, nr = opt.n_r;
    F.t.resize(nt);
    F.c.resize(nt);
    F.d.resize(nt);
    for (int i = 0; i < nt; ++i) {
        F.t[i] = bd.t_period * i / nt;
        F.c[i] = bd.c(F.t[i]);
        F.d[i] = bd.d(F.t[i]);
    }
    F.a1.resize(nt, nr);
    F.b1.resize(nt, nr);
    F.a2.resize(nt, nr);
    F.b2.resize(nt, nr);
    F.f.resize(nt, nr);
    F.rho.setZero(nt, nr);
    return F;
}

}  // namespace

TubeField build_phi0(const BoundaryData& bd, const FiducialOptions& opt) {
    TubeField F = skeleton(bd, opt);
    for (int i = 0; i < F.n_t(); ++i)
        for (int j = 0; j < F.n_r(); ++j) {
            double sr = std::sqrt(F.grid.r[j]);
            cx c = F.c[i], d = F.d[i];
            F.a1(i, j) = c * sr;
            F.b1(i, j) = d * sr;
            F.a2(i, j) = -std::conj(d) * sr;
            F.b2(i, j) = std::conj(c) * sr;
            F.f(i, j) = 0.25;
        }
    return F;
}

TubeField desingularize(const BoundaryData& bd, const ProfileH& p, const FiducialOptions& opt) {
    TubeField F = skeleton(bd, opt);
    F.desingularized = true;
    for (int i = 0; i < F.n_t(); ++i) {
        double kh = khat(bd, F.t[i], opt.khat_factor);
        cx c = F.c[i], d = F.d[i];
        for (int j = 0; j < F.n_r(); ++j) {
            Local L = local(p, opt.eps, kh, F.grid.r[j]);
            F.rho(i, j) = L.rho;
            F.a1(i, j) = L.eW * L.s * c;
            F.b1(i, j) = L.emW * L.s * d;
            F.a2(i, j) = -L.eW * L.s * std::conj(d);
            F.b2(i, j) = L.emW * L.s * std::conj(c);
            F.f(i, j) = L.f;
        }
    }
    return F;
}

Eigen::MatrixXcd spectral_dt(const Eigen::MatrixXcd& u, double period) {
    const int nt = static_cast<int>(u.rows());
    Eigen::FFT<double> fft;
    Eigen::MatrixXcd out(u.rows(), u.cols());
    std::vector<cx> col(nt), spec;
    for (int j = 0; j < u.cols(); ++j) {
        for (int i = 0; i < nt; ++i) col[i] = u(i, j);
        fft.fwd(spec, col);
        for (int k = 0; k < nt; ++k) {
            int n = k <= nt / 2 ? k : k - nt;
            if (2 * k == nt) n = 0;  // drop Nyquist
            spec[k] *= I * (2 * M_PI * n / period);
        }
        fft.inv(col, spec);
        for (int i = 0; i < nt; ++i) out(i, j) = col[i];
    }
    return out;
}

Eigen::MatrixXd spectral_dt(const Eigen::MatrixXd& u, double period) {
    return spectral_dt(Eigen::MatrixXcd(u.cast<cx>()), period).real();
}

namespace {

std::vector<double> col_real(const Eigen::MatrixXd& m, int i) {
    std::vector<double> v(m.cols());
    for (int j = 0; j < m.cols(); ++j) v[j] = m(i, j);
    return v;
}

// d/dr of row i of a complex array
std::vector<cx> dr_row(const RadialGrid& g, const Eigen::MatrixXcd& m, int i) {
    std::vector<double> re(m.cols()), im(m.cols());
    for (int j = 0; j < m.cols(); ++j) {
        re[j] = m(i, j).real();
        im[j] = m(i, j).imag();
    }
    auto dre = fd_derivative(g.r, re), dim = fd_derivative(g.r, im);
    std::vector<cx> out(m.cols());
    for (int j = 0; j < m.cols(); ++j) out[j] = {dre[j], dim[j]};
    return out;
}

}  // namespace

SWError sw_error(const TubeField& F) {
    const int nt = F.n_t(), nr = F.n_r();
    const double eps = F.eps;
    const auto& r = F.grid.r;
    SWError E;
    E.ea1.setZero(nt, nr);
    E.eb1.setZero(nt, nr);
    E.ea2.setZero(nt, nr);
    E.eb2.setZero(nt, nr);
    E.e_dt.setZero(nt, nr);
    E.e_dr.setZero(nt, nr);
    E.e_xy.setZero(nt, nr);

    auto da1 = spectral_dt(F.a1, F.t_period), db1 = spectral_dt(F.b1, F.t_period);
    auto da2 = spectral_dt(F.a2, F.t_period), db2 = spectral_dt(F.b2, F.t_period);
    auto df = spectral_dt(F.f, F.t_period);

    // Phi_0 on the same grid and its own t-error
    Eigen::MatrixXcd z1(nt, nr), z2(nt, nr), y1(nt, nr), y2(nt, nr);
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < nr; ++j) {
            double sr = std::sqrt(r[j]);
            z1(i, j) = F.c[i] * sr;
            y1(i, j) = F.d[i] * sr;
            z2(i, j) = -std::conj(F.d[i]) * sr;
            y2(i, j) = std::conj(F.c[i]) * sr;
        }
    auto dz1 = spectral_dt(z1, F.t_period), dy1 = spectral_dt(y1, F.t_period);
    auto dz2 = spectral_dt(z2, F.t_period), dy2 = spectral_dt(y2, F.t_period);

    auto wts = area_weights(F.grid);
    const double dt = F.t_period / nt;
    const double r_split = std::pow(eps, 2.0 / 3.0 - kGammaPrime);
    double s_d = 0, s_int = 0, s_2d = 0, s_0 = 0, s_full = 0;

    for (int i = 0; i < nt; ++i) {
        auto fr = fd_derivative(r, col_real(F.f, i));
        auto a1r = dr_row(F.grid, F.a1, i), b1r = dr_row(F.grid, F.b1, i);
        auto a2r = dr_row(F.grid, F.a2, i), b2r = dr_row(F.grid, F.b2, i);
        for (int j = 0; j < nr; ++j) {
            const double rr = r[j], f = F.f(i, j);
            // 2D Dirac: alpha-slot -2 d_A beta (beta in mode -1), beta-slot 2 dbar_A alpha
            cx ra1, ra2, rb1, rb2;
            double rdt = 0;
            if (rr > 0) {
                double ka = 2 * f / rr, kb = (-1 + 2 * f) / rr;
                ra1 = -(b1r[j] + kb * F.b1(i, j));
                ra2 = -(b2r[j] + kb * F.b2(i, j));
                rb1 = a1r[j] - ka * F.a1(i, j);
                rb2 = a2r[j] - ka * F.a2(i, j);
                double mut = std::norm(F.b1(i, j)) + std::norm(F.b2(i, j)) - std::norm(F.a1(i, j)) - std::norm(F.a2(i, j));
                rdt = 2 / rr * fr[j] + 0.5 * mut / (eps * eps);
            } else {
                // beta vanishes linearly and f quadratically at the axis, so
                // beta/r -> beta' and the alpha-slot cancels
                ra1 = ra2 = 0;
                rb1 = a1r[j];
                rb2 = a2r[j];
            }
            ra1 /= eps;
            ra2 /= eps;
            rb1 /= eps;
            rb2 /= eps;
            // t-parts: gamma(dt) = diag(i, -i)
            cx ta1 = I * (da1(i, j) - dz1(i, j)) / eps, ta2 = I * (da2(i, j) - dz2(i, j)) / eps;
            cx tb1 = -I * (db1(i, j) - dy1(i, j)) / eps, tb2 = -I * (db2(i, j) - dy2(i, j)) / eps;
            double edr = rr > 0 ? -2 / rr * df(i, j) : 0.0;
            cx mc = std::conj(F.a1(i, j)) * F.b1(i, j) + std::conj(F.a2(i, j)) * F.b2(i, j);
            cx exy = 0.5 * (-2.0 * I * mc) / (eps * eps);

            E.ea1(i, j) = ra1 + ta1;
            E.ea2(i, j) = ra2 + ta2;
            E.eb1(i, j) = rb1 + tb1;
            E.eb2(i, j) = rb2 + tb2;
            E.e_dt(i, j) = rdt;
            E.e_dr(i, j) = edr;
            E.e_xy(i, j) = exy;

            // every component sits in a single theta mode, so the theta integral is 2 pi
            double w = 2 * M_PI * wts[j] * dt;
            double sp = std::norm(E.ea1(i, j)) + std::norm(E.ea2(i, j)) + std::norm(E.eb1(i, j)) + std::norm(E.eb2(i, j));
            // |g dr|^2 = g^2; mu_x dx + mu_y dy has |.|^2 = |mu_x + i mu_y|^2
            double fm = rdt * rdt + edr * edr + std::norm(exy);
            double pt = w * (sp + fm);
            s_d += pt;
            if (rr <= r_split) s_int += pt;
            s_2d += w * (std::norm(ra1) + std::norm(ra2) + std::norm(rb1) + std::norm(rb2) + rdt * rdt);
            cx p1 = I * dz1(i, j) / eps, p2 = I * dz2(i, j) / eps, q1 = -I * dy1(i, j) / eps, q2 = -I * dy2(i, j) / eps;
            s_0 += w * (std::norm(p1) + std::norm(p2) + std::norm(q1) + std::norm(q2));
            s_full += w * (std::norm(E.ea1(i, j) + p1) + std::norm(E.ea2(i, j) + p2) + std::norm(E.eb1(i, j) + q1) +
                           std::norm(E.eb2(i, j) + q2) + fm);
        }
    }
    E.l2 = std::sqrt(s_d);
    E.l2_int = std::sqrt(s_int);
    E.l2_ext = std::sqrt(std::max(0.0, s_d - s_int));
    E.l2_2d = std::sqrt(s_2d);
    E.l2_phi0 = std::sqrt(s_0);
    E.l2_full = std::sqrt(s_full);
    return E;
}

double desing_error_pointwise(const BoundaryData& bd, const ProfileH& p, double eps, double t, double r,
                              double factor) {
    const double kh = khat(bd, t, factor);
    const double lk = 0.5 * bd.S_dot(t) / bd.S(t);  // d/dt log Khat
    Local L = local(p, eps, kh, r);
    const double sr = std::sqrt(r);
    const double dh = L.rhoHp * (2.0 / 3.0) * lk;  // d_t h
    cx c = bd.c(t), d = bd.d(t), cd = bd.c_dot(t), dd = bd.d_dot(t);
    // d_t[(e^{h} - 1) r^{1/2}] and d_t[(e^{-h} - 1) r^{1/2}] times the t-dependence of c, d
    double ep = L.eW * L.s, em = L.emW * L.s;  // e^{h} r^{1/2}, e^{-h} r^{1/2}
    // (e^{+-h} - 1) r^{1/2}; expm1 in the tail where h underflows against 1
    double ep1 = ep - sr, em1 = em - sr;
    if (L.rho > 1) {
        double h = eval_H_any(p, L.rho).H;
        ep1 = std::expm1(h) * sr;
        em1 = std::expm1(-h) * sr;
    }
    cx ta1 = ep * dh * c + ep1 * cd;
    cx tb1 = -em * dh * d + em1 * dd;
    cx ta2 = -(ep * dh * std::conj(d) + ep1 * std::conj(dd));
    cx tb2 = -em * dh * std::conj(c) + em1 * std::conj(cd);
    double sp = (std::norm(ta1) + std::norm(tb1) + std::norm(ta2) + std::norm(tb2)) / (eps * eps);
    // -(2/r) d_t f with d_t f = f'(rho) rho (2/3) d_t log Khat
    double edr = -2.0 * L.df_rho * (2.0 / 3.0) * lk * std::pow(kh / eps, 2.0 / 3.0) / std::max(L.rho, 1e-300);
    if (L.rho == 0) edr = 0;
    return std::sqrt(sp + edr * edr);
}

TailFit fit_error_tail(const BoundaryData& bd, const ProfileH& p, double eps, double t, double rho_lo, double rho_hi,
                       int n, double factor) {
    const double kh = khat(bd, t, factor);
    const double sc = std::pow(eps / kh, 2.0 / 3.0);
    std::vector<double> r(n), y(n);
    for (int i = 0; i < n; ++i) {
        double rho = rho_lo * std::pow(rho_hi / rho_lo, static_cast<double>(i) / (n - 1));
        r[i] = sc * rho;
        y[i] = std::log(desing_error_pointwise(bd, p, eps, t, r[i], factor));
    }
    TailFit best;
    best.rms = INFINITY;
    for (double pe = 1.0; pe <= 2.0 + 1e-12; pe += 0.0025) {
        // least squares in (logC, c, q) for y = logC - c r^p / eps + q log r
        Eigen::MatrixXd A(n, 3);
        Eigen::VectorXd b(n);
        for (int i = 0; i < n; ++i) {
            A(i, 0) = 1;
            A(i, 1) = -std::pow(r[i], pe) / eps;
            A(i, 2) = std::log(r[i]);
            b(i) = y[i];
        }
        Eigen::Vector3d x = A.colPivHouseholderQr().solve(b);
        double rms = std::sqrt((A * x - b).squaredNorm() / n);
        if (rms < best.rms) best = {pe, x(1), x(2), x(0), rms};
    }
    return best;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ErrorScan error_scan(const BoundaryData& bd, const ProfileH& p, const std::vector<double>& eps_list,
                     FiducialOptions opt, double t_fit) {
    ErrorScan out;
    std::vector<double> e, n;
    for (double eps : eps_list) {
        opt.eps = eps;
        auto E = sw_error(desingularize(bd, p, opt));
        // fit window well past the transition layer
        auto tf = fit_error_tail(bd, p, eps, t_fit, 6.0, 16.0, 60, opt.khat_factor);
        out.rows.push_back({eps, E.l2, E.l2_int, E.l2_ext, E.l2_phi0, tf});
        e.push_back(eps);
        n.push_back(E.l2);
    }
    if (e.size() >= 2) out.gamma = -loglog_slope(e, n);
    return out;
}

double sup_connection(const TubeField& F) {
    double m = 0;
    for (int i = 0; i < F.n_t(); ++i)
        for (int j = 1; j < F.n_r(); ++j) m = std::max(m, 2 * F.f(i, j) / F.grid.r[j]);
    return m;
}

double grad_bound(const TubeField& F) {
    auto da1 = spectral_dt(F.a1, F.t_period), db1 = spectral_dt(F.b1, F.t_period);
    auto da2 = spectral_dt(F.a2, F.t_period), db2 = spectral_dt(F.b2, F.t_period);
    double m = 0;
    for (int i = 0; i < F.n_t(); ++i) {
        auto a1r = dr_row(F.grid, F.a1, i), b1r = dr_row(F.grid, F.b1, i);
        auto a2r = dr_row(F.grid, F.a2, i), b2r = dr_row(F.grid, F.b2, i);
        for (int j = 1; j < F.n_r(); ++j) {
            double r = F.grid.r[j], f = F.f(i, j);
            double ka = (0 + 2 * f) / r, kb = (-1 + 2 * f) / r;
            double g2 = std::norm(a1r[j]) + std::norm(a2r[j]) + std::norm(b1r[j]) + std::norm(b2r[j]);
            g2 += ka * ka * (std::norm(F.a1(i, j)) + std::norm(F.a2(i, j)));
            g2 += kb * kb * (std::norm(F.b1(i, j)) + std::norm(F.b2(i, j)));
            g2 += std::norm(da1(i, j)) + std::norm(da2(i, j)) + std::norm(db1(i, j)) + std::norm(db2(i, j));
            m = std::max(m, std::sqrt(g2 * r));
        }
    }
    return m;
}

double max_mu_complex(const TubeField& F) {
    double m = 0;
    for (int i = 0; i < F.n_t(); ++i)
        for (int j = 1; j < F.n_r(); ++j) {
            auto s = F.at(i, j, 0.7);
            m = std::max(m, std::abs(mu_complex(s)) / s.norm2());
        }
    return m;
}

double max_mu_oneform(const TubeField& F) {
    double m = 0;
    for (int i = 0; i < F.n_t(); ++i)
        for (int j = 1; j < F.n_r(); ++j)
            for (double th : {0.0, 1.3, 2.9}) {
                auto s = F.at(i, j, th);
                auto mm = moment_map(s, s);
                m = std::max(m, std::sqrt(mm.st * mm.st + mm.sx * mm.sx + mm.sy * mm.sy) / s.norm2());
            }
    return m;
}

}  // namespace swt
