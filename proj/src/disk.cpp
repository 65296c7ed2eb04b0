#include "swt/disk.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <random>

#include "swt/errors.hpp"
#include "swt/fiducial.hpp"

namespace swt {

namespace {

using RealFn = std::function<double(double)>;

RealFn weight_fn(double nu, double wl = 1) {
    return [nu, wl](double r) { return std::pow(wl * wl + r * r, nu); };
}

void check_weight(double nu, bool covariant) {
    if (!(std::abs(nu) < 1)) throw Error(Errc::ResonantWeight, fmt::format("nu = {} outside (-1,1)", nu));
    // the indicial roots at infinity are k (flat) and k + 1/2 (twisted)
    if (covariant && std::abs(std::abs(nu) - 0.5) < 1e-9)
        throw Error(Errc::ResonantWeight, fmt::format("nu = {} is resonant for the twisted operator", nu));
}

double khat_cd(cx c, cx d) {
    double S = std::norm(c) + std::norm(d);
    return kKhatFactor * std::sqrt(2.0 / 3.0 * S);
}

}  // namespace

// ---------------------------------------------------------------- Cauchy-Riemann

ModeOperator assemble_cr_mode(CR op, int k, int m, double nu, const RadialGrid& g, const ProfileH* p) {
    check_weight(nu, p != nullptr);
    ModeOperator mo;
    mo.k = k;
    mo.nu = nu;
    mo.layout = FieldLayout(g.size());
    int u = mo.layout.add("u", k);
    RealFn kappa = [k, p](double r) { return k + (p ? 2 * eval_f_any(*p, r) : 0.0); };
    double sgn = op == CR::Dbar ? -1.0 : 1.0;

    MidpointMap A(g, mo.layout, 1);
    A.deriv(0, u);
    A.value(0, u, [=](double r) { return cx(sgn * kappa(r) / r); });

    Constraints B(mo.layout);
    bool axis = op == CR::Dbar ? k < 0 : k > 0;
    bool outer = op == CR::Dbar ? k >= m : k <= m;
    if (axis) B.zero(u, 0, "axis");
    if (outer) B.zero(u, g.size() - 1, "outer");

    MidpointMap N(g, mo.layout, 3);
    N.deriv(0, u);
    N.value(1, u, [=](double r) { return cx(kappa(r) / r); });
    N.value(2, u, [](double r) { return cx(1 / weight_R(r)); });
    auto w = weight_fn(nu);
    mo.A = A.matrix();
    mo.B = B.matrix();
    mo.G = gram(N, {{0, w}, {1, w}, {2, w}});
    mo.w = A.row_weights(w);
    mo.bc = fmt::format("{}{}[{}]", op == CR::Dbar ? "Pi+" : "Pi-", p ? "_A" : "", m);
    return mo;
}

std::vector<ModeOperator> assemble_cauchy_riemann(CR op, int m, double nu, double r_out, const DiskGrid& dg, int kmax,
                                                  const ProfileH* p) {
    if (m < -4 || m > 4) throw Error(Errc::BadConfig, "m outside [-4,4]");
    if (kmax < std::abs(m) + 1) throw Error(Errc::BadConfig, "mode range too small for m");
    RadialGrid g = dg.make(r_out);
    std::vector<ModeOperator> ops;
    for (int k = -kmax; k <= kmax; ++k) ops.push_back(assemble_cr_mode(op, k, m, nu, g, p));
    return ops;
}

CRSummary summarize_cr(const std::vector<ModeOperator>& ops, double rel) {
    CRSummary s;
    s.sigma_min = std::numeric_limits<double>::infinity();
    s.min_gap = std::numeric_limits<double>::infinity();
    for (const auto& op : ops) {
        Spectrum sp = dense_spectrum(op);
        KernelCount kc = count_kernel(sp, rel);
        s.kernel += kc.kernel / 2;
        s.cokernel += kc.cokernel / 2;
        s.index += op.index() / 2;
        if (kc.kernel > 0) {
            s.kernel_modes.push_back(op.k);
            s.min_gap = std::min(s.min_gap, kc.gap);
        }
        if (kc.kernel < sp.sigma.size()) s.sigma_min = std::min(s.sigma_min, kc.sigma_next);
    }
    return s;
}

// ---------------------------------------------------------------- backgrounds

double rho_scale(cx c, cx d, double eps) { return std::pow(khat_cd(c, d) / eps, 2.0 / 3.0); }

Background scale_invariant_background(const ProfileH& p, cx c, cx d) {
    double S = std::norm(c) + std::norm(d);
    if (!(S > 0)) throw Error(Errc::AssumptionViolated, "|c|^2 + |d|^2 = 0");
    double kh = khat_cd(c, d);
    cx ct = c / kh, dt = d / kh;
    const ProfileH* pp = &p;
    Background bg;
    auto eW = [pp](double r) { return std::exp(eval_W_any(*pp, r).H); };
    bg.A1 = [=](double r) { return eW(r) * ct; };
    bg.A2 = [=](double r) { return -eW(r) * std::conj(dt); };
    bg.B1 = [=](double r) { return r / eW(r) * dt; };
    bg.B2 = [=](double r) { return r / eW(r) * std::conj(ct); };
    bg.f = [pp](double r) { return eval_f_any(*pp, r); };
    return bg;
}

Background physical_background(const ProfileH& p, cx c, cx d, double eps) {
    Background h = scale_invariant_background(p, c, d);
    double ls = rho_scale(c, d, eps);
    Background bg;
    bg.A1 = [=](double r) { return ls * h.A1(ls * r); };
    bg.A2 = [=](double r) { return ls * h.A2(ls * r); };
    bg.B1 = [=](double r) { return ls * h.B1(ls * r); };
    bg.B2 = [=](double r) { return ls * h.B2(ls * r); };
    bg.f = [=](double r) { return h.f(ls * r); };
    return bg;
}

// ---------------------------------------------------------------- normal operator

namespace {

struct ClassFields {
    int n;
    double tf;
    int a[2], b[2], p, q;
};

std::vector<ClassFields> sector_classes(int m, double t_freq) {
    if (m < 0) throw Error(Errc::BadConfig, "sector index must be >= 0");
    std::vector<ClassFields> cls;
    if (m == 0) {
        cls.push_back({-1, t_freq, {}, {}, 0, 0});
        if (t_freq != 0) cls.push_back({-1, -t_freq, {}, {}, 0, 0});
    } else {
        cls.push_back({m - 1, t_freq, {}, {}, 0, 0});
        cls.push_back({-m - 1, -t_freq, {}, {}, 0, 0});
    }
    return cls;
}

// index of the class paired with i by conjugation
int partner(const std::vector<ClassFields>& cls, int i) {
    for (int j = 0; j < static_cast<int>(cls.size()); ++j)
        if (cls[j].n == -cls[i].n - 2 && cls[j].tf == -cls[i].tf) return j;
    throw Error(Errc::BadConfig, "class without conjugate partner");
}

std::string cname(const std::string& base, int n, double tf) {
    return tf < 0 ? fmt::format("{}[{}]'", base, n) : fmt::format("{}[{}]", base, n);
}

std::vector<ClassFields> add_fields(FieldLayout& L, int m, double t_freq) {
    auto cls = sector_classes(m, t_freq);
    for (auto& c : cls) {
        c.a[0] = L.add(cname("a1", c.n, c.tf), c.n);
        c.a[1] = L.add(cname("a2", c.n, c.tf), c.n);
        c.b[0] = L.add(cname("b1", c.n, c.tf), c.n + 1);
        c.b[1] = L.add(cname("b2", c.n, c.tf), c.n + 1);
        c.p = L.add(cname("p", c.n, c.tf), c.n);
        c.q = L.add(cname("q", c.n, c.tf), c.n + 1);
    }
    return cls;
}

// the operator rows; out = 6 i + {a1, a2, b1, b2, p, q}
void add_rows(MidpointMap& A, const Background& bg, const std::vector<ClassFields>& cls, bool spinor_p = true) {
    const double s = bg.coupling;
    const Coef Aj[2] = {bg.A1, bg.A2}, Bj[2] = {bg.B1, bg.B2};
    const RealFn f = bg.f;
    for (int i = 0; i < static_cast<int>(cls.size()); ++i) {
        const auto& F = cls[i];
        const auto& P = cls[partner(cls, i)];
        const int o = 6 * i, n = F.n;
        const double tf = F.tf;
        for (int j = 0; j < 2; ++j) {
            Coef a = Aj[j], b = Bj[j];
            // -2 del_A beta + gamma(a) Phi + i d_t alpha
            A.deriv(o + j, F.b[j], -1.0);
            A.value(o + j, F.b[j], [=](double r) { return cx(-(n + 1 + 2 * f(r)) / r); });
            if (s != 0) {
                if (spinor_p) A.value(o + j, F.p, [=](double r) { return s * I * a(r); });
                A.value(o + j, P.q, [=](double r) { return -s * b(r); }, true);
            }
            if (tf != 0) A.value(o + j, F.a[j], cx(-tf));
            // 2 dbar_A alpha + gamma(a) Phi - i d_t beta
            A.deriv(o + 2 + j, F.a[j], 1.0);
            A.value(o + 2 + j, F.a[j], [=](double r) { return cx(-(n + 2 * f(r)) / r); });
            if (s != 0) {
                if (spinor_p) A.value(o + 2 + j, P.p, [=](double r) { return s * I * b(r); }, true);
                A.value(o + 2 + j, F.q, [=](double r) { return -s * a(r); });
            }
            if (tf != 0) A.value(o + 2 + j, F.b[j], cx(tf));
        }
        // 2 i del q + mu_R - i d_t p
        A.deriv(o + 4, F.q, I);
        A.value(o + 4, F.q, [=](double r) { return I * double(n + 1) / r; });
        // 2 i dbar p + mu_C + i d_t q
        A.deriv(o + 5, F.p, I);
        A.value(o + 5, F.p, [=](double r) { return -I * double(n) / r; });
        if (tf != 0) {
            A.value(o + 4, F.p, cx(tf));
            A.value(o + 5, F.q, cx(-tf));
        }
        if (s != 0)
            for (int j = 0; j < 2; ++j) {
                Coef a = Aj[j], b = Bj[j];
                A.value(o + 4, F.a[j], [=](double r) { return -s * I * std::conj(a(r)); });
                A.value(o + 4, P.b[j], [=](double r) { return s * I * b(r); }, true);
                A.value(o + 5, P.a[j], [=](double r) { return -s * b(r); }, true);
                A.value(o + 5, F.b[j], [=](double r) { return -s * std::conj(a(r)); });
            }
    }
}

// moment map outputs only: out 2 i = mu_R part, 2 i + 1 = mu_C part
void add_moment_rows(MidpointMap& M, int o0, const Background& bg, const std::vector<ClassFields>& cls) {
    const double s = bg.coupling;
    const Coef Aj[2] = {bg.A1, bg.A2}, Bj[2] = {bg.B1, bg.B2};
    for (int i = 0; i < static_cast<int>(cls.size()); ++i) {
        const auto& F = cls[i];
        const auto& P = cls[partner(cls, i)];
        for (int j = 0; j < 2; ++j) {
            Coef a = Aj[j], b = Bj[j];
            M.value(o0 + 2 * i, F.a[j], [=](double r) { return -s * I * std::conj(a(r)); });
            M.value(o0 + 2 * i, P.b[j], [=](double r) { return s * I * b(r); }, true);
            M.value(o0 + 2 * i + 1, P.a[j], [=](double r) { return -s * b(r); }, true);
            M.value(o0 + 2 * i + 1, F.b[j], [=](double r) { return -s * std::conj(a(r)); });
        }
    }
}

}  // namespace

int sector_field(const ModeOperator& op, const std::string& name, int cls) {
    int f = op.layout.find(fmt::format("{}[{}]", name, cls));
    if (f < 0) throw Error(Errc::BadConfig, "no field " + name);
    return f;
}

ModeOperator assemble_sector(const Background& bg, const RadialGrid& g, int m, const NormalOptions& opt) {
    ModeOperator op;
    op.k = m;
    op.nu = opt.nu;
    op.layout = FieldLayout(g.size());
    auto cls = add_fields(op.layout, m, opt.t_freq);
    const int nc = static_cast<int>(cls.size());
    const int N = g.size() - 1;
    const double R = g.r_out();

    MidpointMap A(g, op.layout, 6 * nc);
    add_rows(A, bg, cls);

    Constraints B(op.layout);
    for (int i = 0; i < nc; ++i) {
        const auto& F = cls[i];
        const int n = F.n;
        for (int j = 0; j < 2; ++j) {
            if (n < 0) B.zero(F.a[j], 0, "axis.a");
            if (n + 1 > 0) B.zero(F.b[j], 0, "axis.b");
            if (n >= 0) B.zero(F.a[j], N, "outer.a");
            if (opt.twisted ? n + 1 <= -1 : n + 1 <= 0) B.zero(F.b[j], N, "outer.b");
        }
        if (n < 0) B.zero(F.p, 0, "axis.p");
        if (n + 1 > 0) B.zero(F.q, 0, "axis.q");
        if (n >= 0) B.zero(F.p, N, "outer.p");
        if (n + 1 <= 0) B.zero(F.q, N, "outer.q");
        if (opt.twisted && n == -1) {
            const auto& P = cls[partner(cls, i)];
            B.add({{F.b[0], N, std::conj(bg.A1(R)), false},
                   {F.b[1], N, std::conj(bg.A2(R)), false},
                   {P.a[0], N, bg.B1(R), true},
                   {P.a[1], N, bg.B2(R), true}},
                  "mu_boundary");
        }
    }

    // Hhat^1_nu: |grad|^2 + |phi|^2/R^2 + |mu(phi,Phi^H)|^2 + |a|^2|Phi^H|^2 (+ |d_t|^2)
    const RealFn f = bg.f;
    int n_norm = 0;
    MidpointMap Nm(g, op.layout, 6 * 4 * nc + 2 * nc);
    std::vector<NormTerm> terms;
    auto w = weight_fn(opt.nu, opt.weight_len);
    const double wl = opt.weight_len;
    auto inv_R = [wl](double r) { return cx(1 / std::sqrt(wl * wl + r * r)); };
    auto phi = [bg](double r) { return cx(std::sqrt(bg.phi2(r))); };
    for (const auto& F : cls) {
        auto field = [&](int fld, int k, bool spinor) {
            int o = n_norm;
            n_norm += 4;
            Nm.deriv(o, fld);
            if (spinor) {
                Nm.value(o + 1, fld, [=](double r) { return cx((k + 2 * f(r)) / r); });
                Nm.value(o + 2, fld, inv_R);
            } else {
                Nm.value(o + 1, fld, [=](double r) { return cx(k / r); });
                if (bg.coupling != 0)
                    Nm.value(o + 2, fld, phi);
                else
                    Nm.value(o + 2, fld, inv_R);
            }
            if (F.tf != 0) Nm.value(o + 3, fld, cx(F.tf));
            for (int q = 0; q < 4; ++q) terms.push_back({o + q, w});
        };
        for (int j = 0; j < 2; ++j) {
            field(F.a[j], F.n, true);
            field(F.b[j], F.n + 1, true);
        }
        field(F.p, F.n, false);
        field(F.q, F.n + 1, false);
    }
    add_moment_rows(Nm, n_norm, bg, cls);
    for (int q = 0; q < 2 * nc; ++q) terms.push_back({n_norm + q, w});

    op.A = A.matrix();
    op.B = B.matrix();
    op.G = gram(Nm, terms);
    op.w = A.row_weights(w);
    op.bc = opt.twisted ? "twisted" : "untwisted";
    return op;
}

// ---------------------------------------------------------------- gauge Laplacian

GaugeLaplacian::GaugeLaplacian(const std::function<double(double)>& phi2, const RadialGrid& g, int k)
    : g_(g), k_(k) {
    const int n = g.size();
    const auto& r = g.r;
    lo_ = k != 0 ? 1 : 0;
    hi_ = k >= 0 ? n - 2 : n - 1;
    int m = hi_ - lo_ + 1;
    diag_.assign(m, 0);
    off_.assign(std::max(m - 1, 0), 0);
    vol_.assign(m, 0);
    for (int j = lo_; j <= hi_; ++j) {
        double rl = j > 0 ? 0.5 * (r[j - 1] + r[j]) : 0.0;
        double rr = j < n - 1 ? 0.5 * (r[j] + r[j + 1]) : r[j];
        double vol = 0.5 * (rr * rr - rl * rl);
        double d = 0;
        if (j > 0) d += rl / (r[j] - r[j - 1]);
        if (j < n - 1) {
            double c = rr / (r[j + 1] - r[j]);
            d += c;
            if (j < hi_) off_[j - lo_] = -c;
        } else {
            d += -k;  // flux r h' = k h at the outer edge
        }
        double pot = phi2(r[j]) + (j > 0 ? k * k / (r[j] * r[j]) : 0.0);
        diag_[j - lo_] = d + vol * pot;
        vol_[j - lo_] = vol;
    }
}

std::vector<cx> GaugeLaplacian::apply(const std::vector<cx>& h) const {
    std::vector<cx> out(g_.size(), 0.0);
    int m = hi_ - lo_ + 1;
    for (int i = 0; i < m; ++i) {
        cx v = diag_[i] * h[lo_ + i];
        if (i > 0) v += off_[i - 1] * h[lo_ + i - 1];
        if (i + 1 < m) v += off_[i] * h[lo_ + i + 1];
        out[lo_ + i] = v / vol_[i];
    }
    return out;
}

std::vector<cx> GaugeLaplacian::solve(const std::vector<cx>& rhs) const {
    int m = hi_ - lo_ + 1;
    std::vector<double> c(m, 0), dd(m);
    std::vector<cx> x(m);
    for (int i = 0; i < m; ++i) x[i] = rhs[lo_ + i] * vol_[i];
    // Thomas algorithm, symmetric tridiagonal
    dd[0] = diag_[0];
    for (int i = 1; i < m; ++i) {
        double l = off_[i - 1] / dd[i - 1];
        dd[i] = diag_[i] - l * off_[i - 1];
        x[i] -= l * x[i - 1];
    }
    x[m - 1] /= dd[m - 1];
    for (int i = m - 2; i >= 0; --i) x[i] = (x[i] - off_[i] * x[i + 1]) / dd[i];
    std::vector<cx> h(g_.size(), 0.0);
    for (int i = 0; i < m; ++i) h[lo_ + i] = x[i];
    return h;
}

double GaugeLaplacian::sigma_min() const {
    int m = hi_ - lo_ + 1;
    Eigen::VectorXd d(m), e(std::max(m - 1, 0));
    for (int i = 0; i < m; ++i) d[i] = diag_[i] / vol_[i];
    for (int i = 0; i + 1 < m; ++i) e[i] = off_[i] / std::sqrt(vol_[i] * vol_[i + 1]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

GaugeSolve gauge_laplacian_solve(const ProfileH& p, cx c, cx d, int k, const std::function<cx(double)>& rhs,
                                 double r_out, const DiskGrid& dg) {
    Background bg = scale_invariant_background(p, c, d);
    RadialGrid g = dg.make(r_out);
    GaugeLaplacian L([&](double r) { return bg.phi2(r); }, g, k);
    std::vector<cx> b(g.size());
    for (int j = 0; j < g.size(); ++j) b[j] = rhs(g.r[j]);
    return {g.r, L.solve(b), L.sigma_min()};
}

double gauge_sigma_min(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg, int kmax) {
    Background bg = scale_invariant_background(p, c, d);
    RadialGrid g = dg.make(r_out);
    double s = std::numeric_limits<double>::infinity();
    for (int k = -kmax; k <= kmax; ++k)
        s = std::min(s, GaugeLaplacian([&](double r) { return bg.phi2(r); }, g, k).sigma_min());
    return s;
}

// ---------------------------------------------------------------- kernel

Eigen::VectorXd kernel_vector(const ModeOperator& s0, const KernelElement& k) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(s0.cols());
    const auto& L = s0.layout;
    int a1 = sector_field(s0, "a1", -1), a2 = sector_field(s0, "a2", -1);
    int b1 = sector_field(s0, "b1", -1), b2 = sector_field(s0, "b2", -1);
    int q = sector_field(s0, "q", -1);
    for (int j = 0; j < L.n_nodes; ++j) {
        L.set(x, a1, j, k.a1[j]);
        L.set(x, a2, j, k.a2[j]);
        L.set(x, b1, j, k.b1[j]);
        L.set(x, b2, j, k.b2[j]);
        L.set(x, q, j, k.q[j]);
    }
    return x;
}

KernelElement kernel_basis(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg, cx z) {
    Background bg = scale_invariant_background(p, c, d);
    RadialGrid g = dg.make(r_out);
    const int n = g.size();
    double kh = khat_cd(c, d);
    double S = std::norm(c) + std::norm(d);
    cx dt = d / kh, ct = c / kh;

    KernelElement ke;
    ke.r_out = r_out;
    ke.c = c;
    ke.d = d;
    ke.rho = g.r;
    // mu_C(k1 b1deg + k2 b2deg) = -(k1 conj(ct) - k2 dt) vanishes for k ∝ (d, conj c)
    ke.k1 = z * d / std::sqrt(S);
    ke.k2 = z * std::conj(c) / std::sqrt(S);

    GaugeLaplacian L([&](double r) { return bg.phi2(r); }, g, -1);
    std::vector<cx> r1(n), r2(n), em(n);
    for (int j = 0; j < n; ++j) {
        double rho = g.r[j];
        double eW = std::exp(eval_W_any(p, rho).H);
        em[j] = 1 / eW;
        // mu_R(beta_j deg, Phi^H) = e^{-2H} (d, conj c)/Khat in theta mode -1
        r1[j] = rho / (eW * eW) * dt;
        r2[j] = rho / (eW * eW) * std::conj(ct);
    }
    ke.h1 = L.solve(r1);
    ke.h2 = L.solve(r2);

    std::vector<cx> h(n);
    for (int j = 0; j < n; ++j) h[j] = std::conj(ke.k1) * ke.h1[j] + std::conj(ke.k2) * ke.h2[j];
    std::vector<double> hr(n), hi(n);
    for (int j = 0; j < n; ++j) {
        hr[j] = h[j].real();
        hi[j] = h[j].imag();
    }
    auto dhr = fd_derivative(g.r, hr), dhi = fd_derivative(g.r, hi);
    ke.a1.resize(n);
    ke.a2.resize(n);
    ke.b1.resize(n);
    ke.b2.resize(n);
    ke.q.resize(n);
    for (int j = 0; j < n; ++j) {
        double rho = g.r[j];
        ke.a1[j] = h[j] * bg.A1(rho);
        ke.a2[j] = h[j] * bg.A2(rho);
        ke.b1[j] = ke.k1 * em[j] - std::conj(h[j]) * bg.B1(rho);
        ke.b2[j] = ke.k2 * em[j] - std::conj(h[j]) * bg.B2(rho);
        cx dh(dhr[j], dhi[j]);
        ke.q[j] = j == 0 ? 2.0 * dh : dh + h[j] / rho;
    }

    ModeOperator s0 = assemble_sector(bg, g, 0, {});
    Eigen::VectorXd x = kernel_vector(s0, ke);
    ke.hhat_norm = std::sqrt(x.dot(s0.G * x));
    double sc = 1 / ke.hhat_norm;
    for (auto* v : {&ke.a1, &ke.a2, &ke.b1, &ke.b2, &ke.q})
        for (auto& e : *v) e *= sc;
    x *= sc;
    Eigen::VectorXd y = s0.A * x;
    ke.residual = std::sqrt(y.dot(s0.w.cwiseProduct(y)));

    std::vector<double> lx, ly;
    for (int j = 0; j < n; ++j) {
        double rho = g.r[j];
        cx muc = -(bg.B1(rho) * std::conj(ke.a1[j]) + bg.B2(rho) * std::conj(ke.a2[j]) +
                   std::conj(bg.A1(rho)) * ke.b1[j] + std::conj(bg.A2(rho)) * ke.b2[j]);
        ke.max_mu_c = std::max(ke.max_mu_c, std::abs(muc));
        if (rho >= 5 && rho <= r_out / 2) {
            double mag = std::sqrt(std::norm(ke.a1[j]) + std::norm(ke.a2[j]) + std::norm(ke.b1[j]) +
                                   std::norm(ke.b2[j]) + std::norm(ke.q[j]));
            lx.push_back(rho);
            ly.push_back(mag);
        }
    }
    ke.slope = loglog_slope(lx, ly);
    int N = n - 1;
    double R = g.r_out();
    ke.mu_boundary = std::abs(ke.b1[N] * std::conj(bg.A1(R)) + std::conj(ke.a1[N]) * bg.B1(R) +
                              ke.b2[N] * std::conj(bg.A2(R)) + std::conj(ke.a2[N]) * bg.B2(R));

    // leading coefficient of rho h1 from the window [5, r_out/2]
    cx target = 4.0 * d / (9.0 * kh);
    double worst = 0;
    cx last;
    for (int j = 0; j < n; ++j) {
        double rho = g.r[j];
        if (rho < 5 || rho > r_out / 2) continue;
        last = rho * ke.h1[j];
        worst = std::max(worst, std::abs(last - target) * std::pow(rho, 1.5));
    }
    ke.h1_coeff = last;
    ke.h1_limit = std::abs(last);
    ke.h1_remainder = worst;  // sup |rho h1 - limit| rho^{3/2}
    return ke;
}

cx slice_projection(const ModeOperator& s0, const KernelElement& kt, const Eigen::VectorXd& x) {
    // kernel element for z = i: alpha and q are conjugate linear in z, beta linear
    KernelElement ki = kt;
    for (auto* v : {&ki.a1, &ki.a2, &ki.q})
        for (auto& e : *v) e *= -I;
    for (int j = 0; j < static_cast<int>(ki.b1.size()); ++j) {
        ki.b1[j] *= I;
        ki.b2[j] *= I;
    }
    Eigen::VectorXd k1 = kernel_vector(s0, kt), k2 = kernel_vector(s0, ki);
    // discrete L^2 pairing from the nodal trapezoid rule
    const auto& r = kt.rho;
    std::vector<double> wq(r.size(), 0.0);
    for (size_t j = 0; j + 1 < r.size(); ++j) {
        double h = r[j + 1] - r[j];
        wq[j] += 0.5 * h * r[j];
        wq[j + 1] += 0.5 * h * r[j + 1];
    }
    Eigen::VectorXd W(x.size());
    for (int f = 0; f < s0.layout.size(); ++f)
        for (int j = 0; j < s0.layout.n_nodes; ++j) W[s0.layout.col(f, j)] = W[s0.layout.col(f, j) + 1] = wq[j];
    double nn = k1.dot(W.cwiseProduct(k1));
    return cx(x.dot(W.cwiseProduct(k1)), x.dot(W.cwiseProduct(k2))) / nn;
}

double kernel_l2(const KernelElement& k, double rho_max) {
    double sum = 0;
    int n = static_cast<int>(k.rho.size());
    auto mag2 = [&](int j) {
        return std::norm(k.a1[j]) + std::norm(k.a2[j]) + std::norm(k.b1[j]) + std::norm(k.b2[j]) + std::norm(k.q[j]);
    };
    for (int j = 0; j + 1 < n; ++j) {
        double r0 = k.rho[j], r1 = k.rho[j + 1];
        if (r0 >= rho_max) break;
        double t = std::min(r1, rho_max);
        double g0 = mag2(j) * r0, g1 = mag2(j + 1) * r1;
        double g1t = g0 + (g1 - g0) * (t - r0) / (r1 - r0);
        sum += 0.5 * (t - r0) * (g0 + g1t);
    }
    if (rho_max > k.rho.back()) {
        // |beta|^2 rho is asymptotically constant
        sum += mag2(n - 1) * k.rho.back() * (rho_max - k.rho.back());
    }
    return std::sqrt(2 * M_PI * sum);
}

SectorSpectrum sector0_spectrum(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg,
                                const NormalOptions& opt) {
    Background bg = scale_invariant_background(p, c, d);
    RadialGrid g = dg.make(r_out);
    ModeOperator op = assemble_sector(bg, g, 0, opt);
    SectorSpectrum ss;
    ss.index = op.index();
    if (ss.index == 0) {
        ss.sigma3 = sparse_sigma_min(op).sigma;
        ss.gap = std::numeric_limits<double>::infinity();
        return ss;
    }
    // pin the beta copy that carries the larger kernel component near rho = 1
    int fld = sector_field(op, std::abs(d) >= std::abs(c) ? "b1" : "b2", -1);
    int node = 0;
    while (node + 1 < g.size() && g.r[node] < 1.0) ++node;
    std::vector<Eigen::Triplet<double>> t{{0, op.layout.col(fld, node), 1.0}, {1, op.layout.col(fld, node) + 1, 1.0}};
    SpMat pins(2, op.cols());
    pins.setFromTriplets(t.begin(), t.end());
    SparseSigma sp = sparse_sigma_min(op, pins);
    ss.sigma3 = sp.sigma;
    // Rayleigh quotients on the G-orthonormalized discrete kernel
    Eigen::MatrixXd K = sp.kernel;
    Eigen::MatrixXd GK = op.G * K;
    Eigen::MatrixXd KGK = K.transpose() * GK;
    Eigen::LLT<Eigen::MatrixXd> llt(KGK);
    Eigen::MatrixXd Q = llt.matrixU().solve(Eigen::MatrixXd::Identity(2, 2));
    Eigen::MatrixXd Kn = K * Q;
    Eigen::MatrixXd AK = op.A * Kn;
    Eigen::MatrixXd M = AK.transpose() * op.w.asDiagonal() * AK;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    ss.sigma1 = std::sqrt(std::max(es.eigenvalues()[0], 0.0));
    ss.sigma2 = std::sqrt(std::max(es.eigenvalues()[1], 0.0));
    KernelElement ke = kernel_basis(p, c, d, r_out, dg);
    ss.rq_analytic = ke.residual;
    Eigen::VectorXd xa = kernel_vector(op, ke);
    Eigen::VectorXd e = xa - Kn * (Kn.transpose() * (op.G * xa));
    ss.kernel_distance = std::sqrt(e.dot(op.G * e) / xa.dot(op.G * xa));
    ss.kernel = Kn;
    ss.gap = ss.sigma3 / std::max(ss.sigma2, 1e-300);
    if (ss.gap < 1e2) throw Error(Errc::DegenerateKernel, fmt::format("kernel gap {:.3g}", ss.gap));
    return ss;
}

double higher_sector_sigma(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg, int mmax,
                           const NormalOptions& opt) {
    Background bg = scale_invariant_background(p, c, d);
    RadialGrid g = dg.make(r_out);
    double s = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= mmax; ++m) s = std::min(s, sparse_sigma_min(assemble_sector(bg, g, m, opt)).sigma);
    return s;
}

// ---------------------------------------------------------------- integration by parts

Weitzenbock2D weitzenbock_2d(const Background& bg, const RadialGrid& g, int m, const Eigen::VectorXd& x) {
    ModeOperator op = assemble_sector(bg, g, m, {});
    auto cls = sector_classes(m, 0);
    FieldLayout L(g.size());
    cls = add_fields(L, m, 0);
    const int N = g.size() - 1;

    Weitzenbock2D out;
    Eigen::VectorXd y = op.A * x;
    out.lhs = y.dot(op.w.cwiseProduct(y));

    Eigen::VectorXd x0 = x;
    for (const auto& F : cls)
        for (int j = 0; j <= N; ++j) L.set(x0, F.p, j, 0.0);
    Eigen::VectorXd y0 = op.A * x0;
    double rhs = y0.dot(op.w.cwiseProduct(y0));

    MidpointMap Mp(g, L, 3 * static_cast<int>(cls.size()));
    for (int i = 0; i < static_cast<int>(cls.size()); ++i) {
        int n = cls[i].n;
        Mp.deriv(3 * i, cls[i].p);
        Mp.value(3 * i + 1, cls[i].p, [n](double r) { return cx(n / r); });
        Mp.value(3 * i + 2, cls[i].p, [bg](double r) { return cx(std::sqrt(bg.phi2(r))); });
        cx pR = L.get(x, cls[i].p, N);
        out.boundary += -n * std::norm(pR);
    }
    Eigen::VectorXd yp = Mp.matrix() * x;
    rhs += yp.dot(Mp.row_weights().cwiseProduct(yp));
    out.rhs = rhs + out.boundary;
    out.discrepancy = std::abs(out.lhs - out.rhs);
    return out;
}

Eigen::VectorXd random_admissible(const Background& bg, const RadialGrid& g, int m, unsigned seed, bool violate_mu) {
    FieldLayout L(g.size());
    auto cls = add_fields(L, m, 0);
    const int N = g.size() - 1;
    const double R = g.r_out();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(L.cols());
    auto fill = [&](int f, int k, bool vanish_outer) {
        cx c[4];
        for (auto& v : c) v = cx(nd(rng), nd(rng));
        for (int j = 0; j <= N; ++j) {
            double s = g.r[j] / R;
            cx poly = c[0] + s * (c[1] + s * (c[2] + s * c[3]));
            cx v = std::pow(s, std::abs(k)) * poly * std::exp(-2 * s);
            if (vanish_outer) v *= (1 - s);
            L.set(x, f, j, v);
        }
    };
    for (const auto& F : cls) {
        int n = F.n;
        for (int j = 0; j < 2; ++j) {
            fill(F.a[j], n, n >= 0);
            fill(F.b[j], n + 1, n + 1 <= -1);
        }
        fill(F.p, n, n >= 0);
        fill(F.q, n + 1, n + 1 <= 0);
    }
    if (m == 0 && !violate_mu) {
        const auto& F = cls[0];
        cx mu = L.get(x, F.b[0], N) * std::conj(bg.A1(R)) + std::conj(L.get(x, F.a[0], N)) * bg.B1(R) +
                L.get(x, F.b[1], N) * std::conj(bg.A2(R)) + std::conj(L.get(x, F.a[1], N)) * bg.B2(R);
        int jb = std::abs(bg.A1(R)) >= std::abs(bg.A2(R)) ? 0 : 1;
        cx a = std::conj(jb == 0 ? bg.A1(R) : bg.A2(R));
        cx delta = -mu / a;
        for (int j = 0; j <= N; ++j) {
            double s = g.r[j] / R;
            L.set(x, F.b[jb], j, L.get(x, F.b[jb], j) + delta * s * s);
        }
    }
    return x;
}

}  // namespace swt
