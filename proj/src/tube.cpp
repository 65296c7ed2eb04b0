#include "swt/tube.hpp"

#include <fmt/format.h>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <random>

#include "swt/errors.hpp"

namespace swt {

namespace {

using Trip = Eigen::Triplet<double>;

void append(std::vector<Trip>& out, const SpMat& m, int r0, int c0, double scale = 1) {
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) out.emplace_back(r0 + it.row(), c0 + it.col(), scale * it.value());
}


int sgn(int l) { return l > 0 ? 1 : -1; }

}  // namespace

// ---------------------------------------------------------------- Euclidean modes

EuclideanMode euclidean_cokernel(int ell, int n, double r_min, double r_max) {
    if (ell == 0) throw Error(Errc::ZeroMode, "l = 0 carries no Euclidean cokernel element");
    if (n < 8) throw Error(Errc::BadConfig, "need at least 8 nodes");
    const double a = std::abs(ell);
    if (r_max <= 0) r_max = 14 / a;
    EuclideanMode m;
    m.ell = ell;
    std::vector<double> x(n);
    m.r.resize(n);
    m.alpha.resize(n);
    m.beta.resize(n);
    for (int j = 0; j < n; ++j) {
        x[j] = std::log(r_min) + (std::log(r_max) - std::log(r_min)) * j / (n - 1);
        double r = std::exp(x[j]);
        m.r[j] = r;
        double v = std::sqrt(a) * std::exp(-a * r) / std::sqrt(r);
        m.alpha[j] = v;
        m.beta[j] = double(sgn(ell)) * v;
    }
    // D_{A0} on class -1 (f = 1/4), d/dr = r^{-1} d/dx
    std::vector<double> ar(n), br(n);
    for (int j = 0; j < n; ++j) {
        ar[j] = m.alpha[j].real();
        br[j] = m.beta[j].real();
    }
    auto dax = fd_derivative(x, ar), dbx = fd_derivative(x, br);
    double num = 0, den = 0, l2 = 0;
    for (int j = 0; j < n; ++j) {
        double r = m.r[j];
        double da = dax[j] / r, db = dbx[j] / r;
        double ra = -(db + br[j] / (2 * r)) - ell * ar[j];
        double rb = da + ar[j] / (2 * r) + ell * br[j];
        double wt = (j == 0 || j == n - 1 ? 0.5 : 1.0) * r * r;  // r dr = r^2 dx
        num += wt * (ra * ra + rb * rb);
        den += wt * (ar[j] * ar[j] + br[j] * br[j]) / (r * r);
        l2 += wt * (ar[j] * ar[j] + br[j] * br[j]);
    }
    double hx = x[1] - x[0];
    m.residual = std::sqrt(num / den);
    // the part below r_min: |psi|^2 r ~ 2|l| e^{-2|l| r}
    double inner = 1 - std::exp(-2 * a * r_min);
    m.l2 = std::sqrt(2 * M_PI * (l2 * hx + inner));
    return m;
}

double annulus_gradient(int ell, double h, int n) {
    if (ell == 0) throw Error(Errc::ZeroMode, "l = 0 carries no Euclidean cokernel element");
    const double a = std::abs(ell);
    std::vector<double> r(n), u(n);
    for (int j = 0; j < n; ++j) {
        r[j] = h + h * j / (n - 1);
        u[j] = std::sqrt(a) * std::exp(-a * r[j]) / std::sqrt(r[j]);
    }
    auto du = fd_derivative(r, u);
    double s = 0;
    for (int j = 0; j < n; ++j) {
        // both components: |u'|^2 + |(k + 1/2)/r|^2 |u|^2 with k + 1/2 = -1/2, 1/2, and |l u|^2
        double g = 2 * (du[j] * du[j] + (0.25 / (r[j] * r[j]) + a * a) * u[j] * u[j]);
        s += (j == 0 || j == n - 1 ? 0.5 : 1.0) * g * r[j];
    }
    return std::sqrt(2 * M_PI * s * h / (n - 1));
}

GrowthFit matched_growth_mode(int ell, double rho0, double fit_lo, double fit_hi) {
    if (ell == 0) throw Error(Errc::ZeroMode, "l = 0");
    if (!(rho0 > 0)) throw Error(Errc::BadConfig, "rho0 must be positive");
    namespace ode = boost::numeric::odeint;
    using State = std::array<double, 2>;
    const double a = std::abs(ell);
    if (fit_lo <= 0) fit_lo = rho0 + 3 / a;
    if (fit_hi <= 0) fit_hi = rho0 + 20 / a;
    // class -1 with connection 2 i f dtheta:
    //   beta' = -(2f/r) beta - l alpha,  alpha' = ((2f - 1)/r) alpha - l beta
    double f = 0;
    auto rhs = [&](const State& y, State& dy, double r) {
        dy[0] = (2 * f - 1) / r * y[0] - ell * y[1];
        dy[1] = -(2 * f) / r * y[1] - ell * y[0];
    };
    // regular at the axis: alpha = -sgn I_1(|l| r), beta = I_0(|l| r)
    double r0 = 1e-4 / a, z = a * r0;
    State y{-sgn(ell) * (z / 2) * (1 + z * z / 8), 1 + z * z / 4};
    auto stepper = ode::make_controlled(1e-13, 1e-13, ode::runge_kutta_dopri5<State>());
    ode::integrate_adaptive(stepper, rhs, y, r0, rho0, 1e-3 / a);

    GrowthFit g;
    g.ell = ell;
    g.rho0 = rho0;
    // decaying solution of the outer system: sqrt(r) (alpha, beta) ∝ e^{-|l| r} (1, sgn l)
    g.det_decay = std::abs(y[0] * sgn(ell) - y[1]) / (std::hypot(y[0], y[1]) * std::sqrt(2.0));

    f = 0.25;
    const int nfit = 60;
    std::vector<double> rs(nfit + 1);
    rs[0] = rho0;
    for (int i = 0; i < nfit; ++i) rs[i + 1] = fit_lo + (fit_hi - fit_lo) * i / (nfit - 1);
    std::vector<double> mag;
    ode::integrate_times(stepper, rhs, y, rs.begin(), rs.end(), 1e-3 / a,
                         [&](const State& s, double) { mag.push_back(std::log(std::hypot(s[0], s[1]))); });
    Eigen::MatrixXd X(nfit, 3);
    Eigen::VectorXd Y(nfit);
    for (int i = 0; i < nfit; ++i) {
        X(i, 0) = 1;
        X(i, 1) = rs[i + 1];
        X(i, 2) = std::log(rs[i + 1]);
        Y[i] = mag[i + 1];
    }
    Eigen::VectorXd c = X.colPivHouseholderQr().solve(Y);
    g.growth = c[1];
    g.power = c[2];
    g.rms = std::sqrt((X * c - Y).squaredNorm() / nfit);
    return g;
}

// ---------------------------------------------------------------- boundary frame

Bvec jmul(cx z, const Bvec& x) { return {std::conj(z) * x[0], std::conj(z) * x[1], z * x[2], z * x[3]}; }

double omega(const Bvec& x, const Bvec& y) {
    cx s = 0;
    for (int j = 0; j < 2; ++j) s += -I * std::conj(x[2 + j]) * y[j] - I * std::conj(x[j]) * y[2 + j];
    return s.real();
}

cx BoundaryFrame::mu_alpha(const Bvec& x) const { return std::conj(x[0]) * B[0] + std::conj(x[1]) * B[1]; }
cx BoundaryFrame::mu_beta(const Bvec& x) const { return std::conj(A[0]) * x[2] + std::conj(A[1]) * x[3]; }

BoundaryFrame boundary_frame(const Background& bg, double R) {
    BoundaryFrame fr;
    fr.A[0] = bg.A1(R);
    fr.A[1] = bg.A2(R);
    fr.B[0] = bg.B1(R);
    fr.B[1] = bg.B2(R);
    // coordinates (conj a1, conj a2, b1, b2) make mu^alpha and mu^beta complex linear:
    // mu^alpha = <u_alpha, .>, mu^beta = <u_beta, .>
    using V4 = Eigen::Vector4cd;
    V4 ua(std::conj(fr.B[0]), std::conj(fr.B[1]), 0, 0), ub(0, 0, fr.A[0], fr.A[1]);
    V4 v1(fr.B[1], -fr.B[0], 0, 0), v2(0, 0, std::conj(fr.A[1]), -std::conj(fr.A[0]));
    double na = ua.squaredNorm(), nb = ub.squaredNorm();
    V4 w1 = nb * ua - na * ub, w2 = ua + ub;
    auto back = [](const V4& v) { return Bvec{std::conj(v[0]), std::conj(v[1]), v[2], v[3]}; };
    fr.v1 = back(v1);
    fr.v2 = back(v2);
    fr.w1 = back(w1);
    fr.w2 = back(w2);
    double nw = w1.squaredNorm();
    fr.c_alpha = nb / nw;
    fr.c_beta = na / nw;
    return fr;
}

int low_mode_cut(double eps, double L0) {
    if (!(eps > 0) || !(L0 > 0)) throw Error(Errc::BadConfig, "low_mode_cut needs eps, L0 > 0");
    return static_cast<int>(std::ceil(std::pow(eps, -0.5) / L0 - 1e-12));
}

double TubeOptions::tube_radius() const { return lambda > 0 ? lambda : std::sqrt(eps); }

// ---------------------------------------------------------------- t-constant blocks

namespace {

struct SliceKernel {
    std::vector<double> wq;  // nodal trapezoid weights r dr
    KernelElement k;
    double nn = 0;  // sum wq |beta|^2
};

SliceKernel slice_kernel(const ProfileH& p, cx c, cx d, double rho_out, double core, int n, cx z = 1.0) {
    SliceKernel s;
    s.k = kernel_basis(p, c, d, rho_out, DiskGrid{n, core}, z);
    const auto& r = s.k.rho;
    s.wq.assign(r.size(), 0.0);
    for (size_t j = 0; j + 1 < r.size(); ++j) {
        double h = r[j + 1] - r[j];
        s.wq[j] += 0.5 * h * r[j];
        s.wq[j + 1] += 0.5 * h * r[j + 1];
    }
    for (size_t j = 0; j < r.size(); ++j)
        s.nn += s.wq[j] * (std::norm(s.k.a1[j]) + std::norm(s.k.a2[j]) + std::norm(s.k.b1[j]) +
                           std::norm(s.k.b2[j]) + std::norm(s.k.q[j]));
    return s;
}

// field indices of the class -1 copy with the given name suffix
struct Cls {
    int a[2], b[2], p, q;
};
Cls class_fields(const FieldLayout& L, const std::string& suffix, int offset = 0) {
    auto f = [&](const char* base) {
        int i = L.find(std::string(base) + "[-1]" + suffix);
        if (i < 0) throw Error(Errc::BadConfig, std::string("missing field ") + base);
        return i + offset;
    };
    return {{f("a1"), f("a2")}, {f("b1"), f("b2")}, f("p"), f("q")};
}

// w1 coefficient of the boundary value: b fields from F, a fields (conjugated) from P
std::vector<ConstraintTerm> w1_terms(const BoundaryFrame& fr, const Cls& F, const Cls& P, int node, cx scale) {
    std::vector<ConstraintTerm> t;
    for (int j = 0; j < 2; ++j) {
        t.push_back({P.a[j], node, scale * fr.c_alpha * fr.B[j], true});
        t.push_back({F.b[j], node, -scale * fr.c_beta * std::conj(fr.A[j]), false});
    }
    return t;
}

// slice projection: beta components of F, alpha and q components (conjugated) of P
std::vector<ConstraintTerm> projection_terms(const SliceKernel& s, const Cls& F, const Cls& P, cx scale) {
    std::vector<ConstraintTerm> t;
    const auto& k = s.k;
    for (size_t j = 0; j < k.rho.size(); ++j) {
        cx wj = scale * s.wq[j] / s.nn;
        int n = static_cast<int>(j);
        t.push_back({F.b[0], n, wj * std::conj(k.b1[j]), false});
        t.push_back({F.b[1], n, wj * std::conj(k.b2[j]), false});
        t.push_back({P.a[0], n, wj * k.a1[j], true});
        t.push_back({P.a[1], n, wj * k.a2[j], true});
        t.push_back({P.q, n, wj * k.q[j], true});
    }
    return t;
}

}  // namespace

TubeBlock tube_block(const ProfileH& p, cx c, cx d, int m, int ell, const TubeOptions& opt) {
    TubeBlock tb;
    tb.m = m;
    tb.ell = ell;
    double ls = rho_scale(c, d, opt.eps);
    tb.rho_out = ls * opt.tube_radius();
    tb.t_freq = ell / ls;
    Background bg = scale_invariant_background(p, c, d);
    RadialGrid g = make_sinh_grid(tb.rho_out, opt.core, opt.n_r);
    NormalOptions no;
    no.twisted = true;
    no.nu = opt.nu;
    no.t_freq = tb.t_freq;
    no.weight_len = 1;  // kappa eps^{2/3} in the invariant scale
    tb.op = assemble_sector(bg, g, m, no);
    if (m != 0 || opt.bc == TubeBC::None) return tb;

    const int N = g.size() - 1;
    BoundaryFrame fr = boundary_frame(bg, g.r_out());
    Constraints C(tb.op.layout);
    Cls plus = class_fields(tb.op.layout, "");
    Cls minus = ell == 0 ? plus : class_fields(tb.op.layout, "'");
    const int cut = opt.cut();
    SliceKernel sk;
    bool have_kernel = false;
    std::vector<int> modes = ell == 0 ? std::vector<int>{0} : std::vector<int>{ell, -ell};
    for (int lp : modes) {
        const Cls& F = lp >= 0 ? plus : minus;
        const Cls& P = lp >= 0 ? minus : plus;
        bool low = std::abs(lp) <= cut;
        if (opt.bc == TubeBC::Mixed && low) {
            if (!have_kernel) {
                sk = slice_kernel(p, c, d, tb.rho_out, opt.core, opt.n_r);
                have_kernel = true;
            }
            C.add(projection_terms(sk, F, P, 1.0), fmt::format("P[{}]", lp));
            tb.removed += 2;
            tb.added += 2;
        } else {
            C.add(w1_terms(fr, F, P, N, 1.0), fmt::format("w1[{}]", lp));
        }
    }
    tb.op.B = vstack(tb.op.B, C.matrix());
    return tb;
}

IndexAudit index_audit(const ProfileH& p, cx c, cx d, const TubeOptions& opt) {
    if (opt.ell_factor < 2) throw Error(Errc::TruncationTooSmall, "l_max must be at least 2 low_mode_cut");
    IndexAudit a;
    const int L = opt.ell_max();
    for (int m = 0; m <= opt.mmax; ++m)
        for (int l = m == 0 ? 0 : -L; l <= L; ++l) {
            TubeBlock b = tube_block(p, c, d, m, l, opt);
            int idx = b.op.index();
            a.blocks++;
            a.index_sum += idx;
            a.max_abs_index = std::max(a.max_abs_index, std::abs(idx));
            a.removed += b.removed;
            a.added += b.added;
        }
    return a;
}

std::vector<ApproxKernelRow> approx_kernel_profile(const ProfileH& p, cx c, cx d, const TubeOptions& opt,
                                                   const std::vector<int>& ells) {
    std::vector<ApproxKernelRow> out;
    for (int l : ells) {
        TubeOptions o = opt;
        o.bc = TubeBC::None;
        TubeBlock b = tube_block(p, c, d, 0, l, o);
        SliceKernel sk = slice_kernel(p, c, d, b.rho_out, opt.core, opt.n_r);
        const auto& L = b.op.layout;
        // e^{ilt} beta_t: beta parts carry e^{ilt}, alpha and q parts e^{-ilt}
        Cls F = class_fields(L, ""), P = l == 0 ? F : class_fields(L, "'");
        Eigen::VectorXd x = Eigen::VectorXd::Zero(b.op.cols());
        for (int j = 0; j < L.n_nodes; ++j) {
            L.set(x, P.a[0], j, sk.k.a1[j]);
            L.set(x, P.a[1], j, sk.k.a2[j]);
            L.set(x, F.b[0], j, sk.k.b1[j]);
            L.set(x, F.b[1], j, sk.k.b2[j]);
            L.set(x, P.q, j, sk.k.q[j]);
        }
        Eigen::VectorXd y = b.op.A * x;
        double num = std::sqrt(y.dot(b.op.w.cwiseProduct(y)));
        double den = std::sqrt(x.dot(b.op.G * x));
        out.push_back({l, b.t_freq, num / den});
    }
    return out;
}

InvertibilityScan invertibility_scan(const ProfileH& p, cx c, cx d, const std::vector<double>& eps_list,
                                     TubeOptions opt) {
    if (opt.ell_factor < 2) throw Error(Errc::TruncationTooSmall, "l_max must be at least 2 low_mode_cut");
    InvertibilityScan scan;
    std::vector<double> e, s, sp;
    for (double eps : eps_list) {
        opt.eps = eps;
        ScanRow row;
        row.eps = eps;
        row.cut = opt.cut();
        row.ell_max = opt.ell_max();
        row.sigma_min = std::numeric_limits<double>::infinity();
        row.sigma_pure = std::numeric_limits<double>::infinity();
        const int L = row.ell_max;
        for (int m = 0; m <= opt.mmax; ++m)
            for (int l = m == 0 ? 0 : -L; l <= L; ++l) {
                TubeOptions o = opt;
                o.bc = TubeBC::Mixed;
                TubeBlock b = tube_block(p, c, d, m, l, o);
                row.rho_out = b.rho_out;
                row.index_sum += b.op.index();
                double sg = sparse_sigma_min(b.op).sigma;
                if (sg < row.sigma_min) {
                    row.sigma_min = sg;
                    row.arg_m = m;
                    row.arg_ell = l;
                }
                if (m == 0 && l == 0) continue;  // pure conditions are singular at l = 0
                double sgp = sg;
                if (m == 0) {
                    o.bc = TubeBC::Pure;
                    sgp = sparse_sigma_min(tube_block(p, c, d, m, l, o).op).sigma;
                }
                row.sigma_pure = std::min(row.sigma_pure, sgp);
            }
        scan.rows.push_back(row);
        e.push_back(eps);
        s.push_back(row.sigma_min);
        sp.push_back(row.sigma_pure);
    }
    if (e.size() >= 2) {
        scan.p = loglog_slope(e, s);
        scan.p_pure = loglog_slope(e, sp);
    }
    return scan;
}

// ---------------------------------------------------------------- t-dependent collocation

namespace {

int kind_of(const std::string& name) {
    static const char* k[6] = {"a1", "a2", "b1", "b2", "p", "q"};
    for (int i = 0; i < 6; ++i)
        if (name.rfind(k[i], 0) == 0 && name[std::string(k[i]).size()] == '[') return i;
    throw Error(Errc::BadConfig, "unknown field " + name);
}

// sigma_t on a field kind: i d_t alpha, -i d_t beta, -i d_t p, i d_t q
double sigma_sign(int kind) { return kind <= 1 || kind == 5 ? 1.0 : -1.0; }

Eigen::MatrixXd spectral_matrix(int n, double period) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    const int L = (n - 1) / 2;
    const double w = 2 * M_PI / period;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double dt = period * (i - k) / n, s = 0;
            for (int l = 1; l <= L; ++l) s += l * std::sin(l * w * dt);
            D(i, k) = -2 * w * s / n;
        }
    return D;
}

double min_khat(const BoundaryData& bd) {
    double m = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 1024; ++i) m = std::min(m, khat(bd, bd.t_period * i / 1024));
    return m;
}

}  // namespace

ModeOperator TubeSystem::mode_operator() const {
    ModeOperator op;
    op.A = L();
    op.B = B;
    op.G = G;
    op.w = w;
    op.nu = nu;
    op.bc = "tube";
    return op;
}

TubeSystem assemble_tube(const BoundaryData& bd, const ProfileH& p, const TubeOptions& opt,
                         const CollocationOptions& co) {
    bd.validate();
    if (co.n_t < 3 || co.n_t % 2 == 0) throw Error(Errc::BadConfig, "n_t must be odd and >= 3");
    TubeSystem s;
    s.bd = bd;
    s.eps = opt.eps;
    s.lambda = opt.tube_radius();
    s.nu = opt.nu;
    s.L0 = opt.L0;
    s.n_t = co.n_t;
    s.sectors = co.sectors;
    s.weight_len = std::pow(opt.eps, 2.0 / 3.0) / std::pow(min_khat(bd), 2.0 / 3.0);
    s.grid = make_sinh_grid(s.lambda, co.core * s.weight_len, co.n_r);
    s.dt = bd.t_period / co.n_t;
    s.profile = p;
    s.D = spectral_matrix(co.n_t, bd.t_period);
    const int n = s.grid.size(), nc = n - 1;
    s.local = FieldLayout(n);

    std::vector<Trip> tN, tN1, tB, tG;
    std::vector<double> wv;
    int brows = 0;
    for (int it = 0; it < s.n_t; ++it) {
        double t = bd.t_period * it / s.n_t;
        s.t.push_back(t);
        cx c = bd.c(t), d = bd.d(t);
        s.bg.push_back(physical_background(p, c, d, s.eps));
        s.ls.push_back(rho_scale(c, d, s.eps));
        Background b0 = s.bg.back();
        b0.coupling = 0;
        NormalOptions no;
        no.nu = opt.nu;
        no.weight_len = s.weight_len;
        std::vector<Trip> lN, lN1, lB, lG;
        int lrows = 0, lcols = 0, lb = 0;
        std::vector<double> lw;
        for (int m : s.sectors) {
            ModeOperator op = assemble_sector(s.bg.back(), s.grid, m, no);
            ModeOperator op1 = assemble_sector(b0, s.grid, m, no);
            if (it == 0) {
                for (int f = 0; f < op.layout.size(); ++f) {
                    s.local.add(op.layout.names[f], op.layout.modes[f]);
                    s.kind.push_back(kind_of(op.layout.names[f]));
                    s.row_sector.push_back(m);
                }
            }
            append(lN, op.A, lrows, lcols);
            append(lN1, op1.A, lrows, lcols);
            append(lB, op.B, lb, lcols);
            append(lG, op.G, lcols, lcols, s.dt);
            for (int i = 0; i < op.w.size(); ++i) lw.push_back(op.w[i] * s.dt);
            lrows += op.rows();
            lcols += op.cols();
            lb += op.constraint_rows();
        }
        s.local_rows = lrows;
        s.local_cols = lcols;
        for (auto& e : lN) tN.emplace_back(it * lrows + e.row(), it * lcols + e.col(), e.value());
        for (auto& e : lN1) tN1.emplace_back(it * lrows + e.row(), it * lcols + e.col(), e.value());
        for (auto& e : lB) tB.emplace_back(brows + e.row(), it * lcols + e.col(), e.value());
        for (auto& e : lG) tG.emplace_back(it * lcols + e.row(), it * lcols + e.col(), e.value());
        wv.insert(wv.end(), lw.begin(), lw.end());
        brows += lb;
        for (int i = 0; i < lb; ++i) s.tags.push_back(fmt::format("slice{}", it));
    }
    const int nf = s.local.size();
    const int cols = s.cols(), rows = s.rows();

    // sigma_t d_t at the midpoints and the cell averages of d_t u
    std::vector<Trip> tS, tM;
    std::vector<double> wt;
    for (int it = 0; it < s.n_t; ++it)
        for (int f = 0; f < nf; ++f) {
            double sg = sigma_sign(s.kind[f]);
            for (int j = 0; j < nc; ++j) {
                int row = it * s.local_rows + 2 * (nc * f + j);
                int mrow = 2 * ((it * nf + f) * nc + j);
                double r = 0.5 * (s.grid.r[j] + s.grid.r[j + 1]), h = s.grid.r[j + 1] - s.grid.r[j];
                double ww = s.dt * r * h * std::pow(s.weight_len * s.weight_len + r * r, s.nu);
                wt.push_back(ww);
                wt.push_back(ww);
                for (int k = 0; k < s.n_t; ++k) {
                    double dk = s.D(it, k);
                    if (dk == 0) continue;
                    for (int jj : {j, j + 1}) {
                        int col = s.col(k, f, jj);
                        // sigma = sg i: (re, im) -> sg (-im, re)
                        tS.emplace_back(row, col + 1, -sg * 0.5 * dk);
                        tS.emplace_back(row + 1, col, sg * 0.5 * dk);
                        tM.emplace_back(mrow, col, 0.5 * dk);
                        tM.emplace_back(mrow + 1, col + 1, 0.5 * dk);
                    }
                }
            }
        }
    s.N.resize(rows, cols);
    s.N.setFromTriplets(tN.begin(), tN.end());
    s.N1.resize(rows, cols);
    s.N1.setFromTriplets(tN1.begin(), tN1.end());
    s.S.resize(rows, cols);
    s.S.setFromTriplets(tS.begin(), tS.end());
    s.Mt.resize(2 * s.n_t * nf * nc, cols);
    s.Mt.setFromTriplets(tM.begin(), tM.end());
    s.wt = Eigen::Map<Eigen::VectorXd>(wt.data(), wt.size());
    s.w = Eigen::Map<Eigen::VectorXd>(wv.data(), wv.size());
    SpMat G0(cols, cols);
    G0.setFromTriplets(tG.begin(), tG.end());
    s.G = G0 + SpMat(s.Mt.transpose() * s.wt.asDiagonal() * s.Mt);

    // mixed / pure constraints on the class -1 boundary values
    SpMat Bextra;
    bool has0 = std::find(s.sectors.begin(), s.sectors.end(), 0) != s.sectors.end();
    if (has0 && co.bc != TubeBC::None) {
        FieldLayout gl(n);
        for (int i = 0; i < s.n_t * nf; ++i) gl.add("u", 0);
        Constraints C(gl);
        Cls loc = class_fields(s.local, "");
        const int L = (s.n_t - 1) / 2, cut = opt.cut();
        const int N = n - 1;
        std::vector<BoundaryFrame> fr;
        std::vector<SliceKernel> sk;
        for (int it = 0; it < s.n_t; ++it) {
            fr.push_back(boundary_frame(s.bg[it], s.lambda));
            cx c = bd.c(s.t[it]), d = bd.d(s.t[it]);
            if (co.bc == TubeBC::Mixed)
                sk.push_back(slice_kernel(p, c, d, s.ls[it] * s.lambda, s.ls[it] * s.grid.core, n));
        }
        auto shift = [&](Cls c, int it) {
            int o = it * nf;
            return Cls{{c.a[0] + o, c.a[1] + o}, {c.b[0] + o, c.b[1] + o}, c.p + o, c.q + o};
        };
        for (int l = -L; l <= L; ++l) {
            std::vector<ConstraintTerm> terms;
            bool low = co.bc == TubeBC::Mixed && std::abs(l) <= cut;
            for (int it = 0; it < s.n_t; ++it) {
                cx e = std::exp(-I * (2 * M_PI * l * it / s.n_t)) / double(s.n_t);
                Cls F = shift(loc, it);
                auto part = low ? projection_terms(sk[it], F, F, e) : w1_terms(fr[it], F, F, N, e);
                terms.insert(terms.end(), part.begin(), part.end());
            }
            std::string tag = fmt::format("{}[{}]", low ? "P" : "w1", l);
            C.add(terms, tag);
            s.tags.push_back(tag + ".re");
            s.tags.push_back(tag + ".im");
        }
        Bextra = C.matrix();
    }
    SpMat B0(brows, cols);
    B0.setFromTriplets(tB.begin(), tB.end());
    s.B = Bextra.rows() > 0 ? vstack(B0, Bextra) : B0;
    return s;
}

std::vector<Eigen::VectorXd> slice_kernels(const TubeSystem& sys, const ProfileH& p, cx z) {
    std::vector<Eigen::VectorXd> out;
    Cls F = class_fields(sys.local, "");
    for (int it = 0; it < sys.n_t; ++it) {
        cx c = sys.bd.c(sys.t[it]), d = sys.bd.d(sys.t[it]);
        SliceKernel sk = slice_kernel(p, c, d, sys.ls[it] * sys.lambda, sys.ls[it] * sys.grid.core, sys.grid.size(), z);
        Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.local_cols);
        for (int j = 0; j < sys.grid.size(); ++j) {
            sys.local.set(x, F.a[0], j, sk.k.a1[j]);
            sys.local.set(x, F.a[1], j, sk.k.a2[j]);
            sys.local.set(x, F.b[0], j, sk.k.b1[j]);
            sys.local.set(x, F.b[1], j, sk.k.b2[j]);
            sys.local.set(x, F.q, j, sk.k.q[j]);
        }
        out.push_back(x);
    }
    return out;
}

namespace {

Eigen::VectorXd nodal_weights(const TubeSystem& sys) {
    const auto& r = sys.grid.r;
    Eigen::VectorXd W = Eigen::VectorXd::Zero(sys.local_cols);
    for (int f = 0; f < sys.local.size(); ++f)
        for (size_t j = 0; j + 1 < r.size(); ++j) {
            double h = r[j + 1] - r[j];
            for (size_t jj : {j, j + 1}) {
                int c = sys.local.col(f, static_cast<int>(jj));
                W[c] += 0.5 * h * r[jj];
                W[c + 1] += 0.5 * h * r[jj];
            }
        }
    return W;
}

}  // namespace

std::vector<cx> slice_projections(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x) {
    auto k1 = slice_kernels(sys, p, 1.0), ki = slice_kernels(sys, p, I);
    Eigen::VectorXd W = nodal_weights(sys);
    std::vector<cx> out;
    for (int it = 0; it < sys.n_t; ++it) {
        Eigen::VectorXd xi = slice(sys, x, it);
        double nn = k1[it].dot(W.cwiseProduct(k1[it]));
        out.emplace_back(xi.dot(W.cwiseProduct(k1[it])) / nn, xi.dot(W.cwiseProduct(ki[it])) / nn);
    }
    return out;
}

std::vector<cx> fourier_coeffs(const std::vector<cx>& v) {
    const int n = static_cast<int>(v.size()), L = (n - 1) / 2;
    std::vector<cx> c;
    for (int l = -L; l <= L; ++l) {
        cx s = 0;
        for (int i = 0; i < n; ++i) s += std::exp(-I * (2 * M_PI * l * i / n)) * v[i];
        c.push_back(s / double(n));
    }
    return c;
}

Eigen::VectorXd stack_slices(const TubeSystem& sys, const std::vector<Eigen::VectorXd>& xs) {
    Eigen::VectorXd x(sys.cols());
    for (int it = 0; it < sys.n_t; ++it) x.segment(it * sys.local_cols, sys.local_cols) = xs[it];
    return x;
}

Eigen::VectorXd slice(const TubeSystem& sys, const Eigen::VectorXd& x, int it) {
    return x.segment(it * sys.local_cols, sys.local_cols);
}

double l2_norm(const TubeSystem& sys, const Eigen::VectorXd& y) { return std::sqrt(y.dot(sys.w.cwiseProduct(y))); }
double h1_norm(const TubeSystem& sys, const Eigen::VectorXd& x) { return std::sqrt(x.dot(sys.G * x)); }

Background background_dt(const BoundaryData& bd, const ProfileH& p, double eps, double t) {
    cx c = bd.c(t), d = bd.d(t), cd = bd.c_dot(t), dd = bd.d_dot(t);
    double S = bd.S(t), Sd = bd.S_dot(t);
    double kh = khat(bd, t);
    double ls = std::pow(kh / eps, 2.0 / 3.0);
    double g = ls / kh;
    double kr = Sd / (2 * S);          // Khat' / Khat
    double lr = 2.0 / 3.0 * kr;        // ls' / ls
    double gr = -1.0 / 3.0 * kr;       // g' / g
    const ProfileH* pp = &p;
    auto part = [=](double r, bool alpha, cx z, cx zd) {
        double rho = ls * r;
        auto W = eval_W_any(*pp, rho);
        double eW = std::exp(W.H);
        if (alpha) return g * eW * ((gr + W.dH * rho * lr) * z + zd);
        double e = rho / eW;
        return g * e * ((gr + (1 - rho * W.dH) * lr) * z + zd);
    };
    Background b;
    b.A1 = [=](double r) { return part(r, true, c, cd); };
    b.A2 = [=](double r) { return part(r, true, -std::conj(d), -std::conj(dd)); };
    b.B1 = [=](double r) { return part(r, false, d, dd); };
    b.B2 = [=](double r) { return part(r, false, std::conj(c), std::conj(cd)); };
    b.f = [=](double r) {
        double rho = ls * r;
        return eval_df_any(*pp, rho) * rho * lr;
    };
    return b;
}

Eigen::VectorXd random_tube_field(const TubeSystem& sys, unsigned seed, int t_modes) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.cols());
    for (int l = -t_modes; l <= t_modes; ++l) {
        std::vector<Eigen::VectorXd> prof;
        for (int m : sys.sectors)
            prof.push_back(random_admissible(sys.bg[0], sys.grid, m, seed * 7919u + 31u * (l + 50) + m, true));
        Eigen::VectorXd u(sys.local_cols);
        int o = 0;
        for (auto& v : prof) {
            u.segment(o, v.size()) = v;
            o += static_cast<int>(v.size());
        }
        cx a(nd(rng), nd(rng));
        a /= 1.0 + std::abs(l);
        for (int it = 0; it < sys.n_t; ++it) {
            cx e = a * std::exp(I * (2 * M_PI * l * sys.t[it] / sys.bd.t_period));
            for (int k = 0; k < sys.local_cols; k += 2) {
                cx v = e * cx(u[k], u[k + 1]);
                x[it * sys.local_cols + k] += v.real();
                x[it * sys.local_cols + k + 1] += v.imag();
            }
        }
    }
    return x;
}

Eigen::VectorXd project_constraints(const TubeSystem& sys, const Eigen::VectorXd& x) {
    // least change in the H^1 norm: x - G^{-1} B^T (B G^{-1} B^T)^{-1} B x
    Eigen::SimplicialLDLT<SpMat> ldlt(sys.G);
    if (ldlt.info() != Eigen::Success) throw Error(Errc::NonConvergence, "Gram factorization failed");
    Eigen::MatrixXd Bt = Eigen::MatrixXd(sys.B.transpose());
    Eigen::MatrixXd GiBt = ldlt.solve(Bt);
    Eigen::MatrixXd M = sys.B * GiBt;
    Eigen::VectorXd lam = M.colPivHouseholderQr().solve(sys.B * x);
    return x - GiBt * lam;
}

// ---------------------------------------------------------------- identities

namespace {

// sigma_t d_t applied to a vector of unknowns (rows = false) or of rows
Eigen::VectorXd sigma_dt(const TubeSystem& sys, const Eigen::VectorXd& v, bool rows) {
    const int block = rows ? sys.local_rows : sys.local_cols;
    const int per = rows ? sys.grid.size() - 1 : sys.grid.size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    for (int i = 0; i < sys.n_t; ++i)
        for (int k = 0; k < sys.n_t; ++k) out.segment(i * block, block) += sys.D(i, k) * v.segment(k * block, block);
    for (int i = 0; i < sys.n_t; ++i)
        for (int f = 0; f < sys.local.size(); ++f) {
            double sg = sigma_sign(sys.kind[f]);
            for (int j = 0; j < per; ++j) {
                int c = i * block + 2 * (per * f + j);
                double re = out[c], im = out[c + 1];
                out[c] = -sg * im;
                out[c + 1] = sg * re;
            }
        }
    return out;
}

// the closed-form anticommutator sigma (dN/dt) x at the rows
Eigen::VectorXd closed_anticommutator(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(sys.rows());
    NormalOptions no;
    no.weight_len = sys.weight_len;
    Background zero;
    zero.A1 = zero.A2 = zero.B1 = zero.B2 = [](double) { return cx(0); };
    zero.f = [](double) { return 0.0; };
    for (int it = 0; it < sys.n_t; ++it) {
        Background bd = background_dt(sys.bd, p, sys.eps, sys.t[it]);
        Eigen::VectorXd xi = slice(sys, x, it);
        int r0 = 0, c0 = 0;
        for (int m : sys.sectors) {
            ModeOperator a = assemble_sector(bd, sys.grid, m, no);
            ModeOperator b = assemble_sector(zero, sys.grid, m, no);
            y.segment(it * sys.local_rows + r0, a.rows()) = (a.A - b.A) * xi.segment(c0, a.cols());
            r0 += a.rows();
            c0 += a.cols();
        }
    }
    // sigma on the rows
    const int nc = sys.grid.size() - 1;
    for (int it = 0; it < sys.n_t; ++it)
        for (int f = 0; f < sys.local.size(); ++f) {
            double sg = sigma_sign(sys.kind[f]);
            for (int j = 0; j < nc; ++j) {
                int c = it * sys.local_rows + 2 * (nc * f + j);
                double re = y[c], im = y[c + 1];
                y[c] = -sg * im;
                y[c + 1] = sg * re;
            }
        }
    return y;
}

double unweighted_dot(const TubeSystem& sys, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    // rows: dt r h per midpoint
    const int nc = sys.grid.size() - 1;
    double s = 0;
    for (int it = 0; it < sys.n_t; ++it)
        for (int o = 0; o < sys.local.size(); ++o)
            for (int j = 0; j < nc; ++j) {
                double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]), h = sys.grid.r[j + 1] - sys.grid.r[j];
                int c = it * sys.local_rows + 2 * (nc * o + j);
                s += sys.dt * r * h * (a[c] * b[c] + a[c + 1] * b[c + 1]);
            }
    return s;
}

// cell averages of the unknowns laid out like rows
Eigen::VectorXd averages(const TubeSystem& sys, const Eigen::VectorXd& x) {
    const int nc = sys.grid.size() - 1;
    Eigen::VectorXd y(sys.rows());
    for (int it = 0; it < sys.n_t; ++it)
        for (int f = 0; f < sys.local.size(); ++f)
            for (int j = 0; j < nc; ++j) {
                int c = it * sys.local_rows + 2 * (nc * f + j);
                int a = sys.col(it, f, j), b = sys.col(it, f, j + 1);
                y[c] = 0.5 * (x[a] + x[b]);
                y[c + 1] = 0.5 * (x[a + 1] + x[b + 1]);
            }
    return y;
}

}  // namespace

Weitzenbock3D weitzenbock_3d(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x) {
    Weitzenbock3D w;
    Eigen::VectorXd Lx = sys.L() * x, Nx = sys.N * x, Sx = sys.S * x;
    w.lhs = unweighted_dot(sys, Lx, Lx);
    Eigen::VectorXd Kx = closed_anticommutator(sys, p, x);
    w.cross = unweighted_dot(sys, averages(sys, x), Kx);
    // boundary form R Re[-conj(b) v_a + conj(a) v_b - i conj(q) v_p - i conj(p) v_q], v = sigma d_t x
    Eigen::VectorXd v = sigma_dt(sys, x, false);
    const int N = sys.grid.size() - 1;
    const double R = sys.grid.r_out();
    double bsum = 0;
    for (int it = 0; it < sys.n_t; ++it)
        for (int f = 0; f < sys.local.size(); ++f) {
            int k = sys.kind[f];
            if (k != 0 && k != 1 && k != 4) continue;  // visit each (alpha, beta) and (p, q) pair once
            const std::string& nm = sys.local.names[f];
            std::string cls = nm.substr(nm.find('['));
            auto other = [&](const char* base) { return sys.find(std::string(base) + cls); };
            auto get = [&](const Eigen::VectorXd& z, int fld) {
                int c = sys.col(it, fld, N);
                return cx(z[c], z[c + 1]);
            };
            if (k <= 1) {
                int fb = other(k == 0 ? "b1" : "b2");
                cx a = get(x, f), b = get(x, fb), va = get(v, f), vb = get(v, fb);
                bsum += std::real(-std::conj(b) * va + std::conj(a) * vb);
            } else {
                int fq = other("q");
                cx pp = get(x, f), q = get(x, fq), vp = get(v, f), vq = get(v, fq);
                bsum += std::real(-I * std::conj(q) * vp - I * std::conj(pp) * vq);
            }
        }
    w.boundary = sys.dt * R * bsum;
    w.rhs = unweighted_dot(sys, Nx, Nx) + unweighted_dot(sys, Sx, Sx) + w.cross + w.boundary;
    w.discrepancy = std::abs(w.lhs - w.rhs) / w.lhs;
    return w;
}

double anticommutator_error(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x) {
    Eigen::VectorXd lhs = sigma_dt(sys, sys.N * x, true) + sys.N * sigma_dt(sys, x, false);
    Eigen::VectorXd K = closed_anticommutator(sys, p, x);
    Eigen::VectorXd d = lhs - K;
    return std::sqrt(unweighted_dot(sys, d, d) / unweighted_dot(sys, K, K));
}

double boundary_pairing_constant(const BoundaryData& bd, const ProfileH& p, const TubeOptions& opt, int n_t) {
    const double lam = opt.tube_radius();
    const int cut = opt.cut(), L = opt.ell_max();
    if (n_t < 2 * L + 1) throw Error(Errc::TruncationTooSmall, "n_t too small for l_max");
    Eigen::MatrixXd D = spectral_matrix(n_t, bd.t_period);
    auto unit = [](const Bvec& v) {
        double n = 0;
        for (auto z : v) n += std::norm(z);
        Bvec u;
        for (int k = 0; k < 4; ++k) u[k] = v[k] / std::sqrt(n);
        return u;
    };
    std::vector<Bvec> v1(n_t), v2(n_t), w1(n_t);
    for (int i = 0; i < n_t; ++i) {
        double t = bd.t_period * i / n_t;
        BoundaryFrame fr = boundary_frame(physical_background(p, bd.c(t), bd.d(t), opt.eps), lam);
        v1[i] = unit(fr.v1);
        v2[i] = unit(fr.v2);
        w1[i] = unit(fr.w1);
    }
    // real basis: z e^{ilt} along v1, v2 (|l| <= l_max) and w1 (|l| <= cut), z = 1, i
    std::vector<std::vector<Bvec>> basis;
    auto push = [&](const std::vector<Bvec>& v, int lmax) {
        for (int l = -lmax; l <= lmax; ++l)
            for (cx z : {cx(1), I}) {
                std::vector<Bvec> x(n_t);
                for (int i = 0; i < n_t; ++i) x[i] = jmul(z * std::exp(I * (2 * M_PI * l * i / n_t)), v[i]);
                basis.push_back(x);
            }
    };
    push(v1, L);
    push(v2, L);
    push(w1, cut);
    const int nb = static_cast<int>(basis.size());
    std::vector<std::vector<Bvec>> dbasis(nb, std::vector<Bvec>(n_t, Bvec{}));
    for (int b = 0; b < nb; ++b)
        for (int i = 0; i < n_t; ++i)
            for (int k = 0; k < n_t; ++k)
                for (int c = 0; c < 4; ++c) dbasis[b][i][c] += D(i, k) * basis[b][k][c];
    Eigen::MatrixXd Q(nb, nb), M(nb, nb);
    for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b) {
            double q = 0, m = 0;
            for (int i = 0; i < n_t; ++i) {
                q += 0.5 * (omega(basis[a][i], dbasis[b][i]) + omega(basis[b][i], dbasis[a][i]));
                for (int c = 0; c < 4; ++c) m += std::real(std::conj(basis[a][i][c]) * basis[b][i][c]);
            }
            Q(a, b) = q;
            M(a, b) = m;
        }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Q, M);
    double sup = ges.eigenvalues().cwiseAbs().maxCoeff();
    return sup * std::sqrt(opt.eps) * opt.L0;
}

AlmostOrthogonality almost_orthogonality(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& q) {
    auto k1 = slice_kernels(sys, p, 1.0), ki = slice_kernels(sys, p, I);
    auto eta = slice_projections(sys, p, q);
    std::vector<Eigen::VectorXd> kb;
    for (int it = 0; it < sys.n_t; ++it) kb.push_back(eta[it].real() * k1[it] + eta[it].imag() * ki[it]);
    Eigen::VectorXd eb = stack_slices(sys, kb), qp = q - eb;
    // unweighted L^2 of d_t u from the cell averages
    Eigen::VectorXd w0(sys.wt.size());
    const int nc = sys.grid.size() - 1, nf = sys.local.size();
    for (int it = 0; it < sys.n_t; ++it)
        for (int f = 0; f < nf; ++f)
            for (int j = 0; j < nc; ++j) {
                double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]), h = sys.grid.r[j + 1] - sys.grid.r[j];
                int c = 2 * ((it * nf + f) * nc + j);
                w0[c] = w0[c + 1] = sys.dt * r * h;
            }
    auto dtn = [&](const Eigen::VectorXd& u) {
        Eigen::VectorXd y = sys.Mt * u;
        return y.dot(w0.cwiseProduct(y));
    };
    Eigen::VectorXd a = averages(sys, qp);
    double qr = 0;
    for (int it = 0; it < sys.n_t; ++it)
        for (int f = 0; f < nf; ++f)
            for (int j = 0; j < nc; ++j) {
                double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]), h = sys.grid.r[j + 1] - sys.grid.r[j];
                int c = it * sys.local_rows + 2 * (nc * f + j);
                qr += sys.dt * r * h * (a[c] * a[c] + a[c + 1] * a[c + 1]) /
                      (sys.weight_len * sys.weight_len + r * r);
            }
    AlmostOrthogonality ao;
    ao.lhs = 0.5 * (dtn(eb) + dtn(qp));
    ao.rhs = dtn(q) + std::pow(sys.eps, 5.0 / 6.0) * qr;
    return ao;
}

double trace_ratio(const TubeSystem& sys, const Eigen::VectorXd& x) {
    const int n = sys.grid.size(), nc = n - 1, nf = sys.local.size();
    const double R = sys.grid.r_out();
    double bnd = 0, vol = 0;
    Eigen::VectorXd dtx = sys.Mt * x;
    for (int it = 0; it < sys.n_t; ++it) {
        const auto& f2 = sys.bg[it].f;
        for (int f = 0; f < nf; ++f) {
            int k = sys.kind[f], mode = sys.local.modes[f];
            bool spinor = k <= 3;
            cx uN(x[sys.col(it, f, nc)], x[sys.col(it, f, nc) + 1]);
            bnd += sys.dt * R * std::norm(uN);
            for (int j = 0; j < nc; ++j) {
                double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]), h = sys.grid.r[j + 1] - sys.grid.r[j];
                cx u0(x[sys.col(it, f, j)], x[sys.col(it, f, j) + 1]);
                cx u1(x[sys.col(it, f, j + 1)], x[sys.col(it, f, j + 1) + 1]);
                cx avg = 0.5 * (u0 + u1), du = (u1 - u0) / h;
                double kk = spinor ? mode + 2 * f2(r) : mode;
                int c = 2 * ((it * nf + f) * nc + j);
                double g = std::norm(du) + (kk * kk / (r * r) + 1 / (sys.weight_len * sys.weight_len + r * r)) *
                                               std::norm(avg) +
                           dtx[c] * dtx[c] + dtx[c + 1] * dtx[c + 1];
                vol += sys.dt * r * h * g;
            }
        }
    }
    return bnd / (std::sqrt(sys.eps) * vol);
}

// ---------------------------------------------------------------- nonlinear terms

namespace {

struct ThetaGrid {
    int n = 0;
    std::vector<std::vector<cx>> E;  // E[f][m] = e^{i mode_f theta_m}
};

ThetaGrid theta_grid(const TubeSystem& sys) {
    int mx = 0;
    for (int m : sys.local.modes) mx = std::max(mx, std::abs(m));
    ThetaGrid tg;
    tg.n = 8;
    while (tg.n < 3 * mx + 6) tg.n *= 2;
    for (int f = 0; f < sys.local.size(); ++f) {
        std::vector<cx> e(tg.n);
        for (int m = 0; m < tg.n; ++m) e[m] = std::exp(I * (2 * M_PI * sys.local.modes[f] * m / tg.n));
        tg.E.push_back(e);
    }
    return tg;
}

struct Pointwise {
    PointSpinor s;
    FormValue a;
};

Pointwise at_theta(const TubeSystem& sys, const ThetaGrid& tg, const std::vector<cx>& u, int m) {
    cx c[6] = {};
    for (int f = 0; f < sys.local.size(); ++f)
        if (u[f] != cx(0)) c[sys.kind[f]] += u[f] * tg.E[f][m];
    Pointwise p;
    p.s = {c[0], c[2], c[1], c[3]};
    p.a = {c[4].real(), c[4].imag(), -c[5].imag(), c[5].real()};
    return p;
}

// packed outputs: a1, a2, b1, b2, p = s0 + i st, q = sy - i sx
void pack(const PointSpinor& s, const FormValue& a, cx out[6]) {
    out[0] = s.a1;
    out[1] = s.a2;
    out[2] = s.b1;
    out[3] = s.b2;
    out[4] = cx(a.s0, a.st);
    out[5] = cx(a.sy, -a.sx);
}

// project theta samples (per kind) onto the output modes
void project(const TubeSystem& sys, const ThetaGrid& tg, const std::vector<std::array<cx, 6>>& vals,
             std::vector<cx>& out) {
    out.assign(sys.local.size(), 0.0);
    for (int o = 0; o < sys.local.size(); ++o) {
        cx s = 0;
        int k = sys.kind[o];
        for (int m = 0; m < tg.n; ++m) s += vals[m][k] * std::conj(tg.E[o][m]);
        out[o] = s / double(tg.n);
    }
}

std::vector<cx> cell_values(const TubeSystem& sys, const Eigen::VectorXd& x, int it, int j) {
    std::vector<cx> u(sys.local.size());
    for (int f = 0; f < sys.local.size(); ++f) {
        int a = sys.col(it, f, j), b = sys.col(it, f, j + 1);
        u[f] = cx(0.5 * (x[a] + x[b]), 0.5 * (x[a + 1] + x[b + 1]));
    }
    return u;
}

// Phi^h / eps at the midpoint in the local unknowns (class 0 alpha, class -2 beta)
std::vector<cx> background_values(const TubeSystem& sys, int it, double r) {
    std::vector<cx> u(sys.local.size(), 0.0);
    const auto& bg = sys.bg[it];
    auto set = [&](const char* nm, cx v) {
        int f = sys.find(nm);
        if (f < 0) throw Error(Errc::BadConfig, "the background needs theta sector 1");
        u[f] = v;
    };
    set("a1[0]", bg.A1(r));
    set("a2[0]", bg.A2(r));
    set("b1[-2]", bg.B1(r));
    set("b2[-2]", bg.B2(r));
    return u;
}

FormValue half_sym_moment(const PointSpinor& x, const PointSpinor& y) {
    FormValue a = moment_map(x, y), b = moment_map(y, x);
    return (a + b) * 0.5;
}

// 2B(U, V) projected to the outputs
void bilinear_local(const TubeSystem& sys, const ThetaGrid& tg, const std::vector<Pointwise>& PU,
                    const std::vector<cx>& V, std::vector<cx>& out) {
    std::vector<std::array<cx, 6>> vals(tg.n);
    for (int m = 0; m < tg.n; ++m) {
        Pointwise pv = at_theta(sys, tg, V, m);
        PointSpinor s = clifford_i(PU[m].a, pv.s) + clifford_i(pv.a, PU[m].s);
        FormValue a = half_sym_moment(PU[m].s, pv.s);
        pack(s, a, vals[m].data());
    }
    project(sys, tg, vals, out);
}

void put_rows(const TubeSystem& sys, int it, int j, const std::vector<cx>& out, Eigen::VectorXd& y) {
    const int nc = sys.grid.size() - 1;
    for (int o = 0; o < sys.local.size(); ++o) {
        int c = it * sys.local_rows + 2 * (nc * o + j);
        y[c] += out[o].real();
        y[c + 1] += out[o].imag();
    }
}

}  // namespace

Eigen::VectorXd quadratic(const TubeSystem& sys, const Eigen::VectorXd& x) {
    ThetaGrid tg = theta_grid(sys);
    const int nc = sys.grid.size() - 1;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(sys.rows());
    std::vector<std::array<cx, 6>> vals(tg.n);
    std::vector<cx> out;
    for (int it = 0; it < sys.n_t; ++it)
        for (int j = 0; j < nc; ++j) {
            auto u = cell_values(sys, x, it, j);
            for (int m = 0; m < tg.n; ++m) {
                Pointwise pu = at_theta(sys, tg, u, m);
                FormValue mu = moment_map(pu.s, pu.s) * 0.5;
                pack(clifford_i(pu.a, pu.s), mu, vals[m].data());
            }
            project(sys, tg, vals, out);
            put_rows(sys, it, j, out, y);
        }
    return y;
}

Eigen::VectorXd bilinear(const TubeSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& v) {
    ThetaGrid tg = theta_grid(sys);
    const int nc = sys.grid.size() - 1;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(sys.rows());
    std::vector<Pointwise> PU(tg.n);
    std::vector<cx> out;
    for (int it = 0; it < sys.n_t; ++it)
        for (int j = 0; j < nc; ++j) {
            auto u = cell_values(sys, x, it, j);
            for (int m = 0; m < tg.n; ++m) PU[m] = at_theta(sys, tg, u, m);
            bilinear_local(sys, tg, PU, cell_values(sys, v, it, j), out);
            put_rows(sys, it, j, out, y);
        }
    return y;
}

namespace {

// local Jacobian columns of V -> map(V) at one cell, pushed as triplets
template <class Map>
void probe_cell(const TubeSystem& sys, int it, int j, Map&& map, std::vector<Trip>& trip) {
    const int nf = sys.local.size(), nc = sys.grid.size() - 1;
    std::vector<cx> V(nf, 0.0), out;
    for (int f = 0; f < nf; ++f)
        for (int ri = 0; ri < 2; ++ri) {
            V[f] = ri == 0 ? cx(1) : I;
            map(V, out);
            V[f] = 0;
            for (int o = 0; o < nf; ++o) {
                if (out[o] == cx(0)) continue;
                int row = it * sys.local_rows + 2 * (nc * o + j);
                for (int jj : {j, j + 1}) {
                    int col = sys.col(it, f, jj) + ri;
                    if (out[o].real() != 0) trip.emplace_back(row, col, 0.5 * out[o].real());
                    if (out[o].imag() != 0) trip.emplace_back(row + 1, col, 0.5 * out[o].imag());
                }
            }
        }
}

}  // namespace

SpMat bilinear_matrix(const TubeSystem& sys, const Eigen::VectorXd& x, bool exact_bg) {
    ThetaGrid tg = theta_grid(sys);
    const int nc = sys.grid.size() - 1;
    std::vector<Trip> trip;
    std::vector<Pointwise> PU(tg.n);
    for (int it = 0; it < sys.n_t; ++it)
        for (int j = 0; j < nc; ++j) {
            double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]);
            auto u = exact_bg ? background_values(sys, it, r) : cell_values(sys, x, it, j);
            for (int m = 0; m < tg.n; ++m) PU[m] = at_theta(sys, tg, u, m);
            probe_cell(sys, it, j, [&](const std::vector<cx>& V, std::vector<cx>& out) {
                bilinear_local(sys, tg, PU, V, out);
            }, trip);
        }
    SpMat M(sys.rows(), sys.cols());
    M.setFromTriplets(trip.begin(), trip.end());
    M.prune(0.0);
    return M;
}

SpMat gauge_matrix(const TubeSystem& sys) {
    ThetaGrid tg = theta_grid(sys);
    const int nc = sys.grid.size() - 1;
    std::vector<Trip> trip;
    std::vector<PointSpinor> phi(tg.n);
    std::vector<std::array<cx, 6>> vals(tg.n);
    for (int it = 0; it < sys.n_t; ++it)
        for (int j = 0; j < nc; ++j) {
            double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]);
            auto u = background_values(sys, it, r);
            for (int m = 0; m < tg.n; ++m) phi[m] = at_theta(sys, tg, u, m).s;
            probe_cell(sys, it, j, [&](const std::vector<cx>& V, std::vector<cx>& out) {
                for (int m = 0; m < tg.n; ++m) {
                    Pointwise pv = at_theta(sys, tg, V, m);
                    FormValue g{moment_map(pv.s, phi[m]).s0, 0, 0, 0};
                    pack(PointSpinor{}, g, vals[m].data());
                }
                project(sys, tg, vals, out);
            }, trip);
        }
    SpMat M(sys.rows(), sys.cols());
    M.setFromTriplets(trip.begin(), trip.end());
    M.prune(0.0);
    return M;
}

Eigen::VectorXd background_vector(const TubeSystem& sys, bool limiting) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.cols());
    int fa[2] = {sys.find("a1[0]"), sys.find("a2[0]")}, fb[2] = {sys.find("b1[-2]"), sys.find("b2[-2]")};
    if (fa[0] < 0 || fb[0] < 0) throw Error(Errc::BadConfig, "the background needs theta sector 1");
    for (int it = 0; it < sys.n_t; ++it) {
        const auto& bg = sys.bg[it];
        cx c = sys.bd.c(sys.t[it]), d = sys.bd.d(sys.t[it]);
        for (int j = 0; j < sys.grid.size(); ++j) {
            double r = sys.grid.r[j];
            cx v[4];
            if (limiting) {
                double s = std::sqrt(r) / sys.eps;
                v[0] = c * s;
                v[1] = -std::conj(d) * s;
                v[2] = d * s;
                v[3] = std::conj(c) * s;
            } else {
                v[0] = bg.A1(r);
                v[1] = bg.A2(r);
                v[2] = bg.B1(r);
                v[3] = bg.B2(r);
            }
            for (int k = 0; k < 2; ++k) {
                int ca = sys.col(it, fa[k], j), cb = sys.col(it, fb[k], j);
                x[ca] = v[k].real();
                x[ca + 1] = v[k].imag();
                x[cb] = v[2 + k].real();
                x[cb + 1] = v[2 + k].imag();
            }
        }
    }
    return x;
}

Eigen::VectorXd curvature_vector(const TubeSystem& sys, bool time_part) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(sys.rows());
    int fp = sys.find("p[0]"), fq = sys.find("q[0]");
    if (fp < 0 || fq < 0) throw Error(Errc::BadConfig, "the background needs theta sector 1");
    const int nc = sys.grid.size() - 1;
    for (int it = 0; it < sys.n_t; ++it) {
        double t = sys.t[it];
        double lr = 2.0 / 3.0 * sys.bd.S_dot(t) / (2 * sys.bd.S(t));
        double ls = sys.ls[it];
        for (int j = 0; j < nc; ++j) {
            double r = 0.5 * (sys.grid.r[j] + sys.grid.r[j + 1]);
            double rho = ls * r;
            double df = eval_df_any(sys.profile, rho);
            // d(2 f)/dr on the p row, 2 f_t / r on the q row
            cx vp = I * 2.0 * ls * df / r, vq = time_part ? 2.0 * I * df * rho * lr / r : cx(0);
            int cp = it * sys.local_rows + 2 * (nc * fp + j), cq = it * sys.local_rows + 2 * (nc * fq + j);
            y[cp] = vp.real();
            y[cp + 1] = vp.imag();
            y[cq] = vq.real();
            y[cq + 1] = vq.imag();
        }
    }
    return y;
}

namespace {

struct NewtonParts {
    Eigen::VectorXd xb, defect;  // background unknowns, frozen 2D residual
    SpMat lin, gauge;            // N1 + S, gauge rows
};

NewtonParts newton_parts(const TubeSystem& sys, const NewtonOptions& opt) {
    NewtonParts np;
    np.xb = background_vector(sys, false);
    np.lin = sys.N1 + sys.S;
    np.gauge = gauge_matrix(sys);
    np.defect = Eigen::VectorXd::Zero(sys.rows());
    if (opt.defect_correction) np.defect = sys.N1 * np.xb + curvature_vector(sys, false) + quadratic(sys, np.xb);
    return np;
}

Eigen::VectorXd residual_from(const TubeSystem& sys, const NewtonParts& np, const Eigen::VectorXd& x) {
    Eigen::VectorXd u = np.xb + x;
    return np.lin * u - sys.S * background_vector(sys, true) + curvature_vector(sys) + quadratic(sys, u) +
           np.gauge * x - np.defect;
}

// energy of Q(u) - Q(base) in theta modes outside the sectors of sys, summed with the row weights
double quadratic_leak(const TubeSystem& sys, const Eigen::VectorXd& u, const Eigen::VectorXd& base) {
    ThetaGrid tg = theta_grid(sys);
    const int nc = sys.grid.size() - 1;
    std::vector<std::array<cx, 6>> vals(tg.n);
    std::vector<cx> out;
    double leak = 0;
    for (int it = 0; it < sys.n_t; ++it)
        for (int j = 0; j < nc; ++j) {
            auto v = cell_values(sys, u, it, j), v0 = cell_values(sys, base, it, j);
            double total = 0, kept = 0;
            for (int m = 0; m < tg.n; ++m) {
                Pointwise pu = at_theta(sys, tg, v, m), p0 = at_theta(sys, tg, v0, m);
                cx a[6], b[6];
                pack(clifford_i(pu.a, pu.s), moment_map(pu.s, pu.s) * 0.5, a);
                pack(clifford_i(p0.a, p0.s), moment_map(p0.s, p0.s) * 0.5, b);
                for (int k = 0; k < 6; ++k) {
                    vals[m][k] = a[k] - b[k];
                    total += std::norm(vals[m][k]) / tg.n;
                }
            }
            project(sys, tg, vals, out);
            for (auto z : out) kept += std::norm(z);
            leak += sys.w[it * sys.local_rows + 2 * j] * std::max(total - kept, 0.0);
        }
    return std::sqrt(leak);
}

}  // namespace

Eigen::VectorXd newton_residual(const TubeSystem& sys, const Eigen::VectorXd& x, const NewtonOptions& opt) {
    NewtonParts np = newton_parts(sys, opt);
    return residual_from(sys, np, x);
}

NewtonResult newton_correct(const TubeSystem& sys, const NewtonOptions& opt) {
    if (sys.B.rows() + sys.rows() != sys.cols())
        throw Error(Errc::BadConfig, "Newton needs a square constrained system");
    NewtonParts np = newton_parts(sys, opt);
    NewtonResult res;
    res.x = Eigen::VectorXd::Zero(sys.cols());
    Eigen::VectorXd F = residual_from(sys, np, res.x);
    res.e0 = l2_norm(sys, F);
    res.residuals.push_back(res.e0);
    const Eigen::VectorXd zb = Eigen::VectorXd::Zero(sys.B.rows());
    for (int k = 0; k < opt.max_iter; ++k) {
        if (res.residuals.back() <= std::max(opt.tol * res.e0, opt.abs_tol)) {
            res.converged = true;
            break;
        }
        SpMat J = np.lin + bilinear_matrix(sys, np.xb + res.x) + np.gauge;
        SpMat M = vstack(J, sys.B);
        Eigen::SparseLU<SpMat> lu(M);
        if (lu.info() != Eigen::Success) throw Error(Errc::NonConvergence, "singular linearization");
        Eigen::VectorXd rhs(M.rows());
        rhs << -F, zb;
        Eigen::VectorXd dx = lu.solve(rhs);
        if (k == 0) {
            ModeOperator op;
            op.A = J;
            op.B = sys.B;
            op.G = sys.G;
            op.w = sys.w;
            res.inv_norm = 1 / sparse_sigma_min(op).sigma;
            double lip = 0;
            for (int s = 0; s < opt.lipschitz_samples; ++s) {
                Eigen::VectorXd u = random_tube_field(sys, 1000u + 2 * s), v = random_tube_field(sys, 1001u + 2 * s);
                lip = std::max(lip, l2_norm(sys, bilinear(sys, u, v)) / (h1_norm(sys, u) * h1_norm(sys, v)));
            }
            res.lipschitz = lip;
            res.kantorovich = res.inv_norm * h1_norm(sys, dx) * lip;
            if (opt.check_contraction && res.kantorovich > 0.5)
                throw Error(Errc::ContractionFailure,
                            fmt::format("Kantorovich quantity {:.3g} exceeds 1/2", res.kantorovich));
        }
        res.x += dx;
        F = residual_from(sys, np, res.x);
        res.residuals.push_back(l2_norm(sys, F));
    }
    if (res.residuals.back() <= std::max(opt.tol * res.e0, opt.abs_tol)) res.converged = true;
    res.correction_h1 = h1_norm(sys, res.x);
    res.leak = res.e0 > opt.abs_tol ? quadratic_leak(sys, np.xb + res.x, np.xb) / res.e0 : 0;
    return res;
}

}  // namespace swt
