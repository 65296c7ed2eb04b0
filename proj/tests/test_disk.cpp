#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "ritz_oracle.hpp"
#include "swt/disk.hpp"
#include "swt/errors.hpp"
#include "swt/fiducial.hpp"

using namespace swt;

namespace {

const ProfileH& prof() {
    static ProfileH p = solve_profile(12, 2000, 1e-10);
    return p;
}

DiskGrid coarse() {
    DiskGrid dg;
    dg.n = 160;
    return dg;
}

const cx kc{1.0, 0.0}, kd{0.5, 0.0};

}  // namespace

TEST_CASE("midpoint map reproduces complex arithmetic") {
    RadialGrid g = make_sinh_grid(5, 0.5, 12);
    FieldLayout L(g.size());
    int u = L.add("u", 0), v = L.add("v", 0);
    MidpointMap M(g, L, 1);
    cx z1 = gen::complex(), z2 = gen::complex(), z3 = gen::complex();
    M.deriv(0, u, z1);
    M.value(0, v, z2, true);
    M.value(0, u, [z3](double r) { return z3 * r; });
    Eigen::VectorXd x(L.cols());
    std::vector<cx> uu(g.size()), vv(g.size());
    for (int j = 0; j < g.size(); ++j) {
        uu[j] = gen::complex();
        vv[j] = gen::complex();
        L.set(x, u, j, uu[j]);
        L.set(x, v, j, vv[j]);
    }
    Eigen::VectorXd y = M.matrix() * x;
    for (int j = 0; j + 1 < g.size(); ++j) {
        double h = M.width[j], rm = M.mid[j];
        cx want = z1 * (uu[j + 1] - uu[j]) / h + z2 * std::conj(0.5 * (vv[j] + vv[j + 1])) +
                  z3 * rm * 0.5 * (uu[j] + uu[j + 1]);
        cx got(y[M.row(0, j)], y[M.row(0, j) + 1]);
        CHECK(std::abs(got - want) < 1e-12);
    }
}

TEST_CASE("constraint rows with conjugation") {
    RadialGrid g = make_sinh_grid(5, 0.5, 8);
    FieldLayout L(g.size());
    int u = L.add("u", 0);
    Constraints B(L);
    cx z = gen::complex();
    B.add({{u, 2, z, true}}, "row");
    Eigen::VectorXd x = Eigen::VectorXd::Random(L.cols());
    Eigen::VectorXd y = B.matrix() * x;
    cx want = z * std::conj(L.get(x, u, 2));
    CHECK(std::abs(cx(y[0], y[1]) - want) < 1e-14);
}

TEST_CASE("Cauchy-Riemann kernel and cokernel counts") {
    DiskGrid dg = coarse();
    for (int m = -2; m <= 2; ++m) {
        auto sb = summarize_cr(assemble_cauchy_riemann(CR::Dbar, m, 0.0, 20, dg, 6));
        CHECK(sb.kernel == std::max(m, 0));
        CHECK(sb.cokernel == std::max(-m, 0));
        CHECK(sb.index == m);
        CHECK(sb.kernel - sb.cokernel == sb.index);
        auto sd = summarize_cr(assemble_cauchy_riemann(CR::Del, m, 0.0, 20, dg, 6));
        CHECK(sd.kernel == std::max(-m, 0));
        CHECK(sd.cokernel == std::max(m, 0));
        CHECK(sd.index == -m);
        if (sb.kernel) CHECK(sb.min_gap > 1e6);
        if (sd.kernel) CHECK(sd.min_gap > 1e6);
    }
}

TEST_CASE("dbar with Pi+[2]: kernel spanned by 1 and z") {
    RadialGrid g = coarse().make(20);
    for (int k = -3; k <= 3; ++k) {
        ModeOperator op = assemble_cr_mode(CR::Dbar, k, 2, 0.0, g);
        Spectrum sp = dense_spectrum(op, 2);
        if (k == 0 || k == 1) {
            CHECK(sp.sigma[1] < 1e-8);
            CHECK(sp.sigma[2] > 1e-2);
            // the kernel vector is a multiple of rho^k
            Eigen::VectorXd x = sp.right.col(0);
            cx ref = op.layout.get(x, 0, g.size() - 1) / std::pow(g.r_out(), k);
            for (int j = 0; j < g.size(); ++j)
                CHECK(std::abs(op.layout.get(x, 0, j) - ref * std::pow(g.r[j], k)) < 1e-10 * std::abs(ref));
        } else {
            CHECK(sp.sigma[0] > 1e-2);
        }
    }
    auto s0 = summarize_cr(assemble_cauchy_riemann(CR::Dbar, 0, 0.0, 20, coarse(), 6));
    CHECK(s0.kernel == 0);
    CHECK(s0.sigma_min > 0.1);
}

TEST_CASE("box scheme sigma agrees with a Ritz oracle") {
    DiskGrid dg;
    dg.n = 400;
    RadialGrid g = dg.make(10);
    // weighted dbar, mode -1 free at the boundary and mode 0 with a Dirichlet row
    double s1 = dense_spectrum(assemble_cr_mode(CR::Dbar, -1, 0, 0.5, g)).sigma[0];
    double r1 = oracle::ritz_cr_sigma(-1, -1, false, 0.5, 10, 40);
    CHECK(s1 == doctest::Approx(r1).epsilon(2e-3));
    double s0 = dense_spectrum(assemble_cr_mode(CR::Dbar, 0, 0, 0.5, g)).sigma[0];
    double r0 = oracle::ritz_cr_sigma(0, -1, true, 0.5, 10, 40);
    CHECK(s0 == doctest::Approx(r0).epsilon(2e-3));
    double s2 = dense_spectrum(assemble_cr_mode(CR::Del, 2, 3, -0.5, g)).sigma[0];
    double r2 = oracle::ritz_cr_sigma(2, 1, true, -0.5, 10, 40);
    CHECK(s2 == doctest::Approx(r2).epsilon(2e-3));
}

TEST_CASE("weights and resonances") {
    RadialGrid g = coarse().make(10);
    CHECK_THROWS_AS(assemble_cr_mode(CR::Dbar, 0, 0, 1.0, g), Error);
    try {
        assemble_cr_mode(CR::Dbar, 0, 0, 0.5, g, &prof());
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ResonantWeight);
    }
    CHECK_NOTHROW(assemble_cr_mode(CR::Dbar, 0, 0, 0.4, g, &prof()));
    CHECK_THROWS_AS(assemble_cauchy_riemann(CR::Dbar, 5, 0.0, 10, coarse()), Error);
}

TEST_CASE("twisted operators: kernel of del_A is e^{-W}") {
    RadialGrid g = coarse().make(20);
    ModeOperator op = assemble_cr_mode(CR::Del, 0, -1, 0.0, g, &prof());
    Spectrum sp = dense_spectrum(op, 1);
    CHECK(sp.sigma[1] < 1e-8);
    CHECK(sp.sigma[2] > 1e-2);
    Eigen::VectorXd x = sp.right.col(0);
    cx ref = op.layout.get(x, 0, 0) * std::exp(eval_W_any(prof(), 0).H);
    double worst = 0;
    for (int j = 0; j < g.size(); ++j) {
        cx want = ref * std::exp(-eval_W_any(prof(), g.r[j]).H);
        worst = std::max(worst, std::abs(op.layout.get(x, 0, j) - want) / std::abs(ref));
    }
    CHECK(worst < 5e-3);
}

TEST_CASE("normal operator index bookkeeping") {
    Background bg = scale_invariant_background(prof(), kc, kd);
    RadialGrid g = coarse().make(10);
    CHECK(assemble_sector(bg, g, 0, {}).index() == 2);
    NormalOptions un;
    un.twisted = false;
    CHECK(assemble_sector(bg, g, 0, un).index() == 0);
    for (int m = 1; m <= 4; ++m) {
        ModeOperator op = assemble_sector(bg, g, m, {});
        CHECK(op.index() == 0);
        CHECK(op.rows() + op.constraint_rows() == op.cols());
    }
    CHECK_THROWS_AS(scale_invariant_background(prof(), 0.0, 0.0), Error);
}

TEST_CASE("normal operator: sparse and dense spectra agree") {
    Background bg = scale_invariant_background(prof(), kc, kd);
    DiskGrid dg;
    dg.n = 50;
    RadialGrid g = dg.make(10);
    ModeOperator op1 = assemble_sector(bg, g, 1, {});
    double dense = dense_spectrum(op1).sigma[0];
    double sparse = sparse_sigma_min(op1).sigma;
    CHECK(sparse == doctest::Approx(dense).epsilon(1e-8));

    ModeOperator op0 = assemble_sector(bg, g, 0, {});
    Spectrum sp = dense_spectrum(op0);
    SectorSpectrum ss = sector0_spectrum(prof(), kc, kd, 10, dg);
    CHECK(sp.sigma[1] < 1e-10);
    CHECK(ss.sigma2 < 1e-10);
    CHECK(ss.sigma3 == doctest::Approx(sp.sigma[2]).epsilon(1e-8));
}

TEST_CASE("normal operator: two dimensional kernel with a gap") {
    SectorSpectrum a = sector0_spectrum(prof(), kc, kd, 20, coarse());
    CHECK(a.index == 2);
    CHECK(a.sigma2 < 1e-10);
    CHECK(a.sigma3 > 0.3);
    CHECK(a.gap > 1e2);
    // the semi-analytic kernel converges to the discrete one at second order
    DiskGrid fine = coarse();
    fine.n *= 2;
    SectorSpectrum b = sector0_spectrum(prof(), kc, kd, 20, fine);
    CHECK(a.rq_analytic / b.rq_analytic > 3.5);
    CHECK(a.kernel_distance / b.kernel_distance > 3.5);
    CHECK(b.kernel_distance < 1e-3);

    NormalOptions un;
    un.twisted = false;
    SectorSpectrum u = sector0_spectrum(prof(), kc, kd, 20, coarse(), un);
    CHECK(u.index == 0);
    CHECK(u.sigma3 > 1e-3);
}

TEST_CASE("kernel element") {
    KernelElement k = kernel_basis(prof(), kc, kd, 20, coarse());
    CHECK(k.max_mu_c < 1e-8);
    CHECK(k.mu_boundary < 1e-12);
    CHECK(k.slope == doctest::Approx(-0.5).epsilon(0.1));
    CHECK(std::abs(k.slope + 0.5) < 0.05);
    double kh = kKhatFactor * std::sqrt(2.0 / 3.0 * 1.25);
    cx target = 4.0 * kd / (9.0 * kh);
    CHECK(std::abs(k.h1_coeff - target) < 1e-3 * std::abs(target));
    CHECK(k.h1_remainder < 0.1);
    // beta_t(z) is linear in z on the beta slots and conjugate linear on alpha, q
    KernelElement ki = kernel_basis(prof(), kc, kd, 20, coarse(), I);
    for (size_t j = 0; j < k.rho.size(); j += 17) {
        CHECK(std::abs(ki.b1[j] - I * k.b1[j]) < 1e-12);
        CHECK(std::abs(ki.a2[j] + I * k.a2[j]) < 1e-12);
        CHECK(std::abs(ki.q[j] + I * k.q[j]) < 1e-12);
    }
    // complex data
    KernelElement kz = kernel_basis(prof(), cx(0.3, -0.8), cx(-0.2, 0.4), 20, coarse());
    CHECK(kz.max_mu_c < 1e-8);
    CHECK(kz.residual < 1e-3);
}

TEST_CASE("kernel t-regularity") {
    BoundaryData bd;
    bd.c_modes = {{0, 1.0}, {1, 0.3}};
    bd.d_modes = {{0, 0.5}};
    double t = 0.7, dt = 1e-4;
    KernelElement k0 = kernel_basis(prof(), bd.c(t), bd.d(t), 20, coarse());
    KernelElement kp = kernel_basis(prof(), bd.c(t + dt), bd.d(t + dt), 20, coarse());
    KernelElement km = kernel_basis(prof(), bd.c(t - dt), bd.d(t - dt), 20, coarse());
    double kappa = 0;
    for (size_t j = 0; j < k0.rho.size(); ++j) {
        if (k0.rho[j] < 5) continue;
        double num = 0, den = 0;
        const std::vector<cx>* fs[3][5] = {{&k0.a1, &k0.a2, &k0.b1, &k0.b2, &k0.q},
                                           {&kp.a1, &kp.a2, &kp.b1, &kp.b2, &kp.q},
                                           {&km.a1, &km.a2, &km.b1, &km.b2, &km.q}};
        for (int c = 0; c < 5; ++c) {
            num += std::norm(((*fs[1][c])[j] - (*fs[2][c])[j]) / (2 * dt));
            den += std::norm((*fs[0][c])[j]);
        }
        kappa = std::max(kappa, std::sqrt(num / den));
    }
    MESSAGE("kappa = " << kappa);
    CHECK(kappa < 2.0);
}

TEST_CASE("gauge Laplacian") {
    Background bg = scale_invariant_background(prof(), kc, kd);
    auto phi2 = [&](double r) { return bg.phi2(r); };
    RadialGrid g = coarse().make(20);
    for (int k : {-2, -1, 0, 1}) {
        GaugeLaplacian L(phi2, g, k);
        auto z = L.solve(std::vector<cx>(g.size(), 0.0));
        for (auto v : z) CHECK(v == cx(0));
        // manufactured solution through the discrete operator
        std::vector<cx> hs(g.size());
        for (int j = 0; j < g.size(); ++j) {
            double r = g.r[j];
            hs[j] = (k == 0 ? 1.0 : std::pow(r, std::abs(k))) * std::exp(-r / 3) * cx(1, 0.5);
            if (L.dirichlet_outer() && j == g.size() - 1) hs[j] = 0;
            if (L.dirichlet_axis() && j == 0) hs[j] = 0;
        }
        auto rec = L.solve(L.apply(hs));
        double err = 0;
        for (int j = 0; j < g.size(); ++j) err = std::max(err, std::abs(rec[j] - hs[j]));
        CHECK(err < 1e-8);
    }
    // second-order convergence against the continuous operator for mode -1
    auto err_at = [&](int n) {
        RadialGrid gg = make_sinh_grid(20, 0.5, n);
        GaugeLaplacian L(phi2, gg, -1);
        std::vector<cx> rhs(gg.size()), ex(gg.size());
        for (int j = 0; j < gg.size(); ++j) {
            double r = gg.r[j];
            // h = r e^{-r^2/4}: h'' + h'/r - h/r^2 = (r^3/4 - 2 r) e^{-r^2/4}
            ex[j] = r * std::exp(-r * r / 4);
            double lap = (r * r * r / 4 - 2 * r) * std::exp(-r * r / 4);
            rhs[j] = -lap + phi2(r) * ex[j];
        }
        auto h = L.solve(rhs);
        double e = 0;
        for (int j = 0; j < gg.size(); ++j) e = std::max(e, std::abs(h[j] - ex[j]));
        return e;
    };
    double e1 = err_at(100), e2 = err_at(200), e3 = err_at(400);
    CHECK(e1 / e2 > 3.5);
    CHECK(e2 / e3 > 3.5);

    double s10 = gauge_sigma_min(prof(), kc, kd, 10, coarse());
    double s40 = gauge_sigma_min(prof(), kc, kd, 40, coarse());
    CHECK(std::abs(s10 - s40) < 0.2 * std::max(s10, s40));
    CHECK(s10 > 0);
}

TEST_CASE("integration by parts identity on the disk") {
    Background bg = scale_invariant_background(prof(), cx(1, 0.2), cx(0.5, -0.3));
    auto run = [&](int m, int n, bool viol, bool zeta_off) {
        RadialGrid g = make_sinh_grid(10, 0.5, n);
        auto x = random_admissible(bg, g, m, 11, viol);
        if (zeta_off) {
            ModeOperator op = assemble_sector(bg, g, m, {});
            for (int f = 0; f < op.layout.size(); ++f)
                if (op.layout.names[f][0] == 'p')
                    for (int j = 0; j < g.size(); ++j) op.layout.set(x, f, j, 0.0);
        }
        return weitzenbock_2d(bg, g, m, x);
    };
    // zeta = 0: exact
    auto w0 = run(0, 100, false, true);
    CHECK(w0.discrepancy < 1e-10 * w0.lhs);
    CHECK(w0.boundary == 0);
    for (int m : {0, 1}) {
        double d1 = run(m, 100, false, false).discrepancy;
        double d2 = run(m, 200, false, false).discrepancy;
        double d3 = run(m, 400, false, false).discrepancy;
        CHECK(d1 / d2 > 3.5);
        CHECK(d2 / d3 > 3.5);
    }
    // violated boundary row: the defect does not go away
    double v1 = run(0, 100, true, false).discrepancy;
    double v2 = run(0, 400, true, false).discrepancy;
    CHECK(v2 > 0.5 * v1);
    CHECK(v2 > 1e-2);
}

TEST_CASE("scale relation between normal operators") {
    double eps = 1.0 / 256;
    Background bh = scale_invariant_background(prof(), kc, kd);
    Background bp = physical_background(prof(), kc, kd, eps);
    double ls = rho_scale(kc, kd, eps);
    RadialGrid gh = make_sinh_grid(10, 0.5, 80);
    RadialGrid gp = gh;
    for (auto& r : gp.r) r /= ls;
    for (int m : {0, 2}) {
        ModeOperator oh = assemble_sector(bh, gh, m, {});
        ModeOperator op = assemble_sector(bp, gp, m, {});
        Eigen::VectorXd x = Eigen::VectorXd::Random(oh.cols());
        Eigen::VectorXd yh = oh.A * x, yp = op.A * x;
        CHECK((yp - ls * yh).norm() < 1e-12 * (ls * yh).norm());
    }
}

TEST_CASE("slice projection") {
    DiskGrid dg = coarse();
    KernelElement k = kernel_basis(prof(), kc, kd, 20, dg);
    KernelElement ki = kernel_basis(prof(), kc, kd, 20, dg, I);
    Background bg = scale_invariant_background(prof(), kc, kd);
    ModeOperator s0 = assemble_sector(bg, dg.make(20), 0, {});
    cx p1 = slice_projection(s0, k, kernel_vector(s0, k));
    cx pi = slice_projection(s0, k, kernel_vector(s0, ki));
    CHECK(std::abs(p1 - 1.0) < 1e-12);
    CHECK(std::abs(pi - I) < 1e-12);
    Eigen::VectorXd x = Eigen::VectorXd::Random(s0.cols());
    cx pr = slice_projection(s0, k, x);
    Eigen::VectorXd xp = x - pr.real() * kernel_vector(s0, k) - pr.imag() * kernel_vector(s0, ki);
    CHECK(std::abs(slice_projection(s0, k, xp)) < 1e-12);

    // |beta_t|_{L^2(D_lambda)} in physical units against eps^{1/2 + 1/12}
    std::vector<double> ratio;
    for (int e = 6; e <= 12; ++e) {
        double eps = std::ldexp(1.0, -e);
        double ls = rho_scale(kc, kd, eps);
        double l2 = kernel_l2(k, ls * std::sqrt(eps)) / ls;
        ratio.push_back(l2 / std::pow(eps, 0.5 + 1.0 / 12));
    }
    double lo = *std::min_element(ratio.begin(), ratio.end());
    double hi = *std::max_element(ratio.begin(), ratio.end());
    MESSAGE("L2 ratio range " << lo << " " << hi);
    CHECK(lo > 0);
    CHECK(hi / lo < 2.0);
}
