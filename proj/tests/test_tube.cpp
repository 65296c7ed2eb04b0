#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "swt/errors.hpp"
#include "swt/tube.hpp"

using namespace swt;

namespace {

const ProfileH& prof() {
    static ProfileH p = solve_profile(12, 2000, 1e-10);
    return p;
}

const cx kc{1.0, 0.0}, kd{0.5, 0.0};

BoundaryData moving() {
    BoundaryData bd;
    bd.c_modes = {{0, {1, 0}}, {1, {0.3, 0}}};
    bd.d_modes = {{0, {0.5, 0}}, {-1, {0, 0.2}}};
    return bd;
}

TubeOptions tube_opts(double eps) {
    TubeOptions o;
    o.eps = eps;
    return o;
}

CollocationOptions colloc(int n_t, int n_r, std::vector<int> sectors = {0}, TubeBC bc = TubeBC::Mixed) {
    CollocationOptions co;
    co.n_t = n_t;
    co.n_r = n_r;
    co.sectors = sectors;
    co.bc = bc;
    return co;
}

}  // namespace

// ---------------------------------------------------------------- Euclidean modes

TEST_CASE("euclidean cokernel solves the flat equation") {
    for (int l : {1, 2, 3, -2}) {
        double prev = 1;
        for (int n : {200, 400, 800}) {
            auto m = euclidean_cokernel(l, n);
            CHECK(m.residual < prev / 10);
            prev = m.residual;
        }
        CHECK(prev < 1e-6);
        // int |psi|^2 = 2 pi int 2|l| e^{-2|l| r} dr = 2 pi
        auto m = euclidean_cokernel(l, 400);
        CHECK(m.l2 == doctest::Approx(std::sqrt(2 * M_PI)).epsilon(0.02));
    }
}

TEST_CASE("euclidean gradient concentrates like h^-1/2") {
    std::vector<double> h{1e-2, 1e-3, 1e-4}, g;
    for (double x : h) g.push_back(annulus_gradient(1, x));
    CHECK(loglog_slope(h, g) == doctest::Approx(-0.5).epsilon(0.01));
}

TEST_CASE("l = 0 has no euclidean mode") {
    CHECK_THROWS_AS(euclidean_cokernel(0, 100), Error);
    try {
        annulus_gradient(0, 0.1);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::ZeroMode);
    }
}

TEST_CASE("matched mode grows like e^{|l| r} r^{-1/2}") {
    for (int l : {1, 2, 3}) {
        for (double rho0 : {0.5, 2.0}) {
            auto g = matched_growth_mode(l, rho0);
            CHECK(g.growth == doctest::Approx(l).epsilon(0.05));
            CHECK(std::abs(g.power + 0.5) < 0.05);
            CHECK(g.det_decay > 0.5);  // bounded away from the decaying solution
            auto gm = matched_growth_mode(-l, rho0);
            CHECK(gm.growth == doctest::Approx(g.growth).epsilon(1e-8));
            CHECK(gm.det_decay == doctest::Approx(g.det_decay).epsilon(1e-8));
        }
    }
}

// ---------------------------------------------------------------- boundary frame

TEST_CASE("omega is antisymmetric and jmul is conjugate linear on alpha") {
    for (int it = 0; it < 50; ++it) {
        Bvec x{gen::complex(), gen::complex(), gen::complex(), gen::complex()};
        Bvec y{gen::complex(), gen::complex(), gen::complex(), gen::complex()};
        CHECK(omega(x, y) == doctest::Approx(-omega(y, x)).epsilon(1e-12));
        cx z = gen::complex(), w = gen::complex();
        Bvec a = jmul(z * w, x), b = jmul(z, jmul(w, x));
        for (int k = 0; k < 4; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
    }
}

TEST_CASE("boundary frame: v1, v2 span a Lagrangian in ker mu, w1 carries the coefficient") {
    for (int it = 0; it < 30; ++it) {
        cx c = gen::complex(), d = gen::complex();
        Background bg = scale_invariant_background(prof(), c, d);
        double R = gen::real(0.5, 8);
        BoundaryFrame fr = boundary_frame(bg, R);
        const Bvec* v[2] = {&fr.v1, &fr.v2};
        double scale = std::max(1.0, bg.phi2(R));
        for (int i = 0; i < 2; ++i) {
            CHECK(std::abs(fr.mu(*v[i])) < 1e-12 * scale);
            CHECK(std::abs(fr.w1_coeff(*v[i])) < 1e-12 * scale);
            for (int j = 0; j < 2; ++j) {
                cx z = gen::complex(), w = gen::complex();
                CHECK(std::abs(omega(jmul(z, *v[i]), jmul(w, *v[j]))) < 1e-12 * scale * scale);
            }
        }
        CHECK(std::abs(fr.mu(fr.w1)) < 1e-12 * scale * scale);
        CHECK(std::abs(fr.w1_coeff(fr.w1) - 1.0) < 1e-12);
        CHECK(std::abs(fr.w1_coeff(fr.w2)) < 1e-12);
        CHECK(std::abs(fr.mu(fr.w2)) > 1e-8);
    }
}

TEST_CASE("low mode cut") {
    CHECK(low_mode_cut(1.0 / 64, 8) == 1);
    CHECK(low_mode_cut(1.0 / 256, 8) == 2);
    CHECK(low_mode_cut(1.0 / 1024, 8) == 4);
    CHECK(low_mode_cut(1.0 / 1024, 1) == 32);
    CHECK_THROWS_AS(low_mode_cut(0, 8), Error);
}

// ---------------------------------------------------------------- t-constant blocks

TEST_CASE("block indices vanish and mixed conditions swap rows one for one") {
    for (double eps : {1.0 / 64, 1.0 / 256}) {
        TubeOptions o = tube_opts(eps);
        o.n_r = 60;
        auto a = index_audit(prof(), kc, kd, o);
        CHECK(a.index_sum == 0);
        CHECK(a.max_abs_index == 0);
        CHECK(a.removed == a.added);
        CHECK(a.removed == 2 * (2 * o.cut() + 1));
        CHECK(a.blocks == (o.ell_max() + 1) + o.mmax * (2 * o.ell_max() + 1));
    }
}

TEST_CASE("truncation below twice the cut is rejected") {
    TubeOptions o = tube_opts(1.0 / 256);
    o.ell_factor = 1;
    try {
        index_audit(prof(), kc, kd, o);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::TruncationTooSmall);
    }
    CHECK_THROWS_AS(invertibility_scan(prof(), kc, kd, {1.0 / 64}, o), Error);
}

TEST_CASE("approximate kernel: |L(e^{ilt} beta)| grows linearly in the t frequency") {
    TubeOptions o = tube_opts(1.0 / 1024);
    o.n_r = 80;
    auto rows = approx_kernel_profile(prof(), kc, kd, o, {0, 1, 2, 4, 8, 16});
    CHECK(rows[0].ratio < 2e-3);  // the discrete kernel residual
    std::vector<double> f, r;
    for (size_t i = 1; i < rows.size(); ++i) {
        f.push_back(rows[i].t_freq);
        r.push_back(rows[i].ratio);
        CHECK(rows[i].ratio > 10 * rows[0].ratio);
    }
    CHECK(loglog_slope(f, r) == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("collocation with t-constant data commutes with t shifts") {
    BoundaryData bd = BoundaryData::constant(kc, kd);
    TubeSystem s = assemble_tube(bd, prof(), tube_opts(1.0 / 256), colloc(7, 24, {0, 1}, TubeBC::None));
    Eigen::VectorXd x = Eigen::VectorXd::Random(s.cols());
    auto shift_cols = [&](const Eigen::VectorXd& v, int block) {
        Eigen::VectorXd out(v.size());
        for (int it = 0; it < s.n_t; ++it) out.segment(((it + 1) % s.n_t) * block, block) = v.segment(it * block, block);
        return out;
    };
    Eigen::VectorXd a = s.L() * shift_cols(x, s.local_cols), b = shift_cols(s.L() * x, s.local_rows);
    CHECK((a - b).norm() < 1e-10 * b.norm());
}

// ---------------------------------------------------------------- t-dependent collocation

TEST_CASE("collocation system is square and mixed conditions pin the low slice projections") {
    TubeOptions o = tube_opts(1.0 / 256);
    TubeSystem s = assemble_tube(moving(), prof(), o, colloc(9, 30));
    CHECK(s.cols() == s.rows() + s.B.rows());
    Eigen::VectorXd x = project_constraints(s, random_tube_field(s, 11, 3));
    CHECK((s.B * x).norm() < 1e-10 * x.norm());
    auto pi = fourier_coeffs(slice_projections(s, prof(), x));
    const int L = (s.n_t - 1) / 2;
    double low = 0, high = 0;
    for (int l = -L; l <= L; ++l) (std::abs(l) <= o.cut() ? low : high) += std::abs(pi[l + L]);
    CHECK(low < 1e-10);
    CHECK(high > 1e-6);
}

TEST_CASE("background t derivative matches a finite difference") {
    BoundaryData bd = moving();
    const double eps = 1.0 / 256, h = 1e-5;
    for (double t : {0.3, 1.7, 4.0}) {
        Background b = background_dt(bd, prof(), eps, t);
        Background bp = physical_background(prof(), bd.c(t + h), bd.d(t + h), eps);
        Background bm = physical_background(prof(), bd.c(t - h), bd.d(t - h), eps);
        for (double r : {0.001, 0.01, 0.05}) {
            auto fd = [&](auto get) { return (get(bp) - get(bm)) / (2 * h); };
            cx dA1 = fd([&](const Background& g) { return g.A1(r); });
            cx dB2 = fd([&](const Background& g) { return g.B2(r); });
            cx dA2 = fd([&](const Background& g) { return g.A2(r); });
            cx dB1 = fd([&](const Background& g) { return g.B1(r); });
            double df = (bp.f(r) - bm.f(r)) / (2 * h);
            double s = 1 + std::abs(b.A1(r)) + std::abs(b.B1(r));
            CHECK(std::abs(b.A1(r) - dA1) < 1e-6 * s);
            CHECK(std::abs(b.A2(r) - dA2) < 1e-6 * s);
            CHECK(std::abs(b.B1(r) - dB1) < 1e-6 * s);
            CHECK(std::abs(b.B2(r) - dB2) < 1e-6 * s);
            CHECK(std::abs(b.f(r) - df) < 1e-6);
        }
    }
}

TEST_CASE("anticommutator {sigma d_t, N} converges to sigma dN/dt") {
    TubeOptions o = tube_opts(1.0 / 256);
    std::vector<double> err;
    for (int nt : {9, 17, 33}) {
        TubeSystem s = assemble_tube(moving(), prof(), o, colloc(nt, 16));
        Eigen::VectorXd x = project_constraints(s, random_tube_field(s, 5, 2));
        err.push_back(anticommutator_error(s, prof(), x));
    }
    CHECK(err[1] < err[0] / 10);
    CHECK(err[2] < err[1] / 10);
    CHECK(err[2] < 1e-4);
}

TEST_CASE("3d integration by parts identity converges under radial refinement") {
    TubeOptions o = tube_opts(1.0 / 256);
    std::vector<double> d;
    for (int nr : {20, 40, 80}) {
        TubeSystem s = assemble_tube(moving(), prof(), o, colloc(9, nr));
        Eigen::VectorXd x = project_constraints(s, random_tube_field(s, 7, 2));
        auto w = weitzenbock_3d(s, prof(), x);
        CHECK(std::abs(w.boundary) > 4 * std::abs(w.lhs - w.rhs));  // the boundary term is needed
        d.push_back(w.discrepancy);
    }
    CHECK(d[0] < 1e-5);
    CHECK(d[2] < d[0] / 4);
}

TEST_CASE("boundary pairing constant stays bounded as eps shrinks") {
    std::vector<double> k;
    for (double eps : {1.0 / 256, 1.0 / 1024}) {
        TubeOptions o = tube_opts(eps);
        k.push_back(boundary_pairing_constant(moving(), prof(), o, 4 * o.ell_max() + 1));
    }
    CHECK(k[0] > 0.1);
    CHECK(k[0] < 10);
    CHECK(k[1] / k[0] > 0.8);
    CHECK(k[1] / k[0] < 1.25);
}

TEST_CASE("almost orthogonality and trace ratio on random fields") {
    std::vector<double> worst;
    for (double eps : {1.0 / 64, 1.0 / 256}) {
        TubeSystem s = assemble_tube(moving(), prof(), tube_opts(eps), colloc(9, 24));
        double w = 0;
        for (unsigned seed = 0; seed < 20; ++seed) {
            Eigen::VectorXd q = project_constraints(s, random_tube_field(s, 100 + seed, 3));
            auto ao = almost_orthogonality(s, prof(), q);
            CHECK(ao.lhs <= ao.rhs);
            w = std::max(w, trace_ratio(s, q));
        }
        worst.push_back(w);
    }
    CHECK(worst[0] < 1);
    CHECK(worst[1] / worst[0] < 2);
}

// ---------------------------------------------------------------- nonlinear terms

TEST_CASE("linearized quadratic at the background reproduces the zeroth order rows") {
    TubeSystem s = assemble_tube(moving(), prof(), tube_opts(1.0 / 64), colloc(3, 12, {1}));
    SpMat M = bilinear_matrix(s, Eigen::VectorXd(), true) + gauge_matrix(s);
    Eigen::VectorXd x = random_tube_field(s, 3, 1);
    Eigen::VectorXd a = M * x, b = (s.N - s.N1) * x;
    CHECK((a - b).norm() < 1e-12 * b.norm());
}

TEST_CASE("bilinear form is symmetric and polarizes the quadratic") {
    TubeSystem s = assemble_tube(moving(), prof(), tube_opts(1.0 / 64), colloc(3, 12, {1}));
    Eigen::VectorXd x = random_tube_field(s, 1, 1), y = random_tube_field(s, 2, 1);
    Eigen::VectorXd bxy = bilinear(s, x, y), byx = bilinear(s, y, x);
    CHECK((bxy - byx).norm() < 1e-12 * bxy.norm());
    // Q(x + y) - Q(x) - Q(y) = 2 B(x, y)
    Eigen::VectorXd pol = quadratic(s, x + y) - quadratic(s, x) - quadratic(s, y);
    CHECK((pol - bxy).norm() < 1e-12 * bxy.norm());
    CHECK((bilinear_matrix(s, x) * y - bxy).norm() < 1e-12 * bxy.norm());
}

TEST_CASE("newton: t-constant data needs no correction") {
    BoundaryData bd = BoundaryData::constant(kc, kd);
    TubeSystem s = assemble_tube(bd, prof(), tube_opts(1.0 / 256), colloc(5, 24, {1}));
    auto r = newton_correct(s);
    CHECK(r.converged);
    CHECK(r.e0 < 1e-10);
    CHECK(r.correction_h1 < 1e-10);
}

TEST_CASE("newton converges quadratically for moving data") {
    TubeSystem s = assemble_tube(moving(), prof(), tube_opts(1.0 / 256), colloc(9, 24, {1}));
    auto r = newton_correct(s);
    CHECK(r.converged);
    REQUIRE(r.residuals.size() >= 3);
    double q1 = r.residuals[1] / r.residuals[0], q2 = r.residuals[2] / r.residuals[0];
    CHECK(q1 < 1e-2);
    CHECK(std::log(q2) / std::log(q1) > 1.8);
    CHECK(r.kantorovich < 0.5);
    CHECK(r.leak < 1);
    Eigen::VectorXd F = newton_residual(s, r.x);
    CHECK(l2_norm(s, F) < 1e-8 * r.e0);
}

TEST_CASE("newton refuses a non square system") {
    TubeSystem s = assemble_tube(moving(), prof(), tube_opts(1.0 / 64), colloc(3, 12, {1}));
    s.B = SpMat(0, s.cols());
    CHECK_THROWS_AS(newton_correct(s), Error);
}
