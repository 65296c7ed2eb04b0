#include <doctest.h>

#include <cmath>

#include "swt/errors.hpp"
#include "swt/fiducial.hpp"

using namespace swt;

namespace {

const ProfileH& prof() {
    static ProfileH p = solve_profile(12, 2000, 1e-10);
    return p;
}

BoundaryData moving() {
    BoundaryData bd;
    bd.c_modes = {{0, 1.0}, {1, 0.3}};
    bd.d_modes = {{0, 0.5}};
    return bd;
}

}  // namespace

TEST_CASE("boundary data") {
    auto bd = moving();
    double t = 0.4;
    CHECK(std::abs(bd.c(t) - (1.0 + 0.3 * std::exp(I * t))) < 1e-15);
    CHECK(std::abs(bd.c_dot(t) - 0.3 * I * std::exp(I * t)) < 1e-15);
    CHECK(khat(bd, t) * khat(bd, t) == doctest::Approx(8.0 / 9.0 * bd.S(t)));
    auto zero = BoundaryData::constant(0.0, 0.0);
    try {
        zero.validate();
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::AssumptionViolated);
    }
}

TEST_CASE("limiting configuration") {
    auto bd = moving();
    FiducialOptions o;
    o.eps = 1.0 / 256;
    auto F = build_phi0(bd, o);
    CHECK(max_mu_oneform(F) <= 1e-14);
    for (int i = 0; i < F.n_t(); i += 5)
        for (int j = 1; j < F.n_r(); j += 37) {
            auto s = F.at(i, j, 0.4);
            // both copies carry |c|^2 + |d|^2
            CHECK(std::sqrt(s.norm2() / F.grid.r[j]) == doctest::Approx(std::sqrt(2 * bd.S(F.t[i]))).epsilon(1e-13));
        }
}

TEST_CASE("limiting configuration is harmonic in the disk") {
    // 2 dbar_A alpha = alpha' - alpha/(2r) on mode 0; checked on r >= lambda/10
    auto bd = BoundaryData::constant(1.0, 0.5);
    double prev = INFINITY;
    for (int n : {100, 200, 400}) {
        FiducialOptions o;
        o.eps = 1.0 / 256;
        o.n_r = n;
        auto F = build_phi0(bd, o);
        std::vector<double> re(F.n_r());
        for (int j = 0; j < F.n_r(); ++j) re[j] = F.a1(0, j).real();
        auto d = fd_derivative(F.grid.r, re);
        double m = 0;
        for (int j = 1; j < F.n_r(); ++j)
            if (F.grid.r[j] >= F.lambda / 10) m = std::max(m, std::abs(d[j] - re[j] / (2 * F.grid.r[j])));
        CHECK(m < prev / 8);
        prev = m;
    }
    CHECK(prev < 1e-6);
}

TEST_CASE("de-singularized configuration") {
    auto bd = moving();
    const auto& p = prof();
    for (int k : {6, 8, 10}) {
        FiducialOptions o;
        o.eps = std::pow(2.0, -k);
        auto F = desingularize(bd, p, o);
        CHECK(max_mu_complex(F) <= 1e-15);
        for (int i = 0; i < F.n_t(); i += 7) {
            double kh = khat(bd, F.t[i]);
            double expect = std::cbrt(o.eps / kh) * std::sqrt(bd.S(F.t[i])) / p.a0;
            CHECK(std::sqrt(F.at(i, 0, 0).norm2()) == doctest::Approx(expect).epsilon(1e-12));
            // |Phi^h| increases near the axis
            for (int j = 1; j < F.n_r() && F.rho(i, j) < 3; ++j)
                CHECK(F.at(i, j, 0).norm2() >= F.at(i, j - 1, 0).norm2());
        }
    }
}

TEST_CASE("connection and gradient bounds are uniform") {
    auto bd = moving();
    const auto& p = prof();
    // oracle for sup|A| eps^{2/3}: max over rho of 2 f / rho, times max_t Khat^{2/3}
    double m = 0;
    for (double rho = 0.01; rho <= 12; rho += 0.001) m = std::max(m, 2 * eval_f(p, rho) / rho);
    double kmax = 0;
    for (int i = 0; i < 32; ++i) kmax = std::max(kmax, khat(bd, 2 * M_PI * i / 32));
    const double C = m * std::pow(kmax, 2.0 / 3.0);
    double g0 = 0;
    for (int k : {6, 8, 10}) {
        FiducialOptions o;
        o.eps = std::pow(2.0, -k);
        auto F = desingularize(bd, p, o);
        CHECK(sup_connection(F) * std::pow(o.eps, 2.0 / 3.0) == doctest::Approx(C).epsilon(2e-3));
        double g = grad_bound(F);
        if (g0 == 0) g0 = g;
        CHECK(g == doctest::Approx(g0).epsilon(0.02));
    }
}

TEST_CASE("exponential convergence to the limiting configuration") {
    auto bd = moving();
    const auto& p = prof();
    const double eps = 1.0 / 256, t = 1.1, kh = khat(bd, t);
    // fit log|Phi^h - Phi_0| = a - c r^{3/2}/eps + q log r on rho in [4, 14]
    Eigen::MatrixXd A(40, 3);
    Eigen::VectorXd b(40);
    for (int i = 0; i < 40; ++i) {
        double rho = 4 + 10.0 * i / 39, r = std::pow(eps / kh, 2.0 / 3.0) * rho;
        double h = eval_H_any(p, rho).H;
        double diff = std::sqrt(r * bd.S(t) * (std::pow(std::expm1(h), 2) + std::pow(std::expm1(-h), 2)));
        A(i, 0) = 1;
        A(i, 1) = -std::pow(r, 1.5) / eps;
        A(i, 2) = std::log(r);
        b(i) = std::log(diff);
    }
    Eigen::Vector3d x = A.colPivHouseholderQr().solve(b);
    CHECK(x(1) == doctest::Approx(kh).epsilon(0.05));
}

TEST_CASE("t-independent data has no error beyond discretization") {
    auto bd = BoundaryData::constant(1.0, 0.5);
    const auto& p = prof();
    double prev = INFINITY;
    for (int n : {100, 200, 400}) {
        FiducialOptions o;
        o.eps = 1.0 / 256;
        o.n_r = n;
        auto E = sw_error(desingularize(bd, p, o));
        CHECK(E.l2 < prev / 8);
        CHECK(E.l2_phi0 == 0.0);
        prev = E.l2;
    }
    CHECK(prev < 1e-5);
}

TEST_CASE("spectral and closed-form t-derivatives agree") {
    auto bd = moving();
    const auto& p = prof();
    FiducialOptions o;
    o.eps = 1.0 / 512;
    o.n_r = 400;
    auto F = desingularize(bd, p, o);
    auto E = sw_error(F);
    double m = 0, sc = 0;
    for (int i = 0; i < F.n_t(); i += 3)
        for (int j = 1; j < F.n_r(); j += 11) {
            double num = std::sqrt(std::norm(E.ea1(i, j)) + std::norm(E.ea2(i, j)) + std::norm(E.eb1(i, j)) +
                                   std::norm(E.eb2(i, j)) + E.e_dr(i, j) * E.e_dr(i, j) + E.e_dt(i, j) * E.e_dt(i, j));
            double ex = desing_error_pointwise(bd, p, o.eps, F.t[i], F.grid.r[j]);
            m = std::max(m, std::abs(num - ex));
            sc = std::max(sc, ex);
        }
    CHECK(m <= 1e-4 * sc);
}

TEST_CASE("error scaling across eps") {
    auto bd = moving();
    std::vector<double> eps;
    for (int k = 6; k <= 11; ++k) eps.push_back(std::pow(2.0, -k));
    auto scan = error_scan(bd, prof(), eps, FiducialOptions{});
    CHECK(std::abs(scan.gamma) <= 0.1);
    for (auto& r : scan.rows) {
        CHECK(std::abs(r.tail.p - 1.5) <= 0.1);
        CHECK(r.tail.c > 0);
    }
    // the leading-order limit's own t-error grows like eps^{-1/4}
    std::vector<double> n0;
    for (auto& r : scan.rows) n0.push_back(r.l2_phi0);
    CHECK(loglog_slope(eps, n0) == doctest::Approx(-0.25).epsilon(0.08));
}
