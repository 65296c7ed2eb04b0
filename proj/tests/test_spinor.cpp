#include <doctest.h>

#include <cmath>

#include "gen.hpp"
#include "swt/spinor.hpp"

using namespace swt;

namespace {

double dist(const PointSpinor& a, const PointSpinor& b) { return std::sqrt((a - b).norm2()); }

}  // namespace

TEST_CASE("clifford matrices") {
    PointSpinor e1{1, 0, 0, 0};
    auto g = clifford(forms::dt, e1);
    CHECK(dist(g, PointSpinor{I, 0, 0, 0}) == 0.0);
    CHECK(clifford(FormValue{}, gen::spinor()).norm2() == 0.0);

    for (int i = 0; i < 100; ++i) {
        auto s = gen::spinor();
        double n = std::sqrt(s.norm2());
        for (auto f : {forms::dt, forms::dx, forms::dy})
            CHECK(dist(clifford(f, clifford(f, s)), s * -1.0) <= 1e-15 * n);
        // distinct 1-forms anticommute
        auto ab = clifford(forms::dx, clifford(forms::dy, s)) + clifford(forms::dy, clifford(forms::dx, s));
        CHECK(std::sqrt(ab.norm2()) <= 1e-15 * n);
    }
}

TEST_CASE("moment map examples") {
    PointSpinor e1{1, 0, 0, 0};
    auto m = moment_map(e1, e1);
    CHECK(m.st == doctest::Approx(-1.0));
    CHECK(m.sx == 0.0);
    CHECK(m.sy == 0.0);
    CHECK(moment_map(PointSpinor{}, PointSpinor{}).norm2() == 0.0);

    for (int i = 0; i < 100; ++i) {
        auto s = gen::spinor_re();
        auto mm = moment_map(s, s);
        CHECK(std::abs(mm.st) + std::abs(mm.sx) + std::abs(mm.sy) <= 1e-15 * s.norm2());
    }
}

TEST_CASE("moment map closed forms") {
    for (int i = 0; i < 200; ++i) {
        auto s = gen::spinor();
        auto m = moment_map(s, s);
        double sc = s.norm2();
        CHECK(std::abs(m.s0) <= 1e-14 * sc);
        CHECK(std::abs(m.st - mu_real(s)) <= 1e-14 * sc);
        cx z = -2.0 * I * mu_complex(s);
        CHECK(std::abs(m.sx - z.real()) <= 1e-14 * sc);
        CHECK(std::abs(m.sy - z.imag()) <= 1e-14 * sc);
    }
}

TEST_CASE("real structure") {
    cx c{0.3, -1.2}, d{2.0, 0.7};
    PointSpinor re{c, d, -std::conj(d), std::conj(c)};
    PointSpinor im{c, d, std::conj(d), -std::conj(c)};
    CHECK(dist(real_structure(re), re) == 0.0);
    CHECK(dist(real_structure(im), im * -1.0) == 0.0);

    for (int i = 0; i < 10000; ++i) {
        auto s = gen::spinor();
        double n = std::sqrt(s.norm2());
        CHECK(dist(real_structure(real_structure(s)), s) <= 1e-12 * n);
        auto sp = split_re_im(s);
        CHECK(dist(sp.re + sp.im, s) <= 1e-12 * n);
        CHECK(dist(real_structure(sp.re), sp.re) <= 1e-12 * n);
        CHECK(dist(real_structure(sp.im), sp.im * -1.0) <= 1e-12 * n);
    }
}

TEST_CASE("clifford and moment map are adjoint") {
    for (int i = 0; i < 10000; ++i) {
        auto phi = gen::spinor(), psi = gen::spinor();
        auto b = gen::form();
        double lhs = real_inner(clifford_i(b, phi), psi);
        double rhs = b.dot(moment_map(psi, phi));
        double sc = std::sqrt(phi.norm2() * psi.norm2()) * std::sqrt(b.norm2());
        CHECK(std::abs(lhs - rhs) <= 1e-12 * sc);
    }
}

TEST_CASE("clifford and the real structure") {
    for (int i = 0; i < 10000; ++i) {
        auto s = gen::spinor();
        auto f = gen::form();
        double n = std::sqrt(s.norm2() * f.norm2());
        // real forms commute with tau, imaginary forms anticommute
        CHECK(dist(real_structure(clifford(f, s)), clifford(f, real_structure(s))) <= 1e-12 * n);
        CHECK(dist(real_structure(clifford_i(f, s)), clifford_i(f, real_structure(s)) * -1.0) <= 1e-12 * n);
    }
}

TEST_CASE("moment map against a real spinor") {
    // mu(., Phi) is the adjoint of gamma(.)Phi on imaginary forms, whose image is
    // the -1 eigenspace of tau. So it kills the +1 eigenspace and is injective
    // on the -1 eigenspace.
    for (int i = 0; i < 2000; ++i) {
        auto phi = gen::spinor_re();
        auto re = gen::spinor_re(), im = gen::spinor_im();
        double sc = std::sqrt(phi.norm2());
        CHECK(std::sqrt(moment_map(re, phi).norm2()) <= 1e-14 * sc * std::sqrt(re.norm2()));
        // |mu(psi,Phi)| = |Phi| |psi| for psi in the -1 eigenspace
        CHECK(std::sqrt(moment_map(im, phi).norm2()) ==
              doctest::Approx(sc * std::sqrt(im.norm2())).epsilon(1e-12));
    }
}

TEST_CASE("determinant") {
    CHECK(det_phi(PointSpinor{1, 0, 0, 1}) == cx(1, 0));
    for (int i = 0; i < 100; ++i) {
        auto s = gen::spinor_re();
        CHECK(std::abs(det_phi(s)) == doctest::Approx(0.5 * s.norm2()));
    }
    for (int i = 0; i < 10000; ++i) {
        auto s = gen::spinor();
        double n4 = s.norm2() * s.norm2();
        double mr = mu_real(s), mc = std::abs(mu_complex(s)), dt = std::abs(det_phi(s));
        double rhs = mr * mr + 4 * mc * mc + 4 * dt * dt;
        // Gram identity; the quarter inequality follows
        CHECK(std::abs(rhs - n4) <= 1e-12 * n4);
        CHECK(0.25 * n4 <= rhs * (1 + 1e-12));
    }
}
