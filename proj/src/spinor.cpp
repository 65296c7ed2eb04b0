#include "swt/spinor.hpp"

namespace swt {

namespace {

// gamma(dt) = diag(i,-i), gamma(dx) = [[0,-1],[1,0]], gamma(dy) = [[0,i],[i,0]]
void apply2(const FormValue& f, cx a, cx b, cx& oa, cx& ob) {
    oa = f.s0 * a + f.st * I * a - f.sx * b + f.sy * I * b;
    ob = f.s0 * b - f.st * I * b + f.sx * a + f.sy * I * a;
}

}  // namespace

double real_inner(const PointSpinor& u, const PointSpinor& v) {
    return std::real(std::conj(u.a1) * v.a1 + std::conj(u.b1) * v.b1 + std::conj(u.a2) * v.a2 +
                     std::conj(u.b2) * v.b2);
}

PointSpinor clifford(const FormValue& f, const PointSpinor& s) {
    PointSpinor out;
    apply2(f, s.a1, s.b1, out.a1, out.b1);
    apply2(f, s.a2, s.b2, out.a2, out.b2);
    return out;
}

PointSpinor clifford_i(const FormValue& a, const PointSpinor& s) { return clifford(a, s) * I; }

FormValue moment_map(const PointSpinor& s, const PointSpinor& phi) {
    return {real_inner(clifford_i(forms::one, phi), s), real_inner(clifford_i(forms::dt, phi), s),
            real_inner(clifford_i(forms::dx, phi), s), real_inner(clifford_i(forms::dy, phi), s)};
}

PointSpinor real_structure(const PointSpinor& s) {
    return {std::conj(s.b2), -std::conj(s.a2), -std::conj(s.b1), std::conj(s.a1)};
}

ReImSplit split_re_im(const PointSpinor& s) {
    PointSpinor t = real_structure(s);
    return {(s + t) * 0.5, (s - t) * 0.5};
}

cx det_phi(const PointSpinor& s) { return s.a1 * s.b2 - s.a2 * s.b1; }

cx mu_complex(const PointSpinor& s) { return std::conj(s.a1) * s.b1 + std::conj(s.a2) * s.b2; }

double mu_real(const PointSpinor& s) {
    return std::norm(s.b1) + std::norm(s.b2) - std::norm(s.a1) - std::norm(s.a2);
}

}  // namespace swt
