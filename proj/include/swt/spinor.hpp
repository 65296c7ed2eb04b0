#pragma once

#include <complex>

namespace swt {

using cx = std::complex<double>;
inline constexpr cx I{0.0, 1.0};

// (a1,b1) (x) 1 + (a2,b2) (x) j
struct PointSpinor {
    cx a1{}, b1{}, a2{}, b2{};

    double norm2() const { return std::norm(a1) + std::norm(b1) + std::norm(a2) + std::norm(b2); }

    PointSpinor operator+(const PointSpinor& o) const { return {a1 + o.a1, b1 + o.b1, a2 + o.a2, b2 + o.b2}; }
    PointSpinor operator-(const PointSpinor& o) const { return {a1 - o.a1, b1 - o.b1, a2 - o.a2, b2 - o.b2}; }
    PointSpinor operator*(cx z) const { return {z * a1, z * b1, z * a2, z * b2}; }
    bool operator==(const PointSpinor&) const = default;
};

// Coefficients of 1, dt, dx, dy. For i*R-valued forms these hold the number
// multiplying i.
struct FormValue {
    double s0 = 0, st = 0, sx = 0, sy = 0;

    double dot(const FormValue& o) const { return s0 * o.s0 + st * o.st + sx * o.sx + sy * o.sy; }
    double norm2() const { return dot(*this); }
    FormValue operator+(const FormValue& o) const { return {s0 + o.s0, st + o.st, sx + o.sx, sy + o.sy}; }
    FormValue operator*(double c) const { return {c * s0, c * st, c * sx, c * sy}; }
};

// real Hermitian pairing Re <u, v>
double real_inner(const PointSpinor& u, const PointSpinor& v);

// gamma(f) s for a real-valued form f
PointSpinor clifford(const FormValue& f, const PointSpinor& s);

// gamma(i a) s for the imaginary form i a
PointSpinor clifford_i(const FormValue& a, const PointSpinor& s);

// polarized, extended moment map mu(s, phi) (real coefficients of i);
// adjoint of a -> clifford_i(a, phi)
FormValue moment_map(const PointSpinor& s, const PointSpinor& phi);

PointSpinor real_structure(const PointSpinor& s);

struct ReImSplit {
    PointSpinor re, im;
};
ReImSplit split_re_im(const PointSpinor& s);

cx det_phi(const PointSpinor& s);

// sum conj(alpha) beta over both copies; mu_x + i mu_y of mu(s,s) is -2i times this
cx mu_complex(const PointSpinor& s);
// sum |beta|^2 - |alpha|^2, the dt slot of mu(s,s)
double mu_real(const PointSpinor& s);

namespace forms {
inline constexpr FormValue one{1, 0, 0, 0};
inline constexpr FormValue dt{0, 1, 0, 0};
inline constexpr FormValue dx{0, 0, 1, 0};
inline constexpr FormValue dy{0, 0, 0, 1};
}  // namespace forms

}  // namespace swt
