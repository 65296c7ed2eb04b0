#pragma once

#include <vector>

namespace swt {

// Distinguished solution of (rho d/drho)^2 H = (9/8) rho^3 sinh(2H), i.e. the
// radial equation in tau = rho^{3/2}. Stored on a uniform grid in x = log rho.
struct ProfileH {
    std::vector<double> rho;
    std::vector<double> H;
    std::vector<double> dH;  // dH/drho
    std::vector<double> f;   // 1/4 + rho dH / 2
    double a0 = 0;
    double rho_max = 0;
    double residual_norm = 0;

    // grid in x = log rho and x-derivatives used for interpolation
    double x0 = 0, hx = 0;
    std::vector<double> Hx;
    double tail_amp = 0;  // H ~ tail_amp * K0(rho^{3/2}) beyond rho_max

    double w0() const;  // H + log(rho)/2 at rho = 0, equals -log(a0)
};

// rhs of H_xx = F(x, H) in x = log rho
double profile_rhs(double x, double H);

ProfileH solve_profile(double rho_max, int n_points, double tol);

struct HVal {
    double H, dH;
};

HVal eval_H(const ProfileH& p, double rho);
double eval_f(const ProfileH& p, double rho);
// df/drho, exact through the equation: f_x = F/2
double eval_df(const ProfileH& p, double rho);
// W = H + log(rho)/2 and dW/drho; finite at rho = 0
HVal eval_W(const ProfileH& p, double rho);
// asymptotic tail for rho >= rho_max
HVal eval_tail(const ProfileH& p, double rho);
// any rho >= 0, switching to the tail past rho_max
HVal eval_H_any(const ProfileH& p, double rho);
double eval_f_any(const ProfileH& p, double rho);
double eval_df_any(const ProfileH& p, double rho);
HVal eval_W_any(const ProfileH& p, double rho);

// Numerov stencil residual divided by hx^2 on interior nodes of a uniform x grid
std::vector<double> numerov_residual(double x0, double hx, const std::vector<double>& H);

// residual of the continuous equation using 6th order differences of the stored
// solution, a measure of truncation error
double truncation_residual(const ProfileH& p);

}  // namespace swt
