#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "swt/grid.hpp"
#include "swt/profile.hpp"
#include "swt/spinor.hpp"

namespace swt {

// c(t), d(t) as finite Fourier sums sum_n z_n e^{i n (2 pi / T) t}
struct BoundaryData {
    std::vector<std::pair<int, cx>> c_modes, d_modes;
    double t_period = 2 * M_PI;

    static BoundaryData constant(cx c, cx d);

    cx c(double t) const;
    cx d(double t) const;
    cx c_dot(double t) const;
    cx d_dot(double t) const;
    double S(double t) const { return std::norm(c(t)) + std::norm(d(t)); }
    double S_dot(double t) const;
    bool t_constant() const;

    // AssumptionViolated if |c|^2 + |d|^2 vanishes at a sample
    void validate(int samples = 512) const;
};

// Scale factor turning K = sqrt(2 S / 3) into the constant used in rho_t.
// With 2/sqrt(3) the de-singularized curvature equation closes exactly
// against the universal profile: Khat^2 = 8 S / 9.
inline const double kKhatFactor = 2.0 / std::sqrt(3.0);

double K_of(const BoundaryData& bd, double t);
double khat(const BoundaryData& bd, double t, double factor = kKhatFactor);

struct FiducialOptions {
    double eps = 1.0 / 64;
    double lambda = 0;  // tube radius; <= 0 means sqrt(eps)
    int n_t = 32;
    int n_r = 400;
    double core = 0.02;  // grid core radius in units of eps^{2/3}
    double khat_factor = kKhatFactor;

    double tube_radius() const { return lambda > 0 ? lambda : std::sqrt(eps); }
};

// Spinor components on (t, r); alpha_1, alpha_2 sit in theta mode 0 and
// beta_1, beta_2 in mode -1. The connection is A = 2 i f dtheta.
struct TubeField {
    double eps = 0, lambda = 0, khat_factor = kKhatFactor, t_period = 2 * M_PI;
    std::vector<double> t;
    RadialGrid grid;
    std::vector<cx> c, d;  // samples of c(t), d(t)
    Eigen::MatrixXcd a1, b1, a2, b2;
    Eigen::MatrixXd f;
    Eigen::MatrixXd rho;  // rho_t(r), zero for the limiting configuration
    bool desingularized = false;

    static constexpr int mode_a = 0, mode_b = -1;

    int n_t() const { return static_cast<int>(t.size()); }
    int n_r() const { return grid.size(); }
    PointSpinor at(int it, int ir, double theta) const;
};

TubeField build_phi0(const BoundaryData& bd, const FiducialOptions& opt);
TubeField desingularize(const BoundaryData& bd, const ProfileH& p, const FiducialOptions& opt);

// spectral derivative in t of each column
Eigen::MatrixXcd spectral_dt(const Eigen::MatrixXcd& u, double period);
Eigen::MatrixXd spectral_dt(const Eigen::MatrixXd& u, double period);

// Error of (Phi/eps, A) in the dimensionally reduced equations
//   (1/eps)(gamma(dt) d_t + D^C_A) Phi = E',   *F_A + mu(Phi,Phi)/(2 eps^2) = E''.
// E_d is the part caused by de-singularizing: E(Phi^h) - E(Phi_0). The limiting
// configuration only carries the leading order term, so its own error
// gamma(dt) d_t Phi_0 / eps is reported separately.
struct SWError {
    // E_d on the grid: spinor part in the theta modes of Phi, and the dt / dr
    // coefficients of the form part (dr is cos(theta) dx + sin(theta) dy)
    Eigen::MatrixXcd ea1, eb1, ea2, eb2;
    Eigen::MatrixXd e_dt, e_dr;
    Eigen::MatrixXcd e_xy;  // mu_x + i mu_y contribution, theta mode -1
    double l2 = 0;          // ||E_d||_{L2(S^1 x D_lambda)}
    double l2_int = 0, l2_ext = 0;  // split at r = eps^{2/3 - gamma'}
    double l2_2d = 0;       // t-free part (2D Dirac + dt curvature), discretization only
    double l2_phi0 = 0;     // ||gamma(dt) d_t Phi_0 / eps||
    double l2_full = 0;     // ||E(Phi^h)||
};

inline constexpr double kGammaPrime = 0.05;

SWError sw_error(const TubeField& cfg);

// |E_d| at a point, from closed forms (any r >= 0, tail beyond rho_max)
double desing_error_pointwise(const BoundaryData& bd, const ProfileH& p, double eps, double t, double r,
                              double factor = kKhatFactor);

// fit log|E| = log C - c r^p / eps + q log r by a grid search over p
struct TailFit {
    double p = 0, c = 0, q = 0, logC = 0, rms = 0;
};
TailFit fit_error_tail(const BoundaryData& bd, const ProfileH& p, double eps, double t, double rho_lo, double rho_hi,
                       int n = 60, double factor = kKhatFactor);

// ||E_d|| across an eps list, log-log slope, and a tail fit at each eps
struct ErrorScanRow {
    double eps, l2, l2_int, l2_ext, l2_phi0;
    TailFit tail;
};
struct ErrorScan {
    std::vector<ErrorScanRow> rows;
    double gamma = 0;  // -slope of log ||E_d|| against log eps
};
ErrorScan error_scan(const BoundaryData& bd, const ProfileH& p, const std::vector<double>& eps_list,
                     FiducialOptions opt, double t_fit = 0.3);

// least-squares slope of log y against log x
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// diagnostics
double sup_connection(const TubeField& cfg);          // max |A| = 2 f / r
double grad_bound(const TubeField& cfg);             // max |nabla_A Phi| r^{1/2}
double max_mu_complex(const TubeField& cfg);         // max |mu_C(Phi,Phi)| / |Phi|^2
double max_mu_oneform(const TubeField& cfg);         // max |1-form part of mu(Phi,Phi)| / |Phi|^2

}  // namespace swt
