#pragma once

#include <functional>
#include <string>
#include <vector>

#include "swt/modes.hpp"
#include "swt/profile.hpp"

namespace swt {

struct DiskGrid {
    int n = 400;        // nodes
    double core = 0.5;  // sinh grid core radius
    RadialGrid make(double r_out) const { return make_sinh_grid(r_out, core, n); }
};

inline double weight_R(double rho) { return std::sqrt(1 + rho * rho); }

// ---------------------------------------------------------------- Cauchy-Riemann

enum class CR { Dbar, Del };

// Per theta-mode operators for 2 dbar = e^{i theta}(d_rho + (i/rho) d_theta) or
// 2 del = e^{-i theta}(d_rho - (i/rho) d_theta), optionally twisted by the
// connection 2 i f dtheta of the profile (profile != nullptr). Boundary rows
// impose Pi^+_[m] = 0 (dbar: modes >= m vanish at r_out) or Pi^-_[m] = 0
// (del: modes <= m vanish). Domain norm int (|grad u|^2 + |u|^2/R^2) R^{2nu},
// range norm int |u|^2 R^{2nu}.
ModeOperator assemble_cr_mode(CR op, int k, int m, double nu, const RadialGrid& g, const ProfileH* p = nullptr);
std::vector<ModeOperator> assemble_cauchy_riemann(CR op, int m, double nu, double r_out, const DiskGrid& dg,
                                                  int kmax = 12, const ProfileH* p = nullptr);

struct CRSummary {
    int kernel = 0, cokernel = 0;  // complex dimensions, summed over modes
    int index = 0;                 // complex index from row counting
    double sigma_min = 0;          // smallest nonzero singular value over all modes
    double min_gap = 0;            // worst kernel gap ratio over modes with a kernel
    std::vector<int> kernel_modes;
};
// modes with a discrete kernel have it removed before taking sigma_min
CRSummary summarize_cr(const std::vector<ModeOperator>& ops, double rel = 1e-6);

// ---------------------------------------------------------------- normal operator

// Radial coefficients of Phi^H: alpha_j = A_j(rho) (mode 0),
// beta_j = B_j(rho) e^{-i theta}; connection 2 i f dtheta.
struct Background {
    std::function<cx(double)> A1, A2, B1, B2;
    std::function<double(double)> f;
    double coupling = 1;  // multiplies the zeroth-order terms
    double phi2(double rho) const {
        return std::norm(A1(rho)) + std::norm(A2(rho)) + std::norm(B1(rho)) + std::norm(B2(rho));
    }
};

// scale-invariant Phi^H for boundary values c, d (AssumptionViolated if both vanish)
Background scale_invariant_background(const ProfileH& p, cx c, cx d);
// the same configuration in physical coordinates r = rho / (Khat/eps)^{2/3}
// and divided by eps, as it enters the un-rescaled normal operator
Background physical_background(const ProfileH& p, cx c, cx d, double eps);
double rho_scale(cx c, cx d, double eps);  // (Khat/eps)^{2/3}

struct NormalOptions {
    bool twisted = true;   // twisted boundary conditions incl. the mu_C boundary row
    double nu = 0;         // weight of the norms
    double t_freq = 0;     // l * 2pi/T for fields e^{i l t} (t-constant data only)
    double weight_len = 1; // R = sqrt(weight_len^2 + r^2) in the norms
};

// Field classes: a class with label n holds alpha_j in theta mode n, beta_j in
// mode n+1, p = a_0 + i a_t in mode n and q = a_y - i a_x in mode n+1. The
// zeroth-order terms pair class n with class -n-2 through complex conjugation,
// so sector m >= 0 consists of classes {m-1, -m-1}.
// Unknown fields: a1,a2,b1,b2,p,q per class, named like "b1[-1]".
ModeOperator assemble_sector(const Background& bg, const RadialGrid& g, int m, const NormalOptions& opt);

// index of a field such as ("b1", -1) in a sector layout
int sector_field(const ModeOperator& op, const std::string& name, int cls);

// ---------------------------------------------------------------- gauge Laplacian

// -Delta + |Phi^H|^2 on theta mode k (finite volumes). Boundary conditions are
// the double-APS ones: h(r_out) = 0 for k >= 0, dbar h = 0 at r_out for k < 0.
class GaugeLaplacian {
public:
    GaugeLaplacian(const std::function<double(double)>& phi2, const RadialGrid& g, int k);

    std::vector<cx> apply(const std::vector<cx>& h) const;
    std::vector<cx> solve(const std::vector<cx>& rhs) const;
    double sigma_min() const;  // L^2 -> L^2, smallest eigenvalue
    const RadialGrid& grid() const { return g_; }
    bool dirichlet_axis() const { return k_ != 0; }
    bool dirichlet_outer() const { return k_ >= 0; }

private:
    RadialGrid g_;
    int k_;
    int lo_, hi_;  // active node range
    std::vector<double> diag_, off_, vol_;
};

struct GaugeSolve {
    std::vector<double> rho;
    std::vector<cx> h;
    double sigma_min = 0;
};
GaugeSolve gauge_laplacian_solve(const ProfileH& p, cx c, cx d, int k, const std::function<cx(double)>& rhs,
                                 double r_out, const DiskGrid& dg);
// min over |k| <= kmax
double gauge_sigma_min(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg, int kmax = 12);

// ---------------------------------------------------------------- kernel

struct KernelElement {
    double r_out = 0;
    cx c, d, k1, k2;
    std::vector<double> rho;
    // beta_t: alpha in mode -1, beta in mode 0, q in mode 0; p = 0
    std::vector<cx> a1, a2, b1, b2, q;
    // gauge corrections of beta_1 deg and beta_2 deg (theta mode -1 coefficients)
    std::vector<cx> h1, h2;
    double hhat_norm = 0;  // norm before normalization
    double slope = 0;      // log-log slope of |beta_t| on [5, r_out/2]
    double max_mu_c = 0;   // max |mu_C(beta_t, Phi^H)|
    double mu_boundary = 0;
    double residual = 0;   // |N beta_t| / |beta_t| in the discrete norms
    double h1_limit = 0;   // |rho h1| at the largest fitted radius
    cx h1_coeff;           // fitted leading coefficient of rho h1
    double h1_remainder = 0;
};

// beta_t = z (k1 beta_1 deg + k2 beta_2 deg) + gauge correction, (k1,k2) ∝ (d, conj c),
// normalized in the Hhat^1 norm.
KernelElement kernel_basis(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg, cx z = 1.0);

// node vector of a kernel element in the layout of sector 0
Eigen::VectorXd kernel_vector(const ModeOperator& sector0, const KernelElement& k);

// complex slice projection <x, beta_t(1)> + i <x, beta_t(i)> over |beta_t|^2,
// x given in the layout of sector 0
cx slice_projection(const ModeOperator& sector0, const KernelElement& kt, const Eigen::VectorXd& x);

// |beta_t|_{L^2} on the disk of radius rho_max (tail extrapolated as rho^{-1/2})
double kernel_l2(const KernelElement& k, double rho_max);

// sector 0 spectrum: smallest singular values with the two-dimensional kernel
// pinned. DegenerateKernel if sigma3 / sigma2 < 1e2.
struct SectorSpectrum {
    int index = 0;
    double sigma1 = 0, sigma2 = 0;  // discrete kernel Rayleigh quotients
    double sigma3 = 0;              // smallest on the G-complement of the kernel
    double rq_analytic = 0;         // |N beta_t|/|beta_t| of the semi-analytic kernel
    double kernel_distance = 0;     // G-distance of the semi-analytic beta_t from the discrete kernel
    double gap = 0;
    Eigen::MatrixXd kernel;         // discrete kernel, G-orthonormal columns
};
SectorSpectrum sector0_spectrum(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg,
                                const NormalOptions& opt = {});

// sigma_min over sectors 1..mmax (all index 0)
double higher_sector_sigma(const ProfileH& p, cx c, cx d, double r_out, const DiskGrid& dg, int mmax = 12,
                           const NormalOptions& opt = {});

// ---------------------------------------------------------------- integration by parts

struct Weitzenbock2D {
    double lhs = 0, rhs = 0;
    double boundary = 0;  // tracked zeta boundary term included in rhs
    double discrepancy = 0;
};
// |N(phi,q,p)|^2 against |N^C(phi,q,0)|^2 + |mu_C|^2 + |grad p|^2 + int |p|^2|Phi^H|^2 + boundary
Weitzenbock2D weitzenbock_2d(const Background& bg, const RadialGrid& g, int m, const Eigen::VectorXd& x);

// smooth random field of sector m satisfying the twisted boundary conditions
// (violate_mu = true: the mu_C boundary row is left unsatisfied)
Eigen::VectorXd random_admissible(const Background& bg, const RadialGrid& g, int m, unsigned seed,
                                  bool violate_mu = false);

}  // namespace swt
