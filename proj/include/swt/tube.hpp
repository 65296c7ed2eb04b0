#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "swt/disk.hpp"
#include "swt/fiducial.hpp"
#include "swt/modes.hpp"
#include "swt/profile.hpp"

namespace swt {

// ---------------------------------------------------------------- Euclidean modes

// psi_l = sqrt|l| e^{i l t} e^{-|l| r} (e^{-i theta}, sgn l) / sqrt r for the flat
// connection A0 (f = 1/4), sampled on a geometric grid in [r_min, r_max].
struct EuclideanMode {
    int ell = 0;
    std::vector<double> r;
    std::vector<cx> alpha, beta;  // alpha in theta mode -1, beta in mode 0
    double residual = 0;          // |D psi|_{L2} / |psi / r|_{L2} on the grid
    double l2 = 0;                // |psi|_{L2} over the plane per unit length in t
};
// ZeroMode for ell = 0
EuclideanMode euclidean_cokernel(int ell, int n, double r_min = 1e-4, double r_max = 0);

// |grad psi_l|_{L2} over the annulus h <= r <= 2h (per unit length in t)
double annulus_gradient(int ell, double h, int n = 81);

// Axis-regular solution of the (class -1, l) mode system for the connection
// with f = 0 on r < rho0 and f = 1/4 beyond, and a fit of log|psi| = C + g r + q log r.
struct GrowthFit {
    int ell = 0;
    double rho0 = 0;
    double growth = 0, power = 0, rms = 0;
    double det_decay = 0;  // normalized matching determinant against the decaying solution
};
GrowthFit matched_growth_mode(int ell, double rho0, double fit_lo = 0, double fit_hi = 0);

// ---------------------------------------------------------------- boundary frame

// Boundary values (a1, a2, b1, b2) of the class carrying theta modes -1 / 0.
using Bvec = std::array<cx, 4>;

// J-complex multiplication: alpha components conjugate-linear, beta linear
Bvec jmul(cx z, const Bvec& x);
// Omega(x, y) = Re sum (-i conj(x_b) y_a - i conj(x_a) y_b)
double omega(const Bvec& x, const Bvec& y);

struct BoundaryFrame {
    Bvec v1, v2, w1, w2;
    cx A[2], B[2];  // background coefficients at the boundary
    double c_alpha = 0, c_beta = 0;  // w1 coefficient = c_alpha mu^alpha - c_beta mu^beta
    cx mu_alpha(const Bvec& x) const;  // sum conj(a_j) B_j
    cx mu_beta(const Bvec& x) const;   // sum conj(A_j) b_j
    cx mu(const Bvec& x) const { return mu_alpha(x) + mu_beta(x); }
    cx w1_coeff(const Bvec& x) const { return c_alpha * mu_alpha(x) - c_beta * mu_beta(x); }
};
BoundaryFrame boundary_frame(const Background& bg, double R);

// smallest integer >= eps^{-1/2} / L0
int low_mode_cut(double eps, double L0);

// ---------------------------------------------------------------- t-constant blocks

enum class TubeBC {
    Mixed,  // b1 coefficient on |l| > cut, slice projection P^l on |l| <= cut
    Pure,   // b1 coefficient on every mode
    None,   // only the per-slice twisted conditions
};

struct TubeOptions {
    double eps = 1.0 / 64;
    double nu = 0.24;
    double L0 = 8;
    double lambda = 0;   // tube radius; <= 0 means sqrt(eps)
    int n_r = 120;       // radial nodes
    double core = 0.5;   // grid core radius in the invariant scale
    int mmax = 3;        // theta sectors 1..mmax besides sector 0
    int ell_factor = 4;  // l_max = ell_factor * low_mode_cut
    TubeBC bc = TubeBC::Mixed;

    double tube_radius() const;
    int cut() const { return low_mode_cut(eps, L0); }
    int ell_max() const { return ell_factor * cut(); }
};

// One Fourier block e^{i l t} of theta sector m for t-constant (c, d), in the
// invariant scale: rho_out = lambda (Khat/eps)^{2/3}, t frequency l (eps/Khat)^{2/3}.
// Norms are those of H^1_{eps,nu} and L^2_nu up to a common factor.
struct TubeBlock {
    int m = 0, ell = 0;
    double rho_out = 0, t_freq = 0;
    ModeOperator op;
    int removed = 0, added = 0;  // b1 rows dropped and P^l rows added against the pure conditions
};
TubeBlock tube_block(const ProfileH& p, cx c, cx d, int m, int ell, const TubeOptions& opt);

struct IndexAudit {
    int blocks = 0;
    int index_sum = 0;     // sum of block indices
    int max_abs_index = 0;
    int removed = 0, added = 0;
};
IndexAudit index_audit(const ProfileH& p, cx c, cx d, const TubeOptions& opt);

struct ApproxKernelRow {
    int ell = 0;
    double t_freq = 0;
    double ratio = 0;  // |L(e^{ilt} beta_t)| / |e^{ilt} beta_t|_{H^1}
};
std::vector<ApproxKernelRow> approx_kernel_profile(const ProfileH& p, cx c, cx d, const TubeOptions& opt,
                                                   const std::vector<int>& ells);

struct ScanRow {
    double eps = 0;
    int cut = 0, ell_max = 0;
    double rho_out = 0;
    double sigma_min = 0;  // over all blocks
    int arg_m = 0, arg_ell = 0;
    double sigma_pure = 0;  // pure conditions, l >= 1
    int index_sum = 0;
};
struct InvertibilityScan {
    std::vector<ScanRow> rows;
    double p = 0;       // fitted sigma_min ~ eps^p
    double p_pure = 0;  // the same with pure conditions
};
InvertibilityScan invertibility_scan(const ProfileH& p, cx c, cx d, const std::vector<double>& eps_list,
                                     TubeOptions opt);

// ---------------------------------------------------------------- t-dependent collocation

// Fields on N_t equally spaced slices (N_t odd), physical radius in [0, lambda].
// Per slice the unknowns are those of the listed theta sectors; d/dt is the
// spectral differentiation matrix. Rows are cell midpoints of every slice.
struct TubeSystem {
    BoundaryData bd;
    double eps = 0, lambda = 0, nu = 0, L0 = 8;
    double weight_len = 0;  // kappa eps^{2/3}
    double dt = 0;          // t quadrature weight
    int n_t = 0;
    std::vector<double> t;
    RadialGrid grid;
    std::vector<int> sectors;
    FieldLayout local;             // unknowns of one slice
    std::vector<int> kind;         // 0..5 = a1, a2, b1, b2, p, q per local field
    std::vector<int> row_sector;   // local output index -> position in sectors
    int local_cols = 0, local_rows = 0;
    Eigen::MatrixXd D;             // spectral d/dt
    std::vector<Background> bg;    // per slice, Phi^h / eps
    std::vector<double> ls;        // (Khat/eps)^{2/3} per slice
    ProfileH profile;

    SpMat N;   // normal operator, block diagonal in t
    SpMat N1;  // its first-order part (zeroth-order terms switched off)
    SpMat S;   // sigma_t d_t
    SpMat B;   // constraint rows
    std::vector<std::string> tags;
    SpMat G;   // H^1_{eps,nu} Gram matrix
    Eigen::VectorXd w;  // L^2_nu row weights
    SpMat Mt;  // cell averages of d_t u, one complex row per (slice, field, cell)
    Eigen::VectorXd wt; // their weights

    int cols() const { return n_t * local_cols; }
    int rows() const { return n_t * local_rows; }
    int col(int it, int f, int j) const { return it * local_cols + local.col(f, j); }
    int find(const std::string& name) const { return local.find(name); }
    SpMat L() const { return N + S; }
    ModeOperator mode_operator() const;  // A = L, B, G, w
};

struct CollocationOptions {
    int n_t = 9;
    int n_r = 60;
    double core = 0.5;  // in units of kappa eps^{2/3}
    std::vector<int> sectors{0};
    TubeBC bc = TubeBC::Mixed;
};
TubeSystem assemble_tube(const BoundaryData& bd, const ProfileH& p, const TubeOptions& opt,
                         const CollocationOptions& co);

// kernel elements beta_t on each slice (sector 0 layout of the slice, physical grid)
std::vector<Eigen::VectorXd> slice_kernels(const TubeSystem& sys, const ProfileH& p, cx z = 1.0);
// slice projection pi_t of each slice of x
std::vector<cx> slice_projections(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x);
// Fourier coefficients of pi_t, l = -(n_t-1)/2 .. (n_t-1)/2
std::vector<cx> fourier_coeffs(const std::vector<cx>& samples);

// global vector from per-slice local vectors
Eigen::VectorXd stack_slices(const TubeSystem& sys, const std::vector<Eigen::VectorXd>& xs);
Eigen::VectorXd slice(const TubeSystem& sys, const Eigen::VectorXd& x, int it);

double l2_norm(const TubeSystem& sys, const Eigen::VectorXd& y);   // rows
double h1_norm(const TubeSystem& sys, const Eigen::VectorXd& x);   // unknowns

// t derivative of the background coefficients (closed form)
Background background_dt(const BoundaryData& bd, const ProfileH& p, double eps, double t);

// smooth random field of the sectors of sys, band limited in t
Eigen::VectorXd random_tube_field(const TubeSystem& sys, unsigned seed, int t_modes = 2);
// projection onto the constraint rows (Euclidean least change)
Eigen::VectorXd project_constraints(const TubeSystem& sys, const Eigen::VectorXd& x);

struct Weitzenbock3D {
    double lhs = 0;       // |L x|^2
    double rhs = 0;       // |N x|^2 + |S x|^2 + <x, K x> + boundary
    double boundary = 0;
    double cross = 0;     // <x, K x>
    double discrepancy = 0;  // |lhs - rhs| / lhs
};
Weitzenbock3D weitzenbock_3d(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x);

// relative difference between the discrete anticommutator {S, N} x and the
// closed form K x = sigma (dN/dt) x
double anticommutator_error(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& x);

// sup |int Omega(x, d_t x) dt| eps^{1/2} L0 / |x|^2_{L2(boundary)} over boundary
// data in the frame: v1, v2 parts with |l| <= l_max and w1 part with |l| <= cut
double boundary_pairing_constant(const BoundaryData& bd, const ProfileH& p, const TubeOptions& opt, int n_t);

struct AlmostOrthogonality {
    double lhs = 0, rhs = 0;  // 1/2(|d_t(eta beta)|^2 + |d_t q_perp|^2), |d_t q|^2 + eps^{5/6}|q_perp/R|^2
};
AlmostOrthogonality almost_orthogonality(const TubeSystem& sys, const ProfileH& p, const Eigen::VectorXd& q);

// |x|^2_{L2(boundary)} / (eps^{1/2} (|grad x|^2 + |x/R|^2)), sector fields of sys
double trace_ratio(const TubeSystem& sys, const Eigen::VectorXd& x);

// ---------------------------------------------------------------- nonlinear terms

// Q(x) = (gamma(i a) psi, mu(psi, psi)/2) at the cell midpoints (cell averaged fields)
Eigen::VectorXd quadratic(const TubeSystem& sys, const Eigen::VectorXd& x);
// 2 B(x, y), the symmetric bilinear form with Q(x) = B(x, x)
Eigen::VectorXd bilinear(const TubeSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& y);
// y -> 2 B(X, y) as a matrix, X = x (cell averages) or, if exact_bg, Phi^h / eps at midpoints
SpMat bilinear_matrix(const TubeSystem& sys, const Eigen::VectorXd& x, bool exact_bg = false);
// y -> Re <i Phi^h/eps, psi_y> in the a_0 slot
SpMat gauge_matrix(const TubeSystem& sys);

// Phi^h / eps and Phi_0 / eps as unknown vectors (needs sector 1)
Eigen::VectorXd background_vector(const TubeSystem& sys, bool limiting = false);
// *F of the background connection at the midpoint rows (time_part: the f_t term)
Eigen::VectorXd curvature_vector(const TubeSystem& sys, bool time_part = true);

struct NewtonOptions {
    double tol = 1e-9;  // on |F| / |F_0|
    double abs_tol = 1e-12;
    int max_iter = 12;
    bool check_contraction = true;
    int lipschitz_samples = 6;
    // subtract the discrete residual of the frozen 2D equations on each slice,
    // which vanishes in the continuum
    bool defect_correction = true;
};
struct NewtonResult {
    std::vector<double> residuals;  // |F(x_k)|_{L2}
    Eigen::VectorXd x;
    double e0 = 0;                  // |E^(0)|_{L2}
    double correction_h1 = 0;
    double inv_norm = 0;            // 1 / sigma_min of the linearization
    double lipschitz = 0;           // measured sup |2B(u,v)| / (|u| |v|)
    double kantorovich = 0;         // inv_norm * |first step| * lipschitz
    double leak = 0;                // |Q(xb + x) - Q(xb) in sectors not solved| / |F_0|
    bool converged = false;
};
// F(x) = SW(Phi^h/eps + x) - sigma d_t Phi_0/eps on the sectors of sys
Eigen::VectorXd newton_residual(const TubeSystem& sys, const Eigen::VectorXd& x, const NewtonOptions& opt = {});
NewtonResult newton_correct(const TubeSystem& sys, const NewtonOptions& opt = {});

}  // namespace swt
