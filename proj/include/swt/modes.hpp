#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <string>
#include <vector>

#include "swt/grid.hpp"
#include "swt/spinor.hpp"

namespace swt {

using SpMat = Eigen::SparseMatrix<double>;
using Coef = std::function<cx(double)>;

// Complex radial unknowns u_f(r_j) on every node of a grid, stored as
// consecutive (re, im) pairs.
struct FieldLayout {
    int n_nodes = 0;
    std::vector<std::string> names;
    std::vector<int> modes;  // theta mode carried by each field

    explicit FieldLayout(int nodes = 0) : n_nodes(nodes) {}
    int add(const std::string& name, int mode);
    int size() const { return static_cast<int>(names.size()); }
    int cols() const { return 2 * n_nodes * size(); }
    int col(int f, int j) const { return 2 * (n_nodes * f + j); }
    int find(const std::string& name) const;  // -1 if absent

    cx get(const Eigen::VectorXd& x, int f, int j) const { return {x[col(f, j)], x[col(f, j) + 1]}; }
    void set(Eigen::VectorXd& x, int f, int j, cx v) const {
        x[col(f, j)] = v.real();
        x[col(f, j) + 1] = v.imag();
    }
};

// Complex quantities at the cell midpoints of a grid, each a sum of terms
// z(r) u', z(r) conj(u)' , z(r) u, z(r) conj(u) with u averaged over the cell.
// Used both for the operator (box scheme) and for the integrands of norms.
class MidpointMap {
public:
    MidpointMap(const RadialGrid& g, const FieldLayout& layout, int n_out);

    void deriv(int out, int f, const Coef& z, bool conj = false);
    void deriv(int out, int f, cx z = 1.0, bool conj = false);
    void value(int out, int f, const Coef& z, bool conj = false);
    void value(int out, int f, cx z, bool conj = false);

    int n_out() const { return n_out_; }
    int n_cells() const { return static_cast<int>(mid.size()); }
    int rows() const { return 2 * n_cells() * n_out_; }
    int row(int out, int cell) const { return 2 * (n_cells() * out + cell); }
    SpMat matrix() const;

    // quadrature weights int . r dr for each real row, times weight(r_mid)
    Eigen::VectorXd row_weights(const std::function<double(double)>& weight = nullptr) const;

    std::vector<double> mid, width;

private:
    void push(int r, int c, cx z, bool conj);

    const FieldLayout* layout_;
    int n_out_;
    std::vector<Eigen::Triplet<double>> trip_;
};

// Complex linear constraint rows sum z u_f(r_j) (or z conj(u_f)); two real rows each.
struct ConstraintTerm {
    int field, node;
    cx z = 1.0;
    bool conj = false;
};

class Constraints {
public:
    explicit Constraints(const FieldLayout& layout) : layout_(&layout) {}
    void zero(int f, int node, const std::string& tag);
    void add(const std::vector<ConstraintTerm>& terms, const std::string& tag);
    // a single real row: Re(sum z u) = 0
    void add_real(const std::vector<ConstraintTerm>& terms, const std::string& tag);
    int rows() const { return n_rows_; }
    SpMat matrix() const;
    const std::vector<std::string>& tags() const { return tags_; }

private:
    void push_complex(int r, const ConstraintTerm& t, bool real_only);
    const FieldLayout* layout_;
    int n_rows_ = 0;
    std::vector<std::string> tags_;
    std::vector<Eigen::Triplet<double>> trip_;
};

// Gram matrix of sum_k int w_k |out_k|^2 r dr
struct NormTerm {
    int out;
    std::function<double(double)> weight;
};
SpMat gram(const MidpointMap& m, const std::vector<NormTerm>& terms);

// A discretized first-order radial problem A u = y, B u = 0 measured from the
// domain norm |u|_G to the weighted range norm |y|_W.
struct ModeOperator {
    int k = 0;  // theta mode or sector label
    FieldLayout layout;
    SpMat A, B, G;
    Eigen::VectorXd w;  // range row weights
    std::string bc;
    double nu = 0;

    int cols() const { return static_cast<int>(A.cols()); }
    int rows() const { return static_cast<int>(A.rows()); }
    int constraint_rows() const { return static_cast<int>(B.rows()); }
    // real Fredholm index from counting unknowns, equations and constraints
    int index() const { return cols() - rows() - constraint_rows(); }
};

struct Spectrum {
    Eigen::VectorXd sigma;  // ascending generalized singular values
    int n_free = 0;         // columns left after the constraints
    int n_rows = 0;
    // smallest right singular vectors (in full unknown space), G-orthonormal
    Eigen::MatrixXd right;
};

// Dense generalized SVD: sigma of W^{1/2} A Z L^{-T}, Z spanning ker B and
// Z^T G Z = L L^T. keep = number of right vectors returned.
Spectrum dense_spectrum(const ModeOperator& op, int keep = 0);

// number of singular values below rel * sigma_max, with the gap to the next
struct KernelCount {
    int kernel = 0, cokernel = 0;
    double gap = 0;  // sigma[kernel] / sigma[kernel-1]; inf when kernel = 0
    double sigma_small = 0, sigma_next = 0;
};
KernelCount count_kernel(const Spectrum& s, double rel = 1e-6);

// Smallest generalized singular value of a square constrained system
// [A; B; P] (P = extra pin rows) by Lanczos on the inverse. When pins are
// given, the pinned kernel K is removed G-orthogonally and the result is the
// smallest singular value on the complement.
struct SparseSigma {
    double sigma = 0;
    int iterations = 0;
    bool converged = false;
    Eigen::MatrixXd kernel;  // one column per pin row, solves A k = 0, B k = 0, P k = e_i
};
SparseSigma sparse_sigma_min(const ModeOperator& op, const SpMat& pins = SpMat(), int max_iter = 120,
                             double tol = 1e-10);

// dense copy of the constrained problem with pins appended to B
SpMat vstack(const SpMat& a, const SpMat& b);

}  // namespace swt
