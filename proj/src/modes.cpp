#include "swt/modes.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <limits>
#include <random>

#include "swt/errors.hpp"

namespace swt {

int FieldLayout::add(const std::string& name, int mode) {
    names.push_back(name);
    modes.push_back(mode);
    return size() - 1;
}

int FieldLayout::find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
        if (names[i] == name) return i;
    return -1;
}

MidpointMap::MidpointMap(const RadialGrid& g, const FieldLayout& layout, int n_out) : layout_(&layout), n_out_(n_out) {
    int n = g.size();
    for (int j = 0; j + 1 < n; ++j) {
        mid.push_back(0.5 * (g.r[j] + g.r[j + 1]));
        width.push_back(g.r[j + 1] - g.r[j]);
    }
}

void MidpointMap::push(int r, int c, cx z, bool conj) {
    double zr = z.real(), zi = z.imag();
    if (zr != 0) {
        trip_.emplace_back(r, c, zr);
        trip_.emplace_back(r + 1, c + 1, conj ? -zr : zr);
    }
    if (zi != 0) {
        trip_.emplace_back(r, c + 1, conj ? zi : -zi);
        trip_.emplace_back(r + 1, c, zi);
    }
}

void MidpointMap::deriv(int out, int f, const Coef& z, bool conj) {
    for (int j = 0; j < n_cells(); ++j) {
        cx zz = z(mid[j]) / width[j];
        push(row(out, j), layout_->col(f, j + 1), zz, conj);
        push(row(out, j), layout_->col(f, j), -zz, conj);
    }
}

void MidpointMap::deriv(int out, int f, cx z, bool conj) {
    deriv(out, f, [z](double) { return z; }, conj);
}

void MidpointMap::value(int out, int f, const Coef& z, bool conj) {
    for (int j = 0; j < n_cells(); ++j) {
        cx zz = 0.5 * z(mid[j]);
        push(row(out, j), layout_->col(f, j), zz, conj);
        push(row(out, j), layout_->col(f, j + 1), zz, conj);
    }
}

void MidpointMap::value(int out, int f, cx z, bool conj) {
    value(out, f, [z](double) { return z; }, conj);
}

SpMat MidpointMap::matrix() const {
    SpMat m(rows(), layout_->cols());
    m.setFromTriplets(trip_.begin(), trip_.end());
    return m;
}

Eigen::VectorXd MidpointMap::row_weights(const std::function<double(double)>& weight) const {
    Eigen::VectorXd w(rows());
    for (int o = 0; o < n_out_; ++o)
        for (int j = 0; j < n_cells(); ++j) {
            double v = mid[j] * width[j] * (weight ? weight(mid[j]) : 1.0);
            w[row(o, j)] = w[row(o, j) + 1] = v;
        }
    return w;
}

void Constraints::push_complex(int r, const ConstraintTerm& t, bool real_only) {
    int c = layout_->col(t.field, t.node);
    double zr = t.z.real(), zi = t.z.imag();
    auto put = [&](int rr, int cc, double v) {
        if (v != 0) trip_.emplace_back(rr, cc, v);
    };
    put(r, c, zr);
    put(r, c + 1, t.conj ? zi : -zi);
    if (!real_only) {
        put(r + 1, c, zi);
        put(r + 1, c + 1, t.conj ? -zr : zr);
    }
}

void Constraints::zero(int f, int node, const std::string& tag) { add({{f, node, 1.0, false}}, tag); }

void Constraints::add(const std::vector<ConstraintTerm>& terms, const std::string& tag) {
    for (const auto& t : terms) push_complex(n_rows_, t, false);
    n_rows_ += 2;
    tags_.push_back(tag + ".re");
    tags_.push_back(tag + ".im");
}

void Constraints::add_real(const std::vector<ConstraintTerm>& terms, const std::string& tag) {
    for (const auto& t : terms) push_complex(n_rows_, t, true);
    n_rows_ += 1;
    tags_.push_back(tag);
}

SpMat Constraints::matrix() const {
    SpMat m(n_rows_, layout_->cols());
    m.setFromTriplets(trip_.begin(), trip_.end());
    return m;
}

SpMat gram(const MidpointMap& m, const std::vector<NormTerm>& terms) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(m.rows());
    for (const auto& t : terms)
        for (int j = 0; j < m.n_cells(); ++j) {
            double v = m.mid[j] * m.width[j] * (t.weight ? t.weight(m.mid[j]) : 1.0);
            d[m.row(t.out, j)] += v;
            d[m.row(t.out, j) + 1] += v;
        }
    SpMat M = m.matrix();
    SpMat G = SpMat(M.transpose()) * d.asDiagonal() * M;
    G.prune(0.0);
    return G;
}

SpMat vstack(const SpMat& a, const SpMat& b) {
    if (b.rows() == 0) return a;
    if (a.rows() == 0) return b;
    if (a.cols() != b.cols()) throw Error(Errc::BadConfig, "vstack column mismatch");
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(a.nonZeros() + b.nonZeros());
    for (int k = 0; k < a.outerSize(); ++k)
        for (SpMat::InnerIterator it(a, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < b.outerSize(); ++k)
        for (SpMat::InnerIterator it(b, k); it; ++it) t.emplace_back(a.rows() + it.row(), it.col(), it.value());
    SpMat m(a.rows() + b.rows(), a.cols());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

namespace {

// orthonormal basis of ker B; a column selection when B only pins single unknowns
Eigen::MatrixXd null_basis(const SpMat& B, int cols) {
    if (B.rows() == 0) return Eigen::MatrixXd::Identity(cols, cols);
    Eigen::MatrixXd Bd(B);
    std::vector<int> pinned(cols, 0);
    bool selection = true;
    for (int i = 0; i < Bd.rows() && selection; ++i) {
        int c = -1;
        for (int j = 0; j < cols; ++j)
            if (Bd(i, j) != 0) {
                if (c >= 0) selection = false;
                c = j;
            }
        if (c < 0 || pinned[c]) selection = false;
        if (c >= 0) pinned[c] = 1;
    }
    if (selection) {
        int nf = cols - static_cast<int>(Bd.rows());
        Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(cols, nf);
        for (int j = 0, q = 0; j < cols; ++j)
            if (!pinned[j]) Z(j, q++) = 1;
        return Z;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Bd.transpose());
    int r = static_cast<int>(qr.rank());
    Eigen::MatrixXd Q = qr.householderQ();
    return Q.rightCols(cols - r);
}

}  // namespace

Spectrum dense_spectrum(const ModeOperator& op, int keep) {
    int cols = op.cols();
    Eigen::MatrixXd Z = null_basis(op.B, cols);
    int nf = static_cast<int>(Z.cols());
    Eigen::MatrixXd AZ = Eigen::MatrixXd(op.A) * Z;
    Eigen::MatrixXd GZ = Z.transpose() * (op.G * Z);
    Eigen::LLT<Eigen::MatrixXd> llt(GZ);
    if (llt.info() != Eigen::Success) throw Error(Errc::NonConvergence, "domain Gram matrix not positive definite");
    Eigen::VectorXd sw = op.w.cwiseSqrt();
    // M = W^{1/2} A Z L^{-T}
    Eigen::MatrixXd Mt = llt.matrixL().solve(AZ.transpose());
    Eigen::MatrixXd M = sw.asDiagonal() * Mt.transpose();

    Spectrum out;
    out.n_free = nf;
    out.n_rows = op.rows();
    bool full = op.rows() < nf;
    unsigned flags = keep > 0 ? (full ? Eigen::ComputeFullV : Eigen::ComputeThinV) : 0;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, flags);
    Eigen::VectorXd s = svd.singularValues();
    int ns = static_cast<int>(s.size());
    out.sigma = Eigen::VectorXd::Zero(nf);
    int pad = nf - ns;
    for (int i = 0; i < ns; ++i) out.sigma[pad + i] = s[ns - 1 - i];
    if (keep > 0) {
        keep = std::min(keep, nf);
        const Eigen::MatrixXd& V = svd.matrixV();
        Eigen::MatrixXd Vk(nf, keep);
        // ascending order: padded zeros first (columns past ns), then reversed
        for (int i = 0; i < keep; ++i) {
            int col = i < pad ? ns + i : ns - 1 - (i - pad);
            Vk.col(i) = V.col(col);
        }
        Eigen::MatrixXd Y = llt.matrixU().solve(Vk);  // L^{-T} v
        out.right = Z * Y;
    }
    return out;
}

KernelCount count_kernel(const Spectrum& s, double rel) {
    KernelCount k;
    int n = static_cast<int>(s.sigma.size());
    double smax = n ? s.sigma.maxCoeff() : 0;
    while (k.kernel < n && s.sigma[k.kernel] < rel * smax) ++k.kernel;
    k.cokernel = s.n_rows - (n - k.kernel);
    k.sigma_small = k.kernel > 0 ? s.sigma[k.kernel - 1] : 0;
    k.sigma_next = k.kernel < n ? s.sigma[k.kernel] : 0;
    k.gap = k.kernel > 0 ? k.sigma_next / std::max(k.sigma_small, 1e-16 * smax) : std::numeric_limits<double>::infinity();
    return k;
}

SparseSigma sparse_sigma_min(const ModeOperator& op, const SpMat& pins, int max_iter, double tol) {
    SpMat Af = vstack(vstack(op.A, op.B), pins);
    if (Af.rows() != Af.cols())
        throw Error(Errc::BadConfig, "sparse_sigma_min needs a square constrained system");
    Af.makeCompressed();
    Eigen::SparseLU<SpMat> lu, lut;
    lu.compute(Af);
    if (lu.info() != Eigen::Success) throw Error(Errc::NonConvergence, "sparse LU failed");
    SpMat Aft = Af.transpose();
    Aft.makeCompressed();
    lut.compute(Aft);
    if (lut.info() != Eigen::Success) throw Error(Errc::NonConvergence, "sparse LU (transpose) failed");

    int n = op.rows(), N = static_cast<int>(Af.rows());
    int np = static_cast<int>(pins.rows());
    SparseSigma res;
    Eigen::MatrixXd KGK;
    Eigen::MatrixXd GK;
    if (np > 0) {
        res.kernel.resize(N, np);
        for (int i = 0; i < np; ++i) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
            e[N - np + i] = 1;
            res.kernel.col(i) = lu.solve(e);
        }
        GK = op.G * res.kernel;
        KGK = res.kernel.transpose() * GK;
    }
    Eigen::VectorXd isw = op.w.cwiseSqrt().cwiseInverse();
    auto apply = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
        rhs.head(n) = isw.cwiseProduct(z);
        Eigen::VectorXd x = lu.solve(rhs);
        if (np > 0) x -= res.kernel * KGK.ldlt().solve(GK.transpose() * x);
        Eigen::VectorXd v = lut.solve(Eigen::VectorXd(op.G * x));
        return Eigen::VectorXd(isw.cwiseProduct(v.head(n)));
    };

    std::mt19937_64 rng(12345);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd V(n, max_iter + 1);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = nd(rng);
    v.normalize();
    V.col(0) = v;
    std::vector<double> alpha, beta;
    double theta_prev = 0;
    for (int j = 0; j < max_iter; ++j) {
        Eigen::VectorXd wv = apply(V.col(j));
        double a = V.col(j).dot(wv);
        alpha.push_back(a);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass)
            wv -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * wv);
        double b = wv.norm();
        int m = j + 1;
        Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
        Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(beta.data(), m - 1))
                                    : Eigen::VectorXd();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
        double theta = es.eigenvalues().maxCoeff();
        res.iterations = m;
        if (m > 2 && std::abs(theta - theta_prev) <= tol * theta) {
            res.converged = true;
            theta_prev = theta;
            break;
        }
        theta_prev = theta;
        if (b <= 1e-14 * std::abs(theta)) {
            res.converged = true;
            break;
        }
        beta.push_back(b);
        V.col(j + 1) = wv / b;
    }
    res.sigma = 1.0 / std::sqrt(theta_prev);
    return res;
}

}  // namespace swt
