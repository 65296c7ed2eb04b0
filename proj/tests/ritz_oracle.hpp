#pragma once
// Rayleigh-Ritz in a polynomial basis for the flat Cauchy-Riemann mode problems,
// an independent check of the box scheme.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

namespace oracle {

inline void gauss_legendre(int n, double a, double b, std::vector<double>& x, std::vector<double>& w) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n), e(n - 1);
    for (int i = 1; i < n; ++i) e[i - 1] = i / std::sqrt(4.0 * i * i - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
    x.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
        double v = es.eigenvectors()(0, i);
        x[i] = 0.5 * (b - a) * es.eigenvalues()[i] + 0.5 * (a + b);
        w[i] = (b - a) * v * v;
    }
}

// smallest sigma of u' + s k u / r (s = -1 for dbar, +1 for del) from the
// domain norm int (|u'|^2 + k^2|u|^2/r^2 + |u|^2/R^2) R^{2nu} r dr to
// int |.|^2 R^{2nu} r dr, basis (r/R)^{|k|} T_i(2r/R - 1) (1 - r/R if outer)
inline double ritz_cr_sigma(int k, double sgn, bool outer, double nu, double R, int M, int nq = 400) {
    std::vector<double> x, w;
    gauss_legendre(nq, 0, R, x, w);
    Eigen::MatrixXd Aq = Eigen::MatrixXd::Zero(M, M), Gq = Eigen::MatrixXd::Zero(M, M);
    std::vector<double> phi(M), dphi(M), T(M), dT(M), U(M);
    int a = std::abs(k);
    for (int q = 0; q < nq; ++q) {
        double r = x[q], s = r / R, y = 2 * s - 1;
        T[0] = 1;
        U[0] = 1;
        if (M > 1) {
            T[1] = y;
            U[1] = 2 * y;
        }
        for (int i = 2; i < M; ++i) {
            T[i] = 2 * y * T[i - 1] - T[i - 2];
            U[i] = 2 * y * U[i - 1] - U[i - 2];
        }
        for (int i = 0; i < M; ++i) dT[i] = i == 0 ? 0.0 : i * U[i - 1] * 2 / R;
        double env = std::pow(s, a), denv = a == 0 ? 0.0 : a * std::pow(s, a - 1) / R;
        double cut = outer ? 1 - s : 1.0, dcut = outer ? -1 / R : 0.0;
        for (int i = 0; i < M; ++i) {
            phi[i] = env * T[i] * cut;
            dphi[i] = denv * T[i] * cut + env * dT[i] * cut + env * T[i] * dcut;
        }
        double rw = std::pow(1 + r * r, nu) * r * w[q];
        for (int i = 0; i < M; ++i) {
            double li = dphi[i] + sgn * k * phi[i] / r;
            for (int j = 0; j < M; ++j) {
                double lj = dphi[j] + sgn * k * phi[j] / r;
                Aq(i, j) += rw * li * lj;
                Gq(i, j) += rw * (dphi[i] * dphi[j] + (k * k / (r * r) + 1 / (1 + r * r)) * phi[i] * phi[j]);
            }
        }
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Aq, Gq);
    return std::sqrt(std::max(ges.eigenvalues()[0], 0.0));
}

}  // namespace oracle
