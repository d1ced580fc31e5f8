#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "scalar_classical.hpp"

namespace mcharlier {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Extended-precision lane. Residual evaluators assemble both sides of an
// identity in long double so the measurement does not drown in the double
// rounding of large intermediate entries; public values stay double.
using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

inline double maxabs(const Matrix& M) { return M.cwiseAbs().maxCoeff(); }

inline double maxabs_l(const MatrixL& M) {
    return static_cast<double>(M.cwiseAbs().maxCoeff());
}

// 1-based entry access matching the row/column conventions of the formulas.
inline double at1(const Matrix& M, int j, int k) { return M(j - 1, k - 1); }

// Model parameters. mu is one fixed representative of the ratio-defined
// family mu_j; only ratios mu_j/mu_k ever enter any public quantity, and a
// test pins that invariance down.
struct ModelParams {
    int N = 2;
    double a = 1.0;
    int lambda = 0;
    Vector mu;
    Vector deltaVec;
};

// delta_k at family parameter lam: (a/2)^lam (lam+k-1)!/(k-1)!.
inline double delta_entry(double a, int lam, int k) {
    return std::pow(a / 2.0, lam) * pochhammer(k, lam);
}

inline ModelParams build_params(int N, double a, int lambda) {
    if (N < 2) throw std::domain_error("build_params: N must be >= 2");
    if (a <= 0.0) throw std::domain_error("build_params: a must be > 0");
    if (lambda < 0) throw std::domain_error("build_params: lambda must be >= 0");
    ModelParams p;
    p.N = N;
    p.a = a;
    p.lambda = lambda;
    p.mu = Vector(N);
    p.deltaVec = Vector(N);
    for (int j = 1; j <= N; ++j) {
        p.mu(j - 1) = std::pow(a, -j / 2.0) / std::sqrt(factorial(N - j));
        p.deltaVec(j - 1) = delta_entry(a, lambda, j);
    }
    return p;
}

// Same model, different family parameter. Keeps mu (and hence its gauge).
inline ModelParams with_lambda(const ModelParams& p, int lambda) {
    if (lambda < 0) throw std::domain_error("with_lambda: lambda must be >= 0");
    ModelParams q = p;
    q.lambda = lambda;
    for (int k = 1; k <= p.N; ++k) q.deltaVec(k - 1) = delta_entry(p.a, lambda, k);
    return q;
}

inline Matrix matJ(const ModelParams& p) {
    Matrix J = Matrix::Zero(p.N, p.N);
    for (int j = 1; j <= p.N; ++j) J(j - 1, j - 1) = j;
    return J;
}

inline Matrix matT(const ModelParams& p, int lam) {
    Matrix T = Matrix::Zero(p.N, p.N);
    for (int k = 1; k <= p.N; ++k) T(k - 1, k - 1) = delta_entry(p.a, lam, k);
    return T;
}

inline Matrix matT(const ModelParams& p) { return matT(p, p.lambda); }

// Strictly subdiagonal structure matrix, A_{j+1,j} = mu_{j+1}/mu_j.
inline Matrix matA(const ModelParams& p) {
    Matrix A = Matrix::Zero(p.N, p.N);
    for (int j = 1; j < p.N; ++j) A(j, j - 1) = p.mu(j) / p.mu(j - 1);
    return A;
}

// (I+X)^k for nilpotent X (X^N = 0) and any integer k, via the exact
// N-term generalized binomial. No eigendecomposition, no branch on sign.
template <typename Mat>
Mat nilpotent_ipow_t(const Mat& X, int k) {
    using Scalar = typename Mat::Scalar;
    const int N = static_cast<int>(X.rows());
    Mat R = Mat::Identity(N, N);
    Mat Xs = Mat::Identity(N, N);
    Scalar coef = 1;
    for (int s = 1; s < N; ++s) {
        Xs = Xs * X;
        coef *= Scalar(k - s + 1) / Scalar(s);
        R += coef * Xs;
    }
    return R;
}

inline Matrix nilpotent_ipow(const Matrix& X, int k) { return nilpotent_ipow_t(X, k); }

inline Matrix ipa_pow(const ModelParams& p, int k) { return nilpotent_ipow(matA(p), k); }

inline MatrixL matJ_l(const ModelParams& p) {
    return matJ(p).cast<long double>();
}

inline MatrixL matA_l(const ModelParams& p) {
    MatrixL A = MatrixL::Zero(p.N, p.N);
    for (int j = 1; j < p.N; ++j)
        A(j, j - 1) = static_cast<long double>(p.mu(j))
                    / static_cast<long double>(p.mu(j - 1));
    return A;
}

inline MatrixL matT_l(const ModelParams& p, int lam) {
    MatrixL T = MatrixL::Zero(p.N, p.N);
    long double half_a = static_cast<long double>(p.a) / 2.0L;
    for (int k = 1; k <= p.N; ++k) {
        long double d = 1.0L;
        for (int i = 0; i < lam; ++i) d *= half_a * (k + i);
        T(k - 1, k - 1) = d;
    }
    return T;
}

inline MatrixL ipa_pow_l(const ModelParams& p, int k) {
    return nilpotent_ipow_t(matA_l(p), k);
}

// (N+m-J)^{-1} J A^T: strictly upper triangular with
// entries j*sqrt(N-j)/(sqrt(a)(N+m-j)) on the superdiagonal. Only the
// denominators j < N appear; the last row of J A^T is zero.
inline Matrix script_A(const ModelParams& p, double m) {
    for (int j = 1; j < p.N; ++j)
        if (p.N + m - j == 0.0)
            throw std::domain_error("script_A: N+m-J singular");
    Matrix R = Matrix::Zero(p.N, p.N);
    for (int j = 1; j < p.N; ++j)
        R(j - 1, j) = j * (p.mu(j) / p.mu(j - 1)) / (p.N + m - j);
    return R;
}

// Unipotent lower triangular L(x)_{j,k} = (mu_j/mu_k)(-a)^{j-k} c_{j-k}(x)/(j-k)!.
inline Matrix matL(const ModelParams& p, int x) {
    Matrix L = Matrix::Zero(p.N, p.N);
    for (int j = 1; j <= p.N; ++j)
        for (int k = 1; k <= j; ++k) {
            int d = j - k;
            L(j - 1, k - 1) = (p.mu(j - 1) / p.mu(k - 1)) * std::pow(-p.a, d)
                            * charlier(d, p.a, x) / factorial(d);
        }
    return L;
}

// Closed-form inverse: entries (mu_j/mu_k) a^{j-k} c^(-a)_{j-k}(-x)/(j-k)!.
inline Matrix matL_inv(const ModelParams& p, int x) {
    Matrix L = Matrix::Zero(p.N, p.N);
    for (int j = 1; j <= p.N; ++j)
        for (int k = 1; k <= j; ++k) {
            int d = j - k;
            L(j - 1, k - 1) = (p.mu(j - 1) / p.mu(k - 1)) * std::pow(p.a, d)
                            * charlier(d, -p.a, -x) / factorial(d);
        }
    return L;
}

// Determinant of the block Vandermonde matrix with block rows
// (I, M_s, M_s^2, ..., M_s^x), one row per input block, via dense LU.
inline double block_vandermonde_det(const std::vector<Matrix>& blocks) {
    const int m = static_cast<int>(blocks.size());
    if (m == 0) return 1.0;
    const int N = static_cast<int>(blocks[0].rows());
    for (const Matrix& M : blocks)
        if (M.rows() != N || M.cols() != N)
            throw std::domain_error("block_vandermonde_det: blocks must be square, same size");
    Matrix V(m * N, m * N);
    for (int s = 0; s < m; ++s) {
        Matrix P = Matrix::Identity(N, N);
        for (int t = 0; t < m; ++t) {
            V.block(s * N, t * N, N, N) = P;
            if (t + 1 < m) P = P * blocks[s];
        }
    }
    return V.determinant();
}

} // namespace mcharlier
