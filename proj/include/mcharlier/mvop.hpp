#pragma once

// Matrix-valued Charlier orthogonal polynomials: explicit entrywise
// construction, squared norms, recurrence coefficients, lowering/raising
// difference operators, a Rodrigues formula, and a Gram-Schmidt oracle
// that depends only on the weight moments.
//
// Conventions shared by the whole module:
//   * P_n is monic of degree n, orthogonal for the weight in weight.hpp;
//     P_n vanishes identically for n < 0.
//   * xi(j, k, n) are the connection coefficients expressing the conjugated
//     polynomial R_n(x) entrywise through scalar Charlier polynomials,
//     R_n(x)_{jk} = xi(j,k,n) c_{n+j-k}(x); they vanish outside
//     1 <= j,k <= N and n + j - k >= 0, which makes R_n anti-banded.
//   * Identity-residual helpers return max-abs gaps measured relative to the
//     identity's own scale: several of the quantities below grow factorially
//     in n, so an absolute tolerance in double precision would be
//     unattainable for reasons of floating-point grain, not of correctness.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "weight.hpp"

namespace mcharlier {

// ---------------------------------------------------------------------------
// Matrix polynomials
// ---------------------------------------------------------------------------

// How a matrix polynomial is evaluated at a matrix argument. Coefficients
// never commute with the argument, so the two matrix conventions differ:
//   LeftMatrixVar :  sum_k X^k coeffs[k]
//   RightMatrixVar:  sum_k coeffs[k] X^k
// ScalarVar marks a polynomial meant for scalar arguments only.
enum class VarSide { ScalarVar, LeftMatrixVar, RightMatrixVar };

struct MatrixPolynomial {
    std::vector<Matrix> coeffs;  // degree-ascending, coeffs[k] multiplies x^k
    VarSide side = VarSide::ScalarVar;

    int degree() const { return static_cast<int>(coeffs.size()) - 1; }

    Matrix eval(double x) const {
        if (coeffs.empty()) throw std::domain_error("MatrixPolynomial: empty");
        Matrix r = coeffs.back();
        for (int k = degree() - 1; k >= 0; --k) r = x * r + coeffs[k];
        return r;
    }

    Matrix eval(const Matrix& X) const {
        if (coeffs.empty()) throw std::domain_error("MatrixPolynomial: empty");
        if (side == VarSide::ScalarVar)
            throw std::domain_error("MatrixPolynomial: scalar polynomial evaluated at a matrix");
        Matrix r = coeffs.back();
        for (int k = degree() - 1; k >= 0; --k)
            r = (side == VarSide::LeftMatrixVar) ? Matrix(X * r + coeffs[k])
                                                 : Matrix(r * X + coeffs[k]);
        return r;
    }
};

namespace detail {

inline long double fact_l(int m) {
    long double f = 1.0L;
    for (int t = 2; t <= m; ++t) f *= t;
    return f;
}

inline long double poch_l(long double z, int m) {
    long double r = 1.0L;
    for (int t = 0; t < m; ++t) r *= (z + t);
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Connection coefficients xi
// ---------------------------------------------------------------------------

// xi with an explicit branch override for cross-checking the two equivalent
// hypergeometric expressions: branch > 0 forces the n + j >= N form,
// branch < 0 forces the n + j < N form, branch == 0 selects naturally.
// Both forms terminate and agree wherever their parameter domains overlap.
inline double xi_branch(const ModelParams& p, int j, int k, int n, int branch) {
    if (j < 1 || k < 1 || j > p.N || k > p.N || n < 0 || n + j - k < 0) return 0.0;
    const int N = p.N;
    const int lam = p.lambda;
    using detail::fact_l;
    using detail::poch_l;

    long double X = sqrtl(fact_l(N - k) / fact_l(N - j));
    X *= ((n + j - 1) % 2 != 0) ? -1.0L : 1.0L;
    X *= powl(static_cast<long double>(p.a), n + (j - k) / 2.0L);
    X *= fact_l(lam + n) * fact_l(N + lam - j)
       / (fact_l(j - 1) * fact_l(lam) * fact_l(N + lam + n - j));

    const bool high = (branch == 0) ? (n + j >= N) : (branch > 0);
    long double hyp;
    if (high) {
        hyp = poch_l(1.0L - N, k - 1)
            * static_cast<long double>(
                  dual_hahn(k - 1, N - j, {double(lam), double(n + j - N), N - 1}));
    } else {
        hyp = poch_l(1.0L - (n + j), k - 1)
            * static_cast<long double>(
                  dual_hahn(k - 1, n, {double(lam), double(N - (n + j)), n + j - 1}));
    }
    return static_cast<double>(X * hyp);
}

inline double xi(const ModelParams& p, int j, int k, int n) {
    return xi_branch(p, j, k, n, 0);
}

// ---------------------------------------------------------------------------
// Polynomial evaluation
// ---------------------------------------------------------------------------

// Conjugated polynomial with scalar-Charlier entries. Zero matrix for n < 0.
inline Matrix R_eval(const ModelParams& p, int n, double x) {
    Matrix r = Matrix::Zero(p.N, p.N);
    if (n < 0) return r;
    for (int j = 1; j <= p.N; ++j)
        for (int k = 1; k <= p.N; ++k) {
            const int d = n + j - k;
            if (d < 0) continue;
            r(j - 1, k - 1) = xi(p, j, k, n) * charlier(d, p.a, x);
        }
    return r;
}

// Monic orthogonal polynomial P_n(x), recovered from R_n by undoing the
// lower-triangular conjugations on both sides. Zero matrix for n < 0.
inline Matrix P_eval(const ModelParams& p, int n, double x) {
    if (n < 0) return Matrix::Zero(p.N, p.N);
    return matL_inv(p, -n - p.lambda) * R_eval(p, n, x)
         * matL_inv(p, x + p.lambda) * matL(p, 0);
}

// Closed form for P_n(0); cheaper and better conditioned than P_eval at 0.
inline Matrix P_at_zero(const ModelParams& p, int n) {
    if (n < 0) return Matrix::Zero(p.N, p.N);
    if (n == 0) return Matrix::Identity(p.N, p.N);
    const Matrix inner = nilpotent_ipow(script_A(p, n + p.lambda), n);
    return std::pow(-p.a, n) * matL_inv(p, 0) * ipa_pow(p, n + p.lambda) * inner
         * ipa_pow(p, -p.lambda) * matL(p, 0);
}

// ---------------------------------------------------------------------------
// Squared norms
// ---------------------------------------------------------------------------

// Diagonal core D_n of the squared norm, entrywise closed form, assembled in
// extended precision because the factorials overflow the double integer grid.
inline MatrixL norm_D_l(const ModelParams& p, int n) {
    if (n < 0) throw std::domain_error("norm_D: n must be >= 0");
    using detail::fact_l;
    using detail::poch_l;
    const int N = p.N;
    const int lam = p.lambda;
    const long double a = p.a;
    MatrixL d = MatrixL::Zero(N, N);
    const long double base = expl(a) * fact_l(n) * powl(a, n) * powl(a / 2.0L, lam);
    for (int j = 1; j <= N; ++j) {
        long double v = base * ((j % 2 != 0) ? -1.0L : 1.0L)
                      * fact_l(lam + N - j) / fact_l(j - 1)
                      * poch_l(-static_cast<long double>(N + lam + n), j)
                      / poch_l(static_cast<long double>(lam + n + 1), N - j + 1);
        d(j - 1, j - 1) = v;
    }
    return d;
}

inline Matrix norm_D(const ModelParams& p, int n) {
    return norm_D_l(p, n).cast<double>();
}

namespace detail {

// L(0)^{-1} in extended precision; the scalar Charlier factor is 1 at x = 0.
inline MatrixL matL0_inv_l(const ModelParams& p) {
    MatrixL r = MatrixL::Zero(p.N, p.N);
    for (int j = 1; j <= p.N; ++j)
        for (int k = 1; k <= j; ++k)
            r(j - 1, k - 1) = static_cast<long double>(p.mu(j - 1)) / p.mu(k - 1)
                            * powl(static_cast<long double>(p.a), j - k) / fact_l(j - k);
    return r;
}

}  // namespace detail

// Squared norm H_n = <P_n, P_n>, built as C C^T with
// C = L(0)^{-1} (I+A)^{n+lambda} sqrt(D_n) so the result is symmetric
// positive definite by construction.
inline MatrixL norm_H_l(const ModelParams& p, int n) {
    MatrixL c = detail::matL0_inv_l(p) * ipa_pow_l(p, n + p.lambda)
              * MatrixL(norm_D_l(p, n).diagonal().cwiseSqrt().asDiagonal());
    return c * c.transpose();
}

inline Matrix norm_H(const ModelParams& p, int n) {
    return norm_H_l(p, n).cast<double>();
}

// ---------------------------------------------------------------------------
// Three-term recurrence  x P_n = P_{n+1} + B_n P_n + C_n P_{n-1}
// ---------------------------------------------------------------------------

inline Matrix rec_C(const ModelParams& p, int n) {
    if (n < 0) throw std::domain_error("rec_C: n must be >= 0");
    if (n == 0) return Matrix::Zero(p.N, p.N);
    const Matrix dn = norm_D(p, n);
    const Matrix dm_inv =
        Matrix(norm_D(p, n - 1)).diagonal().cwiseInverse().asDiagonal();
    return matL_inv(p, 0) * ipa_pow(p, n + p.lambda) * dn
         * ipa_pow(p, 1).transpose() * dm_inv
         * ipa_pow(p, -n - p.lambda + 1) * matL(p, 0);
}

inline Matrix rec_B(const ModelParams& p, int n) {
    if (n < 0) throw std::domain_error("rec_B: n must be >= 0");
    const int N = p.N;
    const Matrix ia = ipa_pow(p, 1);
    Matrix m = (n + 1.0) * ia * script_A(p, n + p.lambda + 1);
    // the n A_{n+lambda} (I+A) term carries an explicit factor n, so skip it
    // at n = 0 where the superdiagonal ratio itself is undefined for lambda=0
    if (n >= 1) m -= double(n) * script_A(p, n + p.lambda) * ia;
    m += ia + (n / p.a) * Matrix::Identity(N, N);
    return p.a * matL_inv(p, 0) * ipa_pow(p, n + p.lambda) * m
         * ipa_pow(p, -p.lambda - n) * matL(p, 0);
}

// ---------------------------------------------------------------------------
// Lowering / raising difference structure
// ---------------------------------------------------------------------------

// Right difference (F . Delta)(x) = F(x+1) - F(x); lowers degree by one and
// maps the family at lambda onto the family at lambda + 1.
inline Matrix apply_delta(const MatrixFn& f, int x) { return f(x + 1) - f(x); }

// Right raising operator adjoint to Delta between the lambda and lambda + 1
// inner products: (F . S)(x) = -F(x) Phi(x)^T + F(x-1) (Phi(x)^T - Psi(x)^T).
inline Matrix apply_S(const ModelParams& p, const MatrixFn& f, int x) {
    const PearsonData d = pearson(p);
    const Matrix phi_t = pearson_phi(d, x).transpose();
    const Matrix psi_t = pearson_psi(d, x).transpose();
    return -f(x) * phi_t + f(x - 1) * (phi_t - psi_t);
}

// Constant matrix G_n linking the raised lower-degree polynomial back to P_n:
// (P_{n-1} at lambda+1) . S = G_n P_n. Assembled from the Pearson
// coefficients of the lambda-weight; n >= 1.
inline Matrix shift_G(const ModelParams& p, int n) {
    if (n < 1) throw std::domain_error("shift_G: n must be >= 1");
    const PearsonData d = pearson(p);
    Matrix g = -(n - 1.0) * d.K2.transpose() - d.J1.transpose();
    if (g.determinant() == 0.0)
        throw std::domain_error("shift_G: singular raising coefficient");
    return g;
}

// Same constant through the diagonal norm cores, used as a consistency route:
// G_n = n L0^{-1} (I+A)^{n+lambda} D_{n-1}^{(lambda+1)} D_n^{-1}
//       (I+A)^{-n-lambda} L0.
inline Matrix shift_G_diag(const ModelParams& p, int n) {
    if (n < 1) throw std::domain_error("shift_G_diag: n must be >= 1");
    const Matrix dn1 = norm_D(with_lambda(p, p.lambda + 1), n - 1);
    const Matrix dn_inv =
        Matrix(norm_D(p, n)).diagonal().cwiseInverse().asDiagonal();
    return double(n) * matL_inv(p, 0) * ipa_pow(p, n + p.lambda) * dn1 * dn_inv
         * ipa_pow(p, -n - p.lambda) * matL(p, 0);
}

// ---------------------------------------------------------------------------
// Second-order difference operator
// ---------------------------------------------------------------------------

// Right action of the second-order operator that has every P_n as an
// eigenfunction: (F . Dfrak)(x) = F(x+1) a(I+A) - F(x) (J + (x+lambda)(I+A)^{-1})
//                               + F(x-1) x (I+A)^{-1}.
// At x = 0 the backward term carries the factor x = 0 and is omitted, which
// keeps the operator well defined on the natural-number grid.
inline Matrix apply_Dfrak(const ModelParams& p, const MatrixFn& f, int x) {
    const Matrix ia = ipa_pow(p, 1);
    const Matrix ia_inv = ipa_pow(p, -1);
    Matrix r = f(x + 1) * (p.a * ia)
             - f(x) * (matJ(p) + (x + p.lambda) * ia_inv);
    if (x != 0) r += f(x - 1) * (double(x) * ia_inv);
    return r;
}

// Eigenvalue matrix: P_n . Dfrak = Gamma_n P_n.
inline Matrix gamma(const ModelParams& p, int n) {
    return p.a * ipa_pow(p, 1) - matJ(p)
         - (n + p.lambda) * ipa_pow(p, -1);
}

// ---------------------------------------------------------------------------
// Rodrigues formula
// ---------------------------------------------------------------------------

// P_n(x) = (-1)^n (G_1^{(lambda+n-1)} ... G_n^{(lambda)})^{-1}
//          (W^{(lambda+n)} . nabla^n)(x) W^{(lambda)}(x)^{-1},
// with the n-fold backward difference extending the shifted weight by zero
// at negative arguments. Assembled in extended precision: the alternating
// nabla sum loses roughly n digits of the weight's own scale.
inline Matrix rodrigues_eval(const ModelParams& p, int n, int x) {
    if (n < 0 || n > 6)
        throw std::domain_error("rodrigues_eval: n must be in 0..6");
    if (x < 0) throw std::domain_error("rodrigues_eval: x must be >= 0");
    const int N = p.N;
    if (n == 0) return Matrix::Identity(N, N);

    MatrixL gprod = MatrixL::Identity(N, N);
    for (int i = 1; i <= n; ++i)
        gprod = gprod
              * shift_G(with_lambda(p, p.lambda + n - i), i).cast<long double>();

    const ModelParams pn = with_lambda(p, p.lambda + n);
    std::vector<MatrixL> v(n + 1);
    for (int s = 0; s <= n; ++s) {
        const int y = x - n + s;
        v[s] = (y >= 0) ? weight_l(pn, y) : MatrixL(MatrixL::Zero(N, N));
    }
    // after pass r, v[s] holds the (r+1)-fold backward difference at x-n+s
    for (int r = 0; r < n; ++r)
        for (int s = n; s > r; --s) v[s] -= v[s - 1];

    const long double sign = (n % 2 != 0) ? -1.0L : 1.0L;
    const MatrixL w_inv = weight_l(p, x).inverse();
    return MatrixL(sign * gprod.inverse() * v[n] * w_inv).cast<double>();
}

// ---------------------------------------------------------------------------
// Nonlinear norm recursion
// ---------------------------------------------------------------------------

// Gap of the quadratic three-term relation satisfied by the squared norms,
//   H_n = a^2 A H_{n-1} A^T - a^2 A H_{n-1} A^T H_{n-1}^{-1} A H_{n-1} A^T
//       + a A H_{n-1} A^T + A H_{n-1} A^{-T} H_{n-2}^{-1} A^{-1} H_{n-1} A^T
// with A = I + (strictly lower shift); the last term is absent at n = 1.
// Templated so the scalar specialization runs through the same code path.
template <typename Mat>
Mat norm_recursion_gap(const Mat& scr_a, const Mat& h_n, const Mat& h_nm1,
                       const Mat& h_nm2, typename Mat::Scalar a, int n) {
    const Mat at = scr_a.transpose();
    Mat rhs = a * a * scr_a * scr_a * h_nm1 * at * at
            - a * a * scr_a * h_nm1 * at * h_nm1.inverse() * scr_a * h_nm1 * at
            + a * scr_a * h_nm1 * at;
    if (n >= 2)
        rhs += scr_a * h_nm1 * at.inverse() * h_nm2.inverse()
             * scr_a.inverse() * h_nm1 * at;
    return h_n - rhs;
}

// Max-abs gap of the relation above, relative to the scale of H_n.
inline double nonlinear_norm_residual(const ModelParams& p, int n) {
    if (n < 1)
        throw std::domain_error("nonlinear_norm_residual: n must be >= 1");
    const MatrixL scr_a = ipa_pow_l(p, 1);
    const MatrixL h_n = norm_H_l(p, n);
    const MatrixL h_nm1 = norm_H_l(p, n - 1);
    const MatrixL h_nm2 =
        (n >= 2) ? norm_H_l(p, n - 2) : MatrixL(MatrixL::Identity(p.N, p.N));
    const MatrixL gap =
        norm_recursion_gap(scr_a, h_n, h_nm1, h_nm2, (long double)(p.a), n);
    return maxabs_l(gap) / std::max(1.0, maxabs_l(h_n));
}

// ---------------------------------------------------------------------------
// Coefficient recovery and Gram-Schmidt oracle
// ---------------------------------------------------------------------------

// Coefficients of a matrix polynomial of known exact degree, recovered by
// Newton forward differences on the integer nodes 0..deg. Integer-node
// divided differences avoid the ill-conditioned Vandermonde solve.
inline MatrixPolynomial interpolate_coeffs(const MatrixFn& f, int deg) {
    if (deg < 0) throw std::domain_error("interpolate_coeffs: deg must be >= 0");
    std::vector<Matrix> vals(deg + 1);
    for (int i = 0; i <= deg; ++i) vals[i] = f(i);
    const int n_rows = vals[0].rows();
    const int n_cols = vals[0].cols();

    MatrixPolynomial out;
    out.side = VarSide::ScalarVar;
    out.coeffs.assign(deg + 1, Matrix::Zero(n_rows, n_cols));

    // diffs[k] = k-th forward difference at 0; basis[m] = coefficient of x^m
    // in x(x-1)...(x-k+1)/k!, updated incrementally in extended precision.
    std::vector<Matrix> diffs = vals;
    std::vector<long double> basis(deg + 1, 0.0L);
    basis[0] = 1.0L;
    for (int k = 0; k <= deg; ++k) {
        if (k > 0) {
            for (int s = 0; s <= deg - k; ++s) diffs[s] = diffs[s + 1] - diffs[s];
            for (int m = k; m >= 1; --m)
                basis[m] = (basis[m - 1] - (k - 1.0L) * basis[m]) / k;
            basis[0] = basis[0] * -(k - 1.0L) / k;
        }
        for (int m = 0; m <= k; ++m)
            out.coeffs[m] += static_cast<double>(basis[m]) * diffs[0];
    }
    return out;
}

// Raised when the oracle's Gram data is too ill conditioned to trust.
struct oracle_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Monic orthogonal polynomials computed only from weight moments by
// degree-by-degree Gram-Schmidt on the monomials x^n I. Serves as an
// implementation-independent oracle for the closed forms above. All internal
// arithmetic runs in extended precision: the raw-monomial projections pass
// through moments several orders of magnitude above the surviving
// coefficients, and that cancellation would eat most of a double's digits.
inline std::vector<MatrixPolynomial> gram_schmidt_oracle(
    const ModelParams& p, int n_max, const Truncation& t = {}) {
    if (n_max < 0 || n_max > 12)
        throw std::domain_error("gram_schmidt_oracle: n_max must be in 0..12");
    if (t.eps <= 0.0) throw std::domain_error("gram_schmidt_oracle: eps must be > 0");
    if (t.max_terms <= 0)
        throw std::domain_error("gram_schmidt_oracle: max_terms must be > 0");
    const int N = p.N;

    using CoeffsL = std::vector<MatrixL>;  // degree-ascending
    const auto eval_l = [&](const CoeffsL& c, long double x) {
        MatrixL r = c.back();
        for (int k = static_cast<int>(c.size()) - 2; k >= 0; --k)
            r = x * r + c[k];
        return r;
    };
    const auto quad = [&](const CoeffsL& f, const CoeffsL& g) {
        MatrixL sum = MatrixL::Zero(N, N);
        int consecutive_small = 0;
        for (int x = 0; x < t.max_terms; ++x) {
            const MatrixL term =
                eval_l(f, x) * weight_l(p, x) * eval_l(g, x).transpose();
            sum += term;
            const double ts = maxabs_l(term);
            if (ts == 0.0 || ts < t.eps * maxabs_l(sum)) {
                if (++consecutive_small >= 3) return sum;
            } else {
                consecutive_small = 0;
            }
        }
        throw convergence_error("gram_schmidt_oracle: truncation not reached");
    };

    std::vector<CoeffsL> basis;
    std::vector<MatrixL> norms;
    double lo_all = std::numeric_limits<double>::infinity();
    double hi_all = 0.0;

    for (int n = 0; n <= n_max; ++n) {
        CoeffsL q(n + 1, MatrixL::Zero(N, N));
        q[n] = MatrixL::Identity(N, N);
        for (int m = 0; m < n; ++m) {
            const MatrixL coef = quad(q, basis[m]) * norms[m].inverse();
            for (int k = 0; k <= m; ++k) q[k] -= coef * basis[m][k];
        }

        const MatrixL h = quad(q, q);
        const Matrix hd = h.cast<double>();
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (hd + hd.transpose()));
        lo_all = std::min(lo_all, es.eigenvalues().minCoeff());
        hi_all = std::max(hi_all, es.eigenvalues().maxCoeff());
        if (!(lo_all > 0.0) || hi_all / lo_all > 1e12)
            throw oracle_failure("gram_schmidt_oracle: Gram matrix ill conditioned");

        basis.push_back(std::move(q));
        norms.push_back(h);
    }

    std::vector<MatrixPolynomial> out;
    for (const CoeffsL& c : basis) {
        MatrixPolynomial poly;
        poly.side = VarSide::ScalarVar;
        for (const MatrixL& m : c) poly.coeffs.push_back(m.cast<double>());
        out.push_back(std::move(poly));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cached family
// ---------------------------------------------------------------------------

// Per-parameter cache of the degree-indexed quantities. Lazily filled; call
// warm() before sharing a family across threads, reads never mutate after
// that. Cached values are the same doubles recomputation would produce.
class MVOPFamily {
  public:
    explicit MVOPFamily(const ModelParams& p) : params_(p) {}

    const ModelParams& params() const { return params_; }

    double xi(int j, int k, int n) const {
        if (j < 1 || k < 1 || j > params_.N || k > params_.N || n < 0) return 0.0;
        const Matrix& tab = fetch(xi_, n, [&](int m) {
            Matrix t(params_.N, params_.N);
            for (int r = 1; r <= params_.N; ++r)
                for (int c = 1; c <= params_.N; ++c)
                    t(r - 1, c - 1) = mcharlier::xi(params_, r, c, m);
            return t;
        });
        return tab(j - 1, k - 1);
    }

    const Matrix& norm_D(int n) const {
        return fetch(d_, n, [&](int m) { return mcharlier::norm_D(params_, m); });
    }
    const Matrix& norm_H(int n) const {
        return fetch(h_, n, [&](int m) { return mcharlier::norm_H(params_, m); });
    }
    const Matrix& rec_B(int n) const {
        return fetch(b_, n, [&](int m) { return mcharlier::rec_B(params_, m); });
    }
    const Matrix& rec_C(int n) const {
        return fetch(c_, n, [&](int m) { return mcharlier::rec_C(params_, m); });
    }
    const Matrix& P_at_zero(int n) const {
        return fetch(p0_, n, [&](int m) { return mcharlier::P_at_zero(params_, m); });
    }

    void warm(int n_max) const {
        for (int n = 0; n <= n_max; ++n) {
            xi(1, 1, n);
            norm_D(n);
            norm_H(n);
            rec_B(n);
            rec_C(n);
            P_at_zero(n);
        }
    }

  private:
    template <typename F>
    const Matrix& fetch(std::map<int, Matrix>& cache, int n, F&& make) const {
        auto it = cache.find(n);
        if (it == cache.end()) it = cache.emplace(n, make(n)).first;
        return it->second;
    }

    ModelParams params_;
    mutable std::map<int, Matrix> xi_, d_, h_, b_, c_, p0_;
};

}  // namespace mcharlier
