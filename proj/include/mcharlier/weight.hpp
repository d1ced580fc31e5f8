#pragma once

#include <functional>
#include <utility>

#include "matrix_core.hpp"

namespace mcharlier {

// Tail policy for the infinite sums over the weight's support: a sum stops
// once the current term stays below eps times the running sum (max-abs
// entries) for 3 consecutive terms, and fails if max_terms arrives first.
struct Truncation {
    double eps = 1e-14;
    int max_terms = 400;
};

struct convergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// W(x) = (a^x/x!) (I+A)^{x+lambda} T (I+A^T)^{x+lambda}, symmetric positive
// definite for every x >= 0. Assembled as (C)(C^T) with C = (I+A)^{x+lambda}
// sqrt(T) so the result is exactly symmetric in floating point. The assembly
// runs in long double; weight() rounds it once to double.
inline MatrixL weight_l(const ModelParams& p, int x) {
    if (x < 0) throw std::domain_error("weight: x must be >= 0");
    MatrixL C = ipa_pow_l(p, x + p.lambda)
              * MatrixL(matT_l(p, p.lambda).diagonal().cwiseSqrt().asDiagonal());
    MatrixL W = C * C.transpose();
    long double pt = 1.0L;
    for (int t = 1; t <= x; ++t) pt *= static_cast<long double>(p.a) / t;
    return pt * W;
}

inline Matrix weight(const ModelParams& p, int x) {
    return weight_l(p, x).cast<double>();
}

using MatrixFn = std::function<Matrix(int)>;

struct InnerProductResult {
    Matrix value;
    int x_stop = 0; // first x beyond the last term added
};

// <F,G> = sum_{x>=0} F(x) W(x) G(x)^T, truncated per t. Accumulated in
// extended precision: the partial sums pass through magnitudes far above the
// final value whenever the integrands nearly cancel, and the quadrature is
// used as an oracle against closed forms at tight relative tolerances.
inline InnerProductResult inner_product(const MatrixFn& F, const MatrixFn& G,
                                        const ModelParams& p, const Truncation& t = {}) {
    if (t.eps <= 0.0) throw std::domain_error("inner_product: eps must be > 0");
    if (t.max_terms <= 0) throw std::domain_error("inner_product: max_terms must be > 0");
    MatrixL sum = MatrixL::Zero(p.N, p.N);
    int consecutive_small = 0;
    for (int x = 0; x < t.max_terms; ++x) {
        MatrixL term = F(x).cast<long double>() * weight_l(p, x)
                     * G(x).transpose().cast<long double>();
        sum += term;
        double ts = maxabs_l(term);
        // a zero term counts as small so an identically-zero integrand converges
        if (ts == 0.0 || ts < t.eps * maxabs_l(sum)) {
            if (++consecutive_small >= 3) return {sum.cast<double>(), x + 1};
        } else {
            consecutive_small = 0;
        }
    }
    throw convergence_error("inner_product: truncation not reached by max_terms");
}

// Coefficients of the Pearson pair Phi(x) = x^2 K2 + x K1 + K0 (degree <= 2)
// and Psi(x) = x J1 + J0 (degree <= 1), with J0 = K0.
struct PearsonData {
    Matrix K2, K1, K0, J1, J0;
};

// Extended-precision Pearson coefficients; pearson() rounds them to double.
struct PearsonDataL {
    MatrixL K2, K1, K0, J1, J0;
};

inline PearsonDataL pearson_l(const ModelParams& p) {
    const int N = p.N;
    const MatrixL I = MatrixL::Identity(N, N);
    const MatrixL A = matA_l(p);
    const MatrixL At = A.transpose();
    const MatrixL iAt1 = nilpotent_ipow_t(MatrixL(At), -1);
    const MatrixL Tl = matT_l(p, p.lambda);
    const MatrixL Tl1 = matT_l(p, p.lambda + 1);
    const MatrixL Tl_inv = Tl.diagonal().cwiseInverse().asDiagonal();
    const long double a = p.a;
    const long double c = -(N + 1) / 2.0L;

    PearsonDataL d;
    d.K2 = -0.5L * At * iAt1;
    d.K1 = 0.5L * (2.0L * matJ_l(p) - a * At - (2.0L * p.lambda + 1.0L) * At * iAt1) + c * I;
    d.K0 = nilpotent_ipow_t(MatrixL(At), -p.lambda) * Tl_inv * (I + A) * Tl1
         * nilpotent_ipow_t(MatrixL(At), p.lambda + 1);
    d.J1 = d.K2 + d.K1
         - (1.0L / a) * nilpotent_ipow_t(MatrixL(At), -(p.lambda + 1)) * Tl_inv * Tl1
               * nilpotent_ipow_t(MatrixL(At), p.lambda + 1);
    d.J0 = d.K0;
    return d;
}

inline PearsonData pearson(const ModelParams& p) {
    const PearsonDataL d = pearson_l(p);
    PearsonData out;
    out.K2 = d.K2.cast<double>();
    out.K1 = d.K1.cast<double>();
    out.K0 = d.K0.cast<double>();
    out.J1 = d.J1.cast<double>();
    out.J0 = out.K0;
    return out;
}

inline Matrix pearson_phi(const PearsonData& d, double x) { return x * x * d.K2 + x * d.K1 + d.K0; }
inline Matrix pearson_psi(const PearsonData& d, double x) { return x * d.J1 + d.J0; }

inline MatrixL pearson_phi_l(const PearsonDataL& d, long double x) {
    return x * x * d.K2 + x * d.K1 + d.K0;
}
inline MatrixL pearson_psi_l(const PearsonDataL& d, long double x) { return x * d.J1 + d.J0; }

// Max-abs residuals of the lambda-raising weight equations
// W^{l+1}(x) = W^l(x) Phi(x) and W^{l+1}(x) - W^{l+1}(x-1) = W^l(x) Psi(x),
// with W^{l+1}(-1) = 0. Both sides are assembled in long double so the
// measurement is not dominated by double rounding of the largest entries.
inline std::pair<double, double> strong_pearson_residual(const ModelParams& p, int x) {
    if (x < 0) throw std::domain_error("strong_pearson_residual: x must be >= 0");
    const ModelParams p1 = with_lambda(p, p.lambda + 1);
    const PearsonDataL d = pearson_l(p);
    const MatrixL Wx = weight_l(p, x);
    const MatrixL W1x = weight_l(p1, x);
    const MatrixL W1prev = (x >= 1) ? weight_l(p1, x - 1)
                                    : MatrixL(MatrixL::Zero(p.N, p.N));
    double r1 = maxabs_l(W1x - Wx * pearson_phi_l(d, x));
    double r2 = maxabs_l((W1x - W1prev) - Wx * pearson_psi_l(d, x));
    return {r1, r2};
}

// The commuting matrix of the weight: Jfrak(x) = J + (x+lambda)(I+A)^{-1}
// satisfies Jfrak(x) W(x) = W(x) Jfrak(x)^T.
inline Matrix matJfrak(const ModelParams& p, double x) {
    return matJ(p) + (x + p.lambda) * ipa_pow(p, -1);
}

// Max of the first-order weight relation residual
// (I+A) W(x-1) - W(x) ((a(I+A^T))^{-1} x) and the Jfrak symmetry residual.
inline double weak_pearson_residual(const ModelParams& p, int x) {
    if (x < 1) throw std::domain_error("weak_pearson_residual: x must be >= 1");
    const MatrixL sA = ipa_pow_l(p, 1);
    const MatrixL sB = MatrixL(static_cast<long double>(p.a) * sA.transpose()).inverse();
    const MatrixL Wx = weight_l(p, x);
    double r1 = maxabs_l(sA * weight_l(p, x - 1) - Wx * sB * (long double)(x));
    const MatrixL Jf = matJ_l(p) + (x + p.lambda) * ipa_pow_l(p, -1);
    double r2 = maxabs_l(Jf * Wx - Wx * Jf.transpose());
    return std::max(r1, r2);
}

} // namespace mcharlier
