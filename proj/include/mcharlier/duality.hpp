#pragma once

// Dual families attached to the matrix Charlier polynomials.
//
// A dual family swaps the roles of degree and argument. Each of three
// degree-preserving right difference operators has every monic polynomial as
// an eigenfunction, P_n . D_i = Lambda_i(n) P_n, and its conjugated matrix
// eigenvalue rho_i(n) = P_n(0)^{-1} Lambda_i(n) P_n(0) serves as the argument
// of a second sequence (Q_x)_x of matrix polynomials with
//
//     P_n(x) = P_n(0) Q_x(rho_i(n)) Upsilon_i(x),
//
// where the gauge Upsilon_i(x) is the running product of inverted raising
// coefficients of D_i. The Q_x satisfy a three-term recurrence in x driven
// from the left by the matrix variable, and they are orthogonal for a
// discrete matrix weight U(n) on the degree index with square norms
// (Upsilon_i(x) W(x) Upsilon_i(x)^T)^{-1}.
//
// Conventions:
//   * Q places the variable on the left of its coefficients,
//     Q_x(X) = sum_k X^k C_k; Q_{-1} = 0 and Q_0 = I.
//   * family is 1, 2 or 3. Family 3 routes through the weight one step below
//     in the family parameter and therefore needs lambda >= 1.
//   * The dual pairing conjugates its first argument:
//     <F, G>_d = sum_n F(rho(n))^T U(n) G(rho(n)).
//
// Numerics: the gauges for families 2 and 3 are products of triangular
// factors whose conditioning grows quickly in x, and evaluating a monic
// polynomial at a matrix node cancels heavily. Everything that conjugates by
// a gauge, runs a coefficient recurrence, or Horner-evaluates therefore works
// in extended precision internally and rounds once at the double boundary.

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "operators.hpp"

namespace mcharlier {

namespace detail {

// M^k for an invertible matrix and any integer k; exponents stay small here,
// so repeated multiplication is both exact enough and cheap.
inline Matrix int_matrix_pow(const Matrix& M, int k) {
    const int n = static_cast<int>(M.rows());
    const Matrix base = (k >= 0) ? M : Matrix(M.inverse());
    Matrix r = Matrix::Identity(n, n);
    for (int i = 0; i < std::abs(k); ++i) r = r * base;
    return r;
}

inline MatrixL int_matrix_pow_l(const MatrixL& M, int k) {
    const int n = static_cast<int>(M.rows());
    const MatrixL base = (k >= 0) ? M : MatrixL(M.inverse());
    MatrixL r = MatrixL::Identity(n, n);
    for (int i = 0; i < std::abs(k); ++i) r = r * base;
    return r;
}

// Conjugation by the constant frame L(0)^{-1} (I+A)^lambda that carries the
// triangular normal forms over to statements about the monic family.
inline Matrix conj_frame(const ModelParams& p, const Matrix& M) {
    return matL_inv(p, 0) * ipa_pow(p, p.lambda) * M
         * ipa_pow(p, -p.lambda) * matL(p, 0);
}

inline void check_family(const ModelParams& p, int family) {
    if (family < 1 || family > 3)
        throw std::domain_error("dual family index must be 1, 2 or 3");
    if (family == 3 && p.lambda < 1)
        throw std::domain_error("dual family 3 needs lambda >= 1");
}

// Extended-precision twin of the gauge closed form below.
inline MatrixL upsilon_l(const ModelParams& p, int family, int x) {
    const MatrixL eye = MatrixL::Identity(p.N, p.N);
    if (x == 0) return eye;
    if (family == 1)
        return powl(static_cast<long double>(p.a), -x) * ipa_pow_l(p, -x);
    const int shift = (family == 2) ? p.lambda : p.lambda - 1;
    const MatrixL K = matJ_l(p) * (eye + matA_l(p).transpose())
                    + static_cast<long double>(shift) * eye;
    const long double mag = powl(2.0L / p.a, x);
    const long double sign = (x % 2 == 0) ? 1.0L : -1.0L;
    return (sign * mag) * ipa_pow_l(p, p.lambda) * int_matrix_pow_l(K, -x)
         * ipa_pow_l(p, -p.lambda - x);
}

// Closed form of the gauge inverse. Written out separately because it needs
// no matrix inversion at all (only nonnegative powers appear when x >= 0),
// which keeps the ill-conditioned frames exact entrywise.
inline MatrixL upsilon_inv_l(const ModelParams& p, int family, int x) {
    const MatrixL eye = MatrixL::Identity(p.N, p.N);
    if (x == 0) return eye;
    if (family == 1)
        return powl(static_cast<long double>(p.a), x) * ipa_pow_l(p, x);
    const int shift = (family == 2) ? p.lambda : p.lambda - 1;
    const MatrixL K = matJ_l(p) * (eye + matA_l(p).transpose())
                    + static_cast<long double>(shift) * eye;
    const long double mag = powl(p.a / 2.0L, x);
    const long double sign = (x % 2 == 0) ? 1.0L : -1.0L;
    return (sign * mag) * ipa_pow_l(p, p.lambda + x) * int_matrix_pow_l(K, x)
         * ipa_pow_l(p, -p.lambda);
}

// Order-0 and order-(-1) coefficients of the generating operator in extended
// precision; these are the raw inputs of the dual recurrence coefficients.
inline std::pair<MatrixL, MatrixL> family_coeffs_l(const ModelParams& p,
                                                   int family, int x) {
    if (family == 1) {
        const MatrixL inv = ipa_pow_l(p, -1);
        return {MatrixL(-matJ_l(p)
                        - static_cast<long double>(x + p.lambda) * inv),
                MatrixL(static_cast<long double>(x) * inv)};
    }
    if (family == 2) {
        const PearsonDataL d = pearson_l(p);
        const MatrixL phi = pearson_phi_l(d, x).transpose();
        const MatrixL psi = pearson_psi_l(d, x).transpose();
        return {MatrixL(2.0L * phi - psi), MatrixL(psi - phi)};
    }
    const PearsonDataL d = pearson_l(with_lambda(p, p.lambda - 1));
    const MatrixL phi0 = pearson_phi_l(d, x).transpose();
    const MatrixL phi1 = pearson_phi_l(d, x + 1.0L).transpose();
    const MatrixL psi0 = pearson_psi_l(d, x).transpose();
    const MatrixL psi1 = pearson_psi_l(d, x + 1.0L).transpose();
    return {MatrixL(phi1 + phi0 - psi1), MatrixL(psi0 - phi0)};
}

// Extended-precision dual recurrence pair {Y_x, Z_x}; Z_0 = 0.
inline std::pair<MatrixL, MatrixL> q_recurrence_coeffs_l(const ModelParams& p,
                                                         int family, int x) {
    const auto [f0, fm1] = family_coeffs_l(p, family, x);
    const MatrixL u = upsilon_l(p, family, x);
    const MatrixL u_inv = upsilon_inv_l(p, family, x);
    const MatrixL y = u * (f0 * u_inv);
    const MatrixL z = (x == 0)
        ? MatrixL(MatrixL::Zero(p.N, p.N))
        : MatrixL(upsilon_l(p, family, x - 1) * (fm1 * u_inv));
    return {y, z};
}

// Extended-precision dual value Q_x(rho(n)) recovered from the primal side.
// The gauge inverse is applied first and the zero-value factor is removed by
// a solve; this order keeps the intermediates smallest.
inline MatrixL q_eval_l(const ModelParams& p, int family, int x, int n) {
    if (x < 0) return MatrixL::Zero(p.N, p.N);
    const MatrixL pz = P_at_zero(p, n).cast<long double>();
    const MatrixL pv = P_eval(p, n, x).cast<long double>();
    const MatrixL pvui = pv * upsilon_inv_l(p, family, x);
    return pz.partialPivLu().solve(pvui);
}

// Coefficient vector of the monic left-variable Q_x in extended precision.
inline std::vector<MatrixL> q_coeffs_l(const ModelParams& p, int family,
                                       int x) {
    const MatrixL zero = MatrixL::Zero(p.N, p.N);
    std::vector<MatrixL> prev;
    std::vector<MatrixL> cur = {MatrixL::Identity(p.N, p.N)};
    for (int s = 0; s < x; ++s) {
        const auto [y, z] = q_recurrence_coeffs_l(p, family, s);
        std::vector<MatrixL> next(s + 2, zero);
        for (int k = 0; k <= s; ++k) {
            next[k + 1] += cur[k];  // the variable multiplies from the left
            next[k] -= cur[k] * y;  // so scalars of the recurrence act on the right
        }
        for (std::size_t k = 0; k < prev.size(); ++k) next[k] -= prev[k] * z;
        prev = std::move(cur);
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generating operators and their eigenvalue functions
// ---------------------------------------------------------------------------

// The degree-preserving right difference operator generating each family:
//   1: the second-order operator with eigenvalue Gamma_n,
//   2: lowering then raising at the same family parameter,
//   3: raising from parameter lambda-1 then lowering (lambda >= 1).
inline RightDiffOp dual_family_op(const ModelParams& p, int family) {
    detail::check_family(p, family);
    if (family == 1) return op_Dfrak(p);
    if (family == 2) return compose_right(op_delta(p), op_S(p));
    return compose_right(op_S(with_lambda(p, p.lambda - 1)), op_delta(p));
}

// Closed form of rho_i(n): a frame conjugation of a linear-in-n diagonal
// bracket plus the strictly upper correction n Acal (I + Acal)^{-1} coming
// from commuting J through the n-th power of I + Acal. rho_2(0) = 0 exactly.
inline Matrix rho(const ModelParams& p, int family, int n) {
    detail::check_family(p, family);
    if (n < 0) throw std::domain_error("rho: n must be >= 0");
    const Matrix eye = Matrix::Identity(p.N, p.N);
    Matrix bracket;
    double scale = 1.0;
    if (family == 1) {
        bracket = (p.a - n - p.lambda) * eye - matJ(p);
    } else if (family == 2) {
        bracket = (p.N + p.lambda + 1.0) * eye - matJ(p);
        scale = 0.5 * n;
    } else {
        bracket = (p.N + p.lambda + 0.0) * eye - matJ(p);
        scale = 0.5 * (n + 1);
    }
    if (n >= 1) {
        const Matrix scr = script_A(p, n + p.lambda);
        bracket += double(n) * scr * nilpotent_ipow(scr, -1);
    }
    return detail::conj_frame(p, Matrix(scale * bracket));
}

// ---------------------------------------------------------------------------
// Gauge Upsilon
// ---------------------------------------------------------------------------

// Closed form of the gauge Upsilon_i(x) = F_1(0)^{-1} ... F_1(x-1)^{-1}, the
// product of inverted raising coefficients of the generating operator.
// Upsilon_i(0) = I exactly; negative x extends the closed form (coefficient
// maps only reach it multiplied by factors that vanish there).
inline Matrix upsilon(const ModelParams& p, int family, int x) {
    detail::check_family(p, family);
    return detail::upsilon_l(p, family, x).cast<double>();
}

// The same gauge assembled term by term from the generating operator, used
// as the cross-route for the telescoped closed form above. x >= 0.
inline Matrix upsilon_product(const ModelParams& p, int family, int x) {
    if (x < 0) throw std::domain_error("upsilon_product: x must be >= 0");
    const RightDiffOp d = dual_family_op(p, family);
    const CoeffFn& raising = d.terms.at(1);
    Matrix r = Matrix::Identity(p.N, p.N);
    for (int y = 0; y < x; ++y) r = r * raising(y).inverse();
    return r;
}

// ---------------------------------------------------------------------------
// Dual polynomial values and recurrence
// ---------------------------------------------------------------------------

// Value Q_x(rho_i(n)) recovered from the primal side. Zero for x < 0.
inline Matrix q_eval(const ModelParams& p, int family, int x, int n) {
    detail::check_family(p, family);
    if (n < 0) throw std::domain_error("q_eval: n must be >= 0");
    return detail::q_eval_l(p, family, x, n).cast<double>();
}

// Coefficients of the three-term recurrence in the spatial index,
//   rho(n) Q_x = Q_{x+1} + Q_x Y_x + Q_{x-1} Z_x,   Z_0 = 0,
// obtained by gauge conjugation of the order-0 and order-(-1) coefficients
// of the generating operator. Returns {Y_x, Z_x}.
inline std::pair<Matrix, Matrix> q_recurrence_coeffs(const ModelParams& p,
                                                     int family, int x) {
    detail::check_family(p, family);
    if (x < 0) throw std::domain_error("q_recurrence_coeffs: x must be >= 0");
    const auto [y, z] = detail::q_recurrence_coeffs_l(p, family, x);
    return {y.cast<double>(), z.cast<double>()};
}

// Monic left-variable polynomial Q_x built from the recurrence.
inline MatrixPolynomial q_matrix_poly(const ModelParams& p, int family, int x) {
    detail::check_family(p, family);
    if (x < 0) throw std::domain_error("q_matrix_poly: x must be >= 0");
    const std::vector<MatrixL> coeffs = detail::q_coeffs_l(p, family, x);
    MatrixPolynomial out;
    out.side = VarSide::LeftMatrixVar;
    out.coeffs.reserve(coeffs.size());
    for (const MatrixL& c : coeffs) out.coeffs.push_back(c.cast<double>());
    return out;
}

// Evaluation of a left-variable matrix polynomial at a matrix argument,
// sum_k X^k C_k, by Horner from the left with an extended accumulator (the
// partial sums dwarf the value near the recurrence nodes). Evaluating a
// polynomial whose coefficients expect the variable on the other side is a
// usage error, not a numerical one.
inline Matrix eval_matrix_poly(const MatrixPolynomial& q, const Matrix& X) {
    if (q.side != VarSide::LeftMatrixVar)
        throw std::invalid_argument(
            "eval_matrix_poly: expects a left-variable polynomial");
    const MatrixL xl = X.cast<long double>();
    MatrixL r = q.coeffs.back().cast<long double>();
    for (int k = static_cast<int>(q.coeffs.size()) - 2; k >= 0; --k)
        r = xl * r + q.coeffs[k].cast<long double>();
    return r.cast<double>();
}

// Running scale of the evaluation above: the same Horner applied to the
// entrywise absolute values. A monic polynomial at a matrix node cancels its
// partial sums down to a far smaller value, so agreement between evaluation
// routes is meaningful relative to this majorant, not to the value alone;
// coefficients near the working precision of the majorant are the best any
// route can carry.
inline double eval_matrix_poly_scale(const MatrixPolynomial& q,
                                     const Matrix& X) {
    if (q.side != VarSide::LeftMatrixVar)
        throw std::invalid_argument(
            "eval_matrix_poly_scale: expects a left-variable polynomial");
    const MatrixL xl = X.cast<long double>().cwiseAbs();
    MatrixL r = q.coeffs.back().cast<long double>().cwiseAbs();
    for (int k = static_cast<int>(q.coeffs.size()) - 2; k >= 0; --k)
        r = xl * r + q.coeffs[k].cast<long double>().cwiseAbs();
    return maxabs_l(r);
}

// Relative residual of the duality identity
//   P_n(x) = P_n(0) Q_x(rho_i(n)) Upsilon_i(x).
inline double duality_residual(const ModelParams& p, int family, int x, int n) {
    detail::check_family(p, family);
    const Matrix lhs = P_eval(p, n, x);
    const Matrix rhs =
        MatrixL(P_at_zero(p, n).cast<long double>()
                * detail::q_eval_l(p, family, x, n)
                * detail::upsilon_l(p, family, x))
            .cast<double>();
    return maxabs(lhs - rhs) / std::max({1.0, maxabs(lhs), maxabs(rhs)});
}

// ---------------------------------------------------------------------------
// Dual weight, inner product, norms
// ---------------------------------------------------------------------------

// Discrete matrix weight on the degree index, U(n) = P_n(0)^T H_n^{-1} P_n(0),
// in closed form through the diagonal norm core. Assembled as C^T C in
// extended precision, so the result is symmetric positive definite by
// construction and survives the factorial range of the core.
inline Matrix dual_weight_U(const ModelParams& p, int n) {
    if (n < 0) throw std::domain_error("dual_weight_U: n must be >= 0");
    const MatrixL dn = norm_D_l(p, n);
    MatrixL scaled = MatrixL::Zero(p.N, p.N);
    const long double an = powl(static_cast<long double>(p.a), n);
    for (int j = 0; j < p.N; ++j) scaled(j, j) = an / sqrtl(dn(j, j));
    const MatrixL scr = script_A(p, n + p.lambda).cast<long double>();
    const MatrixL c = scaled * nilpotent_ipow_t(scr, n)
                    * ipa_pow_l(p, -p.lambda)
                    * matL(p, 0).cast<long double>();
    return MatrixL(c.transpose() * c).cast<double>();
}

// Dual pairing <Q_x, Q_y>_d = sum_n Q_x(rho(n))^T U(n) Q_y(rho(n)), truncated
// with the same stop rule as the primal quadrature but a dual-specific
// default budget. Throws convergence_error when the rule is not met.
inline Matrix dual_inner_product(const ModelParams& p, int family, int x, int y,
                                 const Truncation& t = {1e-14, 300}) {
    detail::check_family(p, family);
    if (t.eps <= 0.0)
        throw std::domain_error("dual_inner_product: eps must be > 0");
    if (t.max_terms <= 0)
        throw std::domain_error("dual_inner_product: max_terms must be > 0");
    MatrixL sum = MatrixL::Zero(p.N, p.N);
    int consecutive_small = 0;
    for (int n = 0; n < t.max_terms; ++n) {
        const Matrix qx = q_eval(p, family, x, n);
        const Matrix qy = (y == x) ? qx : q_eval(p, family, y, n);
        const MatrixL term = qx.transpose().cast<long double>()
                           * dual_weight_U(p, n).cast<long double>()
                           * qy.cast<long double>();
        sum += term;
        const double ts = maxabs_l(term);
        if (ts == 0.0 || ts < t.eps * maxabs_l(sum)) {
            if (++consecutive_small >= 3) return sum.cast<double>();
        } else {
            consecutive_small = 0;
        }
    }
    throw convergence_error(
        "dual_inner_product: truncation not reached by max_terms");
}

// Closed-form square norm of Q_x: (Upsilon(x) W(x) Upsilon(x)^T)^{-1},
// symmetric positive definite; equals W(0)^{-1} at x = 0.
inline Matrix dual_norm(const ModelParams& p, int family, int x) {
    detail::check_family(p, family);
    if (x < 0) throw std::domain_error("dual_norm: x must be >= 0");
    const MatrixL u = detail::upsilon_l(p, family, x);
    const MatrixL inv =
        MatrixL(u * weight_l(p, x) * u.transpose()).inverse();
    return MatrixL(0.5L * (inv + inv.transpose())).cast<double>();
}

// ---------------------------------------------------------------------------
// Block Vandermonde condition
// ---------------------------------------------------------------------------

// |det| of the stacked matrix (rho(nu+s)^k)_{s,k=0..x}, divided by the value
// the triangular-plus-linear shape of rho forces on it, namely
// |det T|^{x(x+1)/2} (prod_{0<=s<t<=x} (t-s))^N with T the coefficient of n
// in the diagonal part of the bracket. A unit-order return certifies that
// consecutive nodes are usable for matrix interpolation.
inline double vandermonde_condition(const ModelParams& p, int family, int x,
                                    int nu) {
    detail::check_family(p, family);
    if (x < 0) throw std::domain_error("vandermonde_condition: x must be >= 0");
    if (nu < 0) throw std::domain_error("vandermonde_condition: nu must be >= 0");
    if (x == 0) return 1.0;
    std::vector<Matrix> blocks(static_cast<std::size_t>(x) + 1);
    for (int s = 0; s <= x; ++s) blocks[s] = rho(p, family, nu + s);
    const double det = block_vandermonde_det(blocks);

    double tee = 1.0;
    for (int j = 1; j <= p.N; ++j) {
        if (family == 1) tee *= -1.0;
        else if (family == 2) tee *= 0.5 * (p.N + p.lambda + 1 - j);
        else tee *= 0.5 * (p.N + p.lambda - j);
    }
    double predicted = std::pow(std::abs(tee), 0.5 * x * (x + 1));
    for (int s = 0; s <= x; ++s)
        for (int t = s + 1; t <= x; ++t)
            predicted *= std::pow(double(t - s), p.N);
    return std::abs(det) / predicted;
}

// ---------------------------------------------------------------------------
// Operator transport between the primal and dual sides
// ---------------------------------------------------------------------------

// Right operators transport by gauge conjugation: the coefficient of shift j
// becomes Upsilon(x+j) F_j(x) Upsilon(x)^{-1}.
inline RightDiffOp sigma_map(const ModelParams& p, int family,
                             const RightDiffOp& d) {
    detail::check_family(p, family);
    RightDiffOp out;
    for (const auto& [j, f] : d.terms) {
        const int jj = j;
        const CoeffFn ff = f;
        const ModelParams pc = p;
        const int fam = family;
        out.terms[j] = [pc, fam, jj, ff](int x) {
            return Matrix(MatrixL(detail::upsilon_l(pc, fam, x + jj)
                                  * (ff(x).cast<long double>()
                                     * detail::upsilon_inv_l(pc, fam, x)))
                              .cast<double>());
        };
    }
    return out;
}

// Left operators transport by conjugation with the zero values: G_j(n)
// becomes P_n(0)^{-1} G_j(n) P_{n+j}(0); terms reaching a negative degree
// vanish.
inline LeftDiffOp tau_map(const ModelParams& p, const LeftDiffOp& m) {
    LeftDiffOp out;
    for (const auto& [j, g] : m.terms) {
        const int jj = j;
        const CoeffFn gg = g;
        const ModelParams pc = p;
        out.terms[j] = [pc, jj, gg](int n) {
            if (n < 0 || n + jj < 0)
                return Matrix(Matrix::Zero(pc.N, pc.N));
            return Matrix(
                MatrixL(P_at_zero(pc, n).cast<long double>().inverse()
                        * gg(n).cast<long double>()
                        * P_at_zero(pc, n + jj).cast<long double>())
                    .cast<double>());
        };
    }
    return out;
}

// Action of a transported right operator on the dual family at a grid point:
// (Q_x . D)(rho(n)) = sum_j Q_{x+j}(rho(n)) F_j(x), with Q at a negative
// index equal to zero.
inline Matrix apply_dual_right(const ModelParams& p, int family,
                               const RightDiffOp& d, int x, int n) {
    MatrixL acc = MatrixL::Zero(p.N, p.N);
    for (const auto& [j, f] : d.terms) {
        if (x + j < 0) continue;
        acc += q_eval(p, family, x + j, n).cast<long double>()
             * f(x).cast<long double>();
    }
    return acc.cast<double>();
}

// Residual of the transported degree ladder acting on the dual family:
// raising sends Q_x to Q_{x+1} times the constant Upsilon(1)(I+A); lowering
// sends Q_x to Q_{x-1} times (x/a)(I+A)^{-1} Upsilon(1)^{-1}, which vanishes
// at x = 0. Returns the larger of the two gaps, each taken relative to the
// magnitudes of the ladder terms themselves: the transported coefficients
// conjugate through the gauge, so the summands dwarf the result and
// agreement is meaningful at their scale.
inline double dual_shift_residual(const ModelParams& p, int family, int x,
                                  int n) {
    detail::check_family(p, family);
    if (x < 0 || n < 0)
        throw std::domain_error("dual_shift_residual: x, n must be >= 0");
    const MatrixL u1 = detail::upsilon_l(p, family, 1);

    // apply a transported ladder term by term, tracking the summand scale
    const auto apply_terms = [&](const LeftDiffOp& tm, Matrix& out) {
        MatrixL acc = MatrixL::Zero(p.N, p.N);
        double scale = 0.0;
        for (const auto& [j, g] : tm.terms) {
            if (n + j < 0) continue;
            const MatrixL term = g(n).cast<long double>()
                               * detail::q_eval_l(p, family, x, n + j);
            acc += term;
            scale = std::max(scale, maxabs_l(term));
        }
        out = acc.cast<double>();
        return scale;
    };

    Matrix raise_lhs, lower_lhs;
    const double raise_scale = apply_terms(tau_map(p, ladder_M(p)), raise_lhs);
    const double lower_scale =
        apply_terms(tau_map(p, ladder_Mdagger(p)), lower_lhs);

    const Matrix raise_rhs =
        MatrixL(detail::q_eval_l(p, family, x + 1, n) * u1 * ipa_pow_l(p, 1))
            .cast<double>();
    const Matrix lower_rhs =
        MatrixL((static_cast<long double>(x) / p.a)
                * detail::q_eval_l(p, family, x - 1, n)
                * ipa_pow_l(p, -1) * detail::upsilon_inv_l(p, family, 1))
            .cast<double>();

    const auto rel = [](const Matrix& lhs, const Matrix& rhs, double scale) {
        return maxabs(lhs - rhs)
             / std::max({1.0, maxabs(lhs), maxabs(rhs), scale});
    };
    return std::max(rel(raise_lhs, raise_rhs, raise_scale),
                    rel(lower_lhs, lower_rhs, lower_scale));
}

// Relative gap of <tau(M) Q_x, Q_y>_d = <Q_x, tau(Mdagger) Q_y>_d for the
// degree ladder pair, both sides summed with the dual truncation rule.
inline double dual_adjoint_transport_residual(const ModelParams& p, int family,
                                              int x, int y,
                                              const Truncation& t = {1e-14, 300}) {
    detail::check_family(p, family);
    const LeftDiffOp tm = tau_map(p, ladder_M(p));
    const LeftDiffOp tmd = tau_map(p, ladder_Mdagger(p));
    const ModelParams pc = p;
    const int fam = family;
    const FamilyFn qfam = [pc, fam](int nn, int xx) {
        return q_eval(pc, fam, xx, nn);
    };
    MatrixL lhs = MatrixL::Zero(p.N, p.N);
    MatrixL rhs = MatrixL::Zero(p.N, p.N);
    int consecutive_small = 0;
    for (int n = 0; n < t.max_terms && consecutive_small < 3; ++n) {
        const MatrixL u = dual_weight_U(p, n).cast<long double>();
        const MatrixL lterm =
            apply_left(tm, qfam, n, x).transpose().cast<long double>() * u
            * q_eval(p, family, y, n).cast<long double>();
        const MatrixL rterm =
            q_eval(p, family, x, n).transpose().cast<long double>() * u
            * apply_left(tmd, qfam, n, y).cast<long double>();
        lhs += lterm;
        rhs += rterm;
        const double ts = std::max(maxabs_l(lterm), maxabs_l(rterm));
        const double ss = std::max({1.0, maxabs_l(lhs), maxabs_l(rhs)});
        if (ts == 0.0 || ts < t.eps * ss) ++consecutive_small;
        else consecutive_small = 0;
    }
    if (consecutive_small < 3)
        throw convergence_error(
            "dual_adjoint_transport_residual: truncation not reached");
    return maxabs_l(lhs - rhs)
         / std::max({1.0, maxabs_l(lhs), maxabs_l(rhs)});
}

// ---------------------------------------------------------------------------
// Partial-sum kernel and its boundary form
// ---------------------------------------------------------------------------

// Boundary form (P_{n+1}(y)^T H_n^{-1} P_n(x) - P_n(y)^T H_n^{-1} P_{n+1}(x))
// divided by y - x, for integer x != y.
inline Matrix cd_boundary_term(const ModelParams& p, int n, int x, int y) {
    if (x == y) throw std::domain_error("cd_boundary_term: needs x != y");
    const MatrixL hin = norm_H_l(p, n).inverse();
    const MatrixL b =
        P_eval(p, n + 1, y).transpose().cast<long double>() * hin
            * P_eval(p, n, x).cast<long double>()
        - P_eval(p, n, y).transpose().cast<long double>() * hin
              * P_eval(p, n + 1, x).cast<long double>();
    return MatrixL(b / static_cast<long double>(y - x)).cast<double>();
}

// Relative gap between sum_{k<=n} P_k(y)^T H_k^{-1} P_k(x) and the boundary
// form above. The sum telescopes into the boundary, and the boundary decays
// in n, which is what makes the dual pairing orthogonal off the diagonal.
inline double cd_identity_gap(const ModelParams& p, int n, int x, int y) {
    MatrixL sum = MatrixL::Zero(p.N, p.N);
    for (int k = 0; k <= n; ++k)
        sum += P_eval(p, k, y).transpose().cast<long double>()
             * norm_H_l(p, k).inverse()
             * P_eval(p, k, x).cast<long double>();
    const Matrix rhs = cd_boundary_term(p, n, x, y);
    const Matrix lhs = sum.cast<double>();
    return maxabs(lhs - rhs) / std::max({1.0, maxabs(lhs), maxabs(rhs)});
}

// ---------------------------------------------------------------------------
// Dual-dual family (on top of family 1)
// ---------------------------------------------------------------------------

namespace detail {

// Extended-precision recurrence pair {Btil_n, Ctil_n} of the dual-dual family.
inline std::pair<MatrixL, MatrixL> dualdual_coeffs_l(const ModelParams& p,
                                                     int n) {
    const int N = p.N;
    const MatrixL dn = norm_D_l(p, n);
    const MatrixL at = matA_l(p).transpose();
    MatrixL mid = MatrixL::Zero(N, N);
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k)
            if (at(j, k) != 0.0L) mid(j, k) = at(j, k) * dn(j, j) / dn(k, k);
    const MatrixL l0 = matL(p, 0).cast<long double>();
    const MatrixL l0_inv = matL_inv(p, 0).cast<long double>();
    const auto frame = [&](const MatrixL& m) {
        return MatrixL(l0_inv * ipa_pow_l(p, p.lambda) * m
                       * ipa_pow_l(p, -p.lambda) * l0);
    };
    const MatrixL btil = matJ_l(p)
                       + static_cast<long double>(n + p.a)
                             * MatrixL::Identity(N, N)
                       + static_cast<long double>(p.lambda) * ipa_pow_l(p, -1)
                       + static_cast<long double>(p.a) * frame(mid);
    MatrixL ctil = MatrixL::Zero(N, N);
    if (n >= 1) {
        const MatrixL dm = norm_D_l(p, n - 1);
        MatrixL ratio = MatrixL::Zero(N, N);
        for (int j = 0; j < N; ++j) ratio(j, j) = dn(j, j) / dm(j, j);
        ctil = frame(ratio);
    }
    return {btil, ctil};
}

// Extended-precision coefficient vector of the dual-dual polynomial.
inline std::vector<MatrixL> dualdual_coeff_vec_l(const ModelParams& p, int n) {
    const MatrixL zero = MatrixL::Zero(p.N, p.N);
    std::vector<MatrixL> prev;
    std::vector<MatrixL> cur = {MatrixL::Identity(p.N, p.N)};
    for (int s = 0; s < n; ++s) {
        const auto [btil, ctil] = dualdual_coeffs_l(p, s);
        std::vector<MatrixL> next(s + 2, zero);
        for (int k = 0; k <= s; ++k) {
            next[k + 1] += cur[k];     // the variable multiplies from the right
            next[k] -= btil * cur[k];  // so the recurrence acts on the left
        }
        for (std::size_t k = 0; k < prev.size(); ++k) next[k] -= ctil * prev[k];
        prev = std::move(cur);
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

// Recurrence coefficients of the right-variable monic family Ptil_n with
//   Ptil_n(X) X = Ptil_{n+1}(X) + Btil_n Ptil_n(X) + Ctil_n Ptil_{n-1}(X).
// The superdiagonal correction and the consecutive core ratio are assembled
// in extended precision because the core itself spans a factorial range,
// while the ratios stay modest. Ctil_0 = 0. Returns {Btil_n, Ctil_n}.
inline std::pair<Matrix, Matrix> dualdual_coeffs(const ModelParams& p, int n) {
    if (n < 0) throw std::domain_error("dualdual_coeffs: n must be >= 0");
    const auto [btil, ctil] = detail::dualdual_coeffs_l(p, n);
    return {btil.cast<double>(), ctil.cast<double>()};
}

// Right-variable monic polynomial Ptil_n from the recurrence; Ptil_0 = I.
inline MatrixPolynomial dualdual_poly(const ModelParams& p, int n) {
    if (n < 0) throw std::domain_error("dualdual_poly: n must be >= 0");
    const std::vector<MatrixL> cur = detail::dualdual_coeff_vec_l(p, n);
    MatrixPolynomial out;
    out.side = VarSide::RightMatrixVar;
    out.coeffs.reserve(cur.size());
    for (const MatrixL& c : cur) out.coeffs.push_back(c.cast<double>());
    return out;
}

// Value of Ptil_n at the matrix point that closes the loop back to the
// primal family: P_n(x) = (I+A)^n Ptil_n(Jfrak(x)). Horner from the right,
// run entirely in the extended coefficient lane because the partial sums
// dwarf the value at the larger x.
inline Matrix dualdual_eval(const ModelParams& p, int n, int x) {
    if (n < 0) throw std::domain_error("dualdual_eval: n must be >= 0");
    const std::vector<MatrixL> coeffs = detail::dualdual_coeff_vec_l(p, n);
    const MatrixL xl = matJ_l(p)
                     + static_cast<long double>(x + p.lambda)
                           * ipa_pow_l(p, -1);
    MatrixL r = coeffs.back();
    for (int k = static_cast<int>(coeffs.size()) - 2; k >= 0; --k)
        r = r * xl + coeffs[k];
    return r.cast<double>();
}

}  // namespace mcharlier
