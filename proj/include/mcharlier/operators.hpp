#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>

#include "mvop.hpp"

// Difference operators in two variables, represented extensionally: each
// operator stores its coefficient callables, and equality of operators is
// decided by applying both sides to a finite polynomial basis. A difference
// operator that annihilates every polynomial is the zero operator, so a basis
// whose degree exceeds the shift order plus the coefficient degree is enough
// to separate any two operators compared here.
//
// Right operators act through the variable x:
//   (F . D)(x) = sum_j F(x + j) F_j(x).
// Left operators act through the degree index n:
//   (M . P)_n = sum_j G_j(n) P_{n+j},  with P_{n+j} = 0 whenever n + j < 0.
//
// Both kinds are immutable value types built from pure callables, so they can
// be shared freely across threads.

namespace mcharlier {

using CoeffFn = std::function<Matrix(int)>;

struct RightDiffOp {
    // shift j -> F_j, evaluated at the argument x of the input function
    std::map<int, CoeffFn> terms;
};

struct LeftDiffOp {
    // shift j -> G_j, evaluated at the degree index n
    std::map<int, CoeffFn> terms;
};

// Family of matrix functions indexed by degree, evaluated at integer points.
using FamilyFn = std::function<Matrix(int, int)>;

inline Matrix apply_right(const RightDiffOp& d, const MatrixFn& f, int x) {
    Matrix sum;
    bool first = true;
    for (const auto& [j, fj] : d.terms) {
        const Matrix t = f(x + j) * fj(x);
        if (first) {
            sum = t;
            first = false;
        } else {
            sum += t;
        }
    }
    if (first) {
        const Matrix probe = f(x);
        return Matrix::Zero(probe.rows(), probe.cols());
    }
    return sum;
}

inline Matrix apply_left(const LeftDiffOp& m, const FamilyFn& family, int n, int x) {
    Matrix sum;
    bool first = true;
    for (const auto& [j, gj] : m.terms) {
        if (n + j < 0) continue;
        const Matrix t = gj(n) * family(n + j, x);
        if (first) {
            sum = t;
            first = false;
        } else {
            sum += t;
        }
    }
    if (first) {
        const Matrix probe = family(n, x);
        return Matrix::Zero(probe.rows(), probe.cols());
    }
    return sum;
}

// Composition acts left factor first: (F . compose_right(d1, d2)) = (F . d1) . d2.
// The coefficient at total shift m is sum_{j+k=m} F_j(x + k) G_k(x).
inline RightDiffOp compose_right(const RightDiffOp& d1, const RightDiffOp& d2) {
    RightDiffOp out;
    std::set<int> shifts;
    for (const auto& [j, fj] : d1.terms)
        for (const auto& [k, gk] : d2.terms) shifts.insert(j + k);
    for (int m : shifts) {
        out.terms[m] = [d1, d2, m](int x) {
            Matrix sum;
            bool first = true;
            for (const auto& [j, fj] : d1.terms) {
                const auto it = d2.terms.find(m - j);
                if (it == d2.terms.end()) continue;
                const int k = m - j;
                const Matrix t = fj(x + k) * it->second(x);
                if (first) {
                    sum = t;
                    first = false;
                } else {
                    sum += t;
                }
            }
            return sum;
        };
    }
    return out;
}

inline RightDiffOp add_right(const RightDiffOp& d1, const RightDiffOp& d2) {
    RightDiffOp out;
    std::set<int> shifts;
    for (const auto& [j, fj] : d1.terms) shifts.insert(j);
    for (const auto& [j, fj] : d2.terms) shifts.insert(j);
    for (int j : shifts) {
        const auto i1 = d1.terms.find(j);
        const auto i2 = d2.terms.find(j);
        if (i1 != d1.terms.end() && i2 != d2.terms.end()) {
            const CoeffFn f = i1->second;
            const CoeffFn g = i2->second;
            out.terms[j] = [f, g](int x) { return Matrix(f(x) + g(x)); };
        } else if (i1 != d1.terms.end()) {
            out.terms[j] = i1->second;
        } else {
            out.terms[j] = i2->second;
        }
    }
    return out;
}

inline RightDiffOp scale_right(double c, const RightDiffOp& d) {
    RightDiffOp out;
    for (const auto& [j, fj] : d.terms) {
        const CoeffFn f = fj;
        out.terms[j] = [c, f](int x) { return Matrix(c * f(x)); };
    }
    return out;
}

inline RightDiffOp commutator_right(const RightDiffOp& d1, const RightDiffOp& d2) {
    return add_right(compose_right(d1, d2), scale_right(-1.0, compose_right(d2, d1)));
}

// Largest coefficient magnitude a lowering term produces at the arguments
// 0 <= y <= -j-1 that would otherwise reach negative evaluation points.
// Operators compatible with families supported on the nonnegative integers
// have defect zero.
inline double boundary_defect(const RightDiffOp& d) {
    double worst = 0.0;
    for (const auto& [j, fj] : d.terms) {
        for (int y = 0; y < -j; ++y) worst = std::max(worst, maxabs(fj(y)));
    }
    return worst;
}

// Named right operators

inline RightDiffOp op_identity(int n_rows) {
    RightDiffOp d;
    d.terms[0] = [n_rows](int) { return Matrix(Matrix::Identity(n_rows, n_rows)); };
    return d;
}

inline RightDiffOp const_op(const Matrix& c) {
    RightDiffOp d;
    const Matrix cc = c;
    d.terms[0] = [cc](int) { return cc; };
    return d;
}

inline RightDiffOp op_delta(const ModelParams& p) {
    const int nn = p.N;
    RightDiffOp d;
    d.terms[1] = [nn](int) { return Matrix(Matrix::Identity(nn, nn)); };
    d.terms[0] = [nn](int) { return Matrix(-Matrix::Identity(nn, nn)); };
    return d;
}

// Forward weight shift D: (F . D)(x) = F(x+1)(I + A).
inline RightDiffOp op_D(const ModelParams& p) {
    const Matrix ipa = ipa_pow(p, 1);
    RightDiffOp d;
    d.terms[1] = [ipa](int) { return ipa; };
    return d;
}

// Its inner-product adjoint: (F . Ddagger)(x) = F(x-1) (x/a) (I + A)^{-1}.
inline RightDiffOp op_Ddagger(const ModelParams& p) {
    const Matrix ipa_inv = ipa_pow(p, -1);
    const double a = p.a;
    RightDiffOp d;
    d.terms[-1] = [ipa_inv, a](int x) { return Matrix((x / a) * ipa_inv); };
    return d;
}

// Multiplication by the scalar variable.
inline RightDiffOp op_x(const ModelParams& p) {
    const int nn = p.N;
    RightDiffOp d;
    d.terms[0] = [nn](int x) { return Matrix(double(x) * Matrix::Identity(nn, nn)); };
    return d;
}

// Multiplication by the matrix that commutes with the weight at every point.
inline RightDiffOp op_Jfrak(const ModelParams& p) {
    const ModelParams pc = p;
    RightDiffOp d;
    d.terms[0] = [pc](int x) { return matJfrak(pc, x); };
    return d;
}

// Second-order difference operator whose eigenfunctions are the monic family.
inline RightDiffOp op_Dfrak(const ModelParams& p) {
    const Matrix ipa = ipa_pow(p, 1);
    const Matrix ipa_inv = ipa_pow(p, -1);
    const Matrix j = matJ(p);
    const double a = p.a;
    const double lam = p.lambda;
    RightDiffOp d;
    d.terms[1] = [ipa, a](int) { return Matrix(a * ipa); };
    d.terms[0] = [j, ipa_inv, lam](int x) { return Matrix(-j - (x + lam) * ipa_inv); };
    d.terms[-1] = [ipa_inv](int x) { return Matrix(double(x) * ipa_inv); };
    return d;
}

// Lambda-lowering first-order operator, adjoint to the forward difference:
// (F . S)(x) = -F(x) Phi(x)^T + F(x-1) (Phi(x)^T - Psi(x)^T).
inline RightDiffOp op_S(const ModelParams& p) {
    const PearsonData pd = pearson(p);
    RightDiffOp d;
    d.terms[0] = [pd](int x) { return Matrix(-pearson_phi(pd, x).transpose()); };
    d.terms[-1] = [pd](int x) {
        return Matrix((pearson_phi(pd, x) - pearson_psi(pd, x)).transpose());
    };
    return d;
}

// Named left operators

// Degree ladder paired with op_D: M = (I+A) + H_n B H_{n-1}^{-1} delta^{-1}
// where B = (a o(I + A^T))^{-1} is the lowering gauge of the weight shift.
inline LeftDiffOp ladder_M(const ModelParams& p) {
    const ModelParams pc = p;
    const Matrix ipa = ipa_pow(p, 1);
    LeftDiffOp m;
    m.terms[0] = [ipa](int) { return ipa; };
    m.terms[-1] = [pc](int n) {
        if (n < 1) return Matrix(Matrix::Zero(pc.N, pc.N));
        return Matrix((1.0 / pc.a) * norm_H(pc, n)
                      * ipa_pow(pc, -1).transpose() * norm_H(pc, n - 1).inverse());
    };
    return m;
}

// Degree ladder paired with op_Ddagger: Mdagger = B^* delta + H_n (I+A^T) H_n^{-1}.
inline LeftDiffOp ladder_Mdagger(const ModelParams& p) {
    const ModelParams pc = p;
    const Matrix blow = (1.0 / p.a) * ipa_pow(p, -1);
    LeftDiffOp m;
    m.terms[1] = [blow](int) { return blow; };
    m.terms[0] = [pc](int n) {
        const Matrix h = norm_H(pc, n);
        return Matrix(h * ipa_pow(pc, 1).transpose() * h.inverse());
    };
    return m;
}

// Three-term recurrence as a left operator, paired with op_x.
inline LeftDiffOp op_threeterm(const ModelParams& p) {
    const ModelParams pc = p;
    LeftDiffOp m;
    m.terms[1] = [pc](int) { return Matrix(Matrix::Identity(pc.N, pc.N)); };
    m.terms[0] = [pc](int n) { return rec_B(pc, n); };
    m.terms[-1] = [pc](int n) {
        if (n < 1) return Matrix(Matrix::Zero(pc.N, pc.N));
        return rec_C(pc, n);
    };
    return m;
}

// Left realization of op_Jfrak: the alternative three-term relation
// (I+A)^{-1} delta + (J + (n+lambda)(I+A)^{-1} + a H_n (I+A^T) H_n^{-1})
// + H_n (I+A^T)^{-1} H_{n-1}^{-1} delta^{-1}.
inline LeftDiffOp op_Jfrak_left(const ModelParams& p) {
    const ModelParams pc = p;
    LeftDiffOp m;
    m.terms[1] = [pc](int) { return ipa_pow(pc, -1); };
    m.terms[0] = [pc](int n) {
        const Matrix h = norm_H(pc, n);
        return Matrix(matJ(pc) + (n + pc.lambda) * ipa_pow(pc, -1)
                      + pc.a * h * ipa_pow(pc, 1).transpose() * h.inverse());
    };
    m.terms[-1] = [pc](int n) {
        if (n < 1) return Matrix(Matrix::Zero(pc.N, pc.N));
        return Matrix(norm_H(pc, n) * ipa_pow(pc, -1).transpose()
                      * norm_H(pc, n - 1).inverse());
    };
    return m;
}

using NormFn = std::function<Matrix(int)>;

// Adjoint with respect to the weighted degree pairing defined by the
// positive definite norms H_n: the term G_j delta^j maps to
// H_n G_j(n-j)^T H_{n-j}^{-1} delta^{-j}, truncated to zero when n - j < 0.
// The conjugation is evaluated in extended precision because the norms grow
// factorially and their condition number would otherwise eat most of the
// double mantissa before the algebraic cancellation completes.
inline LeftDiffOp adjoint_left(const LeftDiffOp& m, const NormFn& norms) {
    LeftDiffOp out;
    for (const auto& [j, gj] : m.terms) {
        const CoeffFn g = gj;
        const NormFn h = norms;
        const int jj = j;
        out.terms[-j] = [g, h, jj](int n) {
            const Matrix hn = h(n);
            if (n - jj < 0) return Matrix(Matrix::Zero(hn.rows(), hn.cols()));
            const MatrixL prod = hn.cast<long double>()
                                 * g(n - jj).transpose().cast<long double>()
                                 * h(n - jj).cast<long double>().inverse();
            return Matrix(prod.cast<double>());
        };
    }
    return out;
}

// Largest relative gap between the left action of m and the right action of d
// on the monic family over the grid 0..n_max x 0..x_max. A small value
// certifies that d is the image of m under the left-to-right isomorphism.
inline double psi_residual(const LeftDiffOp& m, const RightDiffOp& d,
                           const ModelParams& p, int n_max, int x_max) {
    const FamilyFn family = [p](int n, int x) { return P_eval(p, n, x); };
    double worst = 0.0;
    for (int n = 0; n <= n_max; ++n) {
        const MatrixFn pn = [p, n](int x) { return P_eval(p, n, x); };
        for (int x = 0; x <= x_max; ++x) {
            const Matrix lhs = apply_left(m, family, n, x);
            const Matrix rhs = apply_right(d, pn, x);
            const double scale = std::max({1.0, maxabs(lhs), maxabs(rhs)});
            worst = std::max(worst, maxabs(lhs - rhs) / scale);
        }
    }
    return worst;
}

// Largest relative gap between two right operators applied to the monic
// basis over the grid 0..n_max x 0..x_max.
inline double op_gap_on_basis(const RightDiffOp& d1, const RightDiffOp& d2,
                              const ModelParams& p, int n_max, int x_max) {
    double worst = 0.0;
    for (int n = 0; n <= n_max; ++n) {
        const MatrixFn pn = [p, n](int x) { return P_eval(p, n, x); };
        for (int x = 0; x <= x_max; ++x) {
            const Matrix lhs = apply_right(d1, pn, x);
            const Matrix rhs = apply_right(d2, pn, x);
            const double scale = std::max({1.0, maxabs(lhs), maxabs(rhs)});
            worst = std::max(worst, maxabs(lhs - rhs) / scale);
        }
    }
    return worst;
}

// Relative residuals of the bracket relations satisfied by the shift pair
// (D, Ddagger), the commuting multiplication Jfrak, and the variable x,
// together with the Casimir element a D Ddagger - Jfrak = x - Jfrak.
// All residuals are measured on the monic basis, scaled by the size of the
// values being compared.
struct LieReport {
    double bracket_jfrak_d = 0.0;        // [Jfrak, D] = D
    double bracket_jfrak_ddagger = 0.0;  // [Jfrak, Ddagger] = -Ddagger
    double bracket_d_x = 0.0;            // [D, x] = -D
    double bracket_ddagger_x = 0.0;      // [Ddagger, x] = Ddagger
    double bracket_d_ddagger = 0.0;      // [D, Ddagger] = -(1/a) I
    double casimir_is_variable = 0.0;    // a D Ddagger = x
    double casimir_commutes_d = 0.0;
    double casimir_commutes_ddagger = 0.0;
    double casimir_commutes_jfrak = 0.0;

    double max_residual() const {
        return std::max({bracket_jfrak_d, bracket_jfrak_ddagger, bracket_d_x,
                         bracket_ddagger_x, bracket_d_ddagger, casimir_is_variable,
                         casimir_commutes_d, casimir_commutes_ddagger,
                         casimir_commutes_jfrak});
    }
};

inline LieReport lie_checks(const ModelParams& p, int n_max = 8, int x_max = 10) {
    const RightDiffOp d = op_D(p);
    const RightDiffOp dd = op_Ddagger(p);
    const RightDiffOp jf = op_Jfrak(p);
    const RightDiffOp xv = op_x(p);
    const Matrix ident = Matrix::Identity(p.N, p.N);

    LieReport r;
    r.bracket_jfrak_d = op_gap_on_basis(commutator_right(jf, d), d, p, n_max, x_max);
    r.bracket_jfrak_ddagger =
        op_gap_on_basis(commutator_right(jf, dd), scale_right(-1.0, dd), p, n_max, x_max);
    r.bracket_d_x = op_gap_on_basis(commutator_right(d, xv), scale_right(-1.0, d), p,
                                    n_max, x_max);
    r.bracket_ddagger_x = op_gap_on_basis(commutator_right(dd, xv), dd, p, n_max, x_max);
    r.bracket_d_ddagger = op_gap_on_basis(commutator_right(d, dd),
                                          const_op(Matrix((-1.0 / p.a) * ident)), p,
                                          n_max, x_max);
    r.casimir_is_variable =
        op_gap_on_basis(scale_right(p.a, compose_right(d, dd)), xv, p, n_max, x_max);

    // Commutation with the Casimir is checked as equality of the two
    // products, so the comparison scale comes from the products themselves.
    const RightDiffOp cas =
        add_right(scale_right(p.a, compose_right(d, dd)), scale_right(-1.0, jf));
    const auto commutes = [&](const RightDiffOp& e) {
        return op_gap_on_basis(compose_right(cas, e), compose_right(e, cas), p, n_max,
                               x_max);
    };
    r.casimir_commutes_d = commutes(d);
    r.casimir_commutes_ddagger = commutes(dd);
    r.casimir_commutes_jfrak = commutes(jf);
    return r;
}

}  // namespace mcharlier
