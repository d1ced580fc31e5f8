#pragma once

#include <cmath>
#include <stdexcept>

namespace mcharlier {

// Rising factorial (z)_k = z (z+1) ... (z+k-1), with (z)_0 = 1.
inline double pochhammer(double z, int k) {
    double p = 1.0;
    for (int i = 0; i < k; ++i) p *= z + i;
    return p;
}

// n! as a double product. Everything in this library lives at desk scale
// (arguments well under ~170), so plain products beat a log-gamma detour.
inline double factorial(int n) {
    if (n < 0) throw std::domain_error("factorial: negative argument");
    double p = 1.0;
    for (int i = 2; i <= n; ++i) p *= i;
    return p;
}

// a^x / x! accumulated one factor a/t at a time. Factors eventually fall
// below 1, so large x underflows to 0 instead of overflowing en route.
inline double poisson_term(double a, int x) {
    double p = 1.0;
    for (int t = 1; t <= x; ++t) p *= a / t;
    return p;
}

// Charlier polynomial c_n^(a)(x) = sum_{k=0}^n (-n)_k (-x)_k / k! (-1/a)^k,
// evaluated by term-ratio recursion. The sum truncates exactly at k = n.
// Negative a is allowed: c^(-a)(-x) shows up inside lower triangular entry
// formulas and in the convolution identity. Terms accumulate in extended
// precision: the alternating sum cancels heavily at small a, and the shift
// identities need the returned double to carry the fully cancelled value.
inline double charlier(int n, double a, double x) {
    if (a == 0.0) throw std::domain_error("charlier: a must be nonzero");
    if (n < 0) throw std::domain_error("charlier: n must be nonnegative");
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int k = 0; k < n; ++k) {
        term *= static_cast<long double>(k - n) * (k - x)
              / (static_cast<long double>(k + 1) * (-a));
        sum += term;
    }
    return static_cast<double>(sum);
}

struct DualHahnParams {
    double gamma = 0.0;
    double delta = 0.0;
    int bigN = 0;
};

// Dual Hahn polynomial R_k(lambda(x)) = 3F2(-k, -x, x+gamma+delta+1;
// gamma+1, -bigN; 1), a terminating sum of k+1 terms. Extended-precision
// accumulation for the same reason as charlier.
inline double dual_hahn(int k, int x, const DualHahnParams& p) {
    if (k < 0 || k > p.bigN) throw std::domain_error("dual_hahn: k outside 0..bigN");
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int s = 0; s < k; ++s) {
        term *= static_cast<long double>(s - k) * (s - x) * (s + x + p.gamma + p.delta + 1.0L)
              / ((s + p.gamma + 1.0L) * (s - p.bigN) * (s + 1.0L));
        sum += term;
    }
    return static_cast<double>(sum);
}

// Standard dual Hahn weight in factorial form. gamma and delta must be
// nonnegative integers here; those are the only cases that arise.
inline double dual_hahn_weight(int x, const DualHahnParams& p) {
    int g = static_cast<int>(p.gamma);
    int d = static_cast<int>(p.delta);
    if (g != p.gamma || d != p.delta)
        throw std::domain_error("dual_hahn_weight: gamma, delta must be integers");
    if (x < 0 || x > p.bigN || g < 0 || d < 0 || d + x < 0 || x + g + d < 0)
        throw std::domain_error("dual_hahn_weight: negative factorial argument");
    double num = (2.0 * x + g + d + 1) * factorial(g + x) * factorial(x + g + d)
               * factorial(d) * factorial(p.bigN) * factorial(p.bigN);
    double den = factorial(x) * factorial(g) * factorial(d + x)
               * factorial(p.bigN - x) * factorial(x + g + d + p.bigN + 1);
    return num / den;
}

} // namespace mcharlier
