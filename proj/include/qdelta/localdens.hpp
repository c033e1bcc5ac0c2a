#pragma once

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "modarith.hpp"
#include "qform.hpp"

// p-adic densities of F(x) = M, the Euler product built from them, and L(1, psi0).
//
// Counts mod p^k are produced by lifting solutions one level at a time. For
// j >= 1 and any x,
//     F(x + p^j t) = F(x) + p^j grad F(x) . t   mod p^(j+1),
// so a solution with a unit gradient has exactly p^2 lifts, all again with a
// unit gradient, and its whole subtree is counted in closed form. Only points
// whose gradient vanishes mod p are walked, depth first.

namespace qdelta {

/// Work limit on the number of lifted solutions visited by one count.
constexpr i64 kDensityNodeBudget = 200'000'000;

struct LocalDensity {
    i64 p = 0;
    int k_star = 0;
    i64 count = 0;       // solutions mod p^k_star (primitive ones for the cone)
    i64 count_next = 0;  // same at k_star + 1
    i64 num = 0, den = 1;  // reduced value
    double value = 0.0;
    bool certified = false;
    std::string method;               // "enumeration", "closed-form" or "cone"
    std::vector<double> level_ratios; // N(k) / p^(2k), k = 1, 2, ...
};

namespace detail {

struct LiftProblem {
    const QForm* F;
    i128 M;      // target value
    i64 p;
    int e;       // congruence depth: x = lam mod p^e
    Vec3 lam;    // reduced mod p^e
    bool primitive_only = false;
};

inline i128 eval128(const QForm& F, const Vec3& x) {
    std::array<i128, 3> y{x[0], x[1], x[2]};
    return F.eval_as<i128>(y);
}

/// Depth-first lift. counts[j] accumulates the number of solutions mod p^j, j <= K.
class Lifter {
public:
    Lifter(const LiftProblem& pr, int K) : pr_(pr), K_(K), counts_(K + 1, 0) {
        pp_.push_back(1);
        for (int j = 1; j <= K + 1; ++j) pp_.push_back(pp_.back() * pr.p);
    }

    std::vector<i64> run() {
        counts_[0] = 1;
        const i64 p = pr_.p;
        for (i64 a = 0; a < p; ++a)
            for (i64 b = 0; b < p; ++b)
                for (i64 c = 0; c < p; ++c) {
                    Vec3 x{a, b, c};
                    if (pr_.e >= 1 && (a != mod(pr_.lam[0], p) || b != mod(pr_.lam[1], p) || c != mod(pr_.lam[2], p)))
                        continue;
                    if (pr_.primitive_only && a == 0 && b == 0 && c == 0) continue;
                    if (mod128(eval128(*pr_.F, x) - pr_.M, p) != 0) continue;
                    visit(x, 1);
                }
        return counts_;
    }

private:
    void visit(const Vec3& x, int j) {
        if (++nodes_ > kDensityNodeBudget) throw std::runtime_error("local density: lifting exceeded the work budget");
        counts_[j] += 1;
        if (j == K_) return;
        const i64 p = pr_.p, pj = pp_[j];
        i128 diff = eval128(*pr_.F, x) - pr_.M;
        if (j < pr_.e) {
            // the next digit is forced by the congruence condition
            Vec3 y{};
            for (int i = 0; i < 3; ++i) y[i] = mod(pr_.lam[i], pp_[j + 1]);
            if (mod128(eval128(*pr_.F, y) - pr_.M, pp_[j + 1]) == 0) visit(y, j + 1);
            return;
        }
        Vec3 g = pr_.F->gradient(x);
        if (mod(g[0], p) || mod(g[1], p) || mod(g[2], p)) {
            // unit gradient: every descendant has one, so each level multiplies by p^2
            i64 m = 1;
            for (int k = j + 1; k <= K_; ++k)
                if (__builtin_mul_overflow(m, p * p, &m) || __builtin_add_overflow(counts_[k], m, &counts_[k]))
                    throw std::overflow_error("local density: solution count exceeds 64 bits");
            return;
        }
        // gradient divisible by p: the lifts are all of (Z/p)^3 or nothing
        if (mod128(diff / pj, p) != 0) return;
        if (j + 1 == K_) {
            counts_[K_] += p * p * p;
            return;
        }
        for (i64 t0 = 0; t0 < p; ++t0)
            for (i64 t1 = 0; t1 < p; ++t1)
                for (i64 t2 = 0; t2 < p; ++t2) visit({x[0] + pj * t0, x[1] + pj * t1, x[2] + pj * t2}, j + 1);
    }

    LiftProblem pr_;
    int K_;
    std::vector<i64> counts_;
    std::vector<i64> pp_;
    i64 nodes_ = 0;
};

inline void reduce_fraction(LocalDensity& d) {
    i64 g = std::gcd(d.num, d.den);
    if (g > 1) { d.num /= g; d.den /= g; }
    d.value = static_cast<double>(d.num) / static_cast<double>(d.den);
}

inline bool ramified(const ProblemInstance& I, i64 p) {
    i128 bad = static_cast<i128>(2) * I.Delta() * I.L() * I.m0();
    return bad % p == 0;
}

}  // namespace detail

/// Solutions of F(x) = M mod p^j that are not all divisible by p, j = 0..K.
inline std::vector<i64> primitive_counts(const QForm& F, i128 M, i64 p, int K) {
    detail::LiftProblem pr{&F, M, p, 0, {0, 0, 0}, true};
    auto c = detail::Lifter(pr, K).run();
    c[0] = 0;
    return c;
}

inline std::vector<i64> primitive_cone_counts(const QForm& F, i64 p, int K) { return primitive_counts(F, 0, p, K); }

/// Number of x mod p^j (j = 0..K) with F(x) = M mod p^j and x = lam mod p^min(j, e).
/// Without a congruence condition the points divisible by p are peeled off:
/// x = p y contributes p^3 N_{M/p^2}(k - 2), so only primitive points are walked.
inline std::vector<i64> solution_counts(const QForm& F, i128 M, i64 p, int e, const Vec3& lam, int K) {
    if (!is_prime(static_cast<u64>(p))) throw std::invalid_argument("solution_counts: p must be prime");
    if (K < 1) throw std::invalid_argument("solution_counts: need at least one level");
    if (e > 0) {
        detail::LiftProblem pr{&F, M, p, e, lam, false};
        return detail::Lifter(pr, K).run();
    }
    auto N = primitive_counts(F, M, p, K);
    N[0] = 1;
    const i128 p2 = static_cast<i128>(p) * p;
    const bool div1 = M % p == 0, div2 = M % p2 == 0;
    if (div1) N[1] += 1;
    if (K >= 2 && div2) N[2] += p * p * p;
    if (K >= 3 && div2) {
        auto sub = solution_counts(F, M / p2, p, 0, lam, K - 2);
        for (int k = 3; k <= K; ++k)
            if (__builtin_mul_overflow(sub[k - 2], p * p * p, &sub[k - 2]) || __builtin_add_overflow(N[k], sub[k - 2], &N[k]))
                throw std::overflow_error("local density: solution count exceeds 64 bits");
    }
    return N;
}

/// Exponent of the congruence condition at p.
inline int congruence_depth(const ProblemInstance& I, i64 p) { return valuation(I.L(), p); }

/// Level from which Hensel's lemma fixes N(k+1) = p^2 N(k). On F(x) = M with
/// ord_p M < k we have 2 F(x) = x . grad F(x), hence ord_p grad F(x) <= ord_p(2M).
inline int hensel_level(i64 p, i64 M_nonzero) {
    int v = valuation(2 * M_nonzero, p);
    return std::max(2 * v + 1, valuation(M_nonzero, p) + 1);
}

/// sigma_p(V1; (L, lambda)) for p != p0. Closed form at unramified primes too
/// large to enumerate; lifting otherwise. `force_enumeration` bypasses the closed form.
inline LocalDensity sigma_p(const ProblemInstance& I, i64 p, bool force_enumeration = false, int extra_levels = 0) {
    if (p < 2 || !is_prime(static_cast<u64>(p))) throw std::invalid_argument("sigma_p: p must be prime");
    if (p == I.p0()) throw std::invalid_argument("sigma_p: p0 takes the cone density");
    const QForm& F = I.form();
    LocalDensity d;
    d.p = p;
    const bool bad = detail::ramified(I, p);
    if (!bad && (!force_enumeration && p * p * p > 2'000'000)) {
        // nondegenerate ternary form over F_p: p^2 + p ((-M det)/p) points on F = M, all smooth
        int eta = jacobi(mod128(-static_cast<i128>(I.m0()) * I.Delta(), p), p);
        d.k_star = 1;
        d.count = p * p + p * eta;
        d.count_next = d.count * p * p;
        d.num = d.count;
        d.den = p * p;
        d.certified = true;
        d.method = "closed-form";
        detail::reduce_fraction(d);
        d.level_ratios = {d.value, d.value};
        return d;
    }
    const int e = congruence_depth(I, p);
    int need = std::max({1, e, hensel_level(p, I.m0())});
    if (bad) need = std::max(need, valuation(2 * I.Delta() * I.L(), p) + 2);
    const int K = need + 1 + extra_levels;
    Vec3 lam = I.cong().lambda;
    auto N = solution_counts(F, I.m0(), p, e, lam, K);
    d.method = "enumeration";
    for (int k = 1; k <= K; ++k) d.level_ratios.push_back(static_cast<double>(N[k]) / std::pow(double(p), 2.0 * k));
    // first certified level; a zero count is final as soon as it appears
    int ks = need;
    for (int k = std::max(1, e); k <= need; ++k)
        if (N[k] == 0) { ks = k; break; }
    d.k_star = ks;
    d.count = N[ks];
    d.count_next = N[ks + 1];
    d.certified = N[ks + 1] == p * p * N[ks];
    if (!d.certified) throw std::runtime_error("sigma_p: counts did not stabilize at p = " + std::to_string(p));
    d.num = N[ks];
    d.den = ipow(p, 2 * ks);
    detail::reduce_fraction(d);
    return d;
}

/// Density of the cone F = 0 at p0, from primitive counts P(k):
/// N(k) = P(k) + p^3 N(k-2) gives density P(k*)/p^(2k*) / (1 - 1/p).
inline LocalDensity sigma_p0_cone(const QForm& F, i64 p, int extra_levels = 0) {
    if (p < 2 || !is_prime(static_cast<u64>(p))) throw std::invalid_argument("sigma_p0_cone: p must be prime");
    LocalDensity d;
    d.p = p;
    d.method = "cone";
    // primitive x has ord_p grad F(x) <= ord_p(2 Delta) since adj(M) M x = Delta x
    const int v = valuation(2 * F.determinant(), p);
    const int need = 2 * v + 1;
    const int K = need + 1 + extra_levels;
    auto P = primitive_cone_counts(F, p, K);
    std::vector<i64> N(K + 1, 0);
    N[0] = 1;
    for (int k = 1; k <= K; ++k) N[k] = P[k] + (k >= 2 ? p * p * p * N[k - 2] : 1);
    for (int k = 1; k <= K; ++k) d.level_ratios.push_back(static_cast<double>(N[k]) / std::pow(double(p), 2.0 * k));
    d.k_star = need;
    d.count = P[need];
    d.count_next = P[need + 1];
    d.certified = P[need + 1] == p * p * P[need];
    if (!d.certified) throw std::runtime_error("sigma_p0_cone: primitive counts did not stabilize");
    d.num = P[need] * p;
    d.den = ipow(p, 2 * need) * (p - 1);
    detail::reduce_fraction(d);
    return d;
}

inline LocalDensity sigma_p0_cone(const ProblemInstance& I, int extra_levels = 0) {
    return sigma_p0_cone(I.form(), I.p0(), extra_levels);
}

// ---------------------------------------------------------------------------
// Singular series

struct EulerFactor {
    i64 p = 0;
    int psi = 0;  // the character value used in the convergence factor
    LocalDensity density;
    double factor = 0.0;
};

struct SingularSeries {
    bool square = false;
    i64 P_max = 0;
    std::vector<EulerFactor> factors;  // ascending p, p0 included
    double partial = 0.0;              // product over p <= P_max
    double drift = 0.0;                // |partial(P_max) - partial(P_max / 10)|
    double value = 0.0;                // all unramified p > P_max folded in exactly
    bool obstructed = false;
};

/// Euler product with convergence factors (1 - psi0(p)/p), psi0 replaced by 1 in
/// the square case. Every unramified p != p0 contributes exactly 1 - 1/p^2, so
/// the primes beyond P_max are folded in through prod_p (1 - 1/p^2) = 6/pi^2.
inline SingularSeries singular_series(const ProblemInstance& I, i64 P_max = 1000) {
    if (P_max < 2 || P_max > 10'000) throw std::invalid_argument("singular_series: P_max must lie in [2, 10^4]");
    SingularSeries s;
    s.P_max = P_max;
    const Psi0 psi = psi0(I.form(), I.m0());
    s.square = psi.square;
    const i64 p0 = I.p0();
    auto chi = [&](i64 p) { return s.square ? 1 : psi(p); };
    std::vector<i64> ps = primes_up_to(P_max);
    bool p0_in = false;
    for (i64 p : ps) p0_in |= p == p0;
    if (!p0_in) {
        ps.push_back(p0);
        std::sort(ps.begin(), ps.end());
    }
    double partial = 1.0, at_decade = 1.0;
    double correction = 1.0;  // prod over listed p of factor / (1 - 1/p^2)
    for (i64 p : ps) {
        EulerFactor f;
        f.p = p;
        f.psi = chi(p);
        f.density = p == p0 ? sigma_p0_cone(I) : sigma_p(I, p);
        f.factor = (1.0 - static_cast<double>(f.psi) / static_cast<double>(p)) * f.density.value;
        if (f.factor == 0.0) s.obstructed = true;
        partial *= f.factor;
        if (p <= P_max / 10) at_decade = partial;
        correction *= f.factor / (1.0 - 1.0 / (static_cast<double>(p) * static_cast<double>(p)));
        s.factors.push_back(f);
    }
    constexpr double six_over_pi2 = 0.60792710185402662866327677925836583;
    s.partial = partial;
    s.drift = std::abs(partial - at_decade);
    s.value = s.obstructed ? 0.0 : six_over_pi2 * correction;
    return s;
}

// ---------------------------------------------------------------------------
// L(1, psi0)

struct LValue {
    i64 discriminant = 0;  // fundamental discriminant of the primitive character
    double primitive = 0.0;  // L(1, chi*) for chi* = (d / .)
    double value = 0.0;      // L(1, psi0) with psi0 vanishing on primes of 2 m0 Delta
    double error = 0.0;
};

/// Fundamental discriminant of Q(sqrt D), D not a square.
inline i64 fundamental_discriminant(i64 D) {
    if (D == 0) throw std::invalid_argument("fundamental_discriminant: D must be nonzero");
    i64 sign = D < 0 ? -1 : 1, r = D < 0 ? -D : D, core = 1;
    for (auto [pu, e] : factorize(static_cast<u64>(r)))
        if (e & 1) core *= static_cast<i64>(pu);
    core *= sign;
    if (core == 1) throw std::invalid_argument("fundamental_discriminant: D is a square");
    return mod(core, 4) == 1 ? core : 4 * core;
}

/// L(1, (d/.)) for a fundamental discriminant d: partial sum up to J|d| plus
/// the exact tail -(1/k) sum_a chi(a) digamma(J + a/k), k = |d|.
inline double L_one_kronecker(i64 d, int J) {
    const i64 k = d < 0 ? -d : d;
    double head = 0.0;
    for (i64 n = 1; n <= J * k; ++n) {
        int c = kronecker(d, n);
        if (c) head += c / static_cast<double>(n);
    }
    double tail = 0.0;
    for (i64 a = 1; a <= k; ++a) {
        int c = kronecker(d, a);
        if (c) tail += c * boost::math::digamma(J + static_cast<double>(a) / static_cast<double>(k));
    }
    return head - tail / static_cast<double>(k);
}

/// L(1, psi0) for non-square -m0 Delta. The result is checked against a second
/// evaluation with a longer head; the difference must stay below `precision`.
inline LValue L_one_psi0(const QForm& F, i64 m0, double precision = 1e-10) {
    const Psi0 psi = psi0(F, m0);
    if (psi.square) throw std::invalid_argument("L_one_psi0: psi0 is principal (-m0 Delta is a square)");
    if (!(precision > 0.0)) throw std::invalid_argument("L_one_psi0: precision must be positive");
    LValue r;
    r.discriminant = fundamental_discriminant(psi.D);
    double a = L_one_kronecker(r.discriminant, 1);
    double b = L_one_kronecker(r.discriminant, 4);
    r.primitive = b;
    r.error = std::abs(a - b) + 1e-15 * static_cast<double>(std::abs(r.discriminant));
    if (r.error > precision)
        throw std::runtime_error("L_one_psi0: requested precision not reached (" + std::to_string(r.error) + ")");
    double euler = 1.0;
    const i64 g = psi.guard < 0 ? -psi.guard : psi.guard;
    for (auto [pu, e] : factorize(static_cast<u64>(g))) {
        i64 p = static_cast<i64>(pu);
        euler *= 1.0 - kronecker(r.discriminant, p) / static_cast<double>(p);
    }
    r.value = r.primitive * euler;
    return r;
}

}  // namespace qdelta
