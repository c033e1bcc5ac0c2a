#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "modarith.hpp"
#include "weight.hpp"

namespace qdelta {

using Vec3 = std::array<i64, 3>;
using Mat3 = std::array<std::array<i64, 3>, 3>;

namespace detail {

inline i128 checked_mul(i128 a, i128 b) {
    i128 r;
    if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("quadratic form evaluation overflows 128 bits");
    return r;
}

inline i128 checked_add(i128 a, i128 b) {
    i128 r;
    if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("quadratic form evaluation overflows 128 bits");
    return r;
}

}  // namespace detail

inline bool is_square(i128 n) {
    if (n < 0) return false;
    if (n < 2) return true;
    i128 r = static_cast<i128>(std::sqrt(static_cast<long double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r * r == n;
}

inline i64 isqrt_exact(i128 n) {
    if (!is_square(n)) throw std::domain_error("isqrt_exact: not a perfect square");
    i128 r = static_cast<i128>(std::sqrt(static_cast<long double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return static_cast<i64>(r);
}

/// Classically integral ternary form
///   F(x) = a11 x1^2 + a22 x2^2 + a33 x3^2 + a12 x1 x2 + a13 x1 x3 + a23 x2 x3
/// with even cross coefficients, so the Gram matrix M (F = x^T M x) is integral.
class QForm {
public:
    QForm(i64 a11, i64 a22, i64 a33, i64 a12 = 0, i64 a13 = 0, i64 a23 = 0)
        : c_{a11, a22, a33, a12, a13, a23} {
        if ((a12 & 1) || (a13 & 1) || (a23 & 1))
            throw std::invalid_argument("QForm: cross coefficients must be even (Gram matrix must be integral)");
        m_ = {{{a11, a12 / 2, a13 / 2}, {a12 / 2, a22, a23 / 2}, {a13 / 2, a23 / 2, a33}}};
        det_ = static_cast<i64>(det3(m_));
        if (det_ == 0) throw std::invalid_argument("QForm: degenerate form (determinant 0)");
    }

    static QForm diag(i64 a, i64 b, i64 c) { return QForm(a, b, c); }

    static QForm from_gram(const Mat3& m) {
        return QForm(m[0][0], m[1][1], m[2][2], 2 * m[0][1], 2 * m[0][2], 2 * m[1][2]);
    }

    const std::array<i64, 6>& coefficients() const { return c_; }
    const Mat3& gram() const { return m_; }
    i64 determinant() const { return det_; }

    template <typename T>
    T eval_as(const std::array<T, 3>& x) const {
        return c_[0] * x[0] * x[0] + c_[1] * x[1] * x[1] + c_[2] * x[2] * x[2] + c_[3] * x[0] * x[1] +
               c_[4] * x[0] * x[2] + c_[5] * x[1] * x[2];
    }

    /// Exact value; throws std::overflow_error beyond signed 128 bits.
    i128 evaluate(const Vec3& x) const {
        using detail::checked_add, detail::checked_mul;
        i128 s = 0;
        const int idx[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
        for (int k = 0; k < 6; ++k) {
            i128 t = checked_mul(checked_mul(c_[k], x[idx[k][0]]), x[idx[k][1]]);
            s = checked_add(s, t);
        }
        return s;
    }

    double operator()(const Vec3d& t) const { return eval_as<double>(t); }

    /// Gradient 2 M x.
    Vec3d gradient(const Vec3d& t) const {
        Vec3d g{};
        for (int i = 0; i < 3; ++i) g[i] = 2.0 * (m_[i][0] * t[0] + m_[i][1] * t[1] + m_[i][2] * t[2]);
        return g;
    }

    Vec3 gradient(const Vec3& x) const {
        Vec3 g{};
        for (int i = 0; i < 3; ++i) g[i] = 2 * (m_[i][0] * x[0] + m_[i][1] * x[1] + m_[i][2] * x[2]);
        return g;
    }

    Mat3 adjugate() const {
        const auto& m = m_;
        Mat3 a{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
                a[i][j] = m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
            }
        return a;
    }

    /// F*(c) = c^T adj(M) c.
    QForm dual() const { return from_gram(adjugate()); }

    bool operator==(const QForm& o) const { return c_ == o.c_; }

    std::string to_string() const {
        std::string s;
        for (int k = 0; k < 6; ++k) s += (k ? " " : "") + std::to_string(c_[k]);
        return s;
    }

private:
    static i128 det3(const Mat3& m) {
        return static_cast<i128>(m[0][0]) * (static_cast<i128>(m[1][1]) * m[2][2] - static_cast<i128>(m[1][2]) * m[2][1]) -
               static_cast<i128>(m[0][1]) * (static_cast<i128>(m[1][0]) * m[2][2] - static_cast<i128>(m[1][2]) * m[2][0]) +
               static_cast<i128>(m[0][2]) * (static_cast<i128>(m[1][0]) * m[2][1] - static_cast<i128>(m[1][1]) * m[2][0]);
    }

    std::array<i64, 6> c_;
    Mat3 m_{};
    i64 det_ = 0;
};

inline i128 evaluate(const QForm& F, const Vec3& x) { return F.evaluate(x); }
inline i64 determinant(const QForm& F) { return F.determinant(); }
inline QForm dual_form(const QForm& F) { return F.dual(); }

/// The real character n -> (-m0 Delta / n), zero at n sharing a factor with 2 m0 Delta.
struct Psi0 {
    i64 D = 0;          // -m0 Delta
    i64 guard = 1;      // 2 m0 Delta
    bool square = false;

    int operator()(i64 n) const {
        if (n <= 0) throw std::invalid_argument("psi0: argument must be positive");
        if (std::gcd(n, guard < 0 ? -guard : guard) != 1) return 0;
        return jacobi(D, n);
    }
};

inline Psi0 psi0(const QForm& F, i64 m0) {
    i128 md = static_cast<i128>(m0) * F.determinant();
    if (md == 0) throw std::invalid_argument("psi0: m0 * Delta must be nonzero");
    Psi0 r;
    r.D = static_cast<i64>(-md);
    r.guard = static_cast<i64>(2 * md);
    r.square = is_square(-md);
    return r;
}

enum class CClass { Zero, ExceptionalTypeI, ExceptionalTypeII, Ordinary };

inline std::string to_string(CClass c) {
    switch (c) {
        case CClass::Zero: return "zero";
        case CClass::ExceptionalTypeI: return "type1";
        case CClass::ExceptionalTypeII: return "type2";
        default: return "ordinary";
    }
}

/// Classification of a Poisson variable by the square status of m0 Delta F*(c).
inline CClass classify_c(const QForm& F, i64 m0, const Vec3& c) {
    if (c[0] == 0 && c[1] == 0 && c[2] == 0) throw std::invalid_argument("classify_c: c must be nonzero");
    i128 fs = F.dual().evaluate(c);
    if (fs == 0) return CClass::ExceptionalTypeII;
    i128 t = detail::checked_mul(detail::checked_mul(m0, F.determinant()), fs);
    return is_square(t) ? CClass::ExceptionalTypeI : CClass::Ordinary;
}

/// Same, but c = 0 maps to CClass::Zero instead of throwing.
inline CClass class_of(const QForm& F, i64 m0, const Vec3& c) {
    if (c[0] == 0 && c[1] == 0 && c[2] == 0) return CClass::Zero;
    return classify_c(F, m0, c);
}

struct CongruenceDatum {
    i64 L = 1;
    Vec3 lambda{0, 0, 0};
};

/// Everything the counting function needs. Derived quantities are fixed at
/// construction: N = p0^(2h), lambda_N = p0^h lambda mod L, Q = sqrt(N)/L,
/// Omega = 2 L |Delta|.
class ProblemInstance {
public:
    ProblemInstance(QForm form, i64 m0, i64 p0, int h, CongruenceDatum cong, WeightSpec weight)
        : form_(std::move(form)), m0_(m0), p0_(p0), h_(h), cong_(cong), weight_(weight) {
        if (m0 == 0) throw std::invalid_argument("m0 must be nonzero");
        if (p0 < 2 || !is_prime(static_cast<u64>(p0))) throw std::invalid_argument("p0 must be prime");
        if (h < 0) throw std::invalid_argument("h must be nonnegative");
        const i64 L = cong_.L;
        if (L < 1) throw std::invalid_argument("L must be positive");
        for (i64 v : cong_.lambda)
            if (v < 0 || v >= L) throw std::invalid_argument("lambda entries must lie in [0, L)");
        if (L % p0 == 0) throw std::invalid_argument("p0 must not divide L");
        if (mod128(form_.evaluate(cong_.lambda) - m0, L) != 0)
            throw std::invalid_argument("congruence datum violates F(lambda) = m0 mod L");
        weight_.validate();
        sqrtN_ = ipow(p0, h);
        N_ = ipow(sqrtN_, 2);
        i64 s = mod(sqrtN_, L);
        for (int i = 0; i < 3; ++i) lambdaN_[i] = mod128(static_cast<i128>(s) * cong_.lambda[i], L);
        i64 d = form_.determinant();
        omega_ = 2 * L * (d < 0 ? -d : d);
    }

    const QForm& form() const { return form_; }
    i64 m0() const { return m0_; }
    i64 p0() const { return p0_; }
    int h() const { return h_; }
    const CongruenceDatum& cong() const { return cong_; }
    i64 L() const { return cong_.L; }
    const WeightSpec& weight() const { return weight_; }
    i64 N() const { return N_; }
    i64 sqrtN() const { return sqrtN_; }
    i64 m0N() const { return m0_ * N_; }
    const Vec3& lambdaN() const { return lambdaN_; }
    double Q() const { return static_cast<double>(sqrtN_) / static_cast<double>(cong_.L); }
    i64 Omega() const { return omega_; }
    i64 Delta() const { return form_.determinant(); }

    ProblemInstance with_h(int h) const { return ProblemInstance(form_, m0_, p0_, h, cong_, weight_); }

private:
    QForm form_;
    i64 m0_, p0_;
    int h_;
    CongruenceDatum cong_;
    WeightSpec weight_;
    i64 sqrtN_ = 1, N_ = 1, omega_ = 2;
    Vec3 lambdaN_{0, 0, 0};
};

inline CClass classify_c(const ProblemInstance& I, const Vec3& c) { return classify_c(I.form(), I.m0(), c); }

}  // namespace qdelta
