#pragma once

#include <algorithm>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "modarith.hpp"
#include "qform.hpp"

// Complete exponential sums attached to the counting problem. Every sum here
// has the shape
//
//     sum over sigma mod m of [D | P(sigma)] c_r(P(sigma)/D) e_m(k . sigma)
//
// with P(sigma) = F(A sigma + s) - T: the a-sum over units collapses to the
// Ramanujan sum c_r exactly. The kernel below evaluates that shape on a tensor
// grid of frequencies k with a separable (axis by axis) transform.

namespace qdelta {

using cplx = std::complex<double>;

struct ComplexSum {
    cplx value{0.0, 0.0};
    i64 terms = 0;  // number of unimodular terms in the defining sum

    double abs() const { return std::abs(value); }
};

/// Upper bound on q*L for the definition-level sums.
constexpr i64 kBruteModulusBound = 10'000;

namespace detail {

/// Table of e(k/n), k = 0..n-1, each entry from its own cos/sin call.
inline std::shared_ptr<const std::vector<cplx>> root_table(i64 n) {
    static std::mutex mu;
    static std::map<i64, std::shared_ptr<const std::vector<cplx>>> cache;
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto t = std::make_shared<std::vector<cplx>>(n);
    for (i64 k = 0; k < n; ++k) (*t)[k] = unit_root(k, n);
    cache.emplace(n, t);
    return t;
}

inline std::vector<double> ramanujan_table(i64 r) {
    std::vector<std::pair<i64, int>> dm;  // (d, mu(r/d))
    for (i64 d = 1; d <= r; ++d)
        if (r % d == 0) {
            int mu = mobius(r / d);
            if (mu) dm.emplace_back(d, mu);
        }
    std::vector<double> t(r, 0.0);
    for (i64 n = 0; n < r; ++n) {
        i64 s = 0;
        for (auto [d, mu] : dm)
            if (n % d == 0) s += d * mu;
        t[n] = static_cast<double>(s);
    }
    return t;
}

struct QuadSumSpec {
    const QForm* F = nullptr;
    i64 m = 1;        // sigma runs over (Z/m)^3
    i64 A = 1;        // scale
    Vec3 shift{0, 0, 0};
    i128 target = 0;  // T
    i64 D = 1;        // divisibility condition D | P
    i64 r = 1;        // Ramanujan modulus
};

struct TensorSum {
    std::vector<i64> k1, k2, k3;
    std::vector<cplx> v;  // index (i1 * n2 + i2) * n3 + i3
    i64 sigma_count = 0;  // sigma with D | P

    cplx at(std::size_t i1, std::size_t i2, std::size_t i3) const {
        return v[(i1 * k2.size() + i2) * k3.size() + i3];
    }
};

inline std::vector<i64> distinct_mod(const std::vector<i64>& ks, i64 m, std::vector<std::size_t>& where) {
    std::vector<i64> out;
    std::map<i64, std::size_t> seen;
    where.clear();
    for (i64 k : ks) {
        i64 r = mod(k, m);
        auto it = seen.find(r);
        if (it == seen.end()) {
            it = seen.emplace(r, out.size()).first;
            out.push_back(r);
        }
        where.push_back(it->second);
    }
    return out;
}

/// Exact-phase variant for small frequency grids: the integer weights are binned by
/// phase index k . sigma mod m, and only the final m-term sums touch roots of unity.
/// Sums that vanish exactly come out at rounding level instead of eps times the
/// l1 mass of the terms. Cost grows with the number of (k2, k3) pairs.
inline TensorSum quad_sum_binned(const QuadSumSpec& s, const std::vector<i64>& k1s, const std::vector<i64>& k2s,
                                 const std::vector<i64>& k3s) {
    const i64 m = s.m, R = s.r * s.D;
    const QForm& F = *s.F;
    const auto& cf = F.coefficients();
    const auto cr = ramanujan_table(s.r);
    std::vector<std::size_t> w1, w2, w3;
    auto d1 = distinct_mod(k1s, m, w1), d2 = distinct_mod(k2s, m, w2), d3 = distinct_mod(k3s, m, w3);
    const std::size_t n1 = d1.size(), n2 = d2.size(), n3 = d3.size(), np = n2 * n3;

    // The weights are real, so the sum at -k is the conjugate of the sum at k. A pair
    // (k2, k3) whose negative was listed earlier is skipped when every -k1 is present.
    auto find = [m](const std::vector<i64>& d, i64 k) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < d.size(); ++i)
            if (d[i] == mod(-k, m)) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };
    std::vector<std::ptrdiff_t> neg1(n1);
    bool k1_symmetric = true;
    for (std::size_t i = 0; i < n1; ++i) k1_symmetric &= (neg1[i] = find(d1, d1[i])) >= 0;
    std::vector<std::ptrdiff_t> mirror(np, -1);
    if (k1_symmetric)
        for (std::size_t i2 = 0; i2 < n2; ++i2)
            for (std::size_t i3 = 0; i3 < n3; ++i3) {
                std::ptrdiff_t j2 = find(d2, d2[i2]), j3 = find(d3, d3[i3]);
                if (j2 < 0 || j3 < 0) continue;
                std::size_t q = static_cast<std::size_t>(j2) * n3 + static_cast<std::size_t>(j3), p = i2 * n3 + i3;
                if (q < p) mirror[p] = static_cast<std::ptrdiff_t>(q);
            }
    std::vector<std::size_t> live;
    for (std::size_t p = 0; p < np; ++p)
        if (mirror[p] < 0) live.push_back(p);

    std::vector<i64> wt(R, 0);
    std::vector<unsigned char> hit(R, 0);
    for (i64 P = 0; P < R; ++P)
        if (P % s.D == 0) wt[P] = std::llround(cr[P / s.D]), hit[P] = 1;

    std::vector<i64> row(m), H(np * m), G(n1 * np * m, 0);
    const i64 step2 = mod128(static_cast<i128>(2) * s.A * s.A * cf[2], R);
    i64 count = 0;
    for (i64 s1 = 0; s1 < m; ++s1) {
        std::fill(H.begin(), H.end(), 0);
        for (i64 s2 = 0; s2 < m; ++s2) {
            std::array<i128, 3> y{static_cast<i128>(s.A) * s1 + s.shift[0], static_cast<i128>(s.A) * s2 + s.shift[1],
                                  static_cast<i128>(s.shift[2])};
            i64 P = mod128(F.eval_as<i128>(y) - s.target, R);
            i128 g3 = static_cast<i128>(cf[4]) * y[0] + static_cast<i128>(cf[5]) * y[1] + 2 * static_cast<i128>(cf[2]) * y[2];
            i64 dP = mod128(static_cast<i128>(s.A) * g3 + static_cast<i128>(s.A) * s.A * cf[2], R);
            bool any = false;
            for (i64 s3 = 0; s3 < m; ++s3) {
                row[s3] = wt[P];
                count += hit[P];
                any |= wt[P] != 0;
                P += dP;
                if (P >= R) P -= R;
                dP += step2;
                if (dP >= R) dP -= R;
            }
            if (!any) continue;
            for (std::size_t p : live) {
                const std::size_t i2 = p / n3, i3 = p % n3;
                const i64 base = mod128(static_cast<i128>(d2[i2]) * s2, m), k = d3[i3];
                i64* h = &H[p * m];
                if (k == 0) {
                    i64 t = 0;
                    for (i64 s3 = 0; s3 < m; ++s3) t += row[s3];
                    h[base] += t;
                } else if (k == 1) {
                    for (i64 s3 = 0, v = base; s3 < m - base; ++s3, ++v) h[v] += row[s3];
                    for (i64 s3 = m - base, v = 0; s3 < m; ++s3, ++v) h[v] += row[s3];
                } else if (k == m - 1) {
                    for (i64 s3 = 0, v = base; s3 <= base; ++s3, --v) h[v] += row[s3];
                    for (i64 s3 = base + 1, v = m - 1; s3 < m; ++s3, --v) h[v] += row[s3];
                } else {
                    i64 v = base;
                    for (i64 s3 = 0; s3 < m; ++s3) {
                        h[v] += row[s3];
                        v += k;
                        if (v >= m) v -= m;
                    }
                }
            }
        }
        // G[i1][pair][v + k1 s1] += H[pair][v]
        for (std::size_t i1 = 0; i1 < n1; ++i1) {
            const i64 shift = mod128(static_cast<i128>(d1[i1]) * s1, m);
            for (std::size_t p : live) {
                i64* g = &G[(i1 * np + p) * m];
                const i64* h = &H[p * m];
                for (i64 v = 0, t = shift; v < m; ++v) {
                    g[t] += h[v];
                    if (++t == m) t = 0;
                }
            }
        }
    }

    std::vector<long double> cs(m), sn(m);
    const long double tau = 2.0L * std::numbers::pi_v<long double>;
    for (i64 v = 0; v < m; ++v) {
        long double t = tau * static_cast<long double>(v) / static_cast<long double>(m);
        cs[v] = std::cos(t);
        sn[v] = std::sin(t);
    }
    std::vector<cplx> c(n1 * np);
    for (std::size_t i1 = 0; i1 < n1; ++i1)
        for (std::size_t p : live) {
            const i64* g = &G[(i1 * np + p) * m];
            long double re = 0.0L, im = 0.0L;
            for (i64 v = 0; v < m; ++v) {
                if (g[v] == 0) continue;
                re += static_cast<long double>(g[v]) * cs[v];
                im += static_cast<long double>(g[v]) * sn[v];
            }
            c[i1 * np + p] = {static_cast<double>(re), static_cast<double>(im)};
        }
    for (std::size_t i1 = 0; i1 < n1; ++i1)
        for (std::size_t p = 0; p < np; ++p)
            if (mirror[p] >= 0) c[i1 * np + p] = std::conj(c[static_cast<std::size_t>(neg1[i1]) * np + mirror[p]]);

    TensorSum out;
    out.k1 = k1s;
    out.k2 = k2s;
    out.k3 = k3s;
    out.sigma_count = count;
    out.v.resize(k1s.size() * k2s.size() * k3s.size());
    for (std::size_t i = 0; i < k1s.size(); ++i)
        for (std::size_t j = 0; j < k2s.size(); ++j)
            for (std::size_t l = 0; l < k3s.size(); ++l)
                out.v[(i * k2s.size() + j) * k3s.size() + l] = c[(w1[i] * n2 + w2[j]) * n3 + w3[l]];
    return out;
}

/// Evaluates the kernel sum at every frequency (k1[i], k2[j], k3[l]).
inline TensorSum quad_sum_tensor(const QuadSumSpec& s, const std::vector<i64>& k1s, const std::vector<i64>& k2s,
                                 const std::vector<i64>& k3s) {
    const i64 m = s.m, R = s.r * s.D;
    const QForm& F = *s.F;
    const auto& cf = F.coefficients();
    auto rt_ptr = root_table(m);
    const auto& rt = *rt_ptr;
    const auto cr = ramanujan_table(s.r);

    std::vector<std::size_t> w1, w2, w3;
    auto d1 = distinct_mod(k1s, m, w1), d2 = distinct_mod(k2s, m, w2), d3 = distinct_mod(k3s, m, w3);
    const std::size_t n1 = d1.size(), n2 = d2.size(), n3 = d3.size();

    // weight of each residue P mod R: c_r(P / D) when D | P, else 0
    std::vector<double> wt(R, 0.0);
    std::vector<unsigned char> hit(R, 0);
    for (i64 P = 0; P < R; ++P)
        if (P % s.D == 0) wt[P] = cr[P / s.D], hit[P] = 1;
    std::vector<double> cs(m), sn(m);
    for (i64 i = 0; i < m; ++i) cs[i] = rt[i].real(), sn[i] = rt[i].imag();
    // frequencies whose negative was already listed are filled in by conjugation (rows are real)
    std::vector<std::ptrdiff_t> mirror(n3, -1);
    for (std::size_t j = 0; j < n3; ++j)
        for (std::size_t i = 0; i < j; ++i)
            if (d3[i] == mod(-d3[j], m)) mirror[j] = static_cast<std::ptrdiff_t>(i);

    // stage 1: transform along sigma3
    std::vector<cplx> a(static_cast<std::size_t>(m * m) * n3, cplx{});
    std::vector<double> row(m);
    const i64 step2 = mod128(static_cast<i128>(2) * s.A * s.A * cf[2], R);
    i64 count = 0;
    for (i64 s1 = 0; s1 < m; ++s1)
        for (i64 s2 = 0; s2 < m; ++s2) {
            std::array<i128, 3> y{static_cast<i128>(s.A) * s1 + s.shift[0], static_cast<i128>(s.A) * s2 + s.shift[1],
                                  static_cast<i128>(s.shift[2])};
            i64 P = mod128(F.eval_as<i128>(y) - s.target, R);
            // dP = A * dF/dy3 + A^2 a33
            i128 g3 = static_cast<i128>(cf[4]) * y[0] + static_cast<i128>(cf[5]) * y[1] + 2 * static_cast<i128>(cf[2]) * y[2];
            i64 dP = mod128(static_cast<i128>(s.A) * g3 + static_cast<i128>(s.A) * s.A * cf[2], R);
            bool any = false;
            for (i64 s3 = 0; s3 < m; ++s3) {
                row[s3] = wt[P];
                count += hit[P];
                any |= wt[P] != 0.0;
                P += dP;
                if (P >= R) P -= R;
                dP += step2;
                if (dP >= R) dP -= R;
            }
            if (!any) continue;
            cplx* out = &a[static_cast<std::size_t>(s1 * m + s2) * n3];
            for (std::size_t j = 0; j < n3; ++j) {
                if (mirror[j] >= 0) {
                    out[j] = std::conj(out[mirror[j]]);
                    continue;
                }
                const i64 k = d3[j];
                double re = 0.0, im = 0.0;
                if (k == 0) {
                    for (i64 s3 = 0; s3 < m; ++s3) re += row[s3];
                } else if (k == 1) {
                    for (i64 s3 = 0; s3 < m; ++s3) re += row[s3] * cs[s3], im += row[s3] * sn[s3];
                } else {
                    i64 idx = 0;
                    for (i64 s3 = 0; s3 < m; ++s3) {
                        re += row[s3] * cs[idx];
                        im += row[s3] * sn[idx];
                        idx += k;
                        if (idx >= m) idx -= m;
                    }
                }
                out[j] = {re, im};
            }
        }

    // stage 2: along sigma2
    std::vector<cplx> b(static_cast<std::size_t>(m) * n2 * n3, cplx{});
    for (i64 s1 = 0; s1 < m; ++s1)
        for (std::size_t i2 = 0; i2 < n2; ++i2) {
            const i64 k = d2[i2];
            for (std::size_t i3 = 0; i3 < n3; ++i3) {
                cplx acc{};
                i64 idx = 0;
                for (i64 s2 = 0; s2 < m; ++s2) {
                    acc += a[static_cast<std::size_t>(s1 * m + s2) * n3 + i3] * rt[idx];
                    idx += k;
                    if (idx >= m) idx -= m;
                }
                b[(static_cast<std::size_t>(s1) * n2 + i2) * n3 + i3] = acc;
            }
        }

    // stage 3: along sigma1
    std::vector<cplx> c(n1 * n2 * n3, cplx{});
    for (std::size_t i1 = 0; i1 < n1; ++i1) {
        const i64 k = d1[i1];
        for (std::size_t j = 0; j < n2 * n3; ++j) {
            cplx acc{};
            i64 idx = 0;
            for (i64 s1 = 0; s1 < m; ++s1) {
                acc += b[static_cast<std::size_t>(s1) * n2 * n3 + j] * rt[idx];
                idx += k;
                if (idx >= m) idx -= m;
            }
            c[i1 * n2 * n3 + j] = acc;
        }
    }

    TensorSum out;
    out.k1 = k1s;
    out.k2 = k2s;
    out.k3 = k3s;
    out.sigma_count = count;
    out.v.resize(k1s.size() * k2s.size() * k3s.size());
    for (std::size_t i = 0; i < k1s.size(); ++i)
        for (std::size_t j = 0; j < k2s.size(); ++j)
            for (std::size_t l = 0; l < k3s.size(); ++l)
                out.v[(i * k2s.size() + j) * k3s.size() + l] = c[(w1[i] * n2 + w2[j]) * n3 + w3[l]];
    return out;
}

/// sum_sigma K(sigma) e_m(t (k . sigma)) for every dilation t. The phase only sees
/// k . sigma mod m, so one histogram pass over sigma serves all t.
inline std::vector<cplx> quad_sum_dilations(const QuadSumSpec& s, const Vec3& k, const std::vector<i64>& ts) {
    const i64 m = s.m, R = s.r * s.D;
    const QForm& F = *s.F;
    const auto& cf = F.coefficients();
    const auto cr = ramanujan_table(s.r);
    const i64 k1 = mod(k[0], m), k2 = mod(k[1], m), k3 = mod(k[2], m);
    std::vector<double> hist(m, 0.0);
    const i64 step2 = mod128(static_cast<i128>(2) * s.A * s.A * cf[2], R);
    for (i64 s1 = 0; s1 < m; ++s1)
        for (i64 s2 = 0; s2 < m; ++s2) {
            std::array<i128, 3> y{static_cast<i128>(s.A) * s1 + s.shift[0], static_cast<i128>(s.A) * s2 + s.shift[1],
                                  static_cast<i128>(s.shift[2])};
            i64 P = mod128(F.eval_as<i128>(y) - s.target, R);
            i128 g3 = static_cast<i128>(cf[4]) * y[0] + static_cast<i128>(cf[5]) * y[1] + 2 * static_cast<i128>(cf[2]) * y[2];
            i64 dP = mod128(static_cast<i128>(s.A) * g3 + static_cast<i128>(s.A) * s.A * cf[2], R);
            i64 v = mod128(static_cast<i128>(k1) * s1 + static_cast<i128>(k2) * s2, m);
            for (i64 s3 = 0; s3 < m; ++s3) {
                if (s.D == 1 || P % s.D == 0) hist[v] += cr[P / s.D];
                P += dP;
                if (P >= R) P -= R;
                dP += step2;
                if (dP >= R) dP -= R;
                v += k3;
                if (v >= m) v -= m;
            }
        }
    auto rt_ptr = root_table(m);
    const auto& rt = *rt_ptr;
    std::vector<cplx> out;
    out.reserve(ts.size());
    for (i64 t : ts) {
        const i64 tm = mod(t, m);
        cplx acc{};
        i64 idx = 0;
        for (i64 v = 0; v < m; ++v) {
            if (hist[v] != 0.0) acc += hist[v] * rt[idx];
            idx += tm;
            if (idx >= m) idx -= m;
        }
        out.push_back(acc);
    }
    return out;
}

/// Binned evaluation while the (k2, k3) grid is small, separable DFTs beyond.
constexpr std::size_t kBinnedPairLimit = 9;

inline TensorSum quad_sum(const QuadSumSpec& s, const std::vector<i64>& k1s, const std::vector<i64>& k2s,
                          const std::vector<i64>& k3s) {
    std::vector<std::size_t> w;
    std::size_t pairs = distinct_mod(k2s, s.m, w).size() * distinct_mod(k3s, s.m, w).size();
    return pairs <= kBinnedPairLimit ? quad_sum_binned(s, k1s, k2s, k3s) : quad_sum_tensor(s, k1s, k2s, k3s);
}

inline ComplexSum quad_sum_single(const QuadSumSpec& s, const Vec3& k) {
    auto t = quad_sum_binned(s, {k[0]}, {k[1]}, {k[2]});
    return {t.v[0], t.sigma_count * euler_phi(s.r)};
}

inline std::vector<i64> symmetric_range(i64 c_max) {
    std::vector<i64> v;
    for (i64 c = -c_max; c <= c_max; ++c) v.push_back(c);
    return v;
}

inline void check_modulus(i64 m, const char* what) {
    if (m < 1 || m > kBruteModulusBound)
        throw std::out_of_range(std::string(what) + ": modulus exceeds the brute-force bound");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// S_q(c) and its factors

inline detail::QuadSumSpec spec_S(const ProblemInstance& I, i64 q) {
    return {&I.form(), q * I.L(), I.L(), I.lambdaN(), static_cast<i128>(I.m0N()), I.L() * I.L(), q};
}

inline detail::QuadSumSpec spec_S1(const ProblemInstance& I, i64 q1, i64 q2) {
    return {&I.form(), q1, q2 * I.L() * I.L(), I.lambdaN(), static_cast<i128>(I.m0N()), 1, q1};
}

inline detail::QuadSumSpec spec_S2(const ProblemInstance& I, i64 q1, i64 q2) {
    return {&I.form(), q2 * I.L(), I.L() * q1, I.lambdaN(), static_cast<i128>(I.m0N()), I.L() * I.L(), q2};
}

/// S_q(c) from its definition (a-sum via the exact Ramanujan sum).
inline ComplexSum brute_S(const ProblemInstance& I, i64 q, const Vec3& c) {
    if (q < 1) throw std::invalid_argument("brute_S: q must be positive");
    detail::check_modulus(q * I.L(), "brute_S");
    return detail::quad_sum_single(spec_S(I, q), c);
}

/// S_q(c) for every |c|_inf <= c_max; index ((c1+C)*(2C+1) + c2+C)*(2C+1) + c3+C.
inline std::vector<cplx> brute_S_grid(const ProblemInstance& I, i64 q, i64 c_max) {
    detail::check_modulus(q * I.L(), "brute_S_grid");
    auto r = detail::symmetric_range(c_max);
    return detail::quad_sum(spec_S(I, q), r, r, r).v;
}

/// The literal double loop over a and sigma, for cross-checking small q.
inline ComplexSum brute_S_literal(const ProblemInstance& I, i64 q, const Vec3& c) {
    const i64 L = I.L(), m = q * L;
    if (m > 60) throw std::out_of_range("brute_S_literal: q*L too large for the literal loop");
    const auto& F = I.form();
    ComplexSum s;
    for (i64 a = 0; a < q; ++a) {
        if (std::gcd(a, q) != 1) continue;
        for (i64 x = 0; x < m; ++x)
            for (i64 y = 0; y < m; ++y)
                for (i64 z = 0; z < m; ++z) {
                    Vec3 v{L * x + I.lambdaN()[0], L * y + I.lambdaN()[1], L * z + I.lambdaN()[2]};
                    i128 P = F.evaluate(v) - I.m0N();
                    if (P % (L * L) != 0) continue;
                    i128 phase = static_cast<i128>(a) * (P / L) + c[0] * x + c[1] * y + c[2] * z;
                    s.value += unit_root(mod128(phase, m), m);
                    ++s.terms;
                }
    }
    return s;
}

struct CrtSplit {
    i64 q1 = 1, q2 = 1;
};

/// q2 is the Omega-part of q, q1 the rest.
inline CrtSplit crt_split(i64 Omega, i64 q) {
    if (q < 1) throw std::invalid_argument("crt_split: q must be positive");
    i64 q2 = smooth_part(q, Omega);
    return {q / q2, q2};
}

inline CrtSplit crt_split(const ProblemInstance& I, i64 q) { return crt_split(I.Omega(), q); }

inline void check_split(const ProblemInstance& I, i64 q1, i64 q2) {
    if (q1 < 1 || q2 < 1) throw std::invalid_argument("q1, q2 must be positive");
    if (std::gcd(q1, q2 * I.Omega()) != 1) throw std::invalid_argument("gcd(q1, q2 Omega) must be 1");
}

inline ComplexSum brute_S1(const ProblemInstance& I, i64 q1, i64 q2, const Vec3& c) {
    check_split(I, q1, q2);
    detail::check_modulus(q1, "brute_S1");
    return detail::quad_sum_single(spec_S1(I, q1, q2), c);
}

inline ComplexSum brute_S2(const ProblemInstance& I, i64 q1, i64 q2, const Vec3& c) {
    check_split(I, q1, q2);
    detail::check_modulus(q2 * I.L(), "brute_S2");
    return detail::quad_sum_single(spec_S2(I, q1, q2), c);
}

inline std::vector<cplx> brute_S1_grid(const ProblemInstance& I, i64 q1, i64 q2, i64 c_max) {
    check_split(I, q1, q2);
    detail::check_modulus(q1, "brute_S1_grid");
    auto r = detail::symmetric_range(c_max);
    return detail::quad_sum(spec_S1(I, q1, q2), r, r, r).v;
}

inline std::vector<cplx> brute_S2_grid(const ProblemInstance& I, i64 q1, i64 q2, i64 c_max) {
    check_split(I, q1, q2);
    detail::check_modulus(q2 * I.L(), "brute_S2_grid");
    auto r = detail::symmetric_range(c_max);
    return detail::quad_sum(spec_S2(I, q1, q2), r, r, r).v;
}

/// Sum of e_{q1}(u) over the roots of (Delta u)^2 = (q2 L^2)^{-2} m0 N Delta v mod q1,
/// tabulated for every residue v = F*(c) mod q1. The inverse square is what the
/// brute-force sum demands once q2 L^2 is not +-1 mod q1.
inline std::vector<cplx> salie_root_sums(const ProblemInstance& I, i64 q1, i64 q2) {
    const i64 L2 = I.L() * I.L();
    const i64 dinv = inv_mod(mod(I.Delta(), q1), q1);
    const i64 k = inv_mod(mod128(static_cast<i128>(q2) * L2, q1), q1);
    const i64 base = mod128(static_cast<i128>(mod128(static_cast<i128>(k) * k, q1)) *
                                mod128(static_cast<i128>(mod(I.m0N(), q1)) * mod(I.Delta(), q1), q1),
                            q1);
    auto rt = detail::root_table(q1);
    std::vector<cplx> out(q1);
    for (i64 v = 0; v < q1; ++v) {
        cplx s{};
        for (i64 root : quadratic_roots(mod128(static_cast<i128>(base) * v, q1), q1))
            s += (*rt)[mod128(static_cast<i128>(dinv) * root, q1)];
        out[v] = s;
    }
    return out;
}

/// Closed form of S^(1) for odd q1 coprime to m0 N and to q2 Omega.
inline ComplexSum closed_form_S1(const ProblemInstance& I, i64 q1, i64 q2, const Vec3& c,
                               const std::vector<cplx>* root_sums = nullptr) {
    check_split(I, q1, q2);
    if (!(q1 & 1)) throw std::invalid_argument("closed_form_S1: q1 must be odd");
    if (std::gcd(q1, mod(I.m0N(), q1)) != 1 && q1 > 1) throw std::invalid_argument("closed_form_S1: gcd(q1, m0 N) must be 1");
    if (q1 == 1) return {{1.0, 0.0}, 1};
    std::vector<cplx> local;
    if (!root_sums) {
        local = salie_root_sums(I, q1, q2);
        root_sums = &local;
    }
    const i64 L2 = I.L() * I.L();
    const i64 kinv = inv_mod(mod128(static_cast<i128>(q2) * L2, q1), q1);
    const auto& ln = I.lambdaN();
    i128 lc = static_cast<i128>(ln[0]) * c[0] + static_cast<i128>(ln[1]) * c[1] + static_cast<i128>(ln[2]) * c[2];
    cplx pre = unit_root(mod128(-static_cast<i128>(kinv) * mod128(lc, q1), q1), q1);
    int js = jacobi(mod128(-static_cast<i128>(I.m0N()) * I.Delta(), q1), q1);
    i64 fs = mod128(I.form().dual().evaluate(c), q1);
    double q1sq = static_cast<double>(q1) * static_cast<double>(q1);
    return {pre * q1sq * static_cast<double>(js) * (*root_sums)[fs], q1 * q1 * q1 * euler_phi(q1)};
}

// ---------------------------------------------------------------------------
// The sums S_l(x; c), their character averages, and the p0 split

inline i64 dot_mod(const Vec3& a, const Vec3& b, i64 m) {
    return mod128(static_cast<i128>(a[0]) * b[0] + static_cast<i128>(a[1]) * b[1] + static_cast<i128>(a[2]) * b[2], m);
}

namespace detail {

// sum over beta mod l L^2 with beta = lam mod L, F(beta) = T mod L^2, of
// c_l((F(beta) - T)/L^2) e_{lL^2}(xbar c . beta); beta = lam + L gamma turns it
// into a kernel sum over gamma mod lL.
inline ComplexSum lifted_sum(const QForm& F, i64 L, const Vec3& lam, i128 T, i64 l, i64 x, const Vec3& c) {
    const i64 M = l * L * L;
    check_modulus(l * L, "calS");
    if (std::gcd(x, l * L) != 1) throw std::invalid_argument("calS: gcd(x, lL) must be 1");
    const i64 xbar = inv_mod(mod(x, M), M);
    Vec3 cx{mod128(static_cast<i128>(xbar) * c[0], M), mod128(static_cast<i128>(xbar) * c[1], M),
            mod128(static_cast<i128>(xbar) * c[2], M)};
    QuadSumSpec s{&F, l * L, L, lam, T, L * L, l};
    ComplexSum k = quad_sum_single(s, cx);
    k.value *= unit_root(dot_mod(cx, lam, M), M);
    return k;
}

}  // namespace detail

/// S_l(x; c).
inline ComplexSum calS(const ProblemInstance& I, i64 l, i64 x, const Vec3& c) {
    if (l < 1) throw std::invalid_argument("calS: l must be positive");
    return detail::lifted_sum(I.form(), I.L(), I.lambdaN(), static_cast<i128>(I.m0N()), l, x, c);
}

/// S_l(x; c) for every unit x mod l L^2 (zero at non-units), indexed by x.
inline std::vector<cplx> calS_all(const ProblemInstance& I, i64 l, const Vec3& c) {
    const i64 L = I.L(), M = l * L * L;
    if (l < 1) throw std::invalid_argument("calS: l must be positive");
    if (M > 3000) throw std::out_of_range("calS_all: l L^2 exceeds the character-average bound");
    detail::check_modulus(l * L, "calS");
    std::vector<cplx> v(M, cplx{});
    if (M == 1) {
        v[0] = calS(I, l, 1, c).value;
        return v;
    }
    // S_l(x; c) = e_M(xbar c . lambda) * sum_gamma K(gamma) e_{lL}(xbar c . gamma)
    std::vector<i64> units, xbars;
    for (i64 x = 1; x < M; ++x)
        if (std::gcd(x, M) == 1) {
            units.push_back(x);
            xbars.push_back(inv_mod(x, M));
        }
    const Vec3& lam = I.lambdaN();
    detail::QuadSumSpec s{&I.form(), l * L, L, lam, static_cast<i128>(I.m0N()), L * L, l};
    auto sums = detail::quad_sum_dilations(s, c, xbars);
    const i64 cl = dot_mod(c, lam, M);
    for (std::size_t i = 0; i < units.size(); ++i)
        v[units[i]] = sums[i] * unit_root(mod128(static_cast<i128>(xbars[i]) * cl, M), M);
    return v;
}

/// A_l(chi; c) from precomputed calS_all values.
inline ComplexSum calA_from(const std::vector<cplx>& s_all, const DirichletCharacter& chi) {
    const i64 M = static_cast<i64>(s_all.size());
    if (chi.modulus() != M) throw std::invalid_argument("calA: character modulus must be l L^2");
    ComplexSum out;
    i64 phi = euler_phi(M);
    for (i64 x = 0; x < M; ++x) {
        if (std::gcd(x, M) != 1) continue;
        out.value += std::conj(chi(x)) * s_all[x];
    }
    out.value /= static_cast<double>(phi);
    out.terms = 0;
    return out;
}

inline ComplexSum calA(const ProblemInstance& I, i64 l, const DirichletCharacter& chi, const Vec3& c) {
    return calA_from(calS_all(I, l, c), chi);
}

struct P0Split {
    i64 flat = 1;     // p0-part of q2
    i64 natural = 1;  // the rest
    int ord = 0;
};

inline P0Split p0_split(i64 p0, i64 q2) {
    P0Split s;
    s.natural = q2;
    while (s.natural % p0 == 0) {
        s.natural /= p0;
        s.flat *= p0;
        ++s.ord;
    }
    return s;
}

/// T^(1): the cone sum over the p0-part of q2 (no N dependence).
inline ComplexSum calT1(const ProblemInstance& I, i64 q2, i64 x, const Vec3& c) {
    auto sp = p0_split(I.p0(), q2);
    if (sp.ord > I.h()) throw std::invalid_argument("calT1: ord_p0(q2) exceeds h");
    if (sp.flat == 1) return {{1.0, 0.0}, 1};
    return detail::lifted_sum(I.form(), 1, {0, 0, 0}, 0, sp.flat, x, c);
}

/// T^(2): over q2_natural L^2 with m0 and lambda in place of m0 N and lambda_N.
inline ComplexSum calT2(const ProblemInstance& I, i64 q2, i64 x, const Vec3& c) {
    auto sp = p0_split(I.p0(), q2);
    if (sp.ord > I.h()) throw std::invalid_argument("calT2: ord_p0(q2) exceeds h");
    return detail::lifted_sum(I.form(), I.L(), I.cong().lambda, static_cast<i128>(I.m0()), sp.natural, x, c);
}

/// The x at which T^(2) enters the product: p0^{-(h - ord)} x mod q2_natural L^2.
inline i64 calT2_argument(const ProblemInstance& I, i64 q2, i64 x) {
    auto sp = p0_split(I.p0(), q2);
    const i64 M = sp.natural * I.L() * I.L();
    if (M == 1) return 0;
    i64 pinv = inv_mod(mod(I.p0(), M), M);
    return mod128(static_cast<i128>(powmod(pinv, I.h() - sp.ord, M)) * mod(x, M), M);
}

/// S~_q(c) routed by size: definition-level kernel when qL is small, otherwise
/// the closed form for the q1 factor times the kernel for the q2 factor.
inline cplx S_tilde(const ProblemInstance& I, i64 q, const Vec3& c, i64 brute_limit = 200) {
    if (q * I.L() <= brute_limit) return brute_S(I, q, c).value;
    auto [q1, q2] = crt_split(I, q);
    cplx s1 = std::gcd(q1, mod(I.m0N(), q1)) == 1 ? closed_form_S1(I, q1, q2, c).value : brute_S1(I, q1, q2, c).value;
    return s1 * brute_S2(I, q1, q2, c).value;
}

/// S~_q(c) on the whole grid |c|_inf <= c_max, same routing as S_tilde.
inline std::vector<cplx> S_tilde_grid(const ProblemInstance& I, i64 q, i64 c_max, i64 brute_limit = 200) {
    if (q * I.L() <= brute_limit) return brute_S_grid(I, q, c_max);
    auto [q1, q2] = crt_split(I, q);
    auto r = detail::symmetric_range(c_max);
    auto s2 = brute_S2_grid(I, q1, q2, c_max);
    std::vector<cplx> s1;
    if (std::gcd(q1, mod(I.m0N(), q1)) == 1) {
        auto roots = salie_root_sums(I, q1, q2);
        s1.reserve(s2.size());
        for (i64 a : r)
            for (i64 b : r)
                for (i64 d : r) s1.push_back(closed_form_S1(I, q1, q2, {a, b, d}, &roots).value);
    } else {
        s1 = brute_S1_grid(I, q1, q2, c_max);
    }
    for (std::size_t i = 0; i < s2.size(); ++i) s2[i] *= s1[i];
    return s2;
}

}  // namespace qdelta
