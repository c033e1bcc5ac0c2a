#pragma once

#include <algorithm>
#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

// Exact modular arithmetic on 64-bit integers with 128-bit intermediates.

namespace qdelta {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using i128 = __int128;
using u128 = unsigned __int128;

inline i64 mod(i64 a, i64 n) {
    i64 r = a % n;
    return r < 0 ? r + n : r;
}

inline i64 mod128(i128 a, i64 n) {
    i128 r = a % n;
    return static_cast<i64>(r < 0 ? r + n : r);
}

inline u64 mulmod(u64 a, u64 b, u64 n) {
    return static_cast<u64>(static_cast<u128>(a) * b % n);
}

inline u64 powmod(u64 a, u64 e, u64 n) {
    u64 r = 1 % n;
    a %= n;
    while (e) {
        if (e & 1) r = mulmod(r, a, n);
        a = mulmod(a, a, n);
        e >>= 1;
    }
    return r;
}

inline i64 ipow(i64 b, int e) {
    i64 r = 1;
    for (int i = 0; i < e; ++i) {
        if (__builtin_mul_overflow(r, b, &r)) throw std::overflow_error("ipow overflow");
    }
    return r;
}

// Extended Euclid; returns g and x with a*x = g mod n.
inline std::pair<i64, i64> ext_gcd(i64 a, i64 n) {
    i64 r0 = mod(a, n), r1 = n, s0 = 1, s1 = 0;
    while (r1) {
        i64 t = r0 / r1;
        std::tie(r0, r1) = std::make_pair(r1, r0 - t * r1);
        std::tie(s0, s1) = std::make_pair(s1, s0 - t * s1);
    }
    return {r0, s0};
}

inline i64 inv_mod(i64 a, i64 n) {
    if (n == 1) return 0;
    auto [g, x] = ext_gcd(a, n);
    if (g != 1) throw std::domain_error("inv_mod: not invertible");
    return mod(x, n);
}

/// Deterministic Miller-Rabin; the first twelve prime bases cover all of u64.
inline bool is_prime(u64 n) {
    if (n < 2) return false;
    static constexpr u64 small[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    for (u64 p : small) {
        if (n % p == 0) return n == p;
    }
    u64 d = n - 1;
    int s = 0;
    while (!(d & 1)) { d >>= 1; ++s; }
    for (u64 a : small) {
        u64 x = powmod(a, d, n);
        if (x == 1 || x == n - 1) continue;
        bool composite = true;
        for (int i = 1; i < s; ++i) {
            x = mulmod(x, x, n);
            if (x == n - 1) { composite = false; break; }
        }
        if (composite) return false;
    }
    return true;
}

namespace detail {

// Brent's cycle variant of Pollard rho; n must be odd composite.
inline u64 rho_factor(u64 n) {
    for (u64 c = 1;; ++c) {
        auto f = [&](u64 x) { return (mulmod(x, x, n) + c) % n; };
        u64 y = 2, x = 2, g = 1, q = 1, ys = 2;
        const u64 m = 128;
        u64 r = 1;
        do {
            x = y;
            for (u64 i = 0; i < r; ++i) y = f(y);
            u64 k = 0;
            do {
                ys = y;
                for (u64 i = 0; i < std::min(m, r - k); ++i) {
                    y = f(y);
                    q = mulmod(q, x > y ? x - y : y - x, n);
                }
                g = std::gcd(q, n);
                k += m;
            } while (k < r && g == 1);
            r <<= 1;
        } while (g == 1);
        if (g == n) {
            do {
                ys = f(ys);
                g = std::gcd(x > ys ? x - ys : ys - x, n);
            } while (g == 1);
        }
        if (g != n) return g;
    }
}

inline void factor_into(u64 n, std::vector<u64>& out) {
    if (n == 1) return;
    if (is_prime(n)) { out.push_back(n); return; }
    u64 d = rho_factor(n);
    factor_into(d, out);
    factor_into(n / d, out);
}

}  // namespace detail

struct PrimePower {
    u64 p;
    int e;
    bool operator==(const PrimePower&) const = default;
};

using Factorization = std::vector<PrimePower>;

inline Factorization factorize(u64 n) {
    if (n == 0) throw std::invalid_argument("factorize: n must be positive");
    std::vector<u64> ps;
    for (u64 p : {2ull, 3ull, 5ull, 7ull, 11ull, 13ull, 17ull, 19ull, 23ull, 29ull, 31ull, 37ull}) {
        while (n % p == 0) { ps.push_back(p); n /= p; }
    }
    detail::factor_into(n, ps);
    std::sort(ps.begin(), ps.end());
    Factorization f;
    for (u64 p : ps) {
        if (!f.empty() && f.back().p == p) ++f.back().e;
        else f.push_back({p, 1});
    }
    return f;
}

inline i64 euler_phi(i64 n) {
    i64 r = n;
    for (auto [p, e] : factorize(static_cast<u64>(n))) r = r / static_cast<i64>(p) * (static_cast<i64>(p) - 1);
    return r;
}

inline int mobius(i64 n) {
    int m = 1;
    for (auto [p, e] : factorize(static_cast<u64>(n))) {
        if (e > 1) return 0;
        m = -m;
    }
    return m;
}

inline int valuation(i64 n, i64 p) {
    if (n == 0) return 64;
    int v = 0;
    while (n % p == 0) { n /= p; ++v; }
    return v;
}

inline std::vector<i64> primes_up_to(i64 n) {
    std::vector<i64> ps;
    if (n < 2) return ps;
    std::vector<bool> composite(static_cast<std::size_t>(n) + 1, false);
    for (i64 i = 2; i <= n; ++i) {
        if (composite[i]) continue;
        ps.push_back(i);
        for (i64 j = i * i; j <= n; j += i) composite[j] = true;
    }
    return ps;
}

/// Part of q supported on the primes dividing m.
inline i64 smooth_part(i64 q, i64 m) {
    i64 r = 1;
    for (auto [p, e] : factorize(static_cast<u64>(q))) {
        if (m % static_cast<i64>(p) == 0) r *= ipow(static_cast<i64>(p), e);
    }
    return r;
}

/// Ramanujan sum c_q(n) = sum over d | gcd(q, n) of d * mu(q/d).
inline i64 ramanujan_sum(i64 q, i64 n) {
    i64 g = std::gcd(q, n < 0 ? -n : n);
    if (n == 0) g = q;
    i64 s = 0;
    for (i64 d = 1; d * d <= g; ++d) {
        if (g % d) continue;
        s += d * mobius(q / d);
        if (d * d != g) s += (g / d) * mobius(q / (g / d));
    }
    return s;
}

/// Jacobi symbol (a/n) for odd positive n.
inline int jacobi(i64 a, i64 n) {
    if (n <= 0 || !(n & 1)) throw std::invalid_argument("jacobi: modulus must be odd and positive");
    a = mod(a, n);
    int t = 1;
    while (a) {
        while (!(a & 1)) {
            a >>= 1;
            i64 r = n & 7;
            if (r == 3 || r == 5) t = -t;
        }
        std::swap(a, n);
        if ((a & 3) == 3 && (n & 3) == 3) t = -t;
        a %= n;
    }
    return n == 1 ? t : 0;
}

/// Kronecker symbol (a/n) for n >= 1.
inline int kronecker(i64 a, i64 n) {
    if (n <= 0) throw std::invalid_argument("kronecker: n must be positive");
    int t = 1;
    while (!(n & 1)) {
        if (!(a & 1)) return 0;
        i64 r = mod(a, 8);
        if (r == 3 || r == 5) t = -t;
        n >>= 1;
    }
    return t * jacobi(a, n);
}

/// Solve x = r1 mod m1, x = r2 mod m2 for coprime moduli.
inline i64 crt(i64 r1, i64 m1, i64 r2, i64 m2) {
    i64 t = mod128(static_cast<i128>(mod(r2 - r1, m2)) * inv_mod(m1 % m2, m2), m2);
    return mod128(static_cast<i128>(r1) + static_cast<i128>(m1) * t, m1 * m2);
}

struct ResidueVector {
    i64 n = 1;
    std::array<i64, 3> r{0, 0, 0};

    ResidueVector() = default;
    ResidueVector(i64 modulus, std::array<i64, 3> v) : n(modulus) {
        for (int i = 0; i < 3; ++i) r[i] = mod(v[i], n);
    }

    ResidueVector reduce(i64 m) const {
        if (n % m) throw std::invalid_argument("ResidueVector::reduce: modulus does not divide");
        return ResidueVector(m, r);
    }

    static ResidueVector combine(const ResidueVector& a, const ResidueVector& b) {
        if (std::gcd(a.n, b.n) != 1) throw std::invalid_argument("ResidueVector::combine: moduli not coprime");
        ResidueVector out;
        out.n = a.n * b.n;
        for (int i = 0; i < 3; ++i) out.r[i] = crt(a.r[i], a.n, b.r[i], b.n);
        return out;
    }

    bool operator==(const ResidueVector&) const = default;
};

// ---------------------------------------------------------------------------
// Unit groups and Dirichlet characters

/// (Z/nZ)* as a product of cyclic components. Each component lives on one
/// prime power p^e of n; its generator is a unit that is 1 at the other primes.
class UnitGroup {
public:
    struct Component {
        i64 pp;          // local prime power modulus
        i64 order;
        i64 generator;   // residue mod n
        int local;       // index into local tables
    };

    explicit UnitGroup(i64 n) : n_(n) {
        if (n < 1) throw std::invalid_argument("UnitGroup: modulus must be positive");
        for (auto [pu, e] : factorize(static_cast<u64>(n))) {
            i64 p = static_cast<i64>(pu);
            i64 pp = ipow(p, e);
            i64 rest = n / pp;
            auto lift = [&](i64 g) { return rest == 1 ? mod(g, pp) : crt(mod(g, pp), pp, 1, rest); };
            if (p == 2) {
                if (e == 1) continue;
                // -1 generates the sign part, 5 the rest
                int li = static_cast<int>(tables_.size());
                tables_.push_back({pp, std::vector<std::int32_t>(pp, -1)});
                comps_.push_back({pp, 2, lift(pp - 1), li});
                if (e >= 3) {
                    tables_.push_back({pp, std::vector<std::int32_t>(pp, -1)});
                    comps_.push_back({pp, pp / 4, lift(5), li + 1});
                }
                i64 x5 = 1;
                for (i64 k = 0; k < std::max<i64>(pp / 4, 1); ++k) {
                    if (e >= 3) {
                        tables_[li].dlog[x5] = 0;
                        tables_[li + 1].dlog[x5] = static_cast<std::int32_t>(k);
                        tables_[li].dlog[pp - x5] = 1;
                        tables_[li + 1].dlog[pp - x5] = static_cast<std::int32_t>(k);
                    } else {
                        tables_[li].dlog[1] = 0;
                        tables_[li].dlog[3] = 1;
                    }
                    x5 = x5 * 5 % pp;
                }
            } else {
                i64 g = primitive_root_prime_power(p, e);
                i64 ord = pp / p * (p - 1);
                int li = static_cast<int>(tables_.size());
                tables_.push_back({pp, std::vector<std::int32_t>(pp, -1)});
                i64 x = 1;
                for (i64 k = 0; k < ord; ++k) {
                    tables_[li].dlog[x] = static_cast<std::int32_t>(k);
                    x = x * g % pp;
                }
                comps_.push_back({pp, ord, lift(g), li});
            }
        }
        exponent_ = 1;
        for (auto& c : comps_) exponent_ = std::lcm(exponent_, c.order);
    }

    i64 modulus() const { return n_; }
    i64 order() const {
        i64 o = 1;
        for (auto& c : comps_) o *= c.order;
        return o;
    }
    i64 exponent() const { return exponent_; }
    const std::vector<Component>& components() const { return comps_; }

    /// Discrete log of x along component i; -1 when x is not a unit.
    i64 dlog(i64 x, std::size_t i) const {
        const auto& t = tables_[comps_[i].local];
        return t.dlog[mod(x, t.pp)];
    }

    bool is_unit(i64 x) const { return std::gcd(mod(x, n_), n_) == 1; }

    static std::shared_ptr<const UnitGroup> get(i64 n) {
        static std::mutex mu;
        static std::map<i64, std::shared_ptr<const UnitGroup>> cache;
        std::lock_guard lock(mu);
        auto it = cache.find(n);
        if (it != cache.end()) return it->second;
        auto g = std::make_shared<const UnitGroup>(n);
        cache.emplace(n, g);
        return g;
    }

    static i64 primitive_root_prime_power(i64 p, int e) {
        i64 ord = p - 1;
        auto fac = factorize(static_cast<u64>(ord));
        i64 g = 2;
        for (;; ++g) {
            bool ok = true;
            for (auto [q, k] : fac) {
                if (powmod(g, ord / static_cast<i64>(q), p) == 1) { ok = false; break; }
            }
            if (ok) break;
        }
        if (e >= 2 && powmod(g, p - 1, static_cast<u64>(p) * p) == 1) g += p;
        return g;
    }

private:
    struct Table {
        i64 pp;
        std::vector<std::int32_t> dlog;
    };
    i64 n_;
    i64 exponent_ = 1;
    std::vector<Component> comps_;
    std::vector<Table> tables_;
};

/// e(k/n) = exp(2 pi i k/n), reduced first so the angle stays in [0, 2pi).
inline std::complex<double> unit_root(i64 k, i64 n) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    double a = two_pi * static_cast<double>(mod(k, n)) / static_cast<double>(n);
    return {std::cos(a), std::sin(a)};
}

class DirichletCharacter {
public:
    DirichletCharacter(std::shared_ptr<const UnitGroup> g, std::vector<i64> exps)
        : g_(std::move(g)), exps_(std::move(exps)) {
        const auto& cs = g_->components();
        if (exps_.size() != cs.size()) throw std::invalid_argument("DirichletCharacter: exponent count mismatch");
        for (std::size_t i = 0; i < cs.size(); ++i) {
            if (exps_[i] < 0 || exps_[i] >= cs[i].order)
                throw std::invalid_argument("DirichletCharacter: exponent out of range");
        }
        conductor_ = compute_conductor();
    }

    i64 modulus() const { return g_->modulus(); }
    const std::vector<i64>& exponents() const { return exps_; }
    const UnitGroup& group() const { return *g_; }
    i64 conductor() const { return conductor_; }

    bool is_principal() const {
        return std::all_of(exps_.begin(), exps_.end(), [](i64 a) { return a == 0; });
    }

    i64 order() const {
        i64 o = 1;
        const auto& cs = g_->components();
        for (std::size_t i = 0; i < cs.size(); ++i) o = std::lcm(o, cs[i].order / std::gcd(exps_[i], cs[i].order));
        return o;
    }

    bool is_real() const { return order() <= 2; }

    /// chi(x) = e(k/E) with E the group exponent; returns -1 for non-units.
    i64 angle(i64 x) const {
        if (!g_->is_unit(x)) return -1;
        const auto& cs = g_->components();
        i64 E = g_->exponent();
        i128 k = 0;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            k += static_cast<i128>(exps_[i]) * g_->dlog(x, i) * (E / cs[i].order);
        }
        return mod128(k, E);
    }

    std::complex<double> operator()(i64 x) const {
        i64 k = angle(x);
        if (k < 0) return {0.0, 0.0};
        return unit_root(k, g_->exponent());
    }

    /// The primitive character mod the conductor that induces this one.
    DirichletCharacter primitive() const {
        auto g = UnitGroup::get(conductor_);
        i64 n = modulus();
        i64 rest = n;
        for (auto [p, e] : factorize(static_cast<u64>(conductor_))) {
            while (rest % static_cast<i64>(p) == 0) rest /= static_cast<i64>(p);
        }
        std::vector<i64> ex;
        i64 E = g_->exponent();
        for (const auto& c : g->components()) {
            // a unit mod n that reduces to this generator mod the conductor
            i64 y = rest == 1 ? c.generator : crt(c.generator, conductor_, 1, rest);
            i64 k = angle(y);
            i64 num = static_cast<i64>(static_cast<i128>(k) * c.order);
            if (num % E) throw std::logic_error("DirichletCharacter::primitive: inconsistent conductor");
            ex.push_back(mod(num / E, c.order));
        }
        return DirichletCharacter(g, ex);
    }

private:
    // Local conductor at p^e: odd p gives p^(s+1) where p^s is the p-part of
    // the local order; at 2 the sign part alone gives 4, the 5-part of order
    // 2^s gives 2^(s+2).
    i64 compute_conductor() const {
        const auto& cs = g_->components();
        std::map<i64, i64> local;
        for (std::size_t i = 0; i < cs.size(); ++i) {
            i64 pp = cs[i].pp;
            i64 p = 2;
            while (pp % p) ++p;
            i64 d = cs[i].order / std::gcd(exps_[i], cs[i].order);
            i64 f = 1;
            if (d > 1 && p == 2) {
                bool sign_part = i == 0 || cs[i - 1].pp != pp;
                if (sign_part) f = 4;
                else {
                    int s = 0;
                    for (i64 t = d; t > 1; t >>= 1) ++s;
                    f = i64{1} << (s + 2);
                }
            } else if (d > 1) {
                int s = 0;
                for (i64 t = d; t % p == 0; t /= p) ++s;
                f = ipow(p, s + 1);
            }
            auto& slot = local[pp];
            slot = std::max(slot, f);
        }
        i64 c = 1;
        for (auto& [pp, f] : local) c *= f;
        return c;
    }

    std::shared_ptr<const UnitGroup> g_;
    std::vector<i64> exps_;
    i64 conductor_ = 1;
};

constexpr i64 kMaxCharacterModulus = 1'000'000;

/// All phi(n) characters mod n, principal first, in mixed-radix exponent order.
inline std::vector<DirichletCharacter> characters_mod(i64 n) {
    if (n < 1 || n > kMaxCharacterModulus) throw std::out_of_range("characters_mod: modulus outside enumeration bound");
    auto g = UnitGroup::get(n);
    const auto& cs = g->components();
    std::vector<DirichletCharacter> out;
    out.reserve(static_cast<std::size_t>(g->order()));
    std::vector<i64> ex(cs.size(), 0);
    while (true) {
        out.emplace_back(g, ex);
        std::size_t i = 0;
        for (; i < cs.size(); ++i) {
            if (++ex[i] < cs[i].order) break;
            ex[i] = 0;
        }
        if (i == cs.size()) break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Square roots modulo n

/// Square root mod an odd prime via Tonelli-Shanks; D must be a nonzero residue.
inline i64 sqrt_mod_prime(i64 D, i64 p) {
    D = mod(D, p);
    if (D == 0) return 0;
    if (p == 2) return D;
    if (powmod(D, (p - 1) / 2, p) != 1) return -1;
    i64 q = p - 1;
    int s = 0;
    while (!(q & 1)) { q >>= 1; ++s; }
    i64 z = 2;
    while (powmod(z, (p - 1) / 2, p) != static_cast<u64>(p - 1)) ++z;
    u64 m = s, c = powmod(z, q, p), t = powmod(D, q, p), r = powmod(D, (q + 1) / 2, p);
    while (t != 1) {
        u64 i = 0, tt = t;
        while (tt != 1) { tt = mulmod(tt, tt, p); ++i; }
        u64 b = c;
        for (u64 j = 0; j + i + 1 < m; ++j) b = mulmod(b, b, p);
        m = i;
        c = mulmod(b, b, p);
        t = mulmod(t, c, p);
        r = mulmod(r, b, p);
    }
    return static_cast<i64>(r);
}

namespace detail {

inline std::vector<i64> roots_prime_power(i64 D, i64 p, int e) {
    std::vector<i64> roots;
    i64 pk = p;
    i64 d1 = mod(D, p);
    if (p == 2) {
        roots = {};
        for (i64 v = 0; v < 2; ++v) if (v * v % 2 == d1) roots.push_back(v);
    } else {
        i64 r = sqrt_mod_prime(d1, p);
        if (r < 0) return {};
        roots = r == 0 ? std::vector<i64>{0} : std::vector<i64>{std::min(r, p - r), std::max(r, p - r)};
    }
    for (int k = 1; k < e; ++k) {
        i64 next = pk * p;
        i64 dn = mod(D, next);
        std::vector<i64> lifted;
        for (i64 r : roots) {
            if (p != 2 && r % p != 0) {
                // unique Hensel lift
                i64 f = mod128(static_cast<i128>(r) * r - dn, next);
                i64 corr = mod128(static_cast<i128>(f / pk) * inv_mod(mod(2 * r, p), p), p);
                lifted.push_back(mod128(r - static_cast<i128>(corr) * pk, next));
            } else {
                for (i64 t = 0; t < p; ++t) {
                    i64 v = r + t * pk;
                    if (mod128(static_cast<i128>(v) * v, next) == dn) lifted.push_back(v);
                }
            }
        }
        roots.swap(lifted);
        pk = next;
        if (roots.empty()) break;
    }
    return roots;
}

}  // namespace detail

/// All v mod n with v^2 = D mod n, sorted.
inline std::vector<i64> quadratic_roots(i64 D, i64 n) {
    if (n < 1) throw std::invalid_argument("quadratic_roots: modulus must be positive");
    D = mod(D, n);
    std::vector<i64> acc{0};
    i64 m = 1;
    for (auto [pu, e] : factorize(static_cast<u64>(n))) {
        i64 p = static_cast<i64>(pu);
        i64 pp = ipow(p, e);
        auto loc = detail::roots_prime_power(D, p, e);
        if (loc.empty()) return {};
        std::vector<i64> next;
        next.reserve(acc.size() * loc.size());
        for (i64 a : acc)
            for (i64 b : loc) next.push_back(crt(a, m, b, pp));
        acc.swap(next);
        m *= pp;
    }
    std::sort(acc.begin(), acc.end());
    return acc;
}

}  // namespace qdelta
