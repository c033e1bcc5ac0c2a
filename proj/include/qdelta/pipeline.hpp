#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qdelta/arch.hpp"
#include "qdelta/errors.hpp"
#include "qdelta/expsums.hpp"
#include "qdelta/localdens.hpp"
#include "qdelta/qform.hpp"

namespace qdelta {

// ---------------------------------------------------------------------------
// Deterministic reductions

template <typename T>
T pairwise_sum(const T* p, std::size_t n) {
    if (n <= 8) {
        T s{};
        for (std::size_t i = 0; i < n; ++i) s += p[i];
        return s;
    }
    std::size_t m = n / 2;
    return pairwise_sum(p, m) + pairwise_sum(p + m, n - m);
}

template <typename T>
T pairwise_sum(const std::vector<T>& v) {
    return pairwise_sum(v.data(), v.size());
}

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// stored by index, so the outcome does not depend on scheduling.
inline void parallel_for(i64 n, int threads, const std::function<void(i64)>& body) {
    int T = static_cast<int>(std::min<i64>(std::max(1, threads), n));
    if (T <= 1) {
        for (i64 i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<i64> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    for (int t = 0; t < T; ++t)
        pool.emplace_back([&] {
            for (i64 i; (i = next++) < n && !failed;) {
                try {
                    body(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Enumeration of the weighted count

enum class EnumStrategy { Sliced, TripleLoop };

inline std::string to_string(EnumStrategy s) { return s == EnumStrategy::Sliced ? "sliced" : "triple"; }

struct EnumerationResult {
    i64 N = 0;
    double gamma = 0.0;  // sum of w(x / sqrt N) over solutions
    i64 raw = 0;         // solutions with w(x / sqrt N) > 0
    double seconds = 0.0;
    std::string strategy;
};

constexpr double kMaxAxisExtent = 1e6;

struct LatticeBox {
    std::array<i64, 3> lo{}, hi{};  // first and last lattice coordinate per axis
    i64 L = 1;
};

/// Integer box covering sqrt(N) * supp(w), snapped to x = lambda_N mod L.
inline LatticeBox lattice_box(const ProblemInstance& I) {
    const double s = static_cast<double>(I.sqrtN());
    if (s * I.weight().radius > kMaxAxisExtent)
        throw ResourceBoundError("enumerate_gamma: box bound exceeded (sqrt(N) * radius = " +
                                 std::to_string(s * I.weight().radius) + " > 1e6)");
    auto box = I.weight().support_box();
    LatticeBox b;
    b.L = I.L();
    for (int i = 0; i < 3; ++i) {
        i64 lo = static_cast<i64>(std::floor(box[0][i] * s)), hi = static_cast<i64>(std::ceil(box[1][i] * s));
        b.lo[i] = lo + mod(I.lambdaN()[i] - lo, b.L);
        b.hi[i] = hi - mod(hi - I.lambdaN()[i], b.L);
    }
    return b;
}

namespace detail {

inline i64 slice_count(i64 lo, i64 hi, i64 step) { return hi < lo ? 0 : (hi - lo) / step + 1; }

/// Solutions with fixed x1 accumulated into (gamma, raw).
inline void enumerate_slice(const ProblemInstance& I, const LatticeBox& b, i64 x1, EnumStrategy strategy, double& gamma,
                            i64& raw) {
    const auto& M = I.form().gram();
    const i128 target = static_cast<i128>(I.m0N());
    const double s = static_cast<double>(I.sqrtN());
    const WeightSpec& w = I.weight();
    const i64 L = b.L;
    std::vector<double> vals;
    auto visit = [&](i64 x2, i64 x3) {
        double wv = w(Vec3d{x1 / s, x2 / s, x3 / s});
        if (wv > 0.0) {
            vals.push_back(wv);
            ++raw;
        }
    };
    auto in_class = [&](i64 x3) { return x3 >= b.lo[2] && x3 <= b.hi[2] && mod(x3 - I.lambdaN()[2], L) == 0; };
    for (i64 x2 = b.lo[1]; x2 <= b.hi[1]; x2 += L) {
        if (strategy == EnumStrategy::TripleLoop) {
            for (i64 x3 = b.lo[2]; x3 <= b.hi[2]; x3 += L)
                if (I.form().evaluate({x1, x2, x3}) == target) visit(x2, x3);
            continue;
        }
        // M33 x3^2 + 2 B x3 + C = 0
        const i128 a = M[2][2];
        const i128 B = static_cast<i128>(M[0][2]) * x1 + static_cast<i128>(M[1][2]) * x2;
        const i128 C = static_cast<i128>(M[0][0]) * x1 * x1 + 2 * static_cast<i128>(M[0][1]) * x1 * x2 +
                       static_cast<i128>(M[1][1]) * x2 * x2 - target;
        if (a == 0) {
            if (B == 0) {
                if (C == 0)
                    for (i64 x3 = b.lo[2]; x3 <= b.hi[2]; x3 += L) visit(x2, x3);
                continue;
            }
            if (C % (2 * B) == 0) {
                i64 x3 = static_cast<i64>(-C / (2 * B));
                if (in_class(x3)) visit(x2, x3);
            }
            continue;
        }
        i128 disc = B * B - a * C;
        if (disc < 0 || !is_square(disc)) continue;
        i128 r = isqrt_exact(disc);
        // ascending x3, so both strategies accumulate the same sequence
        std::array<i128, 2> nums{-B - r, -B + r};
        std::array<i64, 2> roots{};
        int k = 0;
        for (int j = 0; j < (r == 0 ? 1 : 2); ++j)
            if (nums[j] % a == 0) roots[k++] = static_cast<i64>(nums[j] / a);
        std::sort(roots.begin(), roots.begin() + k);
        for (int j = 0; j < k; ++j)
            if (in_class(roots[j])) visit(x2, roots[j]);
    }
    gamma = pairwise_sum(vals);
}

}  // namespace detail

/// Gamma_w(N) = sum over x = lambda_N mod L with F(x) = m0 N of w(x / sqrt N).
inline EnumerationResult enumerate_gamma(const ProblemInstance& I, EnumStrategy strategy = EnumStrategy::Sliced,
                                         int threads = 1) {
    auto t0 = std::chrono::steady_clock::now();
    LatticeBox b = lattice_box(I);
    i64 n1 = detail::slice_count(b.lo[0], b.hi[0], b.L);
    if (strategy == EnumStrategy::TripleLoop) {
        double cells = static_cast<double>(n1) * detail::slice_count(b.lo[1], b.hi[1], b.L) *
                       detail::slice_count(b.lo[2], b.hi[2], b.L);
        if (cells > 1e10) throw ResourceBoundError("enumerate_gamma: triple loop over " + std::to_string(cells) + " points");
    }
    std::vector<double> g(static_cast<std::size_t>(std::max<i64>(n1, 0)), 0.0);
    std::vector<i64> raw(g.size(), 0);
    parallel_for(n1, threads, [&](i64 i) {
        detail::enumerate_slice(I, b, b.lo[0] + i * b.L, strategy, g[i], raw[i]);
    });
    EnumerationResult res;
    res.N = I.N();
    res.gamma = pairwise_sum(g);
    res.raw = std::accumulate(raw.begin(), raw.end(), i64{0});
    res.strategy = to_string(strategy);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// ---------------------------------------------------------------------------
// Poisson right-hand side

struct PoissonOptions {
    i64 q_max = 0;             // 0: ceil(1.1 * kernel support * Q)
    i64 q_min = 1;             // diagnostics may restrict the q range
    i64 c_max = 0;             // 0: c_cap
    i64 c_cap = 10;            // largest c_max the default will use
    double budget_fraction = 1e-3;  // tail budget as a fraction of sqrt(N)
    double decay_A = 4.0;      // |I_r(w; b)| <= K r^-1 |b|^-A
    i64 brute_limit = 200;     // qL at or below this uses the definition-level exponential sum
    bool keep_terms = true;
    QuadratureSpec quad = [] {
        QuadratureSpec q;
        q.margin = 20.0;
        q.level_nodes = 8.0;
        return q;
    }();
};

struct DeltaTerm {
    i64 q = 0;
    Vec3 c{};
    CClass cls = CClass::Zero;
    cplx value;          // C_Q / Q^2 * S~_q(c) I~_q(c) / (qL)^3
    double error = 0.0;  // quadrature part of the error
};

struct QContribution {
    i64 q = 0;
    double r = 0.0;
    cplx zero, exceptional, ordinary, total;
    double max_S = 0.0;
    double tail = 0.0;  // decay-model bound on |c|_inf > c_max
};

struct DeltaExpansion {
    double Q = 0.0, C_Q = 0.0;
    i64 q_max = 0, c_max = 0;
    std::vector<DeltaTerm> terms;  // q ascending, c in lexicographic order
    std::vector<QContribution> per_q;
    cplx zero_part, exceptional_part, ordinary_part, total;
    double quad_error = 0.0;
    double decay_constant = 0.0;  // fitted K of the decay model
    double tail_estimate = 0.0;
    double budget = 0.0;
    i64 c_required = 0;           // c_max the decay model asks for
    bool budget_violated = false;
    double error_budget() const { return quad_error + tail_estimate; }
};

/// Upper bound on |F(t) - m0| over the weight support.
inline double level_range(const ProblemInstance& I) {
    OscGeometry G = osc_geometry(I);
    return std::max(std::abs(G.y_lo), std::abs(G.y_hi));
}

inline i64 default_q_max(const ProblemInstance& I) {
    return static_cast<i64>(std::ceil(1.1 * kernel_support(level_range(I)) * I.Q()));
}

namespace detail {

/// sum over |c|_inf > C of |c|^-A, from the shell sizes 24 s^2 + 2 and |c|_2 >= |c|_inf.
inline double shell_tail(double C, double A) {
    if (A <= 3.0) return std::numeric_limits<double>::infinity();
    return 24.0 / ((A - 3.0) * std::pow(C, A - 3.0)) + 2.0 / ((A - 1.0) * std::pow(C, A - 1.0));
}

}  // namespace detail

/// C_Q / Q^2 sum_{q <= q_max} sum_{|c|_inf <= c_max} S~_q(c) I~_q(c) / (qL)^3 with
/// I~_q(c) = Q^3 e_{qL^2}(c . lambda_N) I_{q/Q}(w; c/L).
inline DeltaExpansion poisson_rhs(const ProblemInstance& I, const PoissonOptions& opt = {}) {
    DeltaExpansion E;
    const double Q = I.Q();
    const i64 L = I.L();
    DeltaKernel K(Q);
    if (K.omega_sum() == 0.0) throw std::invalid_argument("poisson_rhs: Q is too small for the kernel normalization");
    E.Q = Q;
    E.C_Q = K.C_Q();
    E.q_max = opt.q_max > 0 ? opt.q_max : default_q_max(I);
    if (opt.q_min <= 1 && E.q_max < K.min_q_max(0.0)) throw std::invalid_argument("poisson_rhs: q_max below the kernel support");
    E.c_max = opt.c_max > 0 ? opt.c_max : opt.c_cap;
    if (E.c_max < 1) throw std::invalid_argument("poisson_rhs: c_max must be positive");
    const i64 C = E.c_max;
    const double rsup = kernel_support(level_range(I));
    const auto& lamN = I.lambdaN();
    std::vector<cplx> zero, exc, ord;
    std::vector<double> errs;
    double fitted = 0.0;
    for (i64 q = std::max<i64>(1, opt.q_min); q <= E.q_max; ++q) {
        QContribution qc;
        qc.q = q;
        qc.r = q / Q;
        E.per_q.push_back(qc);
        if (qc.r >= rsup) continue;
        std::vector<cplx> S = S_tilde_grid(I, q, C, opt.brute_limit);
        double smax = 0.0;
        for (const cplx& v : S) smax = std::max(smax, std::abs(v));
        E.per_q.back().max_S = smax;
        if (smax < 1e-9) continue;  // every term vanishes
        FreqAxis fa{1.0 / (static_cast<double>(L) * qc.r), static_cast<int>(C)};
        OscGrid og = osc_integral_grid(I, qc.r, {fa, fa, fa}, opt.quad);
        const double pref = E.C_Q * Q / (static_cast<double>(q) * q * q * static_cast<double>(L) * L * L);
        const i64 mq = q * L * L;
        std::vector<cplx> qz, qe, qo;
        for (i64 c0 = -C; c0 <= C; ++c0)
            for (i64 c1 = -C; c1 <= C; ++c1)
                for (i64 c2 = -C; c2 <= C; ++c2) {
                    std::size_t idx = og.index(static_cast<int>(c0), static_cast<int>(c1), static_cast<int>(c2));
                    Vec3 c{c0, c1, c2};
                    CClass cls = class_of(I.form(), I.m0(), c);
                    i64 shell = std::max({std::abs(c0), std::abs(c1), std::abs(c2)});
                    if (2 * shell >= C && shell > 0) {
                        double nb = std::sqrt(double(c0 * c0 + c1 * c1 + c2 * c2)) / L;
                        fitted = std::max(fitted, std::abs(og.values[idx]) * qc.r * std::pow(nb, opt.decay_A));
                    }
                    if (S[idx] == cplx(0.0)) continue;
                    i64 ph = mod(mod(c0 * lamN[0], mq) + mod(c1 * lamN[1], mq) + mod(c2 * lamN[2], mq), mq);
                    cplx v = pref * S[idx] * unit_root(ph, mq) * og.values[idx];
                    double e = pref * std::abs(S[idx]) * og.error_at(static_cast<int>(c0), static_cast<int>(c1),
                                                                      static_cast<int>(c2));
                    errs.push_back(e);
                    (cls == CClass::Zero ? qz : cls == CClass::Ordinary ? qo : qe).push_back(v);
                    if (opt.keep_terms) E.terms.push_back({q, c, cls, v, e});
                }
        auto& pq = E.per_q.back();
        pq.zero = pairwise_sum(qz);
        pq.exceptional = pairwise_sum(qe);
        pq.ordinary = pairwise_sum(qo);
        pq.total = pq.zero + pq.exceptional + pq.ordinary;
        zero.push_back(pq.zero);
        exc.push_back(pq.exceptional);
        ord.push_back(pq.ordinary);
    }
    E.zero_part = pairwise_sum(zero);
    E.exceptional_part = pairwise_sum(exc);
    E.ordinary_part = pairwise_sum(ord);
    E.total = E.zero_part + E.exceptional_part + E.ordinary_part;
    E.quad_error = pairwise_sum(errs);
    // decay-model tail with K fitted on the outer half of the computed shells
    E.decay_constant = fitted;
    const double shell = detail::shell_tail(static_cast<double>(C), opt.decay_A);
    std::vector<double> tails;
    for (auto& pq : E.per_q) {
        if (pq.r >= rsup || pq.max_S < 1e-9) continue;
        double pref = E.C_Q * Q / (static_cast<double>(pq.q) * pq.q * pq.q * static_cast<double>(L) * L * L);
        pq.tail = pref * pq.max_S * fitted / pq.r * std::pow(static_cast<double>(L), opt.decay_A) * shell;
        tails.push_back(pq.tail);
    }
    E.tail_estimate = pairwise_sum(tails);
    E.budget = opt.budget_fraction * static_cast<double>(I.sqrtN());
    E.budget_violated = E.tail_estimate > E.budget;
    // the tail scales like C^(3 - A), so solve for the C that meets the budget
    E.c_required = E.c_max;
    if (E.budget_violated) {
        double ratio = std::pow(E.tail_estimate / E.budget, 1.0 / (opt.decay_A - 3.0));
        E.c_required = static_cast<i64>(std::ceil(static_cast<double>(C) * ratio));
    }
    return E;
}

/// Per-q sums computed directly from the lattice points: C_Q/Q^2 sum_x w c_q(n) h(q/Q, n/Q^2)
/// with n = (F(x) - m0 N) / L^2. The q-th Poisson contribution converges to the q-th entry.
inline std::vector<double> delta_targets(const ProblemInstance& I, i64 q_max) {
    LatticeBox b = lattice_box(I);
    const double Q = I.Q(), s = static_cast<double>(I.sqrtN());
    const i64 L2 = I.L() * I.L();
    DeltaKernel K(Q);
    std::vector<std::vector<double>> parts(static_cast<std::size_t>(q_max + 1));
    for (i64 x1 = b.lo[0]; x1 <= b.hi[0]; x1 += b.L)
        for (i64 x2 = b.lo[1]; x2 <= b.hi[1]; x2 += b.L)
            for (i64 x3 = b.lo[2]; x3 <= b.hi[2]; x3 += b.L) {
                double wv = I.weight()(Vec3d{x1 / s, x2 / s, x3 / s});
                if (wv == 0.0) continue;
                i128 d = I.form().evaluate({x1, x2, x3}) - I.m0N();
                if (d % L2 != 0) continue;
                i64 n = static_cast<i64>(d / L2);
                for (i64 q = 1; q <= q_max; ++q) {
                    i64 cq = ramanujan_sum(q, n);
                    if (cq != 0) parts[q].push_back(wv * cq * h_eval(q / Q, n / (Q * Q)));
                }
            }
    std::vector<double> out(parts.size(), 0.0);
    for (i64 q = 1; q <= q_max; ++q) out[q] = K.C_Q() / (Q * Q) * pairwise_sum(parts[q]);
    return out;
}

// ---------------------------------------------------------------------------
// Main-term prediction and residuals

struct HPrediction {
    int h = 0;
    i64 N = 0;
    double sqrtN = 0.0;
    double main = 0.0;      // I~ S~ sqrt N log sqrt N (square) or I~ S~ sqrt N
    double main_alt = 0.0;  // non-square: with the L(1, psi0) factor of the c = 0 term; square: same as main
    double gamma = 0.0;
    i64 raw = 0;
    bool enumerated = false;
};

struct PredictionReport {
    SingularIntegral integral;
    double series = 0.0, series_drift = 0.0, series_partial = 0.0;
    bool square = false, obstructed = false;
    LValue L1;                       // only in the non-square case
    double constant = 0.0;           // I~ S~
    double constant_alt = 0.0;       // I~ L(1, psi0) S~ in the non-square case
    std::vector<HPrediction> rows;
};

struct PredictOptions {
    int h_max = 5;
    i64 P_max = 1000;
    QuadratureSpec quad;
};

inline PredictionReport predict_main(const ProblemInstance& I, const PredictOptions& opt = {}) {
    if (opt.h_max < 1) throw std::invalid_argument("predict_main: h_max must be at least 1");
    PredictionReport R;
    R.integral = singular_integral(I, opt.quad);
    SingularSeries S = singular_series(I, opt.P_max);
    R.series = S.value;
    R.series_partial = S.partial;
    R.series_drift = S.drift;
    R.square = S.square;
    R.obstructed = S.obstructed || S.value == 0.0;
    R.constant = R.integral.value * R.series;
    R.constant_alt = R.constant;
    if (!R.square) {
        R.L1 = L_one_psi0(I.form(), I.m0());
        R.constant_alt = R.integral.value * R.L1.value * R.series;
    }
    for (int h = 1; h <= opt.h_max; ++h) {
        HPrediction p;
        p.h = h;
        ProblemInstance Ih = I.with_h(h);
        p.N = Ih.N();
        p.sqrtN = static_cast<double>(Ih.sqrtN());
        if (R.square) {
            p.main = R.constant * p.sqrtN * std::log(p.sqrtN);
            p.main_alt = p.main;
        } else {
            p.main = R.constant * p.sqrtN;
            p.main_alt = R.constant_alt * p.sqrtN;
        }
        R.rows.push_back(p);
    }
    return R;
}

struct SecondaryFit {
    std::vector<double> residuals;  // (Gamma - main) / sqrt N
    double max_abs = 0.0;
    double trend = 0.0;             // least-squares slope of the residuals in h
    std::vector<double> drifts;     // |residual(h+1) - residual(h)|
};

/// Residual sequence a_h (square case) or b_h (non-square case). No convergence claim.
inline SecondaryFit extract_secondary(const std::vector<int>& hs, const std::vector<double>& gamma,
                                      const std::vector<double>& main, const std::vector<double>& sqrtN) {
    const std::size_t n = hs.size();
    if (n < 3) throw std::invalid_argument("extract_secondary: need at least 3 values of h");
    if (gamma.size() != n || main.size() != n || sqrtN.size() != n)
        throw std::invalid_argument("extract_secondary: length mismatch");
    SecondaryFit f;
    for (std::size_t i = 0; i < n; ++i) {
        f.residuals.push_back((gamma[i] - main[i]) / sqrtN[i]);
        f.max_abs = std::max(f.max_abs, std::abs(f.residuals.back()));
        if (i) f.drifts.push_back(std::abs(f.residuals[i] - f.residuals[i - 1]));
    }
    double mh = 0.0, mr = 0.0;
    for (std::size_t i = 0; i < n; ++i) mh += hs[i], mr += f.residuals[i];
    mh /= n;
    mr /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (hs[i] - mh) * (f.residuals[i] - mr);
        sxx += (hs[i] - mh) * (hs[i] - mh);
    }
    f.trend = sxx > 0.0 ? sxy / sxx : 0.0;
    return f;
}

inline SecondaryFit extract_secondary(const PredictionReport& R, bool alternative = false) {
    std::vector<int> hs;
    std::vector<double> g, m, s;
    for (const auto& p : R.rows) {
        if (!p.enumerated) continue;
        hs.push_back(p.h);
        g.push_back(p.gamma);
        m.push_back(alternative ? p.main_alt : p.main);
        s.push_back(p.sqrtN);
    }
    return extract_secondary(hs, g, m, s);
}

/// Fills the enumerated counts for every h of the report.
inline void attach_enumeration(PredictionReport& R, const ProblemInstance& I, int threads = 1) {
    for (auto& p : R.rows) {
        EnumerationResult e = enumerate_gamma(I.with_h(p.h), EnumStrategy::Sliced, threads);
        p.gamma = e.gamma;
        p.raw = e.raw;
        p.enumerated = true;
    }
}

/// Which constant the enumeration follows: "without_L1" (I~ S~), "with_L1" (I~ L(1, psi0) S~),
/// or "single" in the square case where the two coincide. Decided by the smaller max |residual|.
inline std::string tracked_candidate(const PredictionReport& R) {
    if (R.square || R.obstructed) return "single";
    double a = extract_secondary(R, false).max_abs, b = extract_secondary(R, true).max_abs;
    return b < a ? "with_L1" : "without_L1";
}

}  // namespace qdelta
