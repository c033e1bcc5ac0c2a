#pragma once

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "modarith.hpp"
#include "qform.hpp"
#include "weight.hpp"

// Archimedean side: the delta-method kernel h(x, y), the delta symbol, the
// oscillatory integrals I_r(w; b), the singular integral and the r-integrals
// attached to exceptional frequencies.

namespace qdelta {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Bump and kernel

/// Mass of exp(-1/(1-u^2)) over (-1, 1).
constexpr double kBumpMass = 0.443993816168079437823048921;

inline double bump_mass_quadrature() {
    auto f = [](double u) {
        double s = 1.0 - u * u;
        return s <= 0.0 ? 0.0 : std::exp(-1.0 / s);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -1.0, 1.0, 15, 1e-15);
}

/// Checks the stored bump mass against quadrature, once per cache directory.
/// The verified value is written to <cache_dir>/omega_mass.txt and reused.
inline double calibrated_bump_mass(const std::string& cache_dir = "") {
    namespace fs = std::filesystem;
    fs::path file;
    if (!cache_dir.empty()) {
        file = fs::path(cache_dir) / "omega_mass.txt";
        std::ifstream in(file);
        double v = 0.0;
        if (in >> v && std::abs(v - kBumpMass) < 1e-12) return v;
    }
    double v = bump_mass_quadrature();
    if (std::abs(v - kBumpMass) > 1e-12)
        throw std::runtime_error("bump mass calibration disagrees with the stored constant");
    if (!file.empty()) {
        std::error_code ec;
        fs::create_directories(file.parent_path(), ec);
        std::ofstream out(file);
        out.precision(21);
        out << v << "\n";
    }
    return v;
}

/// omega(x) = (4/c0) exp(-1/(1 - (4x-3)^2)) on (1/2, 1); unit mass.
inline double omega(double x) {
    double u = 4.0 * x - 3.0;
    double s = 1.0 - u * u;
    if (s <= 0.0) return 0.0;
    return 4.0 / kBumpMass * std::exp(-1.0 / s);
}

/// h(x, y) = sum_j (xj)^-1 [omega(xj) - omega(|y|/(xj))]. Only j with xj in
/// (1/2, 1) or in (|y|, 2|y|) contribute.
inline double h_eval(double x, double y) {
    if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("h_eval: x must be positive");
    double ay = std::abs(y), s = 0.0;
    if (x < 1.0)
        for (i64 j = std::max<i64>(1, static_cast<i64>(0.5 / x)); x * j < 1.0; ++j) s += omega(x * j) / (x * j);
    if (ay > 0.0 && x < 2.0 * ay)
        for (i64 j = std::max<i64>(1, static_cast<i64>(ay / x)); x * j < 2.0 * ay; ++j) s -= omega(ay / (x * j)) / (x * j);
    return s;
}

/// The defining series cut after J terms.
inline double h_partial(double x, double y, i64 J) {
    if (!(x > 0.0)) throw std::invalid_argument("h_partial: x must be positive");
    double ay = std::abs(y), s = 0.0;
    for (i64 j = 1; j <= J; ++j) s += (omega(x * j) - omega(ay / (x * j))) / (x * j);
    return s;
}

/// h(x, y) vanishes for x >= max(1, 2|y|).
inline double kernel_support(double y_abs) { return std::max(1.0, 2.0 * y_abs); }

struct DeltaKernel {
    double Q;

    explicit DeltaKernel(double Q_) : Q(Q_) {
        if (!(Q > 0.0) || !std::isfinite(Q)) throw std::invalid_argument("DeltaKernel: Q must be positive");
    }

    double h(double x, double y) const { return h_eval(x, y); }

    /// Smallest q-range that reaches the kernel support for this n.
    i64 min_q_max(double n) const {
        return static_cast<i64>(std::ceil(Q * kernel_support(std::abs(n) / (Q * Q)) - 1e-9));
    }

    /// sum_{m >= 1} omega(m/Q); the n = 0 symbol with unit constant is this over Q.
    double omega_sum() const {
        double s = 0.0;
        for (i64 m = std::max<i64>(1, static_cast<i64>(Q / 2)); m < Q; ++m) s += omega(m / Q);
        return s;
    }

    /// Normalizing constant that makes the identity exact at n = 0.
    double C_Q() const { return Q / omega_sum(); }
};

/// Q^-2 sum_{q <= q_max} c_q(n) h(q/Q, n/Q^2), times C (default 1).
inline double delta_symbol(const DeltaKernel& K, i64 n, i64 q_max, double C = 1.0) {
    if (q_max < K.min_q_max(static_cast<double>(n)))
        throw std::invalid_argument("delta_symbol: q_max " + std::to_string(q_max) + " is below the kernel support " +
                                    std::to_string(K.min_q_max(static_cast<double>(n))));
    double y = n / (K.Q * K.Q), s = 0.0;
    for (i64 q = 1; q <= q_max; ++q) {
        i64 cq = ramanujan_sum(q, n);
        if (cq != 0) s += cq * h_eval(q / K.Q, y);
    }
    return C * s / (K.Q * K.Q);
}

/// c_q(n) as the literal sum over reduced residues a mod q of cos(2 pi a n / q).
inline double ramanujan_literal(i64 q, i64 n) {
    double s = 0.0;
    for (i64 a = 1; a <= q; ++a)
        if (std::gcd(a, q) == 1) s += std::cos(2.0 * std::numbers::pi * static_cast<double>(mod(a * n, q)) / q);
    return s;
}

// ---------------------------------------------------------------------------
// Oscillatory integrals

struct QuadratureSpec {
    double margin = 30.0;       // transverse bandwidth beyond the phase, in cycles per weight radius
    double level_nodes = 12.0;  // level-set nodes per oscillation of the y-density
    double kernel_cells = 8.0;  // 8-point Gauss cells per r in the y-integral
    double coarse = 1.5;        // the error estimate reruns with margin and level_nodes divided by this
    bool estimate_error = true;
    double max_work = 4e9;      // bound on (level node, transverse point) pairs
    int threads = 1;
    // singular integral
    double eps0 = 0.04;         // widest mollifier, as a length along the steepest gradient
    int eps_levels = 4;
    int ray_nodes = 640;
};

/// Bounds used to size the quadrature. Axis a is solved for on each level set,
/// b and c are transverse.
struct OscGeometry {
    int a = 0, b = 1, c = 2;
    double g_min = 0.0;            // min |d_a F| over the support
    std::array<double, 3> d_max{}; // max |d_i F| over the support
    double y_lo = 0.0, y_hi = 0.0; // range of F - m0 over the support (outer bounds)
    bool fold = false;             // d_a F vanishes somewhere on the support

    double slope(int i) const { return g_min > 0.0 ? d_max[i] / g_min : 0.0; }
};

inline OscGeometry osc_geometry(const ProblemInstance& I) {
    const auto& M = I.form().gram();
    const auto& w = I.weight();
    const Vec3d& p = w.center;
    double R = w.radius;
    bool ball = w.profile == WeightProfile::Ball;
    OscGeometry g;
    std::array<double, 3> lo{}, hi{};
    for (int i = 0; i < 3; ++i) {
        double mp = 0.0, row = 0.0;
        for (int j = 0; j < 3; ++j) {
            double m = static_cast<double>(M[i][j]);
            mp += m * p[j];
            row += ball ? m * m : std::abs(m);
        }
        double spread = 2.0 * R * (ball ? std::sqrt(row) : row);
        lo[i] = 2.0 * mp - spread;
        hi[i] = 2.0 * mp + spread;
        g.d_max[i] = std::max(std::abs(lo[i]), std::abs(hi[i]));
    }
    double best = -1.0;
    for (int i = 0; i < 3; ++i) {
        double gm = (lo[i] > 0.0 || hi[i] < 0.0) ? std::min(std::abs(lo[i]), std::abs(hi[i])) : 0.0;
        if (gm > best) best = gm, g.a = i;
    }
    g.g_min = best;
    g.fold = best <= 0.0;
    g.b = (g.a + 1) % 3;
    g.c = (g.a + 2) % 3;
    if (g.b > g.c) std::swap(g.b, g.c);
    // F(p + d) - F(p) lies within |grad F(p)| |d| + |M|_F |d|^2
    double fro = 0.0, gp = 0.0;
    Vec3d gradp = I.form().gradient(p);
    for (int i = 0; i < 3; ++i) {
        gp += gradp[i] * gradp[i];
        for (int j = 0; j < 3; ++j) fro += static_cast<double>(M[i][j]) * M[i][j];
    }
    double d = ball ? R : R * std::sqrt(3.0);
    double spread = std::sqrt(gp) * d + std::sqrt(fro) * d * d;
    double f0 = I.form()(p) - static_cast<double>(I.m0());
    g.y_lo = f0 - spread;
    g.y_hi = f0 + spread;
    return g;
}

/// Frequencies k * step for k = -K..K along one axis.
struct FreqAxis {
    double step = 0.0;
    int K = 0;
    int size() const { return 2 * K + 1; }
    double max_abs() const { return K * std::abs(step); }
};

struct OscGrid {
    double r = 0.0;
    std::array<FreqAxis, 3> axes;
    std::vector<cplx> values;   // index ((k0+K0) n1 + (k1+K1)) n2 + (k2+K2)
    std::vector<double> errors; // |fine - coarse|, zero when not estimated
    bool fold = false;
    double work = 0.0;

    std::size_t index(int k0, int k1, int k2) const {
        return (static_cast<std::size_t>(k0 + axes[0].K) * axes[1].size() + (k1 + axes[1].K)) * axes[2].size() +
               (k2 + axes[2].K);
    }
    cplx at(int k0, int k1, int k2) const { return values[index(k0, k1, k2)]; }
    double error_at(int k0, int k1, int k2) const { return errors.empty() ? 0.0 : errors[index(k0, k1, k2)]; }
};

struct OscResult {
    cplx value;
    double error = 0.0;
    bool fold = false;
};

namespace detail {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Uniform nodes y_i = y0 + i dy carry weights W_i = int h(r, y) l_i(y) dy, where
/// l_i are the cardinal functions of local 8-point Lagrange interpolation.
struct LevelWeights {
    double y0 = 0.0, dy = 1.0;
    std::vector<double> W;
};

inline LevelWeights level_weights(double r, double y_lo, double y_hi, double dy, double kernel_cells) {
    constexpr int S = 8;
    LevelWeights lw;
    lw.dy = dy;
    lw.y0 = y_lo - 4 * dy;
    int n = static_cast<int>(std::ceil((y_hi - y_lo) / dy)) + 9;
    lw.W.assign(n, 0.0);
    const auto& gl = boost::math::quadrature::gauss<double, 8>::abscissa();
    const auto& gw = boost::math::quadrature::gauss<double, 8>::weights();
    double cell = std::min(dy, r / kernel_cells);
    int sub = std::max(1, static_cast<int>(std::ceil(dy / cell)));
    double denom[S];
    for (int j = 0; j < S; ++j) {
        double d = 1.0;
        for (int m = 0; m < S; ++m)
            if (m != j) d *= (j - m);
        denom[j] = d;
    }
    auto add = [&](int k, double u, double val) {
        // u is the position in units of dy relative to node k; stencil k-3..k+4
        int s0 = std::clamp(k - 3, 0, n - S);
        double x = u + (k - s0);
        for (int j = 0; j < S; ++j) {
            double l = 1.0;
            for (int m = 0; m < S; ++m)
                if (m != j) l *= (x - m);
            lw.W[s0 + j] += val * l / denom[j];
        }
    };
    for (int k = 0; k + 1 < n; ++k) {
        double ya = lw.y0 + k * dy;
        if (r >= 1.0 && std::abs(ya) + dy < r / 2) continue;
        for (int s = 0; s < sub; ++s) {
            double half = 0.5 * dy / sub, mid = ya + (2 * s + 1) * half;
            for (std::size_t g = 0; g < gl.size(); ++g)
                for (double sign : {-1.0, 1.0}) {
                    double y = mid + sign * half * gl[g];
                    double hv = h_eval(r, y);
                    if (hv != 0.0) add(k, (y - ya) / dy, hv * gw[g] * half);
                }
        }
    }
    return lw;
}

struct TransverseGrid {
    double lo = 0.0, step = 1.0;
    int n = 0;  // interior nodes lo + j step, j = 1..n-1
    double node(int j) const { return lo + j * step; }
};

/// One evaluation at a fixed resolution. Returns values on the full frequency grid.
inline std::vector<cplx> osc_pass(const ProblemInstance& I, const OscGeometry& G, double r,
                                  const std::array<FreqAxis, 3>& ax, double margin, double level_nodes,
                                  const QuadratureSpec& qs, double& work) {
    const auto& M = I.form().gram();
    const WeightSpec& w = I.weight();
    const double R = w.radius;
    const bool ball = w.profile == WeightProfile::Ball;
    const int a = G.a, b = G.b, c = G.c;
    const double m0 = static_cast<double>(I.m0());
    const FreqAxis &fa = ax[a], &fb = ax[b], &fc = ax[c];

    // level-set density in y varies with the a-phase and the bump along the solved axis
    double gmin = G.fold ? std::max(1e-3, 0.05 * G.d_max[a]) : G.g_min;
    double fy = (fa.max_abs() + 2.0 / R) / gmin;
    double dy = 1.0 / (level_nodes * fy);
    // coarser node sets for lines where |d_a F| is well above its minimum
    std::vector<LevelWeights> levels;
    for (int s = 1; s <= 8; s *= 2) levels.push_back(level_weights(r, G.y_lo, G.y_hi, dy * s, qs.kernel_cells));

    auto make_grid = [&](int axis, double f) {
        TransverseGrid tg;
        tg.n = std::max(16, static_cast<int>(std::ceil(2.0 * R * f + 2.0 * margin)));
        tg.lo = w.center[axis] - R;
        tg.step = 2.0 * R / tg.n;
        return tg;
    };
    double slope_b = G.fold ? G.d_max[b] / gmin : G.slope(b), slope_c = G.fold ? G.d_max[c] / gmin : G.slope(c);
    TransverseGrid gb = make_grid(b, fb.max_abs() + fa.max_abs() * slope_b);
    TransverseGrid gc = make_grid(c, fc.max_abs() + fa.max_abs() * slope_c);

    // rough work estimate: nodes crossed per transverse point times points
    double span = std::min(G.y_hi - G.y_lo, 2.0 * R * G.d_max[a]);
    double est = (span / dy) * gb.n * gc.n * (ball ? std::numbers::pi / 4 : 1.0);
    work += est;
    if (est > qs.max_work)
        throw ResourceBoundError("oscillatory integral at r = " + std::to_string(r) + " needs about " +
                                 std::to_string(est) + " level-set samples (limit " + std::to_string(qs.max_work) + ")");

    const int Ka = fa.K, nkb = fb.size(), nkc = fc.size();
    // phase tables along the transverse axes
    std::vector<cplx> eb(static_cast<std::size_t>(gb.n) * nkb), ec(static_cast<std::size_t>(gc.n) * nkc);
    for (int j = 1; j < gb.n; ++j)
        for (int k = -fb.K; k <= fb.K; ++k)
            eb[j * nkb + k + fb.K] = std::polar(1.0, -kTwoPi * k * fb.step * gb.node(j));
    for (int j = 1; j < gc.n; ++j)
        for (int k = -fc.K; k <= fc.K; ++k)
            ec[j * nkc + k + fc.K] = std::polar(1.0, -kTwoPi * k * fc.step * gc.node(j));

    const double A = static_cast<double>(M[a][a]);
    const std::size_t row_size = static_cast<std::size_t>(Ka + 1) * nkc;
    std::vector<cplx> rows(static_cast<std::size_t>(gb.n) * row_size, cplx(0.0));

    auto do_rows = [&](int j_begin, int j_end) {
        std::vector<cplx> acc(Ka + 1);
        for (int jb = std::max(1, j_begin); jb < j_end; ++jb) {
            double tb = gb.node(jb);
            cplx* row = &rows[static_cast<std::size_t>(jb) * row_size];
            for (int jc = 1; jc < gc.n; ++jc) {
                double tc = gc.node(jc);
                double ub = tb - w.center[b], uc = tc - w.center[c];
                double half;
                if (ball) {
                    double rho2 = R * R - ub * ub - uc * uc;
                    if (rho2 <= 0.0) continue;
                    half = std::sqrt(rho2);
                } else {
                    if (std::abs(ub) >= R || std::abs(uc) >= R) continue;
                    half = R;
                }
                double ta_lo = w.center[a] - half, ta_hi = w.center[a] + half;
                double B = 2.0 * (M[a][b] * tb + M[a][c] * tc);
                double C = M[b][b] * tb * tb + 2.0 * M[b][c] * tb * tc + M[c][c] * tc * tc;
                auto Fa = [&](double t) { return A * t * t + B * t + C; };
                double f_lo = std::min(Fa(ta_lo), Fa(ta_hi)), f_hi = std::max(Fa(ta_lo), Fa(ta_hi));
                if (A != 0.0) {
                    double v = -B / (2.0 * A);
                    if (v > ta_lo && v < ta_hi) f_lo = std::min(f_lo, Fa(v)), f_hi = std::max(f_hi, Fa(v));
                }
                double g_ends = std::min(std::abs(2.0 * A * ta_lo + B), std::abs(2.0 * A * ta_hi + B));
                bool sign_change = (2.0 * A * ta_lo + B) * (2.0 * A * ta_hi + B) <= 0.0;
                double g_line = sign_change ? 0.0 : g_ends;
                int lev = 0;
                while (lev + 1 < static_cast<int>(levels.size()) && (2 << lev) * gmin <= g_line) ++lev;
                const LevelWeights& lw = levels[lev];
                const int ny = static_cast<int>(lw.W.size());
                int i0 = std::max(0, static_cast<int>(std::ceil((f_lo - m0 - lw.y0) / lw.dy)));
                int i1 = std::min(ny - 1, static_cast<int>(std::floor((f_hi - m0 - lw.y0) / lw.dy)));
                if (i0 > i1) continue;
                std::fill(acc.begin(), acc.end(), cplx(0.0));
                for (int i = i0; i <= i1; ++i) {
                    double Wi = lw.W[i];
                    if (Wi == 0.0) continue;
                    double target = m0 + lw.y0 + i * lw.dy;
                    double roots[2];
                    int nr = 0;
                    double cc = C - target;
                    if (A == 0.0) {
                        if (B != 0.0) roots[nr++] = -cc / B;
                    } else {
                        double disc = B * B - 4.0 * A * cc;
                        if (disc < 0.0) continue;
                        double sq = std::sqrt(disc);
                        double qv = -0.5 * (B + (B >= 0.0 ? sq : -sq));
                        if (qv != 0.0) {
                            roots[nr++] = qv / A;
                            roots[nr++] = cc / qv;
                        } else {
                            roots[nr++] = 0.0;
                        }
                    }
                    for (int k = 0; k < nr; ++k) {
                        double ta = roots[k];
                        if (!(ta > ta_lo && ta < ta_hi)) continue;
                        Vec3d t;
                        t[a] = ta, t[b] = tb, t[c] = tc;
                        double wv = w(t);
                        if (wv == 0.0) continue;
                        double grad = std::abs(2.0 * A * ta + B);
                        if (grad == 0.0) continue;
                        double v = Wi * wv / grad;
                        cplx z = std::polar(1.0, -kTwoPi * fa.step * ta), zk(v, 0.0);
                        for (int ka = 0; ka <= Ka; ++ka) {
                            acc[ka] += zk;
                            zk *= z;
                        }
                    }
                }
                const cplx* e = &ec[jc * nkc];
                for (int ka = 0; ka <= Ka; ++ka) {
                    cplx s = acc[ka];
                    if (s == cplx(0.0)) continue;
                    cplx* out = row + static_cast<std::size_t>(ka) * nkc;
                    for (int kc = 0; kc < nkc; ++kc) out[kc] += s * e[kc];
                }
            }
        }
    };
    int T = std::max(1, qs.threads);
    if (T == 1) {
        do_rows(1, gb.n);
    } else {
        std::vector<std::thread> pool;
        int per = (gb.n + T - 1) / T;
        for (int t = 0; t < T; ++t) pool.emplace_back(do_rows, t * per, std::min(gb.n, (t + 1) * per));
        for (auto& th : pool) th.join();
    }

    // reduce over t_b in fixed order, then fill negative ka by conjugate symmetry
    const double cell = gb.step * gc.step;
    std::vector<cplx> half(static_cast<std::size_t>(Ka + 1) * nkb * nkc, cplx(0.0));
    for (int jb = 1; jb < gb.n; ++jb) {
        const cplx* row = &rows[static_cast<std::size_t>(jb) * row_size];
        const cplx* e = &eb[jb * nkb];
        for (int ka = 0; ka <= Ka; ++ka)
            for (int kb = 0; kb < nkb; ++kb) {
                cplx f = e[kb];
                cplx* out = &half[(static_cast<std::size_t>(ka) * nkb + kb) * nkc];
                const cplx* in = row + static_cast<std::size_t>(ka) * nkc;
                for (int kc = 0; kc < nkc; ++kc) out[kc] += f * in[kc];
            }
    }
    std::vector<cplx> full(static_cast<std::size_t>(ax[0].size()) * ax[1].size() * ax[2].size());
    auto put = [&](int ka, int kb, int kc, cplx v) {
        std::array<int, 3> k;
        k[a] = ka, k[b] = kb, k[c] = kc;
        full[(static_cast<std::size_t>(k[0] + ax[0].K) * ax[1].size() + (k[1] + ax[1].K)) * ax[2].size() +
             (k[2] + ax[2].K)] = v;
    };
    for (int ka = 0; ka <= Ka; ++ka)
        for (int kb = -fb.K; kb <= fb.K; ++kb)
            for (int kc = -fc.K; kc <= fc.K; ++kc) {
                cplx v = half[(static_cast<std::size_t>(ka) * nkb + (kb + fb.K)) * nkc + (kc + fc.K)] * cell;
                put(ka, kb, kc, v);
                if (ka > 0) put(-ka, -kb, -kc, std::conj(v));
            }
    return full;
}

}  // namespace detail

/// I_r(w; b) for every b = (k0 s0, k1 s1, k2 s2) r, |ki| <= Ki, i.e. frequencies
/// xi = b / r = k s on a tensor grid.
inline OscGrid osc_integral_grid(const ProblemInstance& I, double r, const std::array<FreqAxis, 3>& axes,
                                 const QuadratureSpec& qs = {}) {
    if (!(r > 0.0)) throw std::invalid_argument("osc_integral: r must be positive");
    OscGeometry G = osc_geometry(I);
    OscGrid out;
    out.r = r;
    out.axes = axes;
    out.fold = G.fold;
    if (r >= kernel_support(std::max(std::abs(G.y_lo), std::abs(G.y_hi)))) {
        out.values.assign(static_cast<std::size_t>(axes[0].size()) * axes[1].size() * axes[2].size(), cplx(0.0));
        if (qs.estimate_error) out.errors.assign(out.values.size(), 0.0);
        return out;
    }
    out.values = detail::osc_pass(I, G, r, axes, qs.margin, qs.level_nodes, qs, out.work);
    if (qs.estimate_error) {
        auto coarse = detail::osc_pass(I, G, r, axes, qs.margin / qs.coarse, qs.level_nodes / qs.coarse, qs, out.work);
        out.errors.resize(out.values.size());
        for (std::size_t i = 0; i < coarse.size(); ++i) out.errors[i] = std::abs(out.values[i] - coarse[i]);
    }
    return out;
}

/// I_r(w; b) = int w(t) h(r, F(t) - m0) e(-b.t / r) dt.
inline OscResult osc_integral(const ProblemInstance& I, double r, const Vec3d& b, const QuadratureSpec& qs = {}) {
    std::array<FreqAxis, 3> axes;
    for (int i = 0; i < 3; ++i) axes[i] = b[i] == 0.0 ? FreqAxis{0.0, 0} : FreqAxis{b[i] / r, 1};
    OscGrid g = osc_integral_grid(I, r, axes, qs);
    int k0 = axes[0].K, k1 = axes[1].K, k2 = axes[2].K;
    return {g.at(k0, k1, k2), g.error_at(k0, k1, k2), g.fold};
}

// ---------------------------------------------------------------------------
// Singular integral

struct SingularIntegral {
    double value = 0.0;          // Richardson-extrapolated mollifier value
    double error = 0.0;
    std::vector<double> eps, mollified;  // the eps sequence and the raw values
    double coarea = 0.0;         // level-set value
    double coarea_error = 0.0;
    bool converged = true;
};

namespace detail {

/// int_{F = m0} w dS / |grad F| along rays from the origin. On the ray t = s u,
/// F = s^2 F(u), so each ray meets the level set at most once, at s = sqrt(m0 / F(u)),
/// and the surface measure is s^3 / (2 |m0|) du.
inline double coarea_rays(const ProblemInstance& I, int n_theta) {
    const WeightSpec& w = I.weight();
    const double m0 = static_cast<double>(I.m0());
    Vec3d p = w.center;
    double R = w.profile == WeightProfile::Ball ? w.radius : w.radius * std::sqrt(3.0);
    double pn = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    // frame with the pole along the weight centre
    Vec3d e3 = pn > 0.0 ? Vec3d{p[0] / pn, p[1] / pn, p[2] / pn} : Vec3d{0.0, 0.0, 1.0};
    Vec3d tmp = std::abs(e3[0]) < 0.9 ? Vec3d{1.0, 0.0, 0.0} : Vec3d{0.0, 1.0, 0.0};
    double d = tmp[0] * e3[0] + tmp[1] * e3[1] + tmp[2] * e3[2];
    Vec3d e1{tmp[0] - d * e3[0], tmp[1] - d * e3[1], tmp[2] - d * e3[2]};
    double n1 = std::sqrt(e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]);
    for (double& x : e1) x /= n1;
    Vec3d e2{e3[1] * e1[2] - e3[2] * e1[1], e3[2] * e1[0] - e3[0] * e1[2], e3[0] * e1[1] - e3[1] * e1[0]};
    double cos_lo = pn > R ? std::sqrt(1.0 - (R / pn) * (R / pn)) : -1.0;
    // Gauss-Legendre in cos(theta) on panels, trapezoid in phi
    const auto& gl = boost::math::quadrature::gauss<double, 20>::abscissa();
    const auto& gw = boost::math::quadrature::gauss<double, 20>::weights();
    int panels = std::max(1, n_theta / 20), n_phi = 2 * n_theta;
    double total = 0.0, pw = (1.0 - cos_lo) / panels;
    for (int P = 0; P < panels; ++P) {
        double mid = cos_lo + (P + 0.5) * pw;
        for (std::size_t g = 0; g < 2 * gl.size(); ++g) {
            std::size_t gi = g / 2;
            if (g % 2 == 1 && gl[gi] == 0.0) continue;
            double x = mid + 0.5 * pw * (g % 2 == 0 ? gl[gi] : -gl[gi]);
            double wt = 0.5 * pw * gw[gi];
            double st = std::sqrt(std::max(0.0, 1.0 - x * x));
            double ring = 0.0;
            for (int k = 0; k < n_phi; ++k) {
                double ph = 2.0 * std::numbers::pi * k / n_phi;
                double c1 = st * std::cos(ph), c2 = st * std::sin(ph);
                Vec3d u{c1 * e1[0] + c2 * e2[0] + x * e3[0], c1 * e1[1] + c2 * e2[1] + x * e3[1],
                        c1 * e1[2] + c2 * e2[2] + x * e3[2]};
                double Fu = I.form()(u);
                if (!(m0 / Fu > 0.0)) continue;
                double s = std::sqrt(m0 / Fu);
                double wv = w(Vec3d{s * u[0], s * u[1], s * u[2]});
                if (wv != 0.0) ring += wv * s * s * s / (2.0 * std::abs(m0));
            }
            total += wt * ring * (2.0 * std::numbers::pi / n_phi);
        }
    }
    return total;
}

}  // namespace detail

/// Weighted real density of F = m0: a Gaussian-mollified volume integral
/// extrapolated in eps -> 0, cross-checked against the level-set integral.
inline SingularIntegral singular_integral(const ProblemInstance& I, const QuadratureSpec& qs = {}) {
    const WeightSpec& w = I.weight();
    OscGeometry G = osc_geometry(I);
    const double m0 = static_cast<double>(I.m0());
    const int L = std::max(2, qs.eps_levels);
    SingularIntegral out;
    double gmax = std::sqrt(G.d_max[0] * G.d_max[0] + G.d_max[1] * G.d_max[1] + G.d_max[2] * G.d_max[2]);
    double eps_top = qs.eps0 * std::max(gmax, 1e-9);
    for (int k = 0; k < L; ++k) out.eps.push_back(eps_top / std::pow(2.0, k));
    double eps_min = out.eps.back();
    double R = w.radius;
    double step = std::min(eps_min / std::max(gmax, 1e-9), R / 24.0);
    int n = static_cast<int>(std::ceil(2.0 * R / step));
    step = 2.0 * R / n;
    std::vector<double> acc(L, 0.0);
    // the Gaussian factor is cut at |y| < 38 eps, so a support far from the level set contributes nothing
    if (G.y_lo > 38.0 * eps_top || G.y_hi < -38.0 * eps_top) n = 0;
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (int i = 1; i < n; ++i) {
        std::vector<double> plane(L, 0.0);
        for (int j = 1; j < n; ++j)
            for (int k = 1; k < n; ++k) {
                Vec3d t{w.center[0] - R + i * step, w.center[1] - R + j * step, w.center[2] - R + k * step};
                double wv = w(t);
                if (wv == 0.0) continue;
                double y = I.form()(t) - m0;
                for (int l = 0; l < L; ++l) {
                    double z = y / out.eps[l];
                    if (z * z < 1400.0) plane[l] += wv * std::exp(-0.5 * z * z) * norm / out.eps[l];
                }
            }
        for (int l = 0; l < L; ++l) acc[l] += plane[l];
    }
    for (int l = 0; l < L; ++l) out.mollified.push_back(acc[l] * step * step * step);
    // Romberg table in eps^2
    std::vector<std::vector<double>> T(L);
    for (int k = 0; k < L; ++k) {
        T[k].push_back(out.mollified[k]);
        for (int j = 1; j <= k; ++j) {
            double f = std::pow(4.0, j);
            T[k].push_back(T[k][j - 1] + (T[k][j - 1] - T[k - 1][j - 1]) / (f - 1.0));
        }
    }
    out.value = T[L - 1][L - 1];
    out.error = std::abs(T[L - 1][L - 1] - T[L - 1][L - 2]);
    double prev = std::abs(T[L - 2][L - 2] - T[L - 1][L - 1]);
    out.converged = !(out.error > 1e-6 * std::abs(out.value) + 1e-12 && out.error > prev);
    out.coarea = detail::coarea_rays(I, qs.ray_nodes);
    out.coarea_error = std::abs(out.coarea - detail::coarea_rays(I, std::max(20, qs.ray_nodes / 2)));
    return out;
}

// ---------------------------------------------------------------------------
// Bound monitors

struct OscMonitor {
    double trivial = 0.0;  // max |I_r(w; b)|
    double harder = 0.0;   // max |I_r(w; b)| (|b|/r)^0.45 over |b| >= 1
    i64 samples = 0;
};

/// Scans integer b with |b|_inf <= B at each r.
inline OscMonitor osc_monitor(const ProblemInstance& I, const std::vector<double>& rs, int B, QuadratureSpec qs = {}) {
    qs.estimate_error = false;
    OscMonitor m;
    for (double r : rs) {
        FreqAxis f{1.0 / r, B};
        OscGrid g = osc_integral_grid(I, r, {f, f, f}, qs);
        for (int b0 = -B; b0 <= B; ++b0)
            for (int b1 = -B; b1 <= B; ++b1)
                for (int b2 = -B; b2 <= B; ++b2) {
                    double a = std::abs(g.at(b0, b1, b2));
                    m.trivial = std::max(m.trivial, a);
                    double nb = std::sqrt(double(b0) * b0 + double(b1) * b1 + double(b2) * b2);
                    if (nb >= 1.0) m.harder = std::max(m.harder, a * std::pow(nb / r, 0.45));
                    ++m.samples;
                }
    }
    return m;
}

// ---------------------------------------------------------------------------
// r-integrals at exceptional frequencies

struct JIntegrals {
    cplx twisted;        // int e_{Delta r}(u^2 L^3 N(c)) I_r(w, c/L) dr / r
    cplx plain;          // int I_r(w, c/L) dr / r
    double error = 0.0;  // panel-halving difference, larger of the two
    double tail_bound = 0.0;  // |contribution of (0, r_min)| under the decay model
    double r_min = 0.0, r_sup = 0.0;
    i64 norm = 0;        // N(c) = sqrt(m0 Delta F*(c))
};

/// Both integrals over [r_min, r_sup], r_sup the kernel support bound. Both phases are
/// linear in v = 1/r, so the quadrature runs over v with composite 8-point Gauss-Legendre
/// panels sized to the phase rate.
inline JIntegrals J_integrals(const ProblemInstance& I, const Vec3& c, i64 u, double r_min, QuadratureSpec qs = {},
                              int panels_per_cycle = 1) {
    if (!(r_min > 0.0)) throw std::invalid_argument("J_integrals: r_min must be positive");
    CClass k = classify_c(I, c);
    if (k == CClass::Ordinary) throw std::invalid_argument("J_integrals: c is not exceptional");
    const QForm& F = I.form();
    i128 rad = static_cast<i128>(I.m0()) * F.determinant() * F.dual().evaluate(c);
    if (rad < 0 || !is_square(rad)) throw std::invalid_argument("J_integrals: m0 Delta F*(c) is not a square");
    JIntegrals out;
    out.norm = isqrt_exact(rad);
    out.r_min = r_min;
    OscGeometry G = osc_geometry(I);
    out.r_sup = kernel_support(std::max(std::abs(G.y_lo), std::abs(G.y_hi)));
    if (r_min >= out.r_sup) return out;
    const double L = static_cast<double>(I.L()), Delta = static_cast<double>(F.determinant());
    const double x = static_cast<double>(u) * u * L * L * L * out.norm;
    Vec3d b{c[0] / L, c[1] / L, c[2] / L};
    double nb = std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]);
    const auto& w = I.weight();
    double reach = std::sqrt(w.center[0] * w.center[0] + w.center[1] * w.center[1] + w.center[2] * w.center[2]) +
                   (w.profile == WeightProfile::Ball ? w.radius : w.radius * std::sqrt(3.0));
    qs.estimate_error = false;
    double v0 = 1.0 / out.r_sup, v1 = 1.0 / r_min;
    double cycles = (v1 - v0) * (nb * reach + std::abs(x / Delta));
    int P = std::max(2, static_cast<int>(std::ceil(cycles * panels_per_cycle)));
    const auto& gl = boost::math::quadrature::gauss<double, 8>::abscissa();
    const auto& gw = boost::math::quadrature::gauss<double, 8>::weights();
    double harder = 0.0;
    auto integrate = [&](int panels, cplx& tw, cplx& pl) {
        tw = pl = 0.0;
        double hw = (v1 - v0) / panels;
        for (int p = 0; p < panels; ++p) {
            double mid = v0 + (p + 0.5) * hw;
            for (std::size_t g = 0; g < gl.size(); ++g)
                for (double sign : {-1.0, 1.0}) {
                    double v = mid + sign * 0.5 * hw * gl[g];
                    double r = 1.0 / v;
                    cplx val = osc_integral(I, r, b, qs).value;
                    harder = std::max(harder, std::abs(val) * std::pow(nb / r, 0.45));
                    double wt = 0.5 * hw * gw[g] / v;  // dr / r = -dv / v
                    pl += wt * val;
                    tw += wt * val * std::polar(1.0, 2.0 * std::numbers::pi * x * v / Delta);
                }
        }
    };
    cplx tw2, pl2;
    integrate(P, out.twisted, out.plain);
    integrate(std::max(1, P / 2), tw2, pl2);
    out.error = std::max(std::abs(out.twisted - tw2), std::abs(out.plain - pl2));
    // |I_r(w; b)| <= C (r/|b|)^0.45 below r_min, with C the largest value seen
    out.tail_bound = harder * std::pow(r_min / nb, 0.45) / 0.45;
    return out;
}

}  // namespace qdelta
