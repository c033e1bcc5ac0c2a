#include <gtest/gtest.h>

#include "qdelta/expsums.hpp"
#include "test_instances.hpp"

using namespace qdelta;
using namespace qdelta::testing;

namespace {

std::vector<ProblemInstance> all_instances() { return {sphere(), hyperboloid(), hyperboloid_L2(), skew(), sphere(2, 1, 3)}; }

std::vector<Vec3> small_cs(i64 r) {
    std::vector<Vec3> v;
    for (i64 a = -r; a <= r; ++a)
        for (i64 b = -r; b <= r; ++b)
            for (i64 c = -r; c <= r; ++c) v.push_back({a, b, c});
    return v;
}

double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace

TEST(BruteS, Examples) {
    for (const auto& I : all_instances()) {
        // q = 1 leaves only the sigma mod L that satisfy the divisibility condition
        auto s = brute_S(I, 1, {0, 0, 0});
        EXPECT_LT(std::abs(s.value - static_cast<double>(s.terms)), 1e-12);
        if (I.L() == 1) { EXPECT_LT(std::abs(s.value - 1.0), 1e-12); }
    }
    auto I = sphere();
    EXPECT_LT(std::abs(brute_S(I, 2, {0, 0, 0}).value), 1e-12);
    EXPECT_LT(std::abs(brute_S(I, 4, {0, 0, 0}).value - brute_S_literal(I, 4, {0, 0, 0}).value), 1e-9);
    EXPECT_THROW(brute_S(I, 10001, {0, 0, 0}), std::out_of_range);
}

TEST(BruteS, RamanujanRouteMatchesLiteralLoop) {
    for (const auto& I : all_instances())
        for (i64 q = 1; q * I.L() <= 12; ++q)
            for (const auto& c : small_cs(1)) {
                auto a = brute_S(I, q, c), b = brute_S_literal(I, q, c);
                ASSERT_LT(std::abs(a.value - b.value), 1e-9) << q;
                EXPECT_EQ(a.terms, b.terms);
                EXPECT_LE(a.abs(), a.terms + 1e-9);
            }
}

TEST(BruteS, GridMatchesSingle) {
    auto I = hyperboloid_L2();
    for (i64 q : {1, 3, 4, 7}) {
        auto g = brute_S_grid(I, q, 2);
        std::size_t i = 0;
        for (const auto& c : small_cs(2)) EXPECT_LT(std::abs(g[i++] - brute_S(I, q, c).value), 1e-9);
    }
}

TEST(BruteS, RealAtZeroFrequency) {
    for (const auto& I : all_instances())
        for (i64 q = 1; q <= 30; ++q) {
            double q3 = static_cast<double>(q * q * q);
            EXPECT_LT(std::abs(brute_S(I, q, {0, 0, 0}).value.imag()), 1e-9 * q3) << q;
        }
}

TEST(BruteS, BinnedAndSeparablePathsAgree) {
    for (const auto& I : all_instances())
        for (i64 q : {1, 6, 12, 17, 30}) {
            auto spec = spec_S(I, q);
            for (i64 C : {1, 2}) {
                auto r = detail::symmetric_range(C);
                auto a = detail::quad_sum_binned(spec, r, r, r), b = detail::quad_sum_tensor(spec, r, r, r);
                EXPECT_EQ(a.sigma_count, b.sigma_count);
                for (std::size_t i = 0; i < a.v.size(); ++i) ASSERT_LT(rel(a.v[i], b.v[i]), 1e-9) << "q=" << q << " i=" << i;
            }
            // asymmetric frequency lists skip the conjugate shortcut
            auto a = detail::quad_sum_binned(spec, {0, 2}, {1}, {-1, 3});
            auto b = detail::quad_sum_tensor(spec, {0, 2}, {1}, {-1, 3});
            for (std::size_t i = 0; i < a.v.size(); ++i) ASSERT_LT(rel(a.v[i], b.v[i]), 1e-9);
        }
}

TEST(BruteS, VanishingSumsStayAtRoundingLevel) {
    // S_181(c) is exactly zero at these frequencies for the L = 2 hyperboloid
    auto I = hyperboloid_L2();
    auto s = brute_S_grid(I, 181, 1);
    auto [q1, q2] = crt_split(I, 181);
    auto a = brute_S1_grid(I, q1, q2, 1), b = brute_S2_grid(I, q1, q2, 1);
    for (std::size_t i : {12u, 14u}) {
        EXPECT_LT(std::abs(a[i] * b[i]), 1e-9);
        EXPECT_LT(std::abs(s[i]), 1e-10);
    }
}

TEST(CrtSplit, Examples) {
    auto a = crt_split(2, 12);
    EXPECT_EQ(a.q1, 3);
    EXPECT_EQ(a.q2, 4);
    auto b = crt_split(2, 9);
    EXPECT_EQ(b.q1, 9);
    EXPECT_EQ(b.q2, 1);
    auto c = crt_split(6, 1);
    EXPECT_EQ(c.q1, 1);
    EXPECT_EQ(c.q2, 1);
}

TEST(BruteS1S2, TrivialFactors) {
    for (const auto& I : all_instances()) {
        for (const auto& c : small_cs(1)) EXPECT_LT(std::abs(brute_S1(I, 1, 4, c).value - 1.0), 1e-12);
    }
    auto I = sphere();
    for (const auto& c : small_cs(1)) EXPECT_LT(std::abs(brute_S2(I, 7, 1, c).value - 1.0), 1e-12);
    auto J = sphere(2);
    EXPECT_LT(std::abs(brute_S1(J, 3, 1, {1, 0, 0}).value - brute_S(J, 3, {1, 0, 0}).value), 1e-9);
    EXPECT_THROW(brute_S1(J, 2, 1, {0, 0, 0}), std::invalid_argument);
}

TEST(BruteS1S2, Multiplicativity) {
    for (const auto& I : all_instances())
        for (i64 q = 1; q <= 60; ++q) {
            auto [q1, q2] = crt_split(I, q);
            auto s = brute_S_grid(I, q, 1), a = brute_S1_grid(I, q1, q2, 1), b = brute_S2_grid(I, q1, q2, 1);
            for (std::size_t i = 0; i < s.size(); ++i) ASSERT_LT(rel(s[i], a[i] * b[i]), 1e-9) << "q=" << q << " L=" << I.L();
        }
}

TEST(BruteS1S2, GridMatchesSingle) {
    auto I = hyperboloid_L2();
    auto a = brute_S1_grid(I, 7, 4, 1), b = brute_S2_grid(I, 7, 4, 1);
    std::size_t i = 0;
    for (const auto& c : small_cs(1)) {
        EXPECT_LT(std::abs(a[i] - brute_S1(I, 7, 4, c).value), 1e-9);
        EXPECT_LT(std::abs(b[i] - brute_S2(I, 7, 4, c).value), 1e-9);
        ++i;
    }
}

TEST(ClosedFormS1, ZeroFrequencyPrime) {
    auto I = hyperboloid();
    for (i64 p : {3, 7, 11, 13}) {
        auto v = closed_form_S1(I, p, 1, {0, 0, 0}).value;
        double want = static_cast<double>(p * p) * jacobi(-I.m0N() * I.Delta(), p);
        EXPECT_LT(std::abs(v - want), 1e-9);
        EXPECT_LT(std::abs(v - brute_S1(I, p, 1, {0, 0, 0}).value), 1e-6 * p * p);
    }
    EXPECT_LT(std::abs(closed_form_S1(I, 1, 1, {1, 2, 3}).value - 1.0), 1e-15);
    auto H = hyperboloid(0);
    EXPECT_LT(std::abs(closed_form_S1(H, 5, 1, {0, 0, 1}).value - brute_S1(H, 5, 1, {0, 0, 1}).value), 1e-9);
}

TEST(ClosedFormS1, MatchesBruteForce) {
    for (const auto& I : all_instances()) {
        for (i64 q1 = 1; q1 <= 35; q1 += 2) {
            if (std::gcd(q1, I.m0N() * I.Omega()) != 1) continue;
            for (i64 q2 : {1, 2, 4, 8, 3}) {
                if (std::gcd(q1, q2 * I.Omega()) != 1 || smooth_part(q2, I.Omega()) != q2) continue;
                for (const auto& c : small_cs(2)) {
                    auto a = closed_form_S1(I, q1, q2, c).value, b = brute_S1(I, q1, q2, c).value;
                    ASSERT_LT(std::abs(a - b), 1e-6 * q1 * q1) << q1 << " " << q2 << " " << c[0] << c[1] << c[2];
                }
            }
        }
    }
}

TEST(ClosedFormS1, RejectsBadArguments) {
    auto I = hyperboloid();
    EXPECT_THROW(closed_form_S1(I, 5, 1, {0, 0, 0}), std::invalid_argument);  // 5 | m0 N
    EXPECT_THROW(closed_form_S1(I, 6, 1, {0, 0, 0}), std::invalid_argument);
}

TEST(CalS, Examples) {
    auto I = sphere();
    EXPECT_LT(std::abs(calS(I, 1, 1, {3, 1, 2}).value - 1.0), 1e-12);
    for (const auto& J : {hyperboloid(), hyperboloid_L2(), sphere(2, 1, 3), skew()})
        for (i64 q1 : {1, 3, 7, 11})
            for (i64 q2 : {1, 2, 4, 8}) {
                if (std::gcd(q1, q2 * J.Omega()) != 1) continue;
                const i64 M = q2 * J.L() * J.L();
                i64 q1bar = inv_mod(mod(q1, M), M);
                for (const auto& c : small_cs(1)) {
                    cplx twist = unit_root(-mod128(static_cast<i128>(q1bar) * dot_mod(c, J.lambdaN(), M), M), M);
                    cplx lhs = twist * calS(J, q2, q1, c).value;
                    ASSERT_LT(std::abs(lhs - brute_S2(J, q1, q2, c).value), 1e-9) << q1 << " " << q2;
                }
            }
    auto H = hyperboloid_L2();
    for (i64 x : {1, 5, 7}) {
        const i64 M = 3 * 4;
        EXPECT_LT(std::abs(calS(H, 3, x, {1, 2, 0}).value - calS(H, 3, x + M, {1, 2, 0}).value), 1e-12);
    }
    EXPECT_THROW(calS(H, 3, 2, {0, 0, 0}), std::invalid_argument);
}

TEST(CalS, AllUnitsMatchesSingleEvaluation) {
    for (const auto& J : {sphere(), hyperboloid(), hyperboloid_L2(), skew(), sphere(2, 1, 3)})
        for (i64 l : {1, 2, 3, 5, 6, 12}) {
            const i64 M = l * J.L() * J.L();
            if (M > 200) continue;
            for (const auto& c : small_cs(1)) {
                auto all = calS_all(J, l, c);
                for (i64 x = 0; x < M; ++x) {
                    if (std::gcd(x, M) != 1) {
                        if (M > 1) {
                            ASSERT_EQ(all[x], cplx{});
                        }
                        continue;
                    }
                    ASSERT_LT(std::abs(all[x] - calS(J, l, x, c).value), 1e-9) << "l=" << l << " x=" << x;
                }
            }
        }
}

TEST(CalA, ExamplesAndReconstruction) {
    auto I = sphere();
    auto triv = characters_mod(1)[0];
    EXPECT_LT(std::abs(calA(I, 1, triv, {0, 0, 0}).value - 1.0), 1e-12);
    {
        Vec3 c{1, 1, 0};
        auto s = calS_all(I, 3, c);
        auto chars = characters_mod(3);
        cplx at2{}, at1{};
        for (auto& chi : chars) {
            auto a = calA_from(s, chi).value;
            at2 += chi(2) * a;
            at1 += chi(1) * a;
        }
        EXPECT_LT(rel(at2, calS(I, 3, 2, c).value), 1e-8);
        EXPECT_LT(rel(at1, calS(I, 3, 1, c).value), 1e-8);
    }
    for (const auto& J : {hyperboloid(), hyperboloid_L2(), skew()})
        for (i64 l : {2, 4, 5, 8}) {
            const i64 M = l * J.L() * J.L();
            if (M > 100) continue;
            auto chars = characters_mod(M);
            for (const auto& c : small_cs(1)) {
                auto s = calS_all(J, l, c);
                std::vector<cplx> a;
                for (auto& chi : chars) a.push_back(calA_from(s, chi).value);
                for (i64 x = 1; x < M; ++x) {
                    if (std::gcd(x, M) != 1) continue;
                    cplx r{};
                    for (std::size_t k = 0; k < chars.size(); ++k) r += chars[k](x) * a[k];
                    ASSERT_LT(rel(r, s[x]), 1e-8);
                }
            }
        }
}

TEST(CalT, Factorization) {
    for (int h = 1; h <= 2; ++h) {
        auto I = ProblemInstance(QForm::diag(1, 1, 1), 1, 5, h, {1, {0, 0, 0}}, unit_ball());
        EXPECT_LT(std::abs(calT1(I, 4, 3, {1, 0, 0}).value - 1.0), 1e-15);
        for (i64 q2 : {5, 10, 20, 25}) {
            if (p0_split(5, q2).ord > h) continue;
            for (i64 x : {1, 3, 7})
                for (const auto& c : small_cs(1)) {
                    if (std::gcd(x, q2) != 1) continue;
                    cplx prod = calT1(I, q2, x, c).value * calT2(I, q2, calT2_argument(I, q2, x), c).value;
                    ASSERT_LT(rel(prod, calS(I, q2, x, c).value), 1e-9) << h << " " << q2 << " " << x;
                }
        }
    }
    // L = 2 and a nondiagonal form with p0 | Delta
    auto S = ProblemInstance(QForm(1, 2, 3, 2, 0, 0), 1, 3, 2, {2, {1, 0, 0}}, unit_ball());
    for (i64 q2 : {3, 6, 9, 12})
        for (i64 x : {1, 5, 7})
            for (const auto& c : small_cs(1)) {
                cplx prod = calT1(S, q2, x, c).value * calT2(S, q2, calT2_argument(S, q2, x), c).value;
                ASSERT_LT(rel(prod, calS(S, q2, x, c).value), 1e-9) << q2 << " " << x;
            }
}

TEST(CalT, SecondFactorIndependentOfH) {
    auto a = hyperboloid_L2(1), b = hyperboloid_L2(2);
    for (i64 q2 : {1, 2, 4, 8})
        for (const auto& c : small_cs(1)) {
            auto x = calT2(a, q2, 3, c).value, y = calT2(b, q2, 3, c).value;
            EXPECT_EQ(x, y);
        }
}

TEST(STilde, SplitRouteMatchesBrute) {
    for (const auto& I : {hyperboloid(), hyperboloid_L2(), skew()}) {
        for (i64 q = 1; q <= 24; ++q) {
            auto fast = S_tilde_grid(I, q, 2, 0);
            auto slow = brute_S_grid(I, q, 2);
            for (std::size_t i = 0; i < fast.size(); ++i) ASSERT_LT(rel(fast[i], slow[i]), 1e-9) << q;
        }
    }
}
