#include <gtest/gtest.h>

#include <random>

#include "qdelta/qform.hpp"

using namespace qdelta;

namespace {

std::vector<QForm> sample_forms() {
    return {QForm::diag(1, 1, 1), QForm::diag(1, 1, -1), QForm::diag(1, 2, 3), QForm(1, 2, 3, 2, 0, 0),
            QForm(2, 3, -5, 2, 4, -2), QForm(-3, 7, 1, 0, 6, 4)};
}

bool brute_square(i128 n) {
    if (n < 0) return false;
    for (i128 r = 0; r * r <= n; ++r)
        if (r * r == n) return true;
    return false;
}

}  // namespace

TEST(QForm, EvaluateExamples) {
    EXPECT_EQ(evaluate(QForm::diag(1, 1, 1), {1, 2, 3}), 14);
    EXPECT_EQ(evaluate(QForm::diag(1, 1, -1), {3, 4, 5}), 0);
    EXPECT_EQ(evaluate(QForm(1, 2, 3, 2, 0, 0), {1, 1, 1}), 8);
}

TEST(QForm, EvaluateOverflowChecked) {
    QForm F = QForm::diag(1, 1, 1);
    const i64 big = 4'000'000'000'000'000'000;
    EXPECT_NO_THROW(F.evaluate({big, big, 0}));
    QForm G = QForm::diag(1 << 30, 1, 1);
    EXPECT_THROW(G.evaluate({big, 0, 0}), std::overflow_error);
}

TEST(QForm, RejectsOddCrossAndDegenerate) {
    EXPECT_THROW(QForm(1, 1, 1, 1, 0, 0), std::invalid_argument);
    EXPECT_THROW(QForm(1, 1, 0), std::invalid_argument);
    EXPECT_THROW(QForm(1, 1, 1, 2, 2, 2), std::invalid_argument);  // Gram all ones, rank 1
}

TEST(QForm, DeterminantExamples) {
    EXPECT_EQ(determinant(QForm::diag(1, 1, 1)), 1);
    EXPECT_EQ(determinant(QForm::diag(1, 1, -1)), -1);
    EXPECT_EQ(determinant(QForm::diag(1, 2, 3)), 6);
}

TEST(QForm, DualExamples) {
    EXPECT_EQ(dual_form(QForm::diag(1, 1, 1)), QForm::diag(1, 1, 1));
    EXPECT_EQ(dual_form(QForm::diag(1, 2, 3)), QForm::diag(6, 3, 2));
    EXPECT_EQ(dual_form(QForm::diag(1, 1, -1)), QForm::diag(-1, -1, 1));
}

TEST(QForm, DualIdentityAndAdjugate) {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<i64> d(-1000, 1000);
    for (const auto& F : sample_forms()) {
        const auto& M = F.gram();
        auto A = F.adjugate();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                i64 s = 0;
                for (int k = 0; k < 3; ++k) s += M[i][k] * A[k][j];
                EXPECT_EQ(s, i == j ? F.determinant() : 0);
            }
        QForm Fs = F.dual();
        for (int t = 0; t < 100; ++t) {
            Vec3 x{d(rng), d(rng), d(rng)};
            Vec3 Mx{};
            for (int i = 0; i < 3; ++i) Mx[i] = M[i][0] * x[0] + M[i][1] * x[1] + M[i][2] * x[2];
            EXPECT_EQ(Fs.evaluate(Mx), static_cast<i128>(F.determinant()) * F.evaluate(x));
        }
        // dual of dual is Delta F
        auto dd = Fs.dual().coefficients();
        for (int k = 0; k < 6; ++k) EXPECT_EQ(dd[k], F.determinant() * F.coefficients()[k]);
    }
}

TEST(Psi0, Examples) {
    auto a = psi0(QForm::diag(1, 1, -1), 1);
    EXPECT_EQ(a.D, 1);
    EXPECT_TRUE(a.square);
    for (i64 n = 1; n < 50; n += 2) EXPECT_EQ(a(n), 1);
    auto b = psi0(QForm::diag(1, 1, 1), 1);
    EXPECT_EQ(b.D, -1);
    EXPECT_FALSE(b.square);
    EXPECT_EQ(b(3), -1);
    EXPECT_EQ(b(5), 1);
    EXPECT_EQ(b(2), 0);
    EXPECT_TRUE(psi0(QForm::diag(1, 1, 1), -1).square);
}

TEST(Psi0, CompletelyMultiplicativeOnCoprimeIntegers) {
    for (const auto& F : sample_forms())
        for (i64 m0 : {1, -1, 2, 3, 7}) {
            auto psi = psi0(F, m0);
            i64 g = psi.guard < 0 ? -psi.guard : psi.guard;
            for (i64 n = 1; n <= 300; ++n) {
                if (std::gcd(n, g) != 1) { EXPECT_EQ(psi(n), 0); continue; }
                for (i64 m = 1; m <= 300; m += 1) {
                    if (std::gcd(m, g) != 1) continue;
                    ASSERT_EQ(psi(n * m), psi(n) * psi(m));
                }
            }
        }
}

TEST(ClassifyC, Examples) {
    QForm F = QForm::diag(1, 1, -1);
    EXPECT_EQ(classify_c(F, 1, {1, 0, 1}), CClass::ExceptionalTypeII);
    EXPECT_EQ(classify_c(F, 1, {0, 0, 1}), CClass::Ordinary);
    EXPECT_EQ(classify_c(F, 1, {0, 0, 2}), CClass::Ordinary);
    EXPECT_EQ(classify_c(F, 1, {1, 0, 2}), CClass::Ordinary);
    EXPECT_EQ(classify_c(F, 1, {2, 0, 1}), CClass::Ordinary);
    EXPECT_EQ(classify_c(F, 1, {3, 0, 2}), CClass::Ordinary);
    EXPECT_THROW(classify_c(F, 1, {0, 0, 0}), std::invalid_argument);
    // sphere with m0 = -1: m0 Delta F*(c) = -|c|^2 never a nonzero square
    EXPECT_EQ(classify_c(QForm::diag(1, 1, 1), -1, {1, 0, 0}), CClass::Ordinary);
    EXPECT_EQ(classify_c(QForm::diag(1, 1, 1), 1, {2, 1, 2}), CClass::ExceptionalTypeI);
}

TEST(ClassifyC, ExhaustiveAgainstDirectTestAndInvariance) {
    for (const auto& F : sample_forms())
        for (i64 m0 : {1, -1, 2}) {
            QForm Fs = F.dual();
            for (i64 a = -4; a <= 4; ++a)
                for (i64 b = -4; b <= 4; ++b)
                    for (i64 c = -4; c <= 4; ++c) {
                        if (!a && !b && !c) continue;
                        Vec3 v{a, b, c};
                        i128 fs = Fs.evaluate(v);
                        i128 t = static_cast<i128>(m0) * F.determinant() * fs;
                        CClass want = fs == 0 ? CClass::ExceptionalTypeII
                                              : brute_square(t) ? CClass::ExceptionalTypeI : CClass::Ordinary;
                        CClass got = classify_c(F, m0, v);
                        ASSERT_EQ(got, want);
                        EXPECT_EQ(classify_c(F, m0, {-a, -b, -c}), got);
                        for (i64 s : {2, -3, 5}) EXPECT_EQ(classify_c(F, m0, {s * a, s * b, s * c}), got);
                    }
        }
}

TEST(ProblemInstance, DerivedQuantities) {
    WeightSpec w{{1.41421356, 0, 1}, 1.0, WeightProfile::Ball};
    ProblemInstance I(QForm::diag(1, 1, -1), 1, 5, 1, {2, {1, 0, 0}}, w);
    EXPECT_EQ(I.N(), 25);
    EXPECT_EQ(I.sqrtN(), 5);
    EXPECT_DOUBLE_EQ(I.Q(), 2.5);
    EXPECT_EQ(I.Omega(), 4);
    EXPECT_EQ(I.lambdaN(), (Vec3{1, 0, 0}));
    EXPECT_EQ(mod128(I.form().evaluate(I.lambdaN()) - I.m0N(), I.L()), 0);
    EXPECT_EQ(I.with_h(3).N(), 15625);
}

TEST(ProblemInstance, Validation) {
    WeightSpec w;
    QForm F = QForm::diag(1, 1, -1);
    EXPECT_THROW(ProblemInstance(F, 1, 4, 1, {1, {0, 0, 0}}, w), std::invalid_argument);     // p0 not prime
    EXPECT_THROW(ProblemInstance(F, 1, 5, 1, {5, {1, 0, 0}}, w), std::invalid_argument);     // p0 | L
    EXPECT_THROW(ProblemInstance(F, 1, 5, 1, {3, {0, 0, 0}}, w), std::invalid_argument);     // F(lambda) != m0
    EXPECT_THROW(ProblemInstance(F, 0, 5, 1, {1, {0, 0, 0}}, w), std::invalid_argument);
    EXPECT_THROW(ProblemInstance(F, 1, 5, 1, {2, {2, 0, 0}}, w), std::invalid_argument);     // lambda out of range
    EXPECT_NO_THROW(ProblemInstance(F, 1, 3, 2, {4, {1, 2, 0}}, w));
}

TEST(WeightSpec, Evaluation) {
    WeightSpec w{{1, 2, 3}, 2.0, WeightProfile::Ball};
    EXPECT_DOUBLE_EQ(w({1, 2, 3}), 1.0);
    EXPECT_EQ(w({3, 2, 3}), 0.0);
    EXPECT_EQ(w({1, 5, 3}), 0.0);
    // half radius: e * exp(-1/(1 - 1/4)) = exp(1 - 4/3)
    EXPECT_NEAR(w({2, 2, 3}), std::exp(-1.0 / 3.0), 1e-15);
    WeightSpec b{{0, 0, 0}, 1.0, WeightProfile::Box};
    EXPECT_NEAR(b({0.5, 0.5, 0}), std::exp(-2.0 / 3.0), 1e-15);
    EXPECT_EQ(b({0.99, 0.99, 0.99}) > 0, true);
    EXPECT_EQ(b({1.0, 0, 0}), 0.0);
}
