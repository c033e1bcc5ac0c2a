#include <gtest/gtest.h>

#include "qdelta/pipeline.hpp"
#include "test_instances.hpp"

using namespace qdelta;
using namespace qdelta::testing;

namespace {

ProblemInstance unit_sphere_N1(WeightSpec w, CongruenceDatum cong = {1, {0, 0, 0}}) {
    return ProblemInstance(QForm::diag(1, 1, 1), 1, 5, 0, cong, w);
}

ProblemInstance sphere_cap(int h = 1) {
    return ProblemInstance(QForm::diag(1, 1, 1), 1, 5, h, {1, {0, 0, 0}}, {{0.0, 0.0, 1.0}, 0.5, WeightProfile::Ball});
}

}  // namespace

TEST(Enumerate, SixPointsOnTheUnitSphere) {
    auto e = enumerate_gamma(unit_sphere_N1({{0.0, 0.0, 0.0}, 1.5, WeightProfile::Ball}));
    EXPECT_EQ(e.N, 1);
    EXPECT_EQ(e.raw, 6);
    EXPECT_NEAR(e.gamma, 6.0 * bump1(1.0 / 1.5), 1e-14);
    EXPECT_EQ(e.strategy, "sliced");
}

TEST(Enumerate, WeightAwayFromTheQuadric) {
    auto e = enumerate_gamma(unit_sphere_N1({{4.0, 4.0, 4.0}, 1.0, WeightProfile::Ball}));
    EXPECT_EQ(e.raw, 0);
    EXPECT_EQ(e.gamma, 0.0);
}

TEST(Enumerate, CongruenceFilter) {
    auto e = enumerate_gamma(unit_sphere_N1({{0.0, 0.0, 0.0}, 1.5, WeightProfile::Ball}, {2, {1, 0, 0}}));
    EXPECT_EQ(e.raw, 2);  // (1,0,0) and (-1,0,0)
    EXPECT_NEAR(e.gamma, 2.0 * bump1(1.0 / 1.5), 1e-14);
}

TEST(Enumerate, StrategiesAgreeExactly) {
    std::vector<ProblemInstance> cases{hyperboloid(1), hyperboloid(2, 3), hyperboloid_L2(1), skew(0), skew(1),
                                       obstructed(1), obstructed(2), sphere_cap(1)};
    for (const auto& I : cases) {
        if (I.N() > 100) continue;
        auto a = enumerate_gamma(I, EnumStrategy::Sliced);
        auto b = enumerate_gamma(I, EnumStrategy::TripleLoop);
        EXPECT_EQ(a.raw, b.raw) << I.form().to_string() << " N=" << I.N();
        EXPECT_EQ(a.gamma, b.gamma) << I.form().to_string() << " N=" << I.N();
    }
}

TEST(Enumerate, ThreadCountDoesNotChangeTheResult) {
    auto I = hyperboloid(3, 3);
    auto a = enumerate_gamma(I, EnumStrategy::Sliced, 1);
    auto b = enumerate_gamma(I, EnumStrategy::Sliced, 4);
    EXPECT_EQ(a.gamma, b.gamma);
    EXPECT_EQ(a.raw, b.raw);
}

TEST(Enumerate, WeightBoundsTheCount) {
    for (int h = 1; h <= 3; ++h) {
        auto e = enumerate_gamma(hyperboloid(h, 3));
        EXPECT_GE(e.raw, 0);
        EXPECT_LE(e.gamma, e.raw * 1.0);
    }
}

TEST(Enumerate, ObstructedInstanceHasNoSolutions) {
    for (int h = 1; h <= 4; ++h) EXPECT_EQ(enumerate_gamma(obstructed(h)).raw, 0) << h;
}

TEST(Enumerate, BoxBoundIsEnforced) {
    auto I = ProblemInstance(QForm::diag(1, 1, 1), 1, 5, 9, {1, {0, 0, 0}}, {{0.0, 0.0, 0.0}, 1.5, WeightProfile::Ball});
    EXPECT_THROW(enumerate_gamma(I), ResourceBoundError);
}

TEST(Poisson, ClassBookkeepingIsExact) {
    PoissonOptions o;
    o.c_max = 3;
    auto E = poisson_rhs(hyperboloid_L2(), o);
    EXPECT_EQ(E.total, E.zero_part + E.exceptional_part + E.ordinary_part);
    std::vector<cplx> terms, per_q;
    for (const auto& t : E.terms) terms.push_back(t.value);
    for (const auto& q : E.per_q) per_q.push_back(q.total);
    EXPECT_NEAR(std::abs(pairwise_sum(terms) - E.total), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(pairwise_sum(per_q) - E.total), 0.0, 1e-12);
    for (const auto& t : E.terms) EXPECT_EQ(t.cls, class_of(QForm::diag(1, 1, -1), 1, t.c));
    EXPECT_LE(std::abs(E.total.imag()), E.error_budget());
}

TEST(Poisson, ObstructedInstanceSumsToZero) {
    auto I = obstructed(2);
    auto E = poisson_rhs(I);
    EXPECT_NEAR(std::abs(E.total), 0.0, 1e-12);
    EXPECT_EQ(enumerate_gamma(I).gamma, 0.0);
}

TEST(Poisson, DirectPerQSumsRebuildTheCount) {
    for (const auto& I : {hyperboloid(), hyperboloid_L2(), skew()}) {
        auto T = delta_targets(I, default_q_max(I));
        EXPECT_NEAR(pairwise_sum(T), enumerate_gamma(I).gamma, 1e-10) << I.form().to_string();
    }
}

TEST(Poisson, PartialSumsApproachTheDirectPerQSums) {
    auto I = hyperboloid();
    auto T = delta_targets(I, 6);
    double err3 = 0.0, err6 = 0.0;
    for (i64 q = 2; q <= 6; ++q) {
        PoissonOptions o;
        o.q_min = o.q_max = q;
        o.c_max = 3;
        err3 += std::abs(poisson_rhs(I, o).total - T[q]);
        o.c_max = 6;
        err6 += std::abs(poisson_rhs(I, o).total - T[q]);
    }
    EXPECT_LT(err6, err3);
}

TEST(Poisson, DoublingCMaxStaysWithinTheTailEstimate) {
    auto I = hyperboloid_L2();
    PoissonOptions o;
    o.c_max = 3;
    auto a = poisson_rhs(I, o);
    o.c_max = 6;
    auto b = poisson_rhs(I, o);
    EXPECT_LT(std::abs(a.total - b.total), a.tail_estimate);
    EXPECT_TRUE(a.budget_violated);
    EXPECT_GT(a.c_required, a.c_max);
}

TEST(Poisson, RejectsTruncationBelowTheKernelSupport) {
    PoissonOptions o;
    o.q_max = 2;
    EXPECT_THROW(poisson_rhs(hyperboloid(), o), std::invalid_argument);
}

TEST(Poisson, RejectsDegenerateNormalization) {
    EXPECT_THROW(poisson_rhs(obstructed(1)), std::invalid_argument);
}

TEST(Predict, ObstructedPredictionIsZero) {
    PredictOptions o;
    o.h_max = 3;
    auto R = predict_main(obstructed(), o);
    EXPECT_TRUE(R.obstructed);
    for (const auto& p : R.rows) {
        EXPECT_EQ(p.main, 0.0);
        EXPECT_EQ(p.main_alt, 0.0);
    }
}

TEST(Predict, SquareCaseScaling) {
    PredictOptions o;
    o.h_max = 4;
    auto R = predict_main(hyperboloid(1, 3), o);
    ASSERT_TRUE(R.square);
    for (std::size_t i = 0; i + 1 < R.rows.size(); ++i) {
        double h = R.rows[i].h;
        EXPECT_NEAR(R.rows[i + 1].main / R.rows[i].main, 3.0 * (h + 1) / h, 1e-12);
    }
}

TEST(Predict, ConstantIsTheProductOfIntegralAndSeries) {
    auto I = hyperboloid(1, 5);
    PredictOptions o;
    o.h_max = 1;
    auto R = predict_main(I, o);
    double expect = singular_integral(I).value * singular_series(I).value;
    EXPECT_DOUBLE_EQ(R.constant, expect);
    EXPECT_DOUBLE_EQ(R.rows[0].main, expect * 5.0 * std::log(5.0));
}

TEST(Predict, NonSquareCaseCarriesBothCandidates) {
    auto I = sphere_cap();
    PredictOptions o;
    o.h_max = 4;
    auto R = predict_main(I, o);
    ASSERT_FALSE(R.square);
    EXPECT_NEAR(R.L1.value, std::numbers::pi / 4, 1e-8);
    EXPECT_DOUBLE_EQ(R.constant_alt, R.constant * R.L1.value);
    attach_enumeration(R, I);
    EXPECT_EQ(tracked_candidate(R), "with_L1");
}

TEST(Secondary, ConstantOffset) {
    std::vector<int> hs{1, 2, 3, 4};
    std::vector<double> g, m, s;
    for (int h : hs) {
        double sq = std::pow(5.0, h);
        s.push_back(sq);
        m.push_back(0.3 * sq * std::log(sq));
        g.push_back(m.back() + 0.7 * sq);
    }
    auto f = extract_secondary(hs, g, m, s);
    for (double r : f.residuals) EXPECT_NEAR(r, 0.7, 1e-12);
    EXPECT_NEAR(f.trend, 0.0, 1e-12);
    EXPECT_NEAR(f.max_abs, 0.7, 1e-12);
}

TEST(Secondary, NoiseEnvelope) {
    std::vector<int> hs{1, 2, 3, 4, 5};
    std::vector<double> g, m, s;
    const double A = 2.0;
    for (int h : hs) {
        double sq = std::pow(3.0, h), N = sq * sq;
        s.push_back(sq);
        m.push_back(0.5 * sq);
        double noise = (h % 2 ? 1.0 : -1.0) * std::pow(std::log(N), -A);
        g.push_back(m.back() + 0.2 * sq + noise * sq);
    }
    auto f = extract_secondary(hs, g, m, s);
    for (std::size_t i = 0; i < hs.size(); ++i) {
        double env = std::pow(std::log(std::pow(3.0, 2 * hs[i])), -A);
        EXPECT_LE(std::abs(f.residuals[i] - 0.2), env * (1 + 1e-12));
    }
}

TEST(Secondary, NeedsThreeValues) {
    EXPECT_THROW(extract_secondary({1, 2}, {1.0, 2.0}, {1.0, 2.0}, {1.0, 1.0}), std::invalid_argument);
}

TEST(Secondary, RegressionBaseline) {
    // hyperboloid x^2 + y^2 - z^2 = 9^h, h = 1..5, recorded on the first run
    const std::vector<double> baseline{0x1.b604cd061d815p-6, -0x1.6d20117972a2bp-5, 0x1.6c91e88ff7a85p-6,
                                       0x1.6d989d0a68652p-9, 0x1.d691d62561e06p-7};
    auto I = hyperboloid(1, 3);
    PredictOptions o;
    o.h_max = 5;
    auto R = predict_main(I, o);
    attach_enumeration(R, I);
    auto f = extract_secondary(R);
    ASSERT_EQ(f.residuals.size(), baseline.size());
    for (std::size_t i = 0; i < baseline.size(); ++i) EXPECT_EQ(f.residuals[i], baseline[i]) << "h=" << i + 1;
    EXPECT_LT(f.max_abs, 0.1);
}
