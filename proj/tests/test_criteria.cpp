#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bsdens/criteria/checks.hpp"
#include "bsdens/criteria/report.hpp"
#include "bsdens/density/bouleau_hirsch.hpp"
#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/model/presets.hpp"

using namespace bsdens;
using namespace bsdens::criteria;
using V = CriterionVerdict;

namespace {

CriteriaOptions opts(const model::ModelSpec& s) { return CriteriaOptions::around(s); }

/// Box [lo, hi] in x taken as the domain.
CriteriaOptions domain(const model::ModelSpec& s, double lo, double hi) {
    auto o = CriteriaOptions::around(s);
    o.box.x_min = lo;
    o.box.x_max = hi;
    o.box_is_domain = true;
    return o;
}

model::ModelSpec brownian(const std::string& g, const std::string& h, model::Regime regime = model::Regime::lipschitz,
                          const std::string& sigma = "1", const std::string& b = "0") {
    model::ModelExpressions e;
    e.g = g;
    e.h = h;
    e.sigma = sigma;
    e.b = b;
    e.f = "w";
    e.regime = regime;
    auto s = model::from_expressions(e);
    if (b == "0" && sigma == "1") {
        s.constants.k_b = 0.0;
        s.constants.k_sigma = 0.0;
    }
    return s;
}

double counter_first_plus(double t) { return -t * t + 3.0 * t - 1.0; }
double counter_second(double t) { return -0.5 * t * t + 2.0 * t - 0.5; }

}  // namespace

TEST(IntervalSet, ParsesUnionsAndInfiniteEnds) {
    const auto a = IntervalSet::parse("[-inf, -1] u [0.5, 2]");
    ASSERT_EQ(a.parts.size(), 2u);
    EXPECT_TRUE(a.contains(-7.0));
    EXPECT_TRUE(a.contains(2.0));
    EXPECT_FALSE(a.contains(0.0));
    EXPECT_TRUE(IntervalSet::parse("R").is_whole());
    EXPECT_THROW(IntervalSet::parse("[1, 0]"), ConfigurationError);
    EXPECT_THROW(IntervalSet::parse("[0, x]"), ConfigurationError);
    EXPECT_THROW(IntervalSet::parse("(0, 1)"), ConfigurationError);
}

TEST(FirstOrder, CounterMarginsAtEarlyAndMidTimes) {
    const auto s = model::ex_counter();
    const auto r = first_order_check(s, 0.2, IntervalSet::whole(), opts(s));
    EXPECT_NEAR(r.plus.margin, counter_first_plus(0.2), 1e-12);
    EXPECT_NEAR(r.plus.margin, -0.44, 1e-12);
    EXPECT_EQ(r.plus.verdict, V::fails);
    EXPECT_NEAR(r.minus.margin, 0.2, 1e-12);
    EXPECT_EQ(r.minus.verdict, V::fails);
    EXPECT_EQ(r.verdict(), V::fails);

    const auto m = first_order_check(s, 0.5, IntervalSet::whole(), opts(s));
    EXPECT_NEAR(m.plus.margin, 0.25, 1e-12);
    EXPECT_EQ(m.plus.verdict, V::holds);
    EXPECT_EQ(m.verdict(), V::holds);
    ASSERT_TRUE(m.plus.hit.has_value());
    EXPECT_GT(m.plus.hit->lower, 0.99);
}

TEST(FirstOrder, CounterVerdictFlipsAtTheRoot) {
    const auto s = model::ex_counter();
    const double t0 = (3.0 - std::sqrt(5.0)) / 2.0;
    const auto before = first_order_check(s, t0 - 1e-3, IntervalSet::whole(), opts(s)).plus;
    const auto after = first_order_check(s, t0 + 1e-3, IntervalSet::whole(), opts(s)).plus;
    EXPECT_EQ(before.verdict, V::fails);
    EXPECT_EQ(after.verdict, V::holds);
    EXPECT_NEAR(before.margin, counter_first_plus(t0 - 1e-3), 1e-12);
    EXPECT_NEAR(after.margin, counter_first_plus(t0 + 1e-3), 1e-12);
}

TEST(FirstOrder, LinearTerminalWithoutDriverHolds) {
    const auto s = brownian("2*x + 1", "0");
    const auto r = first_order_check(s, 0.3, IntervalSet::whole(), opts(s));
    EXPECT_EQ(r.plus.verdict, V::holds);
    EXPECT_NEAR(r.plus.margin, 2.0, 1e-12);
    EXPECT_EQ(r.plus.resolution, 1e-8);
    EXPECT_EQ(r.minus.verdict, V::fails);
}

TEST(FirstOrder, QuadraticRegimeIsInapplicable) {
    const auto s = model::ex_quad_exp();
    const auto r = first_order_check(s, 0.5, IntervalSet::whole(), opts(s));
    EXPECT_EQ(r.plus.verdict, V::inapplicable);
    EXPECT_FALSE(r.plus.note.empty());
}

TEST(FirstOrder, MarginOnAIsMonotoneInA) {
    const auto s = brownian("x + 0.3*sin(x)", "0.2*x");
    const char* sets[] = {"[-6, 6]", "[-3, 3]", "[-1, 1]", "[0, 0.5]"};
    double last = -1e300;
    for (const char* a : sets) {
        const auto r = first_order_check(s, 0.5, IntervalSet::parse(a), opts(s)).plus;
        const double g = r.scalars.at("g_lo_A");
        EXPECT_GE(g, last - 1e-15) << a;
        last = g;
    }
}

TEST(SecondOrder, CounterMarginVanishesAtTwoMinusRootThree) {
    const auto s = model::ex_counter();
    const double t0 = 2.0 - std::sqrt(3.0);
    const auto r = second_order_check(s, t0, IntervalSet::whole(), opts(s));
    EXPECT_NEAR(r.plus.margin, 0.0, 1e-9);
    EXPECT_EQ(r.plus.verdict, V::boundary);
    EXPECT_EQ(r.verdict(), V::boundary);
    const auto late = second_order_check(s, 0.9, IntervalSet::whole(), opts(s));
    EXPECT_NEAR(late.plus.margin, counter_second(0.9), 1e-12);
    EXPECT_NEAR(late.plus.margin, 0.895, 1e-12);
    EXPECT_EQ(late.plus.verdict, V::holds);
    for (double t : {0.1, 0.3, 0.6}) {
        const auto x = second_order_check(s, t, IntervalSet::whole(), opts(s)).plus;
        EXPECT_NEAR(x.margin, counter_second(t), 1e-12) << t;
    }
}

TEST(SecondOrder, DriverDependingOnZIsAPreconditionError) {
    const auto s = brownian("x", "0.5*z");
    EXPECT_THROW(second_order_check(s, 0.5, IntervalSet::whole(), opts(s)), PreconditionError);
}

TEST(Quadratic, TanhTerminalSatisfiesPlusSide) {
    const auto s = model::ex_quad_exp();
    const auto r = quadratic_check(s, 0.5, IntervalSet::whole(), opts(s));
    EXPECT_EQ(r.plus.verdict, V::holds);
    EXPECT_EQ(r.minus.verdict, V::fails);
    EXPECT_EQ(r.verdict(), V::holds);
}

TEST(Quadratic, DecreasingTerminalSatisfiesMinusSide) {
    const auto s = brownian("-tanh(x)", "0.5*z^2", model::Regime::quadratic);
    const auto r = quadratic_check(s, 0.5, IntervalSet::whole(), opts(s));
    EXPECT_EQ(r.minus.verdict, V::holds);
    EXPECT_EQ(r.plus.verdict, V::fails);
}

TEST(Quadratic, SignChangeFailsBothSides) {
    const auto s = brownian("0.5*x^2", "0.5*z^2", model::Regime::quadratic);
    const auto r = quadratic_check(s, 0.5, IntervalSet::parse("[-1, 1]"), opts(s));
    EXPECT_EQ(r.plus.verdict, V::fails);
    EXPECT_EQ(r.minus.verdict, V::fails);
    EXPECT_EQ(r.verdict(), V::fails);
}

TEST(Quadratic, LipschitzRegimeIsInapplicable) {
    const auto s = model::ex_counter();
    EXPECT_EQ(quadratic_check(s, 0.5, IntervalSet::whole(), opts(s)).verdict(), V::inapplicable);
}

TEST(ZLipschitz, CubicIsUnboundedOnTheWholeLine) {
    const auto s = model::ex_cubic();
    const auto r = z_lipschitz_check(s, 0.5, IntervalSet::whole(), std::nullopt, opts(s));
    EXPECT_EQ(r.verdict, V::inconclusive_unbounded);
}

TEST(ZLipschitz, CubicOnPositiveBoxHolds) {
    const auto s = model::ex_cubic();
    VariationalBounds vb;
    vb.a_lo = vb.a_hi = 1.0;
    const auto r = z_lipschitz_check(s, 0.5, IntervalSet::whole(), vb, domain(s, 0.5, 2.0));
    EXPECT_NEAR(r.margin, 3.0, 1e-12);
    EXPECT_EQ(r.verdict, V::holds);
}

TEST(ZLipschitz, EstimatedBoundsForBrownianForwardAreExact) {
    const auto b = estimate_variational_bounds(model::ex_cubic(), 200, 16, 3);
    EXPECT_NEAR(b.a_lo, 1.0, 1e-12);
    EXPECT_NEAR(b.a_hi, 1.0, 1e-12);
    EXPECT_NEAR(b.b_lo, 0.0, 1e-12);
    EXPECT_NEAR(b.b_hi, 0.0, 1e-12);
    EXPECT_FALSE(b.unbounded);
}

TEST(ZLipschitz, ConvexDriverCompensatesConcaveTerminal) {
    const auto s = brownian("1/(1+x^2)", "2*(x+7)^2");
    const double t = 0.25;
    const auto r = z_lipschitz_check(s, t, IntervalSet::whole(), std::nullopt, opts(s));
    // g'' = (6x^2 - 2)/(1 + x^2)^3 >= -2 with the minimum at 0, h_xx = 4, D_rX = 1, D2X = 0
    EXPECT_NEAR(r.margin, -2.0 + 4.0 * (1.0 - t), 1e-9);
    EXPECT_EQ(r.verdict, V::holds);
}

TEST(ZLipschitz, DeclaredUnboundedBoundsAreInapplicable) {
    const auto s = model::ex_cubic();
    VariationalBounds vb;
    vb.a_lo = vb.a_hi = 1.0;
    vb.unbounded = true;
    const auto r = z_lipschitz_check(s, 0.5, IntervalSet::whole(), vb, domain(s, 0.5, 2.0));
    EXPECT_EQ(r.verdict, V::inapplicable);
}

TEST(ZQuadratic, ConvexIncreasingTerminalHolds) {
    const auto s = model::ex_quad_exp(model::terminal_softplus());
    const auto r = z_quadratic_check(s, 0.5, IntervalSet::parse("[-1, 1]"), std::nullopt, opts(s));
    EXPECT_EQ(r.verdict, V::holds);
    EXPECT_GT(r.margin, 0.19);
}

TEST(ZQuadratic, TanhOnPositiveHalfLineFails) {
    const auto s = model::ex_quad_exp();
    const auto r = z_quadratic_check(s, 0.5, IntervalSet::parse("[0, inf]"), std::nullopt, opts(s));
    EXPECT_EQ(r.verdict, V::fails);
    EXPECT_LT(r.margin, 0.0);
}

TEST(ZQuadratic, ZeroTerminalIsBoundary) {
    const auto s = model::ex_quad_exp(model::terminal_zero());
    const auto r = z_quadratic_check(s, 0.5, IntervalSet::whole(), std::nullopt, opts(s));
    EXPECT_NEAR(r.margin, 0.0, 1e-12);
    EXPECT_EQ(r.verdict, V::boundary);
}

TEST(ZQuadratic, AlternativeVariantUsesSignsOfTerminalDerivatives) {
    const auto s = model::ex_quad_exp(model::terminal_softplus());
    const auto plus = z_quadratic_check(s, 0.5, IntervalSet::parse("[-1, 1]"), std::nullopt, opts(s), ZVariant::x_plus);
    EXPECT_EQ(plus.verdict, V::holds);
    const auto minus = z_quadratic_check(s, 0.5, IntervalSet::parse("[-1, 1]"), std::nullopt, opts(s), ZVariant::x_minus);
    EXPECT_EQ(minus.verdict, V::fails);
}

TEST(ZMarkovian, CubicOnRestrictedBox) {
    const auto s = model::ex_cubic();
    const auto r = z_markovian_check(s, 0.5, IntervalSet::whole(), domain(s, 1.0, 2.0));
    EXPECT_NEAR(r.plus.margin, 6.0, 1e-12);
    EXPECT_EQ(r.plus.verdict, V::holds);
}

TEST(ZMarkovian, QuadraticTerminalGivesItsCurvature) {
    for (double kappa : {0.5, 2.0}) {
        auto s = brownian(std::to_string(kappa) + "*x^2/2", "0");
        const auto r = z_markovian_check(s, 0.5, IntervalSet::whole(), opts(s));
        EXPECT_NEAR(r.plus.margin, kappa, 1e-9);
        EXPECT_EQ(r.plus.verdict, V::holds);
    }
}

TEST(ZMarkovian, CounterIsBoundary) {
    const auto s = model::ex_counter();
    const auto r = z_markovian_check(s, 0.5, IntervalSet::whole(), opts(s));
    EXPECT_EQ(r.plus.verdict, V::boundary);
    EXPECT_EQ(r.minus.verdict, V::boundary);
    EXPECT_EQ(r.verdict(), V::boundary);
}

TEST(ZMarkovian, MissingMapIsAPreconditionError) {
    auto s = model::ex_counter();
    s.markovian_f = nullptr;
    EXPECT_THROW(z_markovian_check(s, 0.5, IntervalSet::whole(), opts(s)), PreconditionError);
}

TEST(XSign, UnitDiffusionSatisfiesPlusSide) {
    const auto s = model::ex_counter();
    const auto r = x_sign_check(s, opts(s));
    EXPECT_EQ(r.plus.verdict, V::holds);
    EXPECT_EQ(r.minus.verdict, V::fails);
}

TEST(XSign, ShiftedTanhDiffusionFailsNearZero) {
    const auto s = brownian("x", "0", model::Regime::lipschitz, "1 + tanh(x) + 2");
    const auto r = x_sign_check(s, opts(s));
    EXPECT_EQ(r.plus.verdict, V::fails);
    bool near_zero = false;
    for (const auto& w : r.plus.witnesses)
        if (w.label == "sigma'' <= 0") near_zero = std::abs(w.x) <= 0.31;
    EXPECT_TRUE(near_zero);
    EXPECT_EQ(r.minus.verdict, V::fails);
}

TEST(XSign, NegativeDiffusionSatisfiesMinusSide) {
    const auto s = brownian("x", "0", model::Regime::lipschitz, "-1");
    const auto r = x_sign_check(s, opts(s));
    EXPECT_EQ(r.minus.verdict, V::holds);
    EXPECT_EQ(r.plus.verdict, V::fails);
}

TEST(HitProbability, FarSetIsNotCertified) {
    const auto s = model::ex_counter();
    const auto r = quadratic_check(model::ex_quad_exp(), 0.5, IntervalSet::parse("[5, 6]"), opts(s));
    EXPECT_EQ(r.plus.verdict, V::inapplicable);
    ASSERT_TRUE(r.plus.hit.has_value());
    EXPECT_EQ(r.plus.hit->lower, 0.0);
    EXPECT_EQ(r.plus.hit->states.size(), 3u);
    const auto h = hit_probability(s, 0.5, IntervalSet::parse("[0, inf]"), 2000, 64, 2);
    // worst state is the 5% quantile of W_0.5: P(W_1 >= 0 | W_0.5 = -1.645 sqrt(0.5)) = Phi(-1.645) = 0.05
    EXPECT_NEAR(h.fraction, 0.05, 0.015);
    EXPECT_GT(h.lower, 0.0);
    EXPECT_LE(h.lower, h.upper);
}

TEST(Consistency, HoldingFirstOrderCriterionIsNotDegenerate) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> amp(-0.6, 0.6), slope(-0.5, 0.5);
    std::vector<model::ModelSpec> models = {model::ex_counter(), model::ex_cubic()};
    for (int i = 0; i < 3; ++i)
        models.push_back(brownian("x + " + io::fmt(amp(gen)) + "*sin(x)", io::fmt(slope(gen)) + "*x"));
    int held = 0;
    for (const auto& s : models) {
        const double t = 0.5;
        auto o = opts(s);
        o.box_is_domain = true;
        const auto r = first_order_check(s, t, IntervalSet::whole(), o);
        if (r.verdict() != V::holds) continue;
        ++held;
        const auto e = mc::simulate_forward(s, 1000, 32, 21);
        const auto m = mc::solve_malliavin_bsde(s, e, mc::solve_bsde_regression(s, e), 0.0);
        const auto bh = density::bouleau_hirsch_diagnostic(m, t);
        EXPECT_NE(bh.verdict, density::PositivityVerdict::degenerate) << s.name;
    }
    EXPECT_GE(held, 3);
}

TEST(Report, JsonCarriesVerdictMarginAndGrids) {
    const auto s = model::ex_counter();
    const auto r = first_order_check(s, 0.5, IntervalSet::whole(), opts(s));
    const auto j = to_json(r);
    EXPECT_EQ(j["verdict"], "holds");
    EXPECT_EQ(j["plus"]["verdict"], "holds");
    EXPECT_NEAR(j["plus"]["margin"].get<double>(), 0.25, 1e-12);
    EXPECT_TRUE(j["plus"]["scalars"]["h_lo"].contains("grid"));
    std::ostringstream os;
    write_table(os, {r.plus, r.minus});
    EXPECT_NE(os.str().find("H+"), std::string::npos);
}
