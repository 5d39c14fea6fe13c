#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "bsdens/model/presets.hpp"
#include "bsdens/pde/solver.hpp"
#include "bsdens/tails/envelope.hpp"
#include "bsdens/tails/growth.hpp"
#include "bsdens/tails/pipeline.hpp"
#include "bsdens/tails/sandwich.hpp"
#include "oracles.hpp"

using namespace bsdens;
using namespace bsdens::tails;

namespace {

LogBranch oscillating() {
    return [](double L, int) { return oracle::oscillating_log(L); };
}

/// Slice of v(x) = x on [-lim, lim] with an odd number of nodes, so 0 is a node.
MonotoneSlice identity_slice(double lim = 6.0, int n = 401) {
    std::vector<double> x(n), v(n), dv(n, 1.0);
    for (int j = 0; j < n; ++j) x[j] = v[j] = -lim + 2.0 * lim * j / (n - 1);
    return monotone_restriction(x, v, dv);
}

model::ModelSpec brownian(const std::string& g, const std::string& h = "0",
                          model::Regime regime = model::Regime::lipschitz) {
    model::ModelExpressions e;
    e.g = g;
    e.h = h;
    e.f = "w";
    e.regime = regime;
    return model::from_expressions(e);
}

struct Solved {
    pde::GridSolution u, up, upp;
};

Solved solve_all(const model::ModelSpec& s, double lim, int n_x, int n_t) {
    const auto grid = pde::GridSpec::uniform(s.T, n_t, -lim, lim, n_x);
    auto u = pde::solve_u(s, grid);
    auto up = pde::solve_u_prime(s, grid, u);
    auto upp = pde::solve_u_doubleprime(s, grid, u, up);
    return {std::move(u), std::move(up), std::move(upp)};
}

}  // namespace

TEST(GrowthRate, PurePower) {
    const auto r = growth_rate([](double x) { return x * x * x; }, 1e2, 1e4);
    EXPECT_NEAR(r.alpha_bar, 3.0, 0.05);
    EXPECT_NEAR(r.alpha_under, 3.0, 0.05);
    EXPECT_NEAR(r.regression_slope, 3.0, 1e-6);
    EXPECT_GT(r.regression_r2, 0.999);
}

TEST(GrowthRate, OscillatingSquareUsesEnvelope) {
    const auto r = growth_rate([](double x) { return x * x * std::sin(x); }, 1e2, 1e4, 20000);
    EXPECT_NEAR(r.alpha_bar, 2.0, 0.1);
    EXPECT_NEAR(r.alpha_under, 2.0, 0.1);
}

TEST(GrowthRate, SlowlyVaryingFactorIsAbsorbed) {
    const auto r = growth_rate([](double x) { return x * x * std::log1p(std::abs(x)); }, 1e4, 1e12);
    EXPECT_NEAR(r.alpha_bar, 2.0, 0.1);
    EXPECT_NEAR(r.alpha_under, 2.0, 0.1);
}

TEST(GrowthRate, BranchesCombineByMaxAndMin) {
    const auto r = growth_rate([](double x) { return x > 0 ? x * x : x * x * x * x; }, 1e2, 1e4);
    EXPECT_NEAR(r.branch_bar[0], 2.0, 0.05);
    EXPECT_NEAR(r.branch_bar[1], 4.0, 0.05);
    EXPECT_NEAR(r.alpha_bar, 4.0, 0.05);
    EXPECT_NEAR(r.alpha_under, 2.0, 0.05);
}

TEST(GrowthRate, OscillatingFixtureRatesDiffer) {
    const auto r = growth_rate_log(oscillating(), 1.0, 1e4, 160000);
    EXPECT_NEAR(r.alpha_bar, 2.0, 0.05);
    EXPECT_NEAR(r.alpha_under, 1.0, 0.05);
    EXPECT_GT(r.alpha_bar - r.alpha_under, 0.5);
}

TEST(GrowthRate, BoundedAndDecayingGiveZero) {
    // atan still increases on the window, by less than one lattice step.
    EXPECT_LE(growth_rate([](double x) { return std::atan(x); }, 1e2, 1e4).alpha_bar, 0.01);
    EXPECT_EQ(growth_rate([](double x) { return 1.0 / (1.0 + x * x); }, 1e2, 1e4).alpha_bar, 0.0);
}

TEST(GrowthRate, Errors) {
    EXPECT_THROW(growth_rate([](double) { return 0.0; }, 1e2, 1e4), PreconditionError);
    EXPECT_THROW(growth_rate([](double x) { return x; }, 1e2, 1e3), PreconditionError);
    EXPECT_THROW(growth_rate([](double x) { return x; }, 0.0, 1e3), PreconditionError);
    EXPECT_THROW(growth_rate([](double) { return std::nan(""); }, 1e2, 1e4), EvaluationError);
}

TEST(GrowthRate, LowerNeverExceedsUpper) {
    const std::vector<std::function<double(double)>> fs = {
        [](double x) { return x * x * std::sin(x); },
        [](double x) { return std::exp(std::sin(std::log(std::abs(x)))) * x; },
        [](double x) { return x > 0 ? std::pow(x, 1.5) : std::sqrt(-x); },
        [](double x) { return std::pow(std::abs(x), 2.5) * (2.0 + std::cos(x)); }};
    for (const auto& f : fs) {
        const auto r = growth_rate(f, 1e2, 1e5, 20000);
        EXPECT_LE(r.alpha_under, r.alpha_bar + r.lattice);
    }
}

TEST(InverseGrowth, Formula) {
    EXPECT_DOUBLE_EQ(inverse_growth_bound(3.0, 0.5), 0.4);
    EXPECT_THROW(inverse_growth_bound(3.0, 0.0), PreconditionError);
    EXPECT_THROW(inverse_growth_bound(3.0, 3.0), PreconditionError);
    double last = inverse_growth_bound(1.0, 0.5);
    for (double a : {2.0, 5.0, 10.0, 100.0, 1e4}) {
        const double b = inverse_growth_bound(a, 0.5);
        EXPECT_LT(b, last);
        last = b;
    }
    EXPECT_LT(last, 1e-3);
}

TEST(InverseGrowth, CubeRootByBisection) {
    auto cube = [](double x) { return x * x * x; };
    const auto f = growth_rate(cube, 1e2, 1e4);
    const auto inv = growth_rate([&](double y) { return invert_increasing(cube, y); }, 1e2, 1e4);
    EXPECT_NEAR(inv.alpha_bar, 1.0 / 3.0, 0.01);
    EXPECT_LE(inv.alpha_bar, inverse_growth_bound(f.alpha_under, 0.1));
}

TEST(InverseGrowth, RandomMonotoneFunctionsRespectBound) {
    std::mt19937_64 rng(20261014);
    std::uniform_real_distribution<double> ua(0.5, 2.0), up(1.2, 4.0), ub(0.0, 3.0);
    for (int k = 0; k < 20; ++k) {
        const double a = ua(rng), p = up(rng), b = ub(rng);
        auto f = [=](double x) {
            const double ax = std::abs(x);
            return std::copysign(a * std::pow(ax, p) + b * std::log1p(ax), x);
        };
        const auto rf = growth_rate(f, 1e2, 1e5);
        const auto ri = growth_rate([&](double y) { return invert_increasing(f, y); }, 1e3, 1e7);
        EXPECT_LE(ri.alpha_bar, inverse_growth_bound(rf.alpha_under, 0.1) + ri.lattice)
            << "a=" << a << " p=" << p << " b=" << b;
    }
}

TEST(RegularVariation, PowerDerivative) {
    const auto r = regular_variation_check([](double x) { return 3.0 * x * x; }, 2.0, 1e2, 1e4);
    EXPECT_NEAR(r.ratio[0], 3.0 * 1e12 / (1e12 - 1.0), 1e-9);
    EXPECT_NEAR(r.ratio[1], 3.0, 1e-3);
    EXPECT_TRUE(r.rates_ok);
    EXPECT_TRUE(r.holds);
}

TEST(RegularVariation, ConstantDerivative) {
    const auto r = regular_variation_check([](double) { return 2.0; }, 0.0, 1e2, 1e4);
    EXPECT_NEAR(r.ratio[0], 1e4 / (1e4 - 1.0), 1e-9);
    EXPECT_TRUE(r.holds);
}

TEST(RegularVariation, OscillatingFixtureFails) {
    const auto r = regular_variation_check_log(
        oscillating(), [](double L, int) { return oracle::oscillating_log_derivative(L); }, 1.0, 1.0, 1e4, 160000);
    EXPECT_FALSE(r.holds);
    EXPECT_FALSE(r.rates_ok);
    EXPECT_GT(r.rates_f.alpha_bar - r.rates_f.alpha_under, 0.5);
    EXPECT_EQ(r.note, "upper and lower growth rates of f differ");
}

TEST(Constants, ClosedForms) {
    EXPECT_DOUBLE_EQ(delta_const(1.0), 2.0);
    EXPECT_NEAR(delta_const(0.5), std::numbers::sqrt2, 1e-15);
    EXPECT_DOUBLE_EQ(delta_const(-0.3), 1.0);
    EXPECT_NEAR(xi_const(1.0), 0.5 / std::sqrt(std::numbers::pi), 1e-13);
    for (double a : {0.5, 1.0, 2.0, 3.7}) EXPECT_NEAR(xi_const(a), detail::xi_by_euler_integral(a), 1e-10) << a;
}

TEST(Constants, MuQuadratures) {
    const double exact = std::sqrt(std::numbers::pi / 2.0) * std::exp(0.5) * std::erfc(1.0 / std::numbers::sqrt2);
    EXPECT_NEAR(mu_const(2.0), exact, 1e-12);
    for (double a : {0.01, 0.3, 0.5, 1.0, 2.0, 5.0}) {
        const double m = mu_const(a);
        EXPECT_NEAR(m, detail::mu_by_simpson(a), 1e-8) << a;
        EXPECT_GT(m, 0.0);
        EXPECT_LE(m, 1.0);
    }
    EXPECT_THROW(mu_const(0.0), PreconditionError);
}

TEST(Constants, IdentitySlice) {
    const auto s = identity_slice();
    const auto rates = slice_rates(s);
    EXPECT_NEAR(rates.vp.alpha_bar, 0.0, 1e-12);
    EXPECT_NEAR(rates.v.alpha_bar, 1.0, 0.05);
    EXPECT_NEAR(rates.vinv.alpha_bar, 1.0, 0.05);
    const auto c = compute_constants(s, 1.0, 0.01, 0.01, 0.01, std::nullopt, rates);
    EXPECT_NEAR(c.K_fitted, 1.0, 1e-12);
    EXPECT_GT(c.M, 0.0);
    EXPECT_GT(c.M_prime, 0.0);
    EXPECT_GE(c.delta_a, 1.0);
    EXPECT_LT(c.xi_check, 1e-8);
    EXPECT_LT(c.mu_check, 1e-8);
    EXPECT_LT(c.delta_check, 1e-12);
    EXPECT_THROW(compute_constants(s, 1.0, 0.01, 0.01, 0.01, 0.5, rates), PreconditionError);
}

TEST(Constants, NonPositiveDerivativeHasWitness) {
    auto s = identity_slice();
    s.dv[10] = 0.0;
    try {
        compute_constants(s, 1.0, 0.01, 0.01, 0.5, std::nullopt, slice_rates(identity_slice()));
        FAIL() << "expected PreconditionError";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("x = "), std::string::npos);
    }
}

TEST(Constants, LargerKNeverRaisesM) {
    const auto s = identity_slice();
    const auto rates = slice_rates(s);
    std::vector<double> y = {-3.0, -1.0, 0.0, 1.0, 3.0};
    double lastM = std::numeric_limits<double>::infinity();
    std::vector<double> last_upper(y.size(), 0.0);
    for (double K : {1.0, 1.5, 2.0, 4.0, 10.0}) {
        const auto c = compute_constants(s, 1.0, 0.01, 0.01, 0.5, K, rates);
        EXPECT_LE(c.M, lastM);
        const auto e = envelope(1.0, c, 0.0, 0.8, y, EnvelopeForm::theorem);
        for (std::size_t j = 0; j < y.size(); ++j) EXPECT_GE(e.upper[j], last_upper[j]);
        lastM = c.M;
        last_upper = e.upper;
    }
}

TEST(Envelope, BrownianTheoremForm) {
    const auto s = identity_slice();
    const auto rates = slice_rates(s);
    const auto c = compute_constants(s, 1.0, 0.01, 0.01, 0.01, std::nullopt, rates);
    const double mad = std::sqrt(2.0 / std::numbers::pi);
    std::vector<double> y;
    for (int j = -20; j <= 20; ++j) y.push_back(0.1 * j);
    const auto e = envelope(1.0, c, 0.0, mad, y, EnvelopeForm::theorem);
    EXPECT_NEAR(e.upper[20], mad / (2.0 * c.M), 1e-12 * e.upper[20]);
    for (std::size_t j = 0; j < y.size(); ++j) {
        EXPECT_GE(e.upper[j], numerics::normal_pdf(y[j])) << y[j];
        EXPECT_LE(e.lower[j], e.upper[j]);
        EXPECT_GE(e.lower[j], 0.0);
    }
}

TEST(Envelope, DegenerateStatistics) {
    const auto s = identity_slice();
    const auto c = compute_constants(s, 1.0, 0.01, 0.01, 0.5, std::nullopt, slice_rates(s));
    std::vector<double> y = {-1.0, 0.0, 1.0};
    const auto e = envelope(1.0, c, 0.0, 0.0, y, EnvelopeForm::theorem);
    EXPECT_TRUE(e.degenerate);
    for (double u : e.upper) EXPECT_EQ(u, 0.0);
}

TEST(Envelope, CorollaryNeedsRateGap) {
    const auto s = identity_slice();
    auto rates = slice_rates(s);
    rates.vp.alpha_bar = 1.0;
    rates.vinv.alpha_bar = 1.0;
    const auto c = compute_constants(s, 1.0, 0.01, 0.01, 0.5, std::nullopt, rates);
    EXPECT_GE(c.gamma, 1.0);
    std::vector<double> y = {0.0};
    EXPECT_THROW(envelope(1.0, c, 0.0, 1.0, y, EnvelopeForm::corollary), PreconditionError);
    EXPECT_FALSE(choose_eps(rates).found);
}

TEST(Envelope, LadderPicksSmallestPair) {
    EnvelopeRates r;
    r.vp.alpha_bar = 1.0;
    r.vinv.alpha_bar = 0.5;
    const auto c = choose_eps(r);
    ASSERT_TRUE(c.found);
    EXPECT_DOUBLE_EQ(c.eps, 0.01);
    EXPECT_DOUBLE_EQ(c.eps_p, 0.01);
    EXPECT_NEAR(c.gamma, 1.01 * 0.51, 1e-12);
    EXPECT_EQ(c.ladder.size(), 16u);
}

TEST(MonotoneRestriction, FoldsAtMinimum) {
    std::vector<double> x, v, dv;
    for (int j = 0; j < 40; ++j) {
        const double q = -3.0 + 6.0 * (j + 0.5) / 40.0 - 0.0;
        x.push_back(q);
        v.push_back(3.0 * q * q + 1.0);
        dv.push_back(6.0 * q);
    }
    const auto m = monotone_restriction(x, v, dv);
    EXPECT_TRUE(m.folded);
    EXPECT_NEAR(m.fold_x, 0.0, 1e-12);
    EXPECT_NEAR(m.fold_v, 1.0, 1e-3);
    for (std::size_t j = 0; j < x.size(); ++j) {
        EXPECT_NEAR(m.v[j], 1.0 + std::copysign(3.0 * x[j] * x[j], x[j]), 2e-3);
        EXPECT_GT(m.dv[j], 0.0);
        EXPECT_NEAR(m.map(x[j], v[j]), m.v[j], 1e-15);
    }
}

TEST(MonotoneRestriction, ReflectsDecreasingAndRejectsTwoFolds) {
    std::vector<double> x, v, dv;
    for (int j = 0; j < 21; ++j) {
        x.push_back(-2.0 + 0.2 * j);
        v.push_back(-x.back());
        dv.push_back(-1.0);
    }
    const auto m = monotone_restriction(x, v, dv);
    EXPECT_EQ(m.orientation, -1);
    EXPECT_TRUE(std::is_sorted(m.x.begin(), m.x.end()));
    EXPECT_TRUE(std::is_sorted(m.v.begin(), m.v.end()));
    for (double d : m.dv) EXPECT_EQ(d, 1.0);
    std::vector<double> w(x.size()), dw(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        w[j] = std::cos(2.0 * x[j]);
        dw[j] = -2.0 * std::sin(2.0 * x[j]);
    }
    EXPECT_THROW(monotone_restriction(x, w, dw), PreconditionError);
}

TEST(TailStudy, CubicTerminalDerivative) {
    TailStudyOptions o;
    o.target = "Z";
    o.t = 1.0;
    o.n_samples = 100000;
    const auto st = tail_study(model::ex_cubic(), o);
    EXPECT_TRUE(st.slice.folded);
    EXPECT_NEAR(st.slice.fold_x, 0.0, 1e-9);
    EXPECT_NEAR(st.rates.vp.alpha_bar, 1.0, 0.05);
    EXPECT_NEAR(st.rates.v.alpha_under, 2.0, 0.05);
    EXPECT_NEAR(st.rates.vinv.alpha_bar, 0.5, 0.05);
    EXPECT_LT(st.constants.gamma, 1.0);
    EXPECT_LT(st.constants.xi_check, 1e-8);
    EXPECT_LT(st.constants.mu_check, 1e-8);
    EXPECT_LT(st.constants.delta_check, 1e-8);
    EXPECT_TRUE(st.ordered) << st.worst_order_gap;
    EXPECT_FALSE(std::isnan(st.envelope.d0));
    EXPECT_GT(st.domination.tested, 0u);
    EXPECT_TRUE(st.domination.holds) << st.domination.worst_excess << " at " << st.domination.worst_y;
    EXPECT_NEAR(st.envelope.p1, 2.0 * (1.0 - st.constants.gamma), 1e-15);
    std::ostringstream csv;
    write_envelope_csv(csv, st.envelope, &st.domination);
    EXPECT_EQ(csv.str().substr(0, 43), "y,lower,upper,empirical_density,empirical_c");
}

TEST(TailStudy, RequiresBrownianForward) {
    auto s = model::ex_cubic();
    s.sigma = [](double, double) { return 2.0; };
    EXPECT_THROW(tail_study(s, {}), PreconditionError);
}

TEST(Sandwich, SublinearTerminalKeepsGrowth) {
    const auto s = brownian("(1+x^2)^0.45");
    const auto g = solve_all(s, 1000.0, 2001, 50);
    SandwichParams p;
    p.eps = 0.1;
    p.eps_p = 0.05;
    p.C_lo = 0.5;
    p.C_hi = 2.0;
    const auto r = verify_growth_sandwich(g.u, g.up, g.upp, s, p);
    const auto* it = r.find("alpha_under_u in [1-eps, 1+eps]");
    ASSERT_NE(it, nullptr);
    EXPECT_TRUE(it->holds) << it->value;
    EXPECT_GE(it->value, 0.85);
    EXPECT_LE(it->value, 1.15);
    // g' < 0 for x < 0, so g' >= D_lo(1+|x|^eps') fails even for D_lo = 0 and the verdict is inapplicable.
    EXPECT_FALSE(r.find("g' >= D_lo(1+|x|^eps')")->holds);
    EXPECT_EQ(r.verdict, SandwichVerdict::inapplicable);
}

TEST(Sandwich, ConvexityLowerBoundPropagates) {
    const auto s = brownian("x^2 + cos(x)");
    // Rates are read on [X/100, X]; X = 1000 puts several periods of cos in every decade of the window.
    const auto g = solve_all(s, 1000.0, 4001, 100);
    SandwichParams p;
    p.B_lo = 1.0;
    p.B_hi = 3.0;
    const auto r = verify_growth_sandwich(g.u, g.up, g.upp, s, p);
    EXPECT_TRUE(r.find("g'' >= B_lo")->holds);
    EXPECT_TRUE(r.find("g'' <= B_hi")->holds);
    const auto* c = r.find("u'' >= B_lo");
    ASSERT_NE(c, nullptr);
    EXPECT_TRUE(c->holds) << c->value << " at t = " << c->t << ", x = " << c->x;
    EXPECT_TRUE(r.find("alpha_bar_u'' = 0")->holds) << r.find("alpha_bar_u'' = 0")->value;
}

TEST(Sandwich, CurvatureOfDriverGatesTheResult) {
    auto s = brownian("log(1+exp(x))", "-0.5*z^2", model::Regime::quadratic);
    const auto g = solve_all(s, 10.0, 201, 50);
    SandwichParams p;
    p.B_lo = 0.0;
    p.B_hi = 1.0;
    auto r = verify_growth_sandwich(g.u, g.up, g.upp, s, p);
    EXPECT_EQ(r.verdict, SandwichVerdict::inapplicable);
    EXPECT_FALSE(r.find("h_zz >= 0")->holds);

    s = brownian("log(1+exp(x))", "0.5*z^2", model::Regime::quadratic);
    const auto g2 = solve_all(s, 10.0, 201, 50);
    p.B_hi = 0.25;  // 1/(4 B_hi T) = 1 = h_zz
    r = verify_growth_sandwich(g2.u, g2.up, g2.upp, s, p);
    EXPECT_EQ(r.verdict, SandwichVerdict::inapplicable);
    EXPECT_FALSE(r.find("h_zz < 1/(4 B_hi T)")->holds);
    EXPECT_FALSE(r.note.empty());
}

TEST(TailStudy, LinearSliceEnvelopesAreOrdered) {
    for (double t : {0.1, 0.5, 0.9}) {
        TailStudyOptions o;
        o.target = "Y";
        o.t = t;
        o.n_samples = 20000;
        const auto st = tail_study(model::ex_counter(), o);
        EXPECT_EQ(st.slice.orientation, oracle::counter_coefficient(t) < 0 ? -1 : 1) << t;
        EXPECT_NEAR(st.rates.vp.alpha_bar, 0.0, 1e-12);
        EXPECT_TRUE(st.ordered) << t << " gap " << st.worst_order_gap;
        EXPECT_TRUE(st.domination.holds) << t;
        for (std::size_t j = 0; j < st.envelope.y.size(); ++j) EXPECT_GE(st.envelope.lower[j], 0.0);
    }
}
