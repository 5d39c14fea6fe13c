#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bsdens/model/assumptions.hpp"
#include "bsdens/model/expression.hpp"
#include "bsdens/model/presets.hpp"
#include "bsdens/numerics/quadrature.hpp"
#include "bsdens/numerics/rng.hpp"

using namespace bsdens;
using namespace bsdens::model;

TEST(Expression, EvaluatesPrecedence) {
    EXPECT_DOUBLE_EQ(Expression::parse("1+2*3")(0, 0), 7.0);
    EXPECT_DOUBLE_EQ(Expression::parse("-2^2")(0, 0), -4.0);
    EXPECT_DOUBLE_EQ(Expression::parse("2^3^2")(0, 0), 512.0);
    EXPECT_DOUBLE_EQ(Expression::parse("(t-2)*x")(0.5, 3.0), -4.5);
    EXPECT_NEAR(Expression::parse("exp(log(2)) + sin(pi/2) + tanh(0) + abs(-3) + sqrt(4)")(0, 0), 8.0, 1e-14);
}

TEST(Expression, UndefinedSymbolNamesSymbolAndColumn) {
    try {
        Expression::parse("x + foo*2", "x");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("foo"), std::string::npos);
        EXPECT_EQ(e.column(), 5);
    }
    EXPECT_THROW(Expression::parse("y", "x"), ParseError);
    EXPECT_THROW(Expression::parse("x +", "x"), ParseError);
    EXPECT_THROW(Expression::parse("(x", "x"), ParseError);
}

TEST(Expression, SymbolicDerivativeMatchesFiniteDifference) {
    const auto e = Expression::parse("x^3*exp(-x/2) + sin(t*x) + tanh(z)^2/(1+y^2)", "txyz");
    for (Var v : {Var::t, Var::x, Var::y, Var::z}) {
        const auto d = e.derivative(v);
        VarValues p{0.3, 1.1, -0.4, 0.7, 0.0};
        auto q = p, r = p;
        const double h = 1e-6;
        q[static_cast<int>(v)] += h;
        r[static_cast<int>(v)] -= h;
        EXPECT_NEAR(d(p), (e(q) - e(r)) / (2 * h), 1e-7);
    }
}

TEST(Presets, UnknownNameIsIdentifierError) { EXPECT_THROW(preset("nope"), IdentifierError); }

TEST(Presets, CounterCoefficientVanishesAtTwoMinusSqrt3) {
    const auto s = preset("ex_counter");
    EXPECT_NEAR(s.oracle_y(2 - std::sqrt(3.0), 1.7), 0.0, 1e-15);
    EXPECT_NEAR(s.oracle_y(0.5, 1.0), 0.375, 1e-15);
}

TEST(Presets, CubicOracles) {
    const auto s = preset("ex_cubic");
    EXPECT_DOUBLE_EQ(s.oracle_y(0.5, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(s.oracle_z(0.5, 1.0), 6.0);
}

TEST(Presets, QuadExpWithZeroTerminalIsZero) {
    const auto s = ex_quad_exp(terminal_zero());
    for (double w : {-1.0, 0.0, 2.0}) {
        EXPECT_NEAR(s.oracle_y(0.3, w), 0.0, 1e-14);
        EXPECT_NEAR(s.oracle_z(0.3, w), 0.0, 1e-14);
    }
}

// Integrated BSDE identity on oracle paths: Y*(0) = g(W_T) + int h ds - int Z* dW up to Euler error.
TEST(Presets, OracleSatisfiesIntegratedBsde) {
    for (auto name : {"ex_counter", "ex_cubic", "ex_quad_exp"}) {
        const auto s = preset(name);
        double prev_err = 1e300;
        for (int steps : {64, 256, 1024}) {
            const double dt = s.T / steps;
            double err = 0.0;
            const int paths = 200;
            for (int p = 0; p < paths; ++p) {
                numerics::NormalStream rng(11, numerics::substream_id("oracle.identity"), p);
                // same Brownian path at every resolution: build from 1024 fine increments
                std::vector<double> fine(1024);
                for (int k = 0; k < 1024; ++k) fine[k] = std::sqrt(s.T / 1024) * rng.normal(k);
                double w = 0.0, integral = 0.0;
                const int agg = 1024 / steps;
                for (int k = 0; k < steps; ++k) {
                    double dw = 0.0;
                    for (int m = 0; m < agg; ++m) dw += fine[k * agg + m];
                    const double t = k * dt;
                    const double y = s.oracle_y(t, w), z = s.oracle_z(t, w);
                    integral += s.h(t, w, y, z) * dt - z * dw;
                    w += dw;
                }
                err += std::abs(s.oracle_y(0.0, 0.0) - s.g(w) - integral);
            }
            err /= paths;
            EXPECT_LT(err, prev_err) << name << " steps=" << steps;
            prev_err = err;
        }
        EXPECT_LT(prev_err, 0.1) << name;
    }
}

TEST(Spec, FiniteDifferencesMatchSuppliedPartials) {
    ModelExpressions e;
    e.b = "0.1*x";
    e.sigma = "0.2 + 0.1*sin(x)";
    e.g = "x^3 - x";
    e.h = "t*x^2 + 0.5*y*z + sin(z)";
    const auto exact = from_expressions(e);
    auto fd = exact;
    fd.partials = Partials{};
    const double pts[][4] = {{0.2, 0.5, 0.3, -0.4}, {0.7, -1.2, 1.5, 0.9}};
    for (const auto& p : pts) {
        const double t = p[0], x = p[1], y = p[2], z = p[3];
        EXPECT_NEAR(fd.b_x(t, x), exact.b_x(t, x), 1e-8);
        EXPECT_NEAR(fd.sigma_x(t, x), exact.sigma_x(t, x), 1e-8);
        EXPECT_NEAR(fd.sigma_xx(t, x), exact.sigma_xx(t, x), 1e-5);
        EXPECT_NEAR(fd.sigma_xxx(t, x), exact.sigma_xxx(t, x), 1e-3);
        EXPECT_NEAR(fd.g_p(x), exact.g_p(x), 1e-7);
        EXPECT_NEAR(fd.g_pp(x), exact.g_pp(x), 1e-5);
        EXPECT_NEAR(fd.h_x(t, x, y, z), exact.h_x(t, x, y, z), 1e-8);
        EXPECT_NEAR(fd.h_z(t, x, y, z), exact.h_z(t, x, y, z), 1e-8);
        EXPECT_NEAR(fd.h_xx(t, x, y, z), exact.h_xx(t, x, y, z), 1e-5);
        EXPECT_NEAR(fd.h_yz(t, x, y, z), exact.h_yz(t, x, y, z), 1e-5);
        EXPECT_NEAR(fd.h_xt(t, x, y, z), exact.h_xt(t, x, y, z), 1e-5);
        EXPECT_NEAR(fd.h_xxy(t, x, y, z), exact.h_xxy(t, x, y, z), 1e-3);
    }
}

TEST(Assumptions, CounterLipschitzConstants) {
    const auto s = ex_counter();
    auto box = SampleBox::around(s, 6.0);
    const auto r = validate_assumptions(s, box);
    EXPECT_EQ(r.checks.at("L").verdict, Verdict::holds);
    EXPECT_NEAR(r.checks.at("L").estimates.at("k_x"), 2.0, 1e-12);
    EXPECT_NEAR(r.checks.at("L").estimates.at("k_y"), 0.0, 1e-12);
    EXPECT_NEAR(r.checks.at("L").estimates.at("k_z"), 0.0, 1e-12);
    EXPECT_EQ(r.checks.at("X").verdict, Verdict::holds);
    EXPECT_EQ(r.checks.at("M").verdict, Verdict::holds);
    EXPECT_EQ(r.resolution, 1e-8);
}

TEST(Assumptions, QuadExpQuadraticGrowth) {
    const auto s = ex_quad_exp();
    const auto r = validate_assumptions(s, SampleBox::around(s));
    EXPECT_EQ(r.checks.at("Q").verdict, Verdict::holds);
    EXPECT_LE(r.checks.at("Q").estimates.at("K"), 0.5 + 1e-12);
}

TEST(Assumptions, DegenerateSigmaViolatesEllipticity) {
    auto s = ex_counter();
    s.sigma = [](double, double) { return 0.0; };
    const auto r = validate_assumptions(s, SampleBox::around(s));
    const auto& x = r.checks.at("X");
    EXPECT_EQ(x.verdict, Verdict::violated);
    EXPECT_FALSE(x.violated_at.empty());
}

TEST(Assumptions, NanCoefficientRaisesEvaluationError) {
    auto s = ex_counter();
    s.sigma = [](double, double x) { return x > 5 ? std::nan("") : 1.0; };
    EXPECT_THROW(validate_assumptions(s, SampleBox::around(s)), EvaluationError);
}

TEST(Assumptions, EveryViolationCarriesWitness) {
    ModelExpressions e;
    e.g = "x^3";
    e.h = "x^2*z - y^3";
    const auto s = from_expressions(e);
    const auto r = validate_assumptions(s, SampleBox::around(s));
    int violated = 0;
    for (const auto& [id, c] : r.checks)
        if (c.verdict == Verdict::violated) {
            ++violated;
            EXPECT_FALSE(c.violated_at.empty()) << id;
        }
    EXPECT_GT(violated, 0);
}
