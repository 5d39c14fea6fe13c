#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/io.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/presets.hpp"
#include "bsdens/numerics/basis.hpp"
#include "bsdens/numerics/regression.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/pde/solver.hpp"
#include "oracles.hpp"

using namespace bsdens;
using namespace bsdens::mc;

namespace {

model::ModelSpec expr_model(std::string b, std::string sigma, std::string g, std::string h, double X0 = 0.0) {
    model::ModelExpressions e;
    e.b = std::move(b);
    e.sigma = std::move(sigma);
    e.g = std::move(g);
    e.h = std::move(h);
    e.X0 = X0;
    return model::from_expressions(e);
}

double slope_at(const PathEnsemble& e, const BsdeSolution& s, std::size_t k) {
    const auto xs = e.slice(k);
    std::vector<double> ys(s.Y.begin() + k * e.n_paths, s.Y.begin() + (k + 1) * e.n_paths);
    return numerics::fit_polynomial(xs, ys, 1).derivative(0.0);
}

}  // namespace

TEST(Forward, BrownianIsExact) {
    const auto s = expr_model("0", "1", "x", "0", 0.7);
    const auto e = simulate_forward(s, 50, 16, 3);
    for (std::size_t p = 0; p < e.n_paths; ++p)
        for (std::size_t k = 0; k <= e.n_steps; ++k) EXPECT_NEAR(e.x(k, p), 0.7 + e.w(k, p), 1e-12);
}

TEST(Forward, BrownianTerminalVariance) {
    const auto s = expr_model("0", "1", "x", "0");
    const auto e = simulate_forward(s, 100000, 8, 5);
    const auto xt = e.slice(e.n_steps);
    const double v = numerics::variance(xt);
    EXPECT_GE(v, 0.98);
    EXPECT_LE(v, 1.02);
    EXPECT_TRUE(e.sanity.passed);
    for (std::size_t p = 0; p < 10; ++p) EXPECT_EQ(e.x(0, p), 0.0);
}

TEST(Forward, GeometricMeanMatchesMomentFormula) {
    const auto s = expr_model("0.1*x", "0.2*x", "x", "0", 1.0);
    const auto e = simulate_forward(s, 100000, 64, 9);
    const auto xt = e.slice(e.n_steps);
    const double se = std::sqrt(numerics::variance(xt) / xt.size());
    EXPECT_LT(std::abs(numerics::mean(xt) - std::exp(0.1)), 3 * se);
}

TEST(Forward, DeterministicAcrossThreadCounts) {
    const auto s = expr_model("0.1*x", "0.2*x", "x", "0", 1.0);
    ForwardOptions a, b;
    a.threads = 1;
    b.threads = 3;
    EXPECT_EQ(simulate_forward(s, 301, 10, 4, a).X, simulate_forward(s, 301, 10, 4, b).X);
}

TEST(Forward, AntitheticPairsNegateIncrements) {
    const auto s = expr_model("0", "1", "x", "0");
    ForwardOptions o;
    o.antithetic = true;
    const auto e = simulate_forward(s, 10, 4, 1, o);
    for (std::size_t p = 0; p < 10; p += 2)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(e.dw(k, p), -e.dw(k, p + 1));
}

TEST(Forward, NanCoefficientRaisesWithWitness) {
    auto s = expr_model("0", "1", "x", "0");
    s.b = [](double t, double) { return t > 0.5 ? std::nan("") : 0.0; };
    EXPECT_THROW(simulate_forward(s, 4, 8, 1), EvaluationError);
    EXPECT_THROW(simulate_forward(s, 0, 8, 1), PreconditionError);
}

TEST(Regression, CounterSlopeAtHalf) {
    const auto s = model::ex_counter();
    const auto e = simulate_forward(s, 100000, 64, 17);
    const auto sol = solve_bsde_regression(s, e);
    EXPECT_NEAR(slope_at(e, sol, 32), 0.375, 0.01);
}

TEST(Regression, ConstantTerminalAndZeroDriver) {
    const auto s = expr_model("0", "1", "2.5", "0");
    const auto e = simulate_forward(s, 2000, 16, 2);
    for (auto scheme : {RegressionScheme::later, RegressionScheme::now}) {
        BasisSpec b;
        b.scheme = scheme;
        const auto sol = solve_bsde_regression(s, e, b);
        for (double y : sol.Y) EXPECT_NEAR(y, 2.5, 1e-10);
        for (double z : sol.Z) EXPECT_NEAR(z, 0.0, 1e-8);
    }
}

TEST(Regression, TerminalRowIsExact) {
    const auto s = model::ex_quad_exp();
    const auto e = simulate_forward(s, 500, 8, 2);
    const auto sol = solve_bsde_regression(s, e);
    for (std::size_t p = 0; p < e.n_paths; ++p) EXPECT_EQ(sol.y(8, p), s.g(e.x(8, p)));
}

TEST(Regression, CubicMeanZAtHalf) {
    // the Euler-level bias of Z is -3 dt, kept well inside the 3 s.e. band by the step count
    const auto s = model::ex_cubic();
    const auto e = simulate_forward(s, 50000, 512, 23);
    const auto sol = solve_bsde_regression(s, e);
    std::vector<double> z(sol.Z.begin() + 256 * e.n_paths, sol.Z.begin() + 257 * e.n_paths);
    const double se = std::sqrt(numerics::variance(z) / z.size());
    EXPECT_LT(std::abs(numerics::mean(z) - 4.5), 3 * se);
}

TEST(Regression, CubicZMatchesOracleAtHalf) {
    const auto s = model::ex_cubic();
    const auto e = simulate_forward(s, 20000, 256, 23);
    const auto sol = solve_bsde_regression(s, e);
    double worst = 0.0;
    for (std::size_t p = 0; p < e.n_paths; ++p) {
        const double ref = s.oracle_z(0.5, e.w(128, p));
        worst = std::max(worst, std::abs(sol.z(128, p) - ref) / ref);
    }
    EXPECT_LT(worst, 2e-2);
}

TEST(Regression, SplineBasisReproducesCubic) {
    const auto s = model::ex_cubic();
    const auto e = simulate_forward(s, 20000, 64, 4);
    BasisSpec b;
    b.family = numerics::BasisFamily::spline;
    b.knots = 16;
    const auto sol = solve_bsde_regression(s, e, b);
    for (std::size_t p = 0; p < e.n_paths; p += 13) {
        const double w = e.w(32, p);
        EXPECT_NEAR(sol.y(32, p), s.oracle_y(0.5, w), 2e-2 * (1.0 + std::abs(w * w * w)));
    }
}

TEST(Regression, OracleErrorDecreasesWithSteps) {
    for (auto name : {"ex_counter", "ex_cubic"}) {
        const auto s = model::preset(name);
        BasisSpec b;
        b.theta = 1.0;
        double prev = 1e300;
        for (std::size_t steps : {20, 40, 80}) {
            const auto e = simulate_forward(s, 10000, steps, 31);
            const auto sol = solve_bsde_regression(s, e, b);
            double err = 0.0;
            for (std::size_t q = 1; q <= 10; ++q) {
                const std::size_t k = q * steps / 10 - (q == 10 ? 1 : 0);
                for (std::size_t p = 0; p < e.n_paths; ++p)
                    err = std::max(err, std::abs(sol.y(k, p) - s.oracle_y(e.time(k), e.w(k, p))));
            }
            // the cubic solution is polynomial in W, so only round-off and ridge shrinkage remain
            if (std::string(name) == "ex_cubic")
                EXPECT_LT(err, 1e-4) << steps;
            else
                EXPECT_LT(err, prev) << name << " " << steps;
            prev = err;
        }
    }
}

TEST(Regression, QuadraticRequiresCap) {
    const auto s = model::ex_quad_exp();
    const auto e = simulate_forward(s, 100, 4, 1);
    BasisSpec b;
    b.z_cap = 0.0;
    EXPECT_THROW(solve_bsde_regression(s, e, b), PreconditionError);
}

TEST(Regression, SaturationIsReported) {
    auto s = model::ex_quad_exp();
    s.g = [](double x) { return 3.0 * x; };
    s.partials.g_p = [](double) { return 3.0; };
    const auto e = simulate_forward(s, 1000, 8, 1);
    BasisSpec b;
    b.z_cap = 1.0;
    const auto sol = solve_bsde_regression(s, e, b);
    EXPECT_GT(sol.saturation_rate, 0.9);
    EXPECT_TRUE(sol.saturation_warning);
}

TEST(Regression, RankDeficientDesignIsBasisError) {
    const auto s = model::ex_cubic();
    auto e = simulate_forward(s, 6, 4, 1);
    BasisSpec b;
    b.degree = 8;
    b.ridge = 0.0;
    EXPECT_THROW(solve_bsde_regression(s, e, b), BasisError);
}

TEST(Variational, BrownianHasUnitGradient) {
    const auto s = expr_model("0", "1", "x", "0");
    const auto e = simulate_forward(s, 20, 10, 1);
    const auto v = variational_processes(s, e);
    for (double g : v.grad) EXPECT_EQ(g, 1.0);
    for (std::size_t j = 3; j <= 10; ++j) EXPECT_EQ(v.d_x(3, j, 5), 1.0);
}

TEST(Variational, LinearDriftGivesExponential) {
    const auto s = expr_model("0.7*x", "1", "x", "0");
    const auto e = simulate_forward(s, 5, 1000, 1);
    const auto v = variational_processes(s, e);
    EXPECT_NEAR(v.psi(1000, 2), std::exp(0.7), 2e-3);
    EXPECT_NEAR(v.psi(500, 4), std::exp(0.35), 1e-3);
}

TEST(Variational, LogNormalFlowIdentityAndDiscreteConsistency) {
    const auto s = expr_model("0", "0.2*x", "x", "0", 1.0);
    const auto e = simulate_forward(s, 50, 64, 1);
    const auto v = variational_processes(s, e);
    for (std::size_t p = 0; p < 50; ++p) {
        EXPECT_NEAR(v.d_x_flow(10, 40, p), 0.2 * e.x(40, p), 1e-12);
        EXPECT_EQ(v.d_x(10, 10, p), 0.2 * e.x(10, p));
        // the discrete and flow forms differ by the one-step factor 1 + sigma_x dW_k = O(sqrt(dt))
        EXPECT_NEAR(v.d_x(10, 40, p) / v.d_x_flow(10, 40, p), 1.0, 4 * 0.2 * std::sqrt(e.dt));
    }
}

TEST(Malliavin, CounterIsIndependentOfR) {
    const auto s = model::ex_counter();
    const auto e = simulate_forward(s, 4000, 50, 5);
    const auto sol = solve_bsde_regression(s, e);
    for (auto method : {MalliavinMethod::pathwise_weights, MalliavinMethod::backward_regression}) {
        MalliavinOptions o;
        o.method = method;
        const auto m = solve_malliavin_bsde(s, e, sol, 0.1, o);
        EXPECT_EQ(m.r_index, 5u);
        for (std::size_t j = 5; j <= 50; ++j)
            for (std::size_t p = 0; p < e.n_paths; p += 97) {
                EXPECT_NEAR(m.DY[j * e.n_paths + p], oracle::counter_coefficient(e.time(j)), 1e-6);
                EXPECT_NEAR(m.dy(5, j, p), m.dy(20 < j ? 20 : j, j, p), 1e-12);
                EXPECT_EQ(m.DX[j * e.n_paths + p], 1.0);
            }
    }
}

TEST(Malliavin, ZeroTerminalGradientGivesZero) {
    const auto s = expr_model("0", "1", "1.5", "0");
    const auto e = simulate_forward(s, 1000, 10, 5);
    const auto sol = solve_bsde_regression(s, e);
    const auto m = solve_malliavin_bsde(s, e, sol, 0.3);
    for (double v : m.DY) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Malliavin, CubicMatchesDifferentiatedOracle) {
    const auto s = model::ex_cubic();
    // the pathwise targets carry the full terminal variance, so that method gets five times the paths
    for (auto method : {MalliavinMethod::pathwise_weights, MalliavinMethod::backward_regression}) {
        const auto e = simulate_forward(s, method == MalliavinMethod::pathwise_weights ? 100000 : 20000, 50, 8);
        const auto sol = solve_bsde_regression(s, e);
        MalliavinOptions o;
        o.method = method;
        const auto m = solve_malliavin_bsde(s, e, sol, 0.2, o);
        const std::size_t j = 30;  // t = 0.6
        for (std::size_t p = 0; p < e.n_paths; p += 37) {
            const double w = e.w(j, p);
            const double expect = 3 * w * w + 6 * 0.4;
            EXPECT_NEAR(m.DY[j * e.n_paths + p], expect, 2e-2 * expect) << to_string(method) << " w=" << w;
        }
    }
}

TEST(Malliavin, RBeyondHorizonIsPreconditionError) {
    const auto s = model::ex_counter();
    const auto e = simulate_forward(s, 100, 10, 5);
    const auto sol = solve_bsde_regression(s, e);
    EXPECT_THROW(solve_malliavin_bsde(s, e, sol, 1.5), PreconditionError);
}

TEST(Malliavin, PositivityUnderFirstOrderCondition) {
    // ex_counter at t >= 0.5 satisfies the first-order sign condition; D_rY_t must be nonnegative.
    const auto s = model::ex_counter();
    const auto e = simulate_forward(s, 2000, 20, 5);
    const auto m = solve_malliavin_bsde(s, e, solve_bsde_regression(s, e), 0.0);
    for (std::size_t j = 10; j <= 20; ++j)
        for (std::size_t p = 0; p < e.n_paths; ++p) EXPECT_GE(m.DY[j * e.n_paths + p], -1e-10);
}

TEST(Malliavin, BruteForcePerturbationOracle) {
    BasisSpec basis;
    basis.family = numerics::BasisFamily::spline;
    basis.knots = 16;
    for (auto name : {"ex_counter", "ex_cubic", "ex_quad_exp"}) {
        const auto s = model::preset(name);
        const auto e = simulate_forward(s, 20000, 16, 77);
        const auto sol = solve_bsde_regression(s, e, basis);
        std::vector<std::vector<double>> bfs;
        for (std::size_t k : {0u, 5u, 11u})
            for (std::size_t path : {3u, 1000u, 7777u}) bfs.push_back(oracle::brute_force_dy(s, e, basis, k, path));
        for (auto method : {MalliavinMethod::pathwise_weights, MalliavinMethod::backward_regression}) {
            MalliavinOptions o;
            o.method = method;
            o.family = basis.family;
            o.knots = basis.knots;
            const auto m = solve_malliavin_bsde(s, e, sol, 0.0, o);
            std::size_t case_index = 0;
            for (std::size_t k : {0u, 5u, 11u})
                for (std::size_t path : {3u, 1000u, 7777u}) {
                    const auto& bf = bfs[case_index++];
                    for (std::size_t j = k + 1; j <= e.n_steps; ++j)
                        EXPECT_TRUE(oracle::within(m.dy(k, j, path), bf[j]))
                            << name << " " << to_string(method) << " k=" << k << " j=" << j << " path=" << path
                            << " mall=" << m.dy(k, j, path) << " bf=" << bf[j];
                }
        }
    }
}

TEST(Malliavin, ZFromMalliavinOnCounterAndBrownian) {
    const auto s = model::ex_counter();
    const auto e = simulate_forward(s, 1000, 40, 2);
    const auto sol = solve_bsde_regression(s, e);
    const auto z = z_from_malliavin(solve_malliavin_bsde(s, e, sol, 0.5 - e.dt));
    EXPECT_EQ(z.index, 20u);
    for (double v : z.values) EXPECT_NEAR(v, oracle::counter_coefficient(0.5), 1e-6);

    const auto b = expr_model("0", "1", "x", "0");
    const auto eb = simulate_forward(b, 500, 10, 2);
    const auto zb = z_from_malliavin(solve_malliavin_bsde(b, eb, solve_bsde_regression(b, eb), 0.4));
    for (double v : zb.values) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(Malliavin, ZFromMalliavinQuadExpMatchesQuadrature) {
    const auto s = model::ex_quad_exp();
    const auto grid = pde::GridSpec::for_model(s, 200, 401);
    const auto u = pde::solve_u(s, grid);
    const auto up = pde::solve_u_prime(s, grid, u);
    const auto e = simulate_forward(s, 20000, 100, 12);
    const auto theta = bsde_from_grid(s, e, u, &up);
    MalliavinOptions o;
    o.method = MalliavinMethod::backward_regression;
    o.degree = 8;
    const auto z = z_from_malliavin(solve_malliavin_bsde(s, e, theta, 0.5 - e.dt, o));
    int checked = 0;
    for (std::size_t p = 0; p < e.n_paths; p += 101) {
        const double w = e.w(z.index, p);
        if (std::abs(w) > 1.5) continue;  // central 97% of W_{0.5}
        EXPECT_NEAR(z.values[p], s.oracle_z(0.5, w), 5e-3) << "w=" << w;
        ++checked;
    }
    EXPECT_GT(checked, 100);
}

TEST(SecondMalliavin, CubicAndCounterAndBrownian) {
    const auto cubic = model::ex_cubic();
    const auto grid = pde::GridSpec::uniform(1.0, 200, -10, 10, 801);
    const auto u = pde::solve_u(cubic, grid);
    const auto up = pde::solve_u_prime(cubic, grid, u);
    const auto upp = pde::solve_u_doubleprime(cubic, grid, u, up);
    const auto e = simulate_forward(cubic, 200, 50, 3);
    const auto d2 = second_malliavin(cubic, {&up, &upp}, e, 0.2, 0.4);
    for (std::size_t j = 20; j <= 50; ++j)
        for (std::size_t p = 0; p < e.n_paths; p += 13) {
            EXPECT_EQ(d2.D2X[j * e.n_paths + p], 0.0);
            EXPECT_NEAR(d2.D2Y[j * e.n_paths + p], 6 * e.w(j, p), 1e-6);
            // D_rZ_t = u_xx sigma D_rX = 6 W_t
            EXPECT_NEAR(d2.DZ[j * e.n_paths + p], 6 * e.w(j, p), 1e-6);
        }

    const auto counter = model::ex_counter();
    const auto uc = pde::solve_u(counter, grid);
    const auto d2c = second_malliavin(counter, {&uc, &uc}, e, 0.1, 0.3);
    for (double v : d2c.D2Y) EXPECT_NEAR(v, 0.0, 1e-8);

    EXPECT_THROW(second_malliavin(cubic, {&up, nullptr}, e, 0.1, 0.3), PreconditionError);
}

TEST(SecondMalliavin, LogNormalSecondVariationIsNotZero) {
    // sigma = 0.2x is linear, yet D2_{r,s}X_t = 0.04 X_t.
    const auto s = expr_model("0", "0.2*x", "x", "0", 1.0);
    const auto grid = pde::GridSpec::uniform(1.0, 10, -2, 4, 61);
    const auto u = pde::solve_u(s, grid);
    const auto e = simulate_forward(s, 50, 32, 3);
    const auto d2 = second_malliavin(s, {&u, &u}, e, 0.25, 0.5);
    for (std::size_t j = 16; j <= 32; ++j)
        for (std::size_t p = 0; p < 50; ++p) EXPECT_NEAR(d2.D2X[j * 50 + p], 0.04 * e.x(j, p), 1e-12);
}

TEST(EnsembleIO, CsvHeaderRecordsSeed) {
    const auto s = model::ex_counter();
    const auto e = simulate_forward(s, 50, 2, 99);
    const auto sol = solve_bsde_regression(s, e);
    std::stringstream ss;
    write_csv(ss, e, &sol);
    const auto text = ss.str();
    EXPECT_NE(text.find("# seed: 99"), std::string::npos);
    EXPECT_NE(text.find("t,path,x,y,z"), std::string::npos);
}
