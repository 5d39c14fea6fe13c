#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "bsdens/density/bouleau_hirsch.hpp"
#include "bsdens/density/gfunction.hpp"
#include "bsdens/density/samplers.hpp"
#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/presets.hpp"
#include "bsdens/numerics/special.hpp"
#include "bsdens/pde/solver.hpp"
#include "oracles.hpp"

using namespace bsdens;
using namespace bsdens::density;

namespace {

GFunction constant_g(double value, double lo = -4, double hi = 4, int n = 161) {
    GFunction g;
    for (int k = 0; k < n; ++k) {
        g.x.push_back(lo + (hi - lo) * k / (n - 1));
        g.g.push_back(value);
        g.ci_low.push_back(value);
        g.ci_high.push_back(value);
        g.reliable.push_back(1);
        g.count.push_back(1000);
    }
    return g;
}

double max_on_central(const GFunction& g, double lo, double hi, double target) {
    double worst = 0.0;
    for (std::size_t k = 0; k < g.x.size(); ++k)
        if (g.x[k] >= lo && g.x[k] <= hi && g.reliable[k]) worst = std::max(worst, std::abs(g.g[k] - target));
    return worst;
}

}  // namespace

TEST(GFunction, BrownianEndpointIsOne) {
    const auto s = gaussian_integral_sampler([](double) { return 1.0; }, 1.0, 16);
    const auto g = estimate_gF(s, 100000, 16, {}, 3);
    EXPECT_LT(max_on_central(g, -2.0, 2.0, 1.0), 0.02);
    EXPECT_EQ(g.clip_rate, 0.0);
    EXPECT_NEAR(g.mean_F, 0.0, 0.01);
}

TEST(GFunction, ScalesWithHorizon) {
    const auto s = gaussian_integral_sampler([](double) { return 1.0; }, 4.0, 16);
    const auto g = estimate_gF(s, 20000, 16, {}, 4);
    EXPECT_LT(max_on_central(g, -4.0, 4.0, 4.0), 0.08);
}

TEST(GFunction, GaussianClosureForDeterministicIntegrand) {
    // F = int (1 + r) dW_r: g_F is constant and equals int_0^1 (1 + r)^2 dr = 7/3
    const auto s = gaussian_integral_sampler([](double r) { return 1.0 + r; }, 1.0, 64);
    ConditionalSpec c;
    c.antithetic = false;
    const auto g = estimate_gF(s, 50000, 16, c, 5);
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < g.x.size(); ++k) {
        if (!g.reliable[k]) continue;
        sum += g.g[k];
        sum2 += g.g[k] * g.g[k];
        ++n;
    }
    const double mean = sum / n, cv = std::sqrt(std::max(0.0, sum2 / n - mean * mean)) / mean;
    EXPECT_LT(cv, 0.05);
    EXPECT_NEAR(mean, 7.0 / 3.0, 0.03 * 7.0 / 3.0);
}

TEST(GFunction, CounterYHalfIsConstant) {
    const auto spec = model::ex_counter();
    const auto grid = pde::GridSpec::for_model(spec, 200, 401);
    const auto u = pde::solve_u(spec, grid);
    const auto up = pde::solve_u_prime(spec, grid, u);
    const auto s = bsde_target_sampler(spec, u, &up, Target::y, 0.5, 32);
    const auto g = estimate_gF(s, 20000, 16, {}, 6);
    // D_rY_{0.5} = 0.375 on [0, 0.5]
    EXPECT_LT(max_on_central(g, -0.3, 0.3, 0.0703125), 0.02 * 0.0703125);
}

TEST(GFunction, BinsFlagSparseNodes) {
    const auto s = gaussian_integral_sampler([](double) { return 1.0; }, 1.0, 4);
    ConditionalSpec c;
    c.method = ConditionalMethod::bins;
    c.n_bins = 10;
    c.min_count = 101;
    const auto g = estimate_gF(s, 1000, 8, c, 7);
    EXPECT_EQ(g.x.size(), 10u);
    EXPECT_EQ(g.unreliable_count(), 10u);
    for (double v : g.g) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(GFunction, NegativeEstimatesAreClipped) {
    // Single-threaded call order per draw: the original path, then 2 x 16 rotated paths.
    // D_rF = -1 on the original and +1 on every rotation makes every inner product -1.
    int calls = 0;
    Sampler s{1.0, 4, {}};
    s.eval = [&calls](std::span<const double> dW, std::span<double> phi) {
        double w = 0.0;
        for (double v : dW) w += v;
        const double sign = (calls++ % 33 == 0) ? -1.0 : 1.0;
        for (auto& p : phi) p = sign;
        return w;
    };
    const auto g = estimate_gF(s, 2000, 16, {}, 8);
    EXPECT_DOUBLE_EQ(g.clip_rate, 1.0);
    for (double v : g.g) EXPECT_EQ(v, 0.0);
}

TEST(GFunction, CsvColumnsAndHeader) {
    const auto s = gaussian_integral_sampler([](double) { return 1.0; }, 1.0, 4);
    const auto g = estimate_gF(s, 500, 4, {}, 9);
    std::stringstream ss;
    io::FileHeader h;
    h.seed = 9;
    write_csv(ss, g, h);
    const auto text = ss.str();
    EXPECT_NE(text.find("# seed: 9"), std::string::npos);
    EXPECT_NE(text.find("\nx,value,ci_low,ci_high\n"), std::string::npos);
}

TEST(GFunction, SameSeedIsReproducibleAcrossThreads) {
    const auto s = gaussian_integral_sampler([](double r) { return std::cos(r); }, 1.0, 8);
    ConditionalSpec one, four;
    four.threads = 4;
    const auto a = estimate_gF(s, 3000, 8, one, 10), b = estimate_gF(s, 3000, 8, four, 10);
    EXPECT_EQ(a.g, b.g);
    EXPECT_EQ(a.sample, b.sample);
}

TEST(Density, ConstantUnitGIsStandardNormal) {
    const auto d = density_from_gF(constant_g(1.0), 0.0, std::sqrt(2.0 / std::numbers::pi));
    ASSERT_EQ(d.verdict, DensityVerdict::exists);
    double worst = 0.0;
    for (std::size_t k = 0; k < d.x.size(); ++k)
        if (std::abs(d.x[k]) <= 2.0) worst = std::max(worst, std::abs(d.rho[k] - numerics::normal_pdf(d.x[k])));
    EXPECT_LT(worst, 0.02);
    EXPECT_LT(worst, 1e-12);
}

TEST(Density, ConstantGIsCenteredGaussianWithThatVariance) {
    const double t = 0.3;
    const auto d = density_from_gF(constant_g(t, -2, 2), 1.5, std::sqrt(2.0 * t / std::numbers::pi));
    ASSERT_EQ(d.verdict, DensityVerdict::exists);
    for (std::size_t k = 0; k < d.x.size(); k += 7) {
        const double z = (d.x[k] - 1.5) / std::sqrt(t);
        EXPECT_NEAR(d.rho[k], numerics::normal_pdf(z) / std::sqrt(t), 1e-12);
    }
    EXPECT_NEAR(d.support_low, -0.5, 1e-12);
    EXPECT_NEAR(d.support_high, 3.5, 1e-12);
    EXPECT_NEAR(d.normalization_defect, std::abs(std::erf(2.0 / std::sqrt(2.0 * t)) - 1.0), 1e-9);
}

TEST(Density, NonPositiveInteriorNodeIsUndetermined) {
    auto g = constant_g(1.0);
    g.g[80] = 0.0;
    const auto d = density_from_gF(g, 0.0, 0.8);
    EXPECT_EQ(d.verdict, DensityVerdict::undetermined);
    EXPECT_TRUE(d.rho.empty());
    EXPECT_FALSE(d.note.empty());
}

TEST(Density, NonPositiveEndNodesShrinkSupport) {
    auto g = constant_g(1.0);
    g.g[0] = g.g[1] = 0.0;
    g.g[160] = 0.0;
    const auto d = density_from_gF(g, 0.0, 0.8);
    ASSERT_EQ(d.verdict, DensityVerdict::exists);
    EXPECT_NEAR(d.support_low, g.x[2], 1e-12);
    EXPECT_NEAR(d.support_high, g.x[159], 1e-12);
}

TEST(Density, SegmentIntegralIsExactForLinearG) {
    // int_1^2 u / (1 + u) du = 1 - log(3/2)
    EXPECT_NEAR(detail::segment_integral(0.0, 1.0, 3.0, 4.0, 1.0, 2.0), 1.0 - std::log(1.5), 1e-13);
    EXPECT_NEAR(detail::segment_integral(0.0, 2.0, 1.0, 2.0, 0.0, 1.0), 0.25, 1e-15);
}

TEST(Density, BrownianEndpointReconstruction) {
    const auto s = gaussian_integral_sampler([](double) { return 1.0; }, 1.0, 8);
    const auto g = estimate_gF(s, 100000, 16, {}, 11);
    const auto d = density_from_gF(g, g.mean_F, g.mad_F);
    ASSERT_EQ(d.verdict, DensityVerdict::exists);
    double worst = 0.0;
    for (std::size_t k = 0; k < d.x.size(); ++k)
        if (std::abs(d.x[k]) <= 2.0) worst = std::max(worst, std::abs(d.rho[k] - numerics::normal_pdf(d.x[k])));
    EXPECT_LT(worst, 0.02);
    EXPECT_LT(d.normalization_defect, 0.02);
    // symmetry about the sample mean, within twice the pointwise band (floored at round-off)
    for (std::size_t k = 0; k < d.x.size(); ++k) {
        const double mirror = 2 * g.mean_F - d.x[k];
        if (mirror < d.x.front() || mirror > d.x.back()) continue;
        const auto it = std::upper_bound(d.x.begin(), d.x.end(), mirror);
        const std::size_t j = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - d.x.begin(), 1), d.x.size() - 1);
        const double w = (mirror - d.x[j - 1]) / (d.x[j] - d.x[j - 1]);
        const double rm = (1 - w) * d.rho[j - 1] + w * d.rho[j];
        const double band = 2 * std::max(d.ci_high[k] - d.ci_low[k], 1e-3 * d.rho[k]);
        EXPECT_LT(std::abs(d.rho[k] - rm), band) << d.x[k];
    }
}

TEST(Density, CubicZAtHorizonMatchesChiSquareLaw) {
    const auto spec = model::ex_cubic();
    const auto grid = pde::GridSpec::uniform(spec.T, 100, -10.0, 10.0, 401, pde::Boundary::linear_extrapolation);
    const auto u = pde::solve_u(spec, grid);
    const auto up = pde::solve_u_prime(spec, grid, u);
    const auto s = bsde_target_sampler(spec, u, &up, Target::z, 1.0, 16);
    const auto g = estimate_gF(s, 100000, 16, {}, 12);
    const auto d = density_from_gF(g, g.mean_F, g.mad_F);
    ASSERT_EQ(d.verdict, DensityVerdict::exists);
    // central 90% of 3 W_1^2
    const double lo = 3 * std::pow(numerics::normal_quantile(0.525), 2), hi = 3 * std::pow(numerics::normal_quantile(0.975), 2);
    double worst = 0.0;
    int used = 0;
    for (std::size_t k = 0; k < d.x.size(); ++k)
        if (d.x[k] >= lo && d.x[k] <= hi) {
            worst = std::max(worst, std::abs(d.rho[k] - oracle::chi_square_density_3(d.x[k])));
            ++used;
        }
    EXPECT_GT(used, 30);
    EXPECT_LT(worst, 0.05);
    // the 1/sqrt(z) edge must not spoil the mass check
    EXPECT_LT(d.normalization_defect, 0.02);
}

TEST(Density, DegenerateCounterTimeIsNotClaimed) {
    const auto spec = model::ex_counter();
    const auto grid = pde::GridSpec::for_model(spec, 200, 401);
    const auto u = pde::solve_u(spec, grid);
    const auto up = pde::solve_u_prime(spec, grid, u);
    const double t0 = 2.0 - std::sqrt(3.0);
    const auto s = bsde_target_sampler(spec, u, &up, Target::y, t0, 32);
    const auto g = estimate_gF(s, 5000, 16, {}, 13);
    EXPECT_EQ(density_from_gF(g, g.mean_F, g.mad_F).verdict, DensityVerdict::undetermined);

    const auto e = mc::simulate_forward(spec, 2000, 256, 14);
    const auto m = mc::solve_malliavin_bsde(spec, e, mc::solve_bsde_regression(spec, e), 0.0);
    const auto bh = bouleau_hirsch_diagnostic(m, t0);
    EXPECT_EQ(bh.verdict, PositivityVerdict::degenerate);
    EXPECT_LT(bh.max, 1e-4);
}

TEST(BouleauHirsch, CounterLateTimeSupportsDensity) {
    const auto spec = model::ex_counter();
    const auto e = mc::simulate_forward(spec, 2000, 50, 15);
    const auto m = mc::solve_malliavin_bsde(spec, e, mc::solve_bsde_regression(spec, e), 0.0);
    const auto bh = bouleau_hirsch_diagnostic(m, 0.9);
    EXPECT_EQ(bh.verdict, PositivityVerdict::supports_density);
    const double c = oracle::counter_coefficient(0.9);
    EXPECT_NEAR(bh.min, 0.9 * c * c, 1e-4);
    EXPECT_NEAR(bh.max, 0.9 * c * c, 1e-4);
}

TEST(BouleauHirsch, ZeroTerminalGradientIsDegenerate) {
    auto spec = model::ex_quad_exp(model::terminal_zero());
    const auto e = mc::simulate_forward(spec, 500, 20, 16);
    const auto m = mc::solve_malliavin_bsde(spec, e, mc::solve_bsde_regression(spec, e), 0.0);
    const auto bh = bouleau_hirsch_diagnostic(m, 0.5);
    EXPECT_EQ(bh.verdict, PositivityVerdict::degenerate);
    EXPECT_EQ(bh.max, 0.0);
}

TEST(BouleauHirsch, TimeBeyondHorizonIsPreconditionError) {
    const auto spec = model::ex_counter();
    const auto e = mc::simulate_forward(spec, 100, 10, 1);
    const auto m = mc::solve_malliavin_bsde(spec, e, mc::solve_bsde_regression(spec, e), 0.0);
    EXPECT_THROW(bouleau_hirsch_diagnostic(m, 1.5), PreconditionError);
}
