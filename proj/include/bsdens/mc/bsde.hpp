#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/basis.hpp"
#include "bsdens/numerics/parallel.hpp"
#include "bsdens/numerics/quadrature.hpp"
#include "bsdens/numerics/regression.hpp"
#include "bsdens/pde/solver.hpp"

namespace bsdens::mc {

/// How conditional expectations E[. | X_j] are formed.
///  later: regress the time-(j+1) value on X_{j+1}, then integrate the fitted polynomial exactly against the
///         Gaussian Euler transition from X_j (Z from the first Gaussian moment);
///  now:   regress the time-(j+1) targets directly on X_j.
enum class RegressionScheme { later, now };

inline const char* to_string(RegressionScheme s) { return s == RegressionScheme::later ? "later" : "now"; }

struct BasisSpec {
    numerics::BasisFamily family = numerics::BasisFamily::polynomial;
    int degree = 4;
    /// Interior knot count of the spline family.
    int knots = 8;
    /// Identity ridge for polynomials, second-difference penalty for splines.
    double ridge = 1e-8;
    RegressionScheme scheme = RegressionScheme::later;
    /// Weight of the implicit driver term: Y_j = E_j[Y_{j+1} + (1 - theta) dt h_{j+1}] + theta dt h_j.
    double theta = 0.5;
    /// |z| is clamped to z_cap inside h when the regime is quadratic.
    double z_cap = 50.0;
    int picard = 8;
    int threads = 1;

    int size() const { return family == numerics::BasisFamily::polynomial ? degree : knots; }

    std::string describe() const {
        const std::string fam = family == numerics::BasisFamily::polynomial
                                    ? "polynomial degree " + std::to_string(degree)
                                    : "cubic spline, " + std::to_string(knots) + " interior knots";
        return fam + ", ridge " + std::to_string(ridge) + ", regression-" + to_string(scheme) + ", theta " +
               std::to_string(theta);
    }
};

struct BsdeSolution {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double dt = 0.0;
    std::vector<double> Y, Z;       // (n_steps + 1) x n_paths
    std::vector<double> residual;   // rms residual of the step-j Y regression
    BasisSpec basis;
    std::string basis_description;
    double saturation_rate = 0.0;
    /// More than 1% of path-steps hit the z truncation.
    bool saturation_warning = false;

    double y(std::size_t k, std::size_t p) const { return Y[k * n_paths + p]; }
    double z(std::size_t k, std::size_t p) const { return Z[k * n_paths + p]; }
};

namespace detail {

/// Gauss-Hermite rule exact for polynomials of degree `degree + 2`; splines get a fixed 16-node rule.
inline numerics::QuadratureRule transition_rule(numerics::BasisFamily family, int degree) {
    return numerics::gauss_hermite_normal(family == numerics::BasisFamily::polynomial ? degree / 2 + 2 : 16);
}

/// (E[p(m + sd xi)], E[p(m + sd xi) xi], E[p(m + sd xi) xi^2]).
inline std::array<double, 3> transition_moments(const numerics::BasisFit& p, const numerics::QuadratureRule& r,
                                               double m, double sd) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        const double xi = r.nodes[i], v = r.weights[i] * p(m + sd * xi);
        out[0] += v;
        out[1] += v * xi;
        out[2] += v * xi * xi;
    }
    return out;
}

inline double truncate(double z, bool active, double cap) { return active ? std::clamp(z, -cap, cap) : z; }

}  // namespace detail

/// Least-squares Monte Carlo solution of the backward equation along the ensemble.
inline BsdeSolution solve_bsde_regression(const model::ModelSpec& s, const PathEnsemble& e, const BasisSpec& basis = {}) {
    const bool quad = s.regime == model::Regime::quadratic;
    if (quad && !(basis.z_cap > 0.0)) throw PreconditionError("quadratic regime requires a positive z_cap");
    if (basis.theta < 0.0 || basis.theta > 1.0) throw ConfigurationError("theta must lie in [0, 1]");
    const std::size_t n = e.n_paths, N = e.n_steps;
    const double dt = e.dt, sqdt = std::sqrt(dt), th = basis.theta;
    BsdeSolution sol;
    sol.n_paths = n;
    sol.n_steps = N;
    sol.dt = dt;
    sol.basis = basis;
    sol.basis_description = basis.describe();
    sol.Y.assign((N + 1) * n, 0.0);
    sol.Z.assign((N + 1) * n, 0.0);
    sol.residual.assign(N + 1, 0.0);
    std::vector<double> H((N + 1) * n, 0.0);
    std::vector<unsigned char> saturated(n, 0);
    std::size_t saturations = 0;

    for (std::size_t p = 0; p < n; ++p) {
        const double x = e.x(N, p);
        const double y = s.g(x), z = s.sigma(s.T, x) * s.g_p(x);
        if (!std::isfinite(y) || !std::isfinite(z)) throw EvaluationError("non-finite terminal value", s.T, x);
        sol.Y[N * n + p] = y;
        sol.Z[N * n + p] = z;
        H[N * n + p] = s.h(s.T, x, y, detail::truncate(z, quad, basis.z_cap));
    }
    const auto rule = detail::transition_rule(basis.family, basis.degree);
    auto fit = [&](std::span<const double> xs, std::span<const double> ys) {
        return numerics::fit_basis(xs, ys, basis.family, basis.size(), basis.ridge);
    };

    for (std::size_t j = N; j-- > 0;) {
        const double t = e.time(j);
        const std::span<const double> x_next(e.X.data() + (j + 1) * n, n), x_now(e.X.data() + j * n, n);
        const std::span<const double> y_next(sol.Y.data() + (j + 1) * n, n), h_next(H.data() + (j + 1) * n, n);
        std::vector<double> yhat(n), zhat(n);
        if (basis.scheme == RegressionScheme::later) {
            const auto py = fit(x_next, y_next);
            numerics::BasisFit ph;
            if (th < 1.0) ph = fit(x_next, h_next);
            sol.residual[j + 1] = py.residual_rms();
            numerics::parallel_for(n, basis.threads, [&](std::size_t p) {
                const double x = x_now[p];
                const double m = x + s.b(t, x) * dt, sd = s.sigma(t, x) * sqdt;
                const auto my = detail::transition_moments(py, rule, m, sd);
                yhat[p] = my[0];
                if (th < 1.0) yhat[p] += (1.0 - th) * dt * detail::transition_moments(ph, rule, m, sd)[0];
                zhat[p] = my[1] / sqdt;
            });
        } else {
            std::vector<double> ty(n), tz(n);
            for (std::size_t p = 0; p < n; ++p) ty[p] = y_next[p] + (1.0 - th) * dt * h_next[p];
            const auto fy = fit(x_now, ty);
            // E[c(X_j) dW | X_j] = 0, so centring by the fitted conditional mean of Y_{j+1} leaves Z unbiased
            const auto fm = fit(x_now, y_next);
            for (std::size_t p = 0; p < n; ++p) tz[p] = (y_next[p] - fm(x_now[p])) * e.dw(j, p) / dt;
            const auto fz = fit(x_now, tz);
            sol.residual[j] = fy.residual_rms();
            for (std::size_t p = 0; p < n; ++p) {
                yhat[p] = fy(x_now[p]);
                zhat[p] = fz(x_now[p]);
            }
        }
        std::size_t sat = 0;
        for (std::size_t p = 0; p < n; ++p) {
            const double x = x_now[p], z = zhat[p];
            const double zt = detail::truncate(z, quad, basis.z_cap);
            if (zt != z) ++sat;
            double y = yhat[p];
            if (th > 0.0)
                for (int it = 0; it < basis.picard; ++it) {
                    const double next = yhat[p] + th * dt * s.h(t, x, y, zt);
                    const bool done = std::abs(next - y) <= 1e-15 * (1.0 + std::abs(next));
                    y = next;
                    if (done) break;
                }
            if (!std::isfinite(y) || !std::isfinite(z))
                throw EvaluationError("non-finite backward value on path " + std::to_string(p), t, x);
            sol.Y[j * n + p] = y;
            sol.Z[j * n + p] = z;
            H[j * n + p] = s.h(t, x, y, zt);
        }
        saturations += sat;
    }
    sol.saturation_rate = static_cast<double>(saturations) / static_cast<double>(n * N);
    sol.saturation_warning = sol.saturation_rate > 0.01;
    return sol;
}

/// Y_j = u(t_j, X_j), Z_j = sigma u_x(t_j, X_j) read from PDE grids along the ensemble.
inline BsdeSolution bsde_from_grid(const model::ModelSpec& s, const PathEnsemble& e, const pde::GridSolution& u,
                                   const pde::GridSolution* u_prime = nullptr) {
    BsdeSolution sol;
    sol.n_paths = e.n_paths;
    sol.n_steps = e.n_steps;
    sol.dt = e.dt;
    sol.basis_description = "pde grid";
    sol.Y.resize((e.n_steps + 1) * e.n_paths);
    sol.Z.resize(sol.Y.size());
    sol.residual.assign(e.n_steps + 1, 0.0);
    for (std::size_t k = 0; k <= e.n_steps; ++k)
        for (std::size_t p = 0; p < e.n_paths; ++p) {
            const auto r = pde::eval_yz(u, u_prime, s, e.time(k), e.x(k, p));
            sol.Y[k * e.n_paths + p] = r.y;
            sol.Z[k * e.n_paths + p] = r.z;
        }
    return sol;
}

}  // namespace bsdens::mc
