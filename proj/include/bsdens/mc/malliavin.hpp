#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/regression.hpp"
#include "bsdens/pde/grid.hpp"

namespace bsdens::mc {

/// How the linear equation for V = grad Y / grad X (so that D_rY_t = V_t D_rX_t) is solved.
///  pathwise_weights:    V_j = E[A_j | X_j] with the backward pathwise product
///                       A_j = h_x dt + (1 + h_y dt + h_z dW_j)(1 + b_x dt + sigma_x dW_j) A_{j+1}, A_N = g'(X_N);
///  backward_regression: regression-later step per time on the theta-discretized linear equation.
enum class MalliavinMethod { pathwise_weights, backward_regression };

inline const char* to_string(MalliavinMethod m) {
    return m == MalliavinMethod::pathwise_weights ? "pathwise_weights" : "backward_regression";
}

struct MalliavinOptions {
    MalliavinMethod method = MalliavinMethod::backward_regression;
    numerics::BasisFamily family = numerics::BasisFamily::polynomial;
    int degree = 4;
    int knots = 8;
    double ridge = 1e-8;
    double theta = 0.5;
    /// Kurtosis of the terminal discount weight above which weight_warning is set.
    double kurtosis_gate = 50.0;
    int threads = 1;
};

/// Malliavin derivatives along an ensemble. V and G hold u_x and d/dx(sigma u_x) along paths, so
/// D_{t_k}Y_{t_j} = V_j D_{t_k}X_{t_j} and D_{t_k}Z_{t_j} = G_j D_{t_k}X_{t_j} for every k <= j.
struct MalliavinEnsemble {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double dt = 0.0;
    std::size_t r_index = 0;
    double r = 0.0;
    std::string method;
    VariationalPaths var;
    std::vector<double> V, G;         // (n_steps + 1) x n_paths
    std::vector<double> DX, DY, DZ;   // (n_steps + 1) x n_paths at r; zero for t_j < r
    double weight_kurtosis = 0.0;
    bool weight_warning = false;

    double dx(std::size_t k, std::size_t j, std::size_t p) const { return var.d_x(k, j, p); }
    double dy(std::size_t k, std::size_t j, std::size_t p) const { return V[j * n_paths + p] * var.d_x(k, j, p); }
    double dz(std::size_t k, std::size_t j, std::size_t p) const { return G[j * n_paths + p] * var.d_x(k, j, p); }
    double time(std::size_t j) const { return j * dt; }
};

namespace detail {

inline std::size_t time_index(double r, double dt, std::size_t n_steps, const char* what) {
    if (!(r >= -1e-12)) throw PreconditionError(std::string(what) + " must be nonnegative");
    if (r > n_steps * dt * (1.0 + 1e-12)) throw PreconditionError(std::string(what) + " exceeds the horizon T");
    return std::min<std::size_t>(static_cast<std::size_t>(std::llround(r / dt)), n_steps);
}

inline double kurtosis(const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m += a;
    m /= v.size();
    double m2 = 0.0, m4 = 0.0;
    for (double a : v) {
        const double d = (a - m) * (a - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= v.size();
    m4 /= v.size();
    return m2 > 1e-300 * (1.0 + m * m) ? m4 / (m2 * m2) : 0.0;
}

}  // namespace detail

/// Solves the linear BSDE for the Malliavin derivative at time r given Theta = (X, Y, Z) along the ensemble.
inline MalliavinEnsemble solve_malliavin_bsde(const model::ModelSpec& s, const PathEnsemble& e, const BsdeSolution& sol,
                                              double r, const MalliavinOptions& opt = {}) {
    const std::size_t n = e.n_paths, N = e.n_steps;
    if (sol.n_paths != n || sol.n_steps != N) throw PreconditionError("BSDE solution does not match the ensemble");
    MalliavinEnsemble m;
    m.r_index = detail::time_index(r, e.dt, N, "r");
    m.r = e.time(m.r_index);
    m.n_paths = n;
    m.n_steps = N;
    m.dt = e.dt;
    m.method = to_string(opt.method);
    m.var = variational_processes(s, e, opt.threads);
    m.V.assign((N + 1) * n, 0.0);
    m.G.assign((N + 1) * n, 0.0);
    const bool quad = s.regime == model::Regime::quadratic;
    const double cap = sol.basis.z_cap, dt = e.dt, sqdt = std::sqrt(dt);
    const int size = opt.family == numerics::BasisFamily::polynomial ? opt.degree : opt.knots;
    auto fit = [&](std::span<const double> xs, std::span<const double> ys) {
        return numerics::fit_basis(xs, ys, opt.family, size, opt.ridge);
    };

    struct Partials {
        double hx, hy, hz;
    };
    auto partials = [&](std::size_t j, std::size_t p) {
        const double t = e.time(j), x = e.x(j, p);
        const double y = sol.y(j, p), z = detail::truncate(sol.z(j, p), quad, cap);
        return Partials{s.h_x(t, x, y, z), s.h_y(t, x, y, z), s.h_z(t, x, y, z)};
    };

    for (std::size_t p = 0; p < n; ++p) {
        const double x = e.x(N, p);
        m.V[N * n + p] = s.g_p(x);
        m.G[N * n + p] = s.sigma_x(s.T, x) * s.g_p(x) + s.sigma(s.T, x) * s.g_pp(x);
    }

    if (opt.method == MalliavinMethod::pathwise_weights) {
        std::vector<double> a_next(m.V.begin() + N * n, m.V.end()), a_now(n), ty(n), tz(n), weight(n, 1.0);
        for (std::size_t j = N; j-- > 0;) {
            const double t = e.time(j);
            numerics::parallel_for(n, opt.threads, [&](std::size_t p) {
                const double x = e.x(j, p), dw = e.dw(j, p);
                const auto q = partials(j, p);
                const double flow = 1.0 + s.b_x(t, x) * dt + s.sigma_x(t, x) * dw;
                const double disc = 1.0 + q.hy * dt + q.hz * dw;
                // trapezoid in the source term; one more factor of the step weights on its right-end half
                const double hx_next = partials(j + 1, p).hx;
                a_now[p] = opt.theta * dt * q.hx + disc * flow * (a_next[p] + (1.0 - opt.theta) * dt * hx_next);
                tz[p] = a_next[p] * flow * dw / dt;
                weight[p] *= disc;
            });
            const std::span<const double> xs(e.X.data() + j * n, n);
            const auto fv = fit(xs, a_now);
            const auto fg = fit(xs, tz);
            for (std::size_t p = 0; p < n; ++p) {
                m.V[j * n + p] = fv(xs[p]);
                m.G[j * n + p] = fg(xs[p]);
            }
            a_next.swap(a_now);
        }
        m.weight_kurtosis = detail::kurtosis(weight);
        m.weight_warning = m.weight_kurtosis > opt.kurtosis_gate;
    } else {
        const double th = opt.theta;
        const auto rule = detail::transition_rule(opt.family, opt.degree);
        std::vector<double> target(n);
        for (std::size_t j = N; j-- > 0;) {
            const double t = e.time(j);
            for (std::size_t p = 0; p < n; ++p) {
                const auto q = partials(j + 1, p);
                const double v = m.V[(j + 1) * n + p], gz = m.G[(j + 1) * n + p];
                target[p] = v + (1.0 - th) * dt * (q.hx + q.hy * v + q.hz * gz);
            }
            const std::span<const double> xn(e.X.data() + (j + 1) * n, n);
            const auto ft = fit(xn, target);
            numerics::parallel_for(n, opt.threads, [&](std::size_t p) {
                const double x = e.x(j, p);
                const double bx = s.b_x(t, x), c = s.sigma_x(t, x) * sqdt;
                const auto mo = detail::transition_moments(ft, rule, x + s.b(t, x) * dt, s.sigma(t, x) * sqdt);
                const double e1 = (1.0 + bx * dt) * mo[0] + c * mo[1];
                const double g = ((1.0 + bx * dt) * mo[1] + c * mo[2]) / sqdt;
                const auto q = partials(j, p);
                m.G[j * n + p] = g;
                m.V[j * n + p] = (e1 + th * dt * (q.hx + q.hz * g)) / (1.0 - th * dt * q.hy);
            });
        }
    }

    m.DX.assign((N + 1) * n, 0.0);
    m.DY.assign((N + 1) * n, 0.0);
    m.DZ.assign((N + 1) * n, 0.0);
    for (std::size_t j = m.r_index; j <= N; ++j)
        for (std::size_t p = 0; p < n; ++p) {
            const double dx = m.var.d_x(m.r_index, j, p);
            m.DX[j * n + p] = dx;
            m.DY[j * n + p] = m.V[j * n + p] * dx;
            m.DZ[j * n + p] = m.G[j * n + p] * dx;
        }
    return m;
}

struct ZEstimate {
    double t = 0.0;
    std::size_t index = 0;
    std::vector<double> values;
};

/// Z_t ~ D_{t - dt} Y_t with t one step after the ensemble's r.
inline ZEstimate z_from_malliavin(const MalliavinEnsemble& m) {
    if (m.r_index >= m.n_steps) throw PreconditionError("z_from_malliavin: r must lie before T");
    ZEstimate z;
    z.index = m.r_index + 1;
    z.t = m.time(z.index);
    z.values.resize(m.n_paths);
    for (std::size_t p = 0; p < m.n_paths; ++p) z.values[p] = m.DY[z.index * m.n_paths + p];
    return z;
}

/// Grids supplying u_x and u_xx. A u_prime solution provides u_x through its values, a u_doubleprime solution
/// provides u_xx; a u solution provides either through its differenced fields.
struct GridPair {
    const pde::GridSolution* u_x = nullptr;
    const pde::GridSolution* u_xx = nullptr;
};

namespace detail {

inline double grid_derivative(const pde::GridSolution& g, int order, double t, double x) {
    const auto a = g.at(t, x);
    if (g.which == pde::Equation::u) return order == 1 ? a.u_x : a.u_xx;
    if (g.which == pde::Equation::u_prime) return order == 1 ? a.u : a.u_x;
    if (order == 2) return a.u;
    throw PreconditionError("a u'' grid cannot supply u_x");
}

}  // namespace detail

struct SecondMalliavin {
    double r = 0.0, s = 0.0;
    std::size_t r_index = 0, s_index = 0;
    std::size_t n_paths = 0;
    /// (n_steps + 1) x n_paths; zero before s.
    std::vector<double> D2X, D2Y;
    /// D_rZ_t = (u_xx sigma + u_x sigma_x) D_rX_t, the s -> t limit of D2_{r,s}Y_t; zero before r.
    std::vector<double> DZ;
};

/// D2_{r,s}Y_t = u_x D2_{r,s}X_t + u_xx D_rX_t D_sX_t with the second variation
///   D_sPsi_t = sigma_x(X_s) Psi_s + int (b_xx D_sX Psi + b_x D_sPsi) du + int (sigma_xx D_sX Psi + sigma_x D_sPsi) dW,
///   D2_{r,s}X_t = sigma(r, X_r) / Psi_r * D_sPsi_t   (r <= s),
/// all first derivatives in flow form D_rX_t = sigma(r, X_r) Psi_t / Psi_r.
inline SecondMalliavin second_malliavin(const model::ModelSpec& spec, const GridPair& grids, const PathEnsemble& e,
                                        double r, double s) {
    if (!grids.u_xx) throw PreconditionError("second_malliavin requires a u_xx grid");
    if (!grids.u_x) throw PreconditionError("second_malliavin requires a u_x grid");
    if (r > s) std::swap(r, s);
    const std::size_t n = e.n_paths, N = e.n_steps;
    SecondMalliavin out;
    out.r_index = detail::time_index(r, e.dt, N, "r");
    out.s_index = detail::time_index(s, e.dt, N, "s");
    out.r = e.time(out.r_index);
    out.s = e.time(out.s_index);
    out.n_paths = n;
    const auto var = variational_processes(spec, e);
    out.D2X.assign((N + 1) * n, 0.0);
    out.D2Y.assign((N + 1) * n, 0.0);
    out.DZ.assign((N + 1) * n, 0.0);
    const std::size_t kr = out.r_index, ks = out.s_index;
    for (std::size_t p = 0; p < n; ++p) {
        const double cr = var.sigma[kr * n + p] / var.psi(kr, p);
        const double cs = var.sigma[ks * n + p] / var.psi(ks, p);
        double dpsi = spec.sigma_x(e.time(ks), e.x(ks, p)) * var.psi(ks, p);
        for (std::size_t j = ks; j <= N; ++j) {
            const double t = e.time(j), x = e.x(j, p), psi = var.psi(j, p);
            const double dsx = cs * psi, drx = cr * psi;
            const double d2x = cr * dpsi;
            const double ux = detail::grid_derivative(*grids.u_x, 1, t, x);
            const double uxx = detail::grid_derivative(*grids.u_xx, 2, t, x);
            out.D2X[j * n + p] = d2x;
            out.D2Y[j * n + p] = ux * d2x + uxx * drx * dsx;
            if (j == N) break;
            const double bx = spec.b_x(t, x), bxx = spec.b_xx(t, x), sx = spec.sigma_x(t, x),
                         sxx = spec.sigma_xx(t, x);
            dpsi += (bxx * dsx * psi + bx * dpsi) * e.dt + (sxx * dsx * psi + sx * dpsi) * e.dw(j, p);
        }
        for (std::size_t j = kr; j <= N; ++j) {
            const double t = e.time(j), x = e.x(j, p);
            const double ux = detail::grid_derivative(*grids.u_x, 1, t, x);
            const double uxx = detail::grid_derivative(*grids.u_xx, 2, t, x);
            out.DZ[j * n + p] = (uxx * spec.sigma(t, x) + ux * spec.sigma_x(t, x)) * cr * var.psi(j, p);
        }
    }
    return out;
}

}  // namespace bsdens::mc
