#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/tridiagonal.hpp"
#include "bsdens/pde/grid.hpp"

namespace bsdens::pde {

struct SchemeOptions {
    double theta = 0.5;
    int max_picard = 20;
    double picard_tol = 1e-10;
    /// Retry a step with theta = 1 when the Picard sweeps fail to converge or produce non-finite values.
    bool implicit_fallback = true;
};

/// Coefficients of w_tau = A w_x + S w_xx + R at time index i, given the current iterate w and its x-difference.
using CoefficientFn = std::function<void(std::size_t i, const std::vector<double>& w, const std::vector<double>& w_x,
                                         std::vector<double>& A, std::vector<double>& S, std::vector<double>& R)>;

/// Dirichlet values (left, right) at time index i.
using BoundaryFn = std::function<std::pair<double, double>(std::size_t i)>;

namespace detail {

inline double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

inline void apply_extrapolation(std::vector<double>& w) {
    const std::size_t n = w.size();
    w[0] = 2.0 * w[1] - w[2];
    w[n - 1] = 2.0 * w[n - 2] - w[n - 3];
}

/// Backward theta-scheme with frozen-coefficient Picard sweeps per step.
inline GridSolution solve_generic(const GridSpec& grid, Equation which, std::vector<double> terminal,
                                  const CoefficientFn& coeffs, const BoundaryFn& dirichlet,
                                  const SchemeOptions& opt, double blowup_bound = 0.0) {
    grid.validate();
    if (opt.theta < 0.0 || opt.theta > 1.0) throw ConfigurationError("theta must lie in [0, 1]");
    const std::size_t nt = grid.t_nodes.size(), nx = grid.x_nodes.size();
    const double h = grid.dx();
    GridSolution sol;
    sol.grid = grid;
    sol.which = which;
    sol.scheme.theta = opt.theta;
    sol.u.assign(nt * nx, 0.0);
    std::copy(terminal.begin(), terminal.end(), sol.u.begin() + (nt - 1) * nx);

    std::vector<double> A(nx), S(nx), R(nx), wx(nx), wxx(nx);
    std::vector<double> lo(nx), di(nx), up(nx), rhs(nx);
    const bool extrap = grid.boundary == Boundary::linear_extrapolation;

    if (opt.theta < 0.5) {
        difference_row(terminal.data(), nx, h, wx.data(), wxx.data());
        coeffs(nt - 1, terminal, wx, A, S, R);
        const double dt = grid.t_nodes[nt - 1] - grid.t_nodes[nt - 2];
        const double smax = max_abs(S);
        if (dt * 2.0 * smax / (h * h) * (1.0 - 2.0 * opt.theta) > 1.0)
            throw ConfigurationError("time step violates the explicit stability bound for theta < 1/2");
    }

    std::vector<double> prev(terminal), explicit_part(nx);
    for (std::size_t i = nt - 1; i-- > 0;) {
        const double dt = grid.t_nodes[i + 1] - grid.t_nodes[i];
        difference_row(prev.data(), nx, h, wx.data(), wxx.data());
        coeffs(i + 1, prev, wx, A, S, R);
        for (std::size_t j = 1; j + 1 < nx; ++j) explicit_part[j] = A[j] * wx[j] + S[j] * wxx[j] + R[j];

        auto attempt = [&](double theta, std::vector<double>& out, double& residual, int& iters) {
            std::vector<double> w = prev;
            residual = 0.0;
            for (iters = 1; iters <= opt.max_picard; ++iters) {
                difference_row(w.data(), nx, h, wx.data(), wxx.data());
                coeffs(i, w, wx, A, S, R);
                for (std::size_t j = 1; j + 1 < nx; ++j) {
                    const double a = -A[j] / (2.0 * h) + S[j] / (h * h);
                    const double b = -2.0 * S[j] / (h * h);
                    const double c = A[j] / (2.0 * h) + S[j] / (h * h);
                    lo[j] = -theta * a;
                    di[j] = 1.0 / dt - theta * b;
                    up[j] = -theta * c;
                    rhs[j] = prev[j] / dt + (1.0 - theta) * explicit_part[j] + theta * R[j];
                }
                // interior unknowns 1..nx-2 after eliminating the boundary values
                const std::size_t m = nx - 2;
                std::vector<double> L(m), D(m), U(m), B(m);
                for (std::size_t k = 0; k < m; ++k) {
                    L[k] = lo[k + 1];
                    D[k] = di[k + 1];
                    U[k] = up[k + 1];
                    B[k] = rhs[k + 1];
                }
                double left = 0.0, right = 0.0;
                if (extrap) {
                    if (m >= 2) {
                        // w0 = 2 w1 - w2 and w_{n-1} = 2 w_{n-2} - w_{n-3}
                        D[0] += 2.0 * L[0];
                        U[0] -= L[0];
                        D[m - 1] += 2.0 * U[m - 1];
                        L[m - 1] -= U[m - 1];
                    } else {
                        D[0] += L[0] + U[0];
                    }
                } else {
                    std::tie(left, right) = dirichlet(i);
                    B[0] -= L[0] * left;
                    B[m - 1] -= U[m - 1] * right;
                }
                const auto inner = numerics::solve_tridiagonal(L, D, U, B);
                std::vector<double> next(nx);
                for (std::size_t k = 0; k < m; ++k) next[k + 1] = inner[k];
                if (extrap) {
                    if (m >= 2) apply_extrapolation(next);
                    else next[0] = next[2] = next[1];
                } else {
                    next[0] = left;
                    next[nx - 1] = right;
                }
                double diff = 0.0;
                bool finite = true;
                for (std::size_t j = 0; j < nx; ++j) {
                    if (!std::isfinite(next[j])) finite = false;
                    diff = std::max(diff, std::abs(next[j] - w[j]));
                }
                if (!finite) {
                    residual = std::numeric_limits<double>::infinity();
                    return false;
                }
                residual = diff / std::max(1.0, max_abs(next));
                w.swap(next);
                if (residual < opt.picard_tol) {
                    out.swap(w);
                    return true;
                }
            }
            iters = opt.max_picard;
            return false;
        };

        std::vector<double> row;
        double residual = 0.0;
        int iters = 0;
        bool ok = attempt(opt.theta, row, residual, iters);
        if (!ok && opt.implicit_fallback && opt.theta < 1.0) {
            ++sol.scheme.fallback_steps;
            ok = attempt(1.0, row, residual, iters);
        }
        if (!ok) throw SolverError("Picard sweeps did not converge at t = " + std::to_string(grid.t_nodes[i]), residual);
        sol.scheme.max_iterations = std::max(sol.scheme.max_iterations, iters);
        sol.scheme.last_residual = residual;
        if (blowup_bound > 0.0 && max_abs(row) > blowup_bound)
            throw SolverError("solution exceeds blow-up bound at t = " + std::to_string(grid.t_nodes[i]), max_abs(row));
        std::copy(row.begin(), row.end(), sol.u.begin() + i * nx);
        prev.swap(row);
    }

    sol.u_x.assign(nt * nx, 0.0);
    sol.u_xx.assign(nt * nx, 0.0);
    for (std::size_t i = 0; i < nt; ++i)
        difference_row(sol.u.data() + i * nx, nx, h, sol.u_x.data() + i * nx, sol.u_xx.data() + i * nx);
    return sol;
}

inline void require_same_grid(const GridSpec& a, const GridSolution& s, const char* what) {
    if (s.grid.t_nodes != a.t_nodes || s.grid.x_nodes != a.x_nodes)
        throw PreconditionError(std::string(what) + " was computed on a different grid");
}

}  // namespace detail

/// -u_t - b u_x - 1/2 sigma^2 u_xx - h(t, x, u, sigma u_x) = 0, u(T) = g.
inline GridSolution solve_u(const model::ModelSpec& s, const GridSpec& grid, const SchemeOptions& opt = {}) {
    const auto& xs = grid.x_nodes;
    const auto& ts = grid.t_nodes;
    std::vector<double> term(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) term[j] = s.g(xs[j]);
    auto coeffs = [&](std::size_t i, const std::vector<double>& w, const std::vector<double>& wx,
                      std::vector<double>& A, std::vector<double>& S, std::vector<double>& R) {
        const double t = ts[i];
        for (std::size_t j = 0; j < xs.size(); ++j) {
            const double sg = s.sigma(t, xs[j]);
            A[j] = s.b(t, xs[j]);
            S[j] = 0.5 * sg * sg;
            R[j] = s.h(t, xs[j], w[j], sg * wx[j]);
        }
    };
    auto dirichlet = [&](std::size_t i) {
        auto edge = [&](double x) { return s.g(x) + (s.T - ts[i]) * s.h(s.T, x, s.g(x), s.sigma(s.T, x) * s.g_p(x)); };
        return std::pair{edge(xs.front()), edge(xs.back())};
    };
    return detail::solve_generic(grid, Equation::u, term, coeffs, dirichlet, opt);
}

/// PDE of v = u_x obtained by differentiating the u-equation in x:
///   -v_t - (b + sigma sigma_x + sigma h_z) v_x - 1/2 sigma^2 v_xx - (b_x + h_y + sigma_x h_z) v - h_x = 0,
/// partials of h at (t, x, u, sigma v). With b = 0, sigma = 1 and h = h(t, z) this is -v_t - 1/2 v_xx - h_z v_x = 0.
inline GridSolution solve_u_prime(const model::ModelSpec& s, const GridSpec& grid, const GridSolution& u_sol,
                                  const SchemeOptions& opt = {}) {
    detail::require_same_grid(grid, u_sol, "u solution");
    const auto& xs = grid.x_nodes;
    const auto& ts = grid.t_nodes;
    const std::size_t nx = xs.size();
    std::vector<double> term(nx);
    for (std::size_t j = 0; j < nx; ++j) term[j] = s.g_p(xs[j]);
    auto coeffs = [&](std::size_t i, const std::vector<double>& v, const std::vector<double>&, std::vector<double>& A,
                      std::vector<double>& S, std::vector<double>& R) {
        const double t = ts[i];
        for (std::size_t j = 0; j < nx; ++j) {
            const double x = xs[j], y = u_sol.u[u_sol.idx(i, j)];
            const double sg = s.sigma(t, x), sx = s.sigma_x(t, x), z = sg * v[j];
            const double hz = s.h_z(t, x, y, z);
            A[j] = s.b(t, x) + sg * sx + sg * hz;
            S[j] = 0.5 * sg * sg;
            R[j] = (s.b_x(t, x) + s.h_y(t, x, y, z) + sx * hz) * v[j] + s.h_x(t, x, y, z);
        }
    };
    auto dirichlet = [&](std::size_t i) {
        auto edge = [&](double x) {
            const double y = s.g(x), v = s.g_p(x), sg = s.sigma(s.T, x), z = sg * v;
            const double r = (s.b_x(s.T, x) + s.h_y(s.T, x, y, z) + s.sigma_x(s.T, x) * s.h_z(s.T, x, y, z)) * v +
                             s.h_x(s.T, x, y, z);
            return v + (s.T - ts[i]) * r;
        };
        return std::pair{edge(xs.front()), edge(xs.back())};
    };
    return detail::solve_generic(grid, Equation::u_prime, term, coeffs, dirichlet, opt);
}

inline GridSolution solve_u_prime(const model::ModelSpec& s, const GridSpec& grid, const SchemeOptions& opt = {}) {
    return solve_u_prime(s, grid, solve_u(s, grid, opt), opt);
}

/// PDE of w = u_xx obtained by differentiating the u'-equation in x. With b = 0, sigma = 1, h = h(t, z):
///   -w_t - 1/2 w_xx - h_z(t, u') w_x - h_zz(t, u') w^2 = 0.
/// Raises SolverError when |w| exceeds 4 max(sup|g''|, 1) on the grid.
inline GridSolution solve_u_doubleprime(const model::ModelSpec& s, const GridSpec& grid, const GridSolution& u_sol,
                                        const GridSolution& up_sol, const SchemeOptions& opt = {}) {
    detail::require_same_grid(grid, u_sol, "u solution");
    detail::require_same_grid(grid, up_sol, "u' solution");
    const auto& xs = grid.x_nodes;
    const auto& ts = grid.t_nodes;
    const std::size_t nx = xs.size();
    std::vector<double> term(nx);
    double gsup = 0.0;
    for (std::size_t j = 0; j < nx; ++j) {
        term[j] = s.g_pp(xs[j]);
        gsup = std::max(gsup, std::abs(term[j]));
    }
    auto coeffs = [&](std::size_t i, const std::vector<double>& w, const std::vector<double>&, std::vector<double>& A,
                      std::vector<double>& S, std::vector<double>& R) {
        const double t = ts[i];
        for (std::size_t j = 0; j < nx; ++j) {
            const double x = xs[j], y = u_sol.u[u_sol.idx(i, j)], v = up_sol.u[up_sol.idx(i, j)];
            const double sg = s.sigma(t, x), sx = s.sigma_x(t, x), sxx = s.sigma_xx(t, x), z = sg * v;
            const double hz = s.h_z(t, x, y, z), hy = s.h_y(t, x, y, z);
            const double dz = sx * v + sg * w[j];  // d/dx of sigma v
            const double Dhz = s.h_xz(t, x, y, z) + s.h_yz(t, x, y, z) * v + s.h_zz(t, x, y, z) * dz;
            const double Dhy = s.h_xy(t, x, y, z) + s.h_yy(t, x, y, z) * v + s.h_yz(t, x, y, z) * dz;
            const double Dhx = s.h_xx(t, x, y, z) + s.h_xy(t, x, y, z) * v + s.h_xz(t, x, y, z) * dz;
            const double bx = s.b_x(t, x);
            const double Ax = bx + sx * sx + sg * sxx + sx * hz + sg * Dhz;
            const double B = bx + hy + sx * hz;
            const double Bx = s.b_xx(t, x) + Dhy + sxx * hz + sx * Dhz;
            A[j] = s.b(t, x) + 2.0 * sg * sx + sg * hz;
            S[j] = 0.5 * sg * sg;
            R[j] = (Ax + B) * w[j] + Bx * v + Dhx;
        }
    };
    auto dirichlet = [&](std::size_t) { return std::pair{s.g_pp(xs.front()), s.g_pp(xs.back())}; };
    return detail::solve_generic(grid, Equation::u_doubleprime, term, coeffs, dirichlet, opt,
                                 4.0 * std::max(gsup, 1.0));
}

struct YZ {
    double y = 0.0;
    double z = 0.0;
    bool extrapolated = false;
};

/// Y = u(t, x), Z = sigma(t, x) u_x(t, x) with u_x from the dedicated u' solve when given.
inline YZ eval_yz(const GridSolution& u_sol, const GridSolution* up_sol, const model::ModelSpec& s, double t,
                  double x) {
    const auto a = u_sol.at(t, x);
    YZ r;
    r.y = a.u;
    r.extrapolated = a.extrapolated;
    double ux = a.u_x;
    if (up_sol) {
        const auto b = up_sol->at(t, x);
        ux = b.u;
        r.extrapolated = r.extrapolated || b.extrapolated;
    }
    r.z = s.sigma(t, x) * ux;
    return r;
}

}  // namespace bsdens::pde
