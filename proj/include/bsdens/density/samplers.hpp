#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/pde/grid.hpp"

namespace bsdens::density {

enum class Target { y, z };

inline const char* to_string(Target t) { return t == Target::y ? "Y" : "Z"; }

inline Target target_from_string(const std::string& s) {
    if (s == "Y" || s == "y") return Target::y;
    if (s == "Z" || s == "z") return Target::z;
    throw ConfigurationError("unknown target '" + s + "' (expected Y or Z)");
}

/// A Wiener functional F on [0, horizon] observed through n_steps Brownian increments.
/// eval(dW, phi) returns F and writes the derivative path phi[k] = D_{r_k}F, r_k = k horizon / n_steps.
/// eval must be reentrant: it is called concurrently on the original and the rotated increments, which
/// share the same W* draw across all quadrature nodes (common random numbers).
struct Sampler {
    double horizon = 1.0;
    std::size_t n_steps = 64;
    std::function<double(std::span<const double> dW, std::span<double> phi)> eval;

    double dt() const { return horizon / static_cast<double>(n_steps); }
};

/// F = int_0^T f(r) dW_r (left-point sums), D_rF = f(r).
inline Sampler gaussian_integral_sampler(std::function<double(double)> f, double horizon, std::size_t n_steps) {
    if (!(horizon > 0.0) || n_steps < 1) throw PreconditionError("gaussian_integral_sampler: horizon and steps");
    Sampler s{horizon, n_steps, {}};
    s.eval = [f, dt = s.dt()](std::span<const double> dW, std::span<double> phi) {
        double F = 0.0;
        for (std::size_t k = 0; k < dW.size(); ++k) {
            phi[k] = f(k * dt);
            F += phi[k] * dW[k];
        }
        return F;
    };
    return s;
}

/// F = phi(W_t), D_rF = phi'(W_t) on [0, t].
inline Sampler brownian_function_sampler(std::function<double(double)> fn, std::function<double(double)> dfn,
                                         double t, std::size_t n_steps) {
    if (!(t > 0.0) || n_steps < 1) throw PreconditionError("brownian_function_sampler: horizon and steps");
    Sampler s{t, n_steps, {}};
    s.eval = [fn, dfn](std::span<const double> dW, std::span<double> phi) {
        double w = 0.0;
        for (double v : dW) w += v;
        const double d = dfn(w);
        for (auto& p : phi) p = d;
        return fn(w);
    };
    return s;
}

/// Y_t = u(t, X_t) or Z_t = sigma u_x(t, X_t) read from PDE grids, with D_rX_t from the Euler variational
/// recursion as in the Monte Carlo engine:
///   D_rY_t = u_x D_rX_t,  D_rZ_t = (sigma_x u_x + sigma u_xx) D_rX_t.
/// u_x (and u_xx) come from u_prime when given, else from the differenced u grid.
/// spec and the grids are held by reference and must outlive the sampler.
inline Sampler bsde_target_sampler(const model::ModelSpec& spec, const pde::GridSolution& u,
                                   const pde::GridSolution* u_prime, Target target, double t, std::size_t n_steps) {
    if (!(t > 0.0) || t > spec.T + 1e-12) throw PreconditionError("bsde_target_sampler: t must lie in (0, T]");
    if (n_steps < 1) throw PreconditionError("bsde_target_sampler: n_steps must be positive");
    if (u.which != pde::Equation::u) throw PreconditionError("bsde_target_sampler: first grid must solve for u");
    if (u_prime && u_prime->which != pde::Equation::u_prime)
        throw PreconditionError("bsde_target_sampler: second grid must solve for u'");
    Sampler s{t, n_steps, {}};
    s.eval = [&spec, &u, u_prime, target, t, dt = s.dt()](std::span<const double> dW, std::span<double> phi) {
        const std::size_t n = dW.size();
        double x = spec.X0, psi = 1.0;
        // phi[k] temporarily holds sigma(t_k, X_k) / Psi_{k+1}
        for (std::size_t k = 0; k < n; ++k) {
            const double tk = k * dt;
            const double sg = spec.sigma(tk, x);
            const double step = 1.0 + spec.b_x(tk, x) * dt + spec.sigma_x(tk, x) * dW[k];
            x += spec.b(tk, x) * dt + sg * dW[k];
            psi *= step;
            phi[k] = sg / psi;
            if (!std::isfinite(x)) throw EvaluationError("non-finite forward value in sampler", tk, x);
        }
        const auto a = u.at(t, x);
        double ux = a.u_x, uxx = a.u_xx;
        if (u_prime) {
            const auto b = u_prime->at(t, x);
            ux = b.u;
            uxx = b.u_x;
        }
        double F = 0.0, scale = 0.0;
        if (target == Target::y) {
            F = a.u;
            scale = ux;
        } else {
            const double sg = spec.sigma(t, x);
            F = sg * ux;
            scale = spec.sigma_x(t, x) * ux + sg * uxx;
        }
        for (std::size_t k = 0; k < n; ++k) phi[k] *= psi * scale;
        return F;
    };
    return s;
}

}  // namespace bsdens::density
