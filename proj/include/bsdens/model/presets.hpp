#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "bsdens/errors.hpp"
#include "bsdens/model/expression.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/quadrature.hpp"

namespace bsdens::model {

namespace detail {

inline Partials zero_forward_partials(Partials p) {
    auto zero2 = [](double, double) { return 0.0; };
    p.b_x = p.b_xx = p.sigma_x = p.sigma_xx = p.sigma_xxx = zero2;
    p.f_w = [](double, double) { return 1.0; };
    p.f_ww = zero2;
    return p;
}

inline DriverFn zero4() {
    return [](double, double, double, double) { return 0.0; };
}

/// Brownian forward component X = W, T = 1, X0 = 0.
inline ModelSpec brownian_base(std::string name) {
    ModelSpec s;
    s.name = std::move(name);
    s.b = [](double, double) { return 0.0; };
    s.sigma = [](double, double) { return 1.0; };
    s.markovian_f = [](double, double w) { return w; };
    s.partials = zero_forward_partials(s.partials);
    s.constants.k_b = 0.0;
    s.constants.k_sigma = 0.0;
    s.constants.c = 1.0;
    return s;
}

}  // namespace detail

/// Y_t = W_t(-1/2 + 2t - t^2/2) for g(x) = x, h = (t - 2)x on X = W, T = 1.
inline ModelSpec ex_counter() {
    auto s = detail::brownian_base("ex_counter");
    s.g = [](double x) { return x; };
    s.h = [](double t, double x, double, double) { return (t - 2.0) * x; };
    auto& p = s.partials;
    p.g_p = [](double) { return 1.0; };
    p.g_pp = [](double) { return 0.0; };
    p.h_x = [](double t, double, double, double) { return t - 2.0; };
    p.h_xt = [](double, double, double, double) { return 1.0; };
    p.h_y = p.h_z = p.h_xx = p.h_yy = p.h_zz = p.h_xy = p.h_xz = p.h_yz = p.h_xxx = p.h_xxy = detail::zero4();
    s.constants.k_x = 2.0;
    s.constants.k_y = 0.0;
    s.constants.k_z = 0.0;
    auto coeff = [](double t) { return -0.5 + 2.0 * t - 0.5 * t * t; };
    s.oracle_y = [coeff](double t, double w) { return w * coeff(t); };
    s.oracle_z = [coeff](double t, double) { return coeff(t); };
    return s;
}

/// Y = W^3 + 6W(1 - t), Z = 3W^2 + 6(1 - t) for g = x^3, h = 3x on X = W, T = 1.
inline ModelSpec ex_cubic() {
    auto s = detail::brownian_base("ex_cubic");
    s.g = [](double x) { return x * x * x; };
    s.h = [](double, double x, double, double) { return 3.0 * x; };
    auto& p = s.partials;
    p.g_p = [](double x) { return 3.0 * x * x; };
    p.g_pp = [](double x) { return 6.0 * x; };
    p.h_x = [](double, double, double, double) { return 3.0; };
    p.h_y = p.h_z = p.h_xx = p.h_yy = p.h_zz = p.h_xy = p.h_xz = p.h_yz = p.h_xt = p.h_xxx = p.h_xxy =
        detail::zero4();
    s.constants.k_x = 3.0;
    s.constants.k_y = 0.0;
    s.constants.k_z = 0.0;
    s.oracle_y = [](double t, double w) { return w * w * w + 6.0 * w * (1.0 - t); };
    s.oracle_z = [](double t, double w) { return 3.0 * w * w + 6.0 * (1.0 - t); };
    return s;
}

/// Bounded terminal condition used by the quadratic preset, with its first two derivatives.
struct TerminalCondition {
    std::string name;
    TerminalFn g, g_p, g_pp;
};

inline TerminalCondition terminal_tanh() {
    return {"tanh", [](double x) { return std::tanh(x); },
            [](double x) {
                const double c = 1.0 / std::cosh(x);
                return c * c;
            },
            [](double x) {
                const double c = 1.0 / std::cosh(x);
                return -2.0 * std::tanh(x) * c * c;
            }};
}

/// g = log(1 + e^x): increasing, strictly convex, Lipschitz.
inline TerminalCondition terminal_softplus() {
    auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    return {"softplus", [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
            logistic, [logistic](double x) {
                const double p = logistic(x);
                return p * (1.0 - p);
            }};
}

inline TerminalCondition terminal_zero() {
    auto z = [](double) { return 0.0; };
    return {"zero", z, z, z};
}

/// h = z^2/2 on X = W, T = 1: Y_t = log E[e^{g(W_T)} | F_t], Z_t = E[g'(W_T) e^{g(W_T)} | F_t] / E[e^{g(W_T)} | F_t].
/// Oracles are Gauss-Hermite quadratures with `nodes` points.
inline ModelSpec ex_quad_exp(const TerminalCondition& tc = terminal_tanh(), int nodes = 96) {
    auto s = detail::brownian_base("ex_quad_exp");
    s.regime = Regime::quadratic;
    s.g = tc.g;
    s.h = [](double, double, double, double z) { return 0.5 * z * z; };
    auto& p = s.partials;
    p.g_p = tc.g_p;
    p.g_pp = tc.g_pp;
    p.h_z = [](double, double, double, double z) { return z; };
    p.h_zz = [](double, double, double, double) { return 1.0; };
    p.h_x = p.h_y = p.h_xx = p.h_yy = p.h_xy = p.h_xz = p.h_yz = p.h_xt = p.h_xxx = p.h_xxy = detail::zero4();
    s.constants.k_x = 0.0;
    s.constants.k_y = 0.0;
    s.constants.K = 0.5;
    s.constants.K_y = 0.0;
    s.constants.K_z = 1.0;
    const auto rule = numerics::gauss_hermite_normal(nodes);
    const double T = s.T;
    auto g = tc.g;
    auto gp = tc.g_p;
    s.oracle_y = [rule, g, T](double t, double w) {
        const double sd = std::sqrt(std::max(T - t, 0.0));
        return std::log(rule.integrate([&](double xi) { return std::exp(g(w + sd * xi)); }));
    };
    s.oracle_z = [rule, g, gp, T](double t, double w) {
        const double sd = std::sqrt(std::max(T - t, 0.0));
        const double num = rule.integrate([&](double xi) { return gp(w + sd * xi) * std::exp(g(w + sd * xi)); });
        const double den = rule.integrate([&](double xi) { return std::exp(g(w + sd * xi)); });
        return num / den;
    };
    return s;
}

/// Coefficients given as expression text (see Expression for the grammar).
struct ModelExpressions {
    std::string b = "0";
    std::string sigma = "1";
    std::string g = "x";
    std::string h = "0";
    /// Optional map X_t = f(t, w); uses variables t and w.
    std::optional<std::string> f;
    double T = 1.0;
    double X0 = 0.0;
    Regime regime = Regime::lipschitz;
};

/// Builds a ModelSpec whose partial derivatives are exact symbolic derivatives of the expressions.
/// b and sigma use (t, x); g uses x; h uses (t, x, y, z).
inline ModelSpec from_expressions(const ModelExpressions& e) {
    const auto b = Expression::parse(e.b, "tx");
    const auto sigma = Expression::parse(e.sigma, "tx");
    const auto g = Expression::parse(e.g, "x");
    const auto h = Expression::parse(e.h, "txyz");
    ModelSpec s;
    s.name = "custom";
    s.T = e.T;
    s.X0 = e.X0;
    s.regime = e.regime;
    auto ts = [](Expression ex) { return [ex](double t, double x) { return ex(t, x); }; };
    auto term = [](Expression ex) { return [ex](double x) { return ex(0.0, x); }; };
    auto drv = [](Expression ex) { return [ex](double t, double x, double y, double z) { return ex(t, x, y, z); }; };
    s.b = ts(b);
    s.sigma = ts(sigma);
    s.g = term(g);
    s.h = drv(h);
    auto& p = s.partials;
    const auto bx = b.derivative(Var::x);
    p.b_x = ts(bx);
    p.b_xx = ts(bx.derivative(Var::x));
    const auto sx = sigma.derivative(Var::x);
    const auto sxx = sx.derivative(Var::x);
    p.sigma_x = ts(sx);
    p.sigma_xx = ts(sxx);
    p.sigma_xxx = ts(sxx.derivative(Var::x));
    const auto gp = g.derivative(Var::x);
    p.g_p = term(gp);
    p.g_pp = term(gp.derivative(Var::x));
    const auto hx = h.derivative(Var::x), hy = h.derivative(Var::y), hz = h.derivative(Var::z);
    const auto hxx = hx.derivative(Var::x);
    p.h_x = drv(hx);
    p.h_y = drv(hy);
    p.h_z = drv(hz);
    p.h_xx = drv(hxx);
    p.h_yy = drv(hy.derivative(Var::y));
    p.h_zz = drv(hz.derivative(Var::z));
    p.h_xy = drv(hx.derivative(Var::y));
    p.h_xz = drv(hx.derivative(Var::z));
    p.h_yz = drv(hy.derivative(Var::z));
    p.h_xt = drv(hx.derivative(Var::t));
    p.h_xxx = drv(hxx.derivative(Var::x));
    p.h_xxy = drv(hxx.derivative(Var::y));
    if (e.f) {
        const auto f = Expression::parse(*e.f, "tw");
        const auto fw = f.derivative(Var::w);
        s.markovian_f = [f](double t, double w) { return f(t, 0.0, 0.0, 0.0, w); };
        p.f_w = [fw](double t, double w) { return fw(t, 0.0, 0.0, 0.0, w); };
        const auto fww = fw.derivative(Var::w);
        p.f_ww = [fww](double t, double w) { return fww(t, 0.0, 0.0, 0.0, w); };
    }
    return s;
}

/// Named preset lookup: ex_counter, ex_cubic, ex_quad_exp (g = tanh), custom (X = W, g = x, h = 0).
inline ModelSpec preset(std::string_view name) {
    if (name == "ex_counter") return ex_counter();
    if (name == "ex_cubic") return ex_cubic();
    if (name == "ex_quad_exp") return ex_quad_exp();
    if (name == "custom") {
        auto s = detail::brownian_base("custom");
        s.g = [](double x) { return x; };
        s.h = detail::zero4();
        s.partials.g_p = [](double) { return 1.0; };
        s.partials.g_pp = [](double) { return 0.0; };
        auto& p = s.partials;
        p.h_x = p.h_y = p.h_z = p.h_xx = p.h_yy = p.h_zz = p.h_xy = p.h_xz = p.h_yz = p.h_xt = p.h_xxx = p.h_xxy =
            detail::zero4();
        s.oracle_y = [](double, double w) { return w; };
        s.oracle_z = [](double, double) { return 1.0; };
        return s;
    }
    throw IdentifierError("unknown preset '" + std::string(name) + "'");
}

}  // namespace bsdens::model
