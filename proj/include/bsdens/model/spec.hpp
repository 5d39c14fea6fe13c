#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "bsdens/errors.hpp"

namespace bsdens::model {

using TimeSpaceFn = std::function<double(double t, double x)>;
using TerminalFn = std::function<double(double x)>;
using DriverFn = std::function<double(double t, double x, double y, double z)>;

enum class Regime { lipschitz, quadratic };

/// Optional analytic partial derivatives; empty members fall back to central differences.
struct Partials {
    TimeSpaceFn b_x, b_xx, sigma_x, sigma_xx, sigma_xxx;
    TerminalFn g_p, g_pp;
    DriverFn h_x, h_y, h_z, h_xx, h_yy, h_zz, h_xy, h_xz, h_yz, h_xt, h_xxx, h_xxy;
    TimeSpaceFn f_w, f_ww;
};

/// Declared structural constants; unset members are estimated on a sampling box when needed.
struct Constants {
    std::optional<double> k_b, k_sigma, k_x, k_y, k_z, c, K, K_y, K_z;
};

/// One-dimensional Markovian FBSDE
///   X_t = X0 + int b(s,X) ds + int sigma(s,X) dW,
///   Y_t = g(X_T) + int h(s,X,Y,Z) ds - int Z dW.
/// Immutable after construction; all callables must be pure.
struct ModelSpec {
    std::string name = "custom";
    TimeSpaceFn b = [](double, double) { return 0.0; };
    TimeSpaceFn sigma = [](double, double) { return 1.0; };
    TerminalFn g = [](double x) { return x; };
    DriverFn h = [](double, double, double, double) { return 0.0; };
    Partials partials;
    double T = 1.0;
    double X0 = 0.0;
    Regime regime = Regime::lipschitz;
    /// X_t = f(t, W_t) when set (assumption (M)).
    TimeSpaceFn markovian_f;
    Constants constants;
    /// Relative step of first-order central differences; order-k differences use fd_step^(3/(k+2)).
    double fd_step = 1e-5;
    /// Closed-form Y*(t, w), Z*(t, w) in terms of the driving Brownian value w, when known.
    TimeSpaceFn oracle_y, oracle_z;

    // --- partial derivatives: supplied or differenced ---------------------------------------------

    double b_x(double t, double x) const { return partials.b_x ? partials.b_x(t, x) : d1x(b, t, x); }
    double b_xx(double t, double x) const { return partials.b_xx ? partials.b_xx(t, x) : d2x(b, t, x); }
    double sigma_x(double t, double x) const {
        return partials.sigma_x ? partials.sigma_x(t, x) : d1x(sigma, t, x);
    }
    double sigma_xx(double t, double x) const {
        return partials.sigma_xx ? partials.sigma_xx(t, x) : d2x(sigma, t, x);
    }
    double sigma_xxx(double t, double x) const {
        return partials.sigma_xxx ? partials.sigma_xxx(t, x) : d3x(sigma, t, x);
    }
    double g_p(double x) const {
        if (partials.g_p) return partials.g_p(x);
        const double e = step(1, x);
        return (g(x + e) - g(x - e)) / (2.0 * e);
    }
    double g_pp(double x) const {
        if (partials.g_pp) return partials.g_pp(x);
        const double e = step(2, x);
        return (g(x + e) - 2.0 * g(x) + g(x - e)) / (e * e);
    }

    double h_x(double t, double x, double y, double z) const {
        return partials.h_x ? partials.h_x(t, x, y, z) : dh(h, 1, t, x, y, z);
    }
    double h_y(double t, double x, double y, double z) const {
        return partials.h_y ? partials.h_y(t, x, y, z) : dh(h, 2, t, x, y, z);
    }
    double h_z(double t, double x, double y, double z) const {
        return partials.h_z ? partials.h_z(t, x, y, z) : dh(h, 3, t, x, y, z);
    }
    double h_xx(double t, double x, double y, double z) const {
        return partials.h_xx ? partials.h_xx(t, x, y, z) : dh2(h, 1, 1, t, x, y, z);
    }
    double h_yy(double t, double x, double y, double z) const {
        return partials.h_yy ? partials.h_yy(t, x, y, z) : dh2(h, 2, 2, t, x, y, z);
    }
    double h_zz(double t, double x, double y, double z) const {
        return partials.h_zz ? partials.h_zz(t, x, y, z) : dh2(h, 3, 3, t, x, y, z);
    }
    double h_xy(double t, double x, double y, double z) const {
        return partials.h_xy ? partials.h_xy(t, x, y, z) : dh2(h, 1, 2, t, x, y, z);
    }
    double h_xz(double t, double x, double y, double z) const {
        return partials.h_xz ? partials.h_xz(t, x, y, z) : dh2(h, 1, 3, t, x, y, z);
    }
    double h_yz(double t, double x, double y, double z) const {
        return partials.h_yz ? partials.h_yz(t, x, y, z) : dh2(h, 2, 3, t, x, y, z);
    }
    double h_xt(double t, double x, double y, double z) const {
        return partials.h_xt ? partials.h_xt(t, x, y, z) : dh2(h, 1, 0, t, x, y, z);
    }
    double h_xxx(double t, double x, double y, double z) const {
        if (partials.h_xxx) return partials.h_xxx(t, x, y, z);
        const double e = step(3, x);
        auto f = [&](double xx) { return h(t, xx, y, z); };
        return (f(x + 2 * e) - 2 * f(x + e) + 2 * f(x - e) - f(x - 2 * e)) / (2 * e * e * e);
    }
    double h_xxy(double t, double x, double y, double z) const {
        if (partials.h_xxy) return partials.h_xxy(t, x, y, z);
        const double ey = step(3, y);
        const double ex = step(3, x);
        auto fxx = [&](double yy) {
            return (h(t, x + ex, yy, z) - 2.0 * h(t, x, yy, z) + h(t, x - ex, yy, z)) / (ex * ex);
        };
        return (fxx(y + ey) - fxx(y - ey)) / (2.0 * ey);
    }

    bool has_markovian_map() const { return static_cast<bool>(markovian_f); }
    double f(double t, double w) const {
        if (!markovian_f) throw PreconditionError("markovian map f is not declared for model '" + name + "'");
        return markovian_f(t, w);
    }
    double f_w(double t, double w) const {
        if (partials.f_w) return partials.f_w(t, w);
        const double e = step(1, w);
        return (f(t, w + e) - f(t, w - e)) / (2.0 * e);
    }
    double f_ww(double t, double w) const {
        if (partials.f_ww) return partials.f_ww(t, w);
        const double e = step(2, w);
        return (f(t, w + e) - 2.0 * f(t, w) + f(t, w - e)) / (e * e);
    }

    /// Central-difference step for a derivative of order k at point v.
    double step(int k, double v) const { return std::pow(fd_step, 3.0 / (k + 2)) * std::max(1.0, std::abs(v)); }

private:
    double d1x(const TimeSpaceFn& fn, double t, double x) const {
        const double e = step(1, x);
        return (fn(t, x + e) - fn(t, x - e)) / (2.0 * e);
    }
    double d2x(const TimeSpaceFn& fn, double t, double x) const {
        const double e = step(2, x);
        return (fn(t, x + e) - 2.0 * fn(t, x) + fn(t, x - e)) / (e * e);
    }
    double d3x(const TimeSpaceFn& fn, double t, double x) const {
        const double e = step(3, x);
        return (fn(t, x + 2 * e) - 2 * fn(t, x + e) + 2 * fn(t, x - e) - fn(t, x - 2 * e)) / (2 * e * e * e);
    }

    /// Driver argument index i, j: 0 = t, 1 = x, 2 = y, 3 = z.
    double dh(const DriverFn& fn, int i, double t, double x, double y, double z) const {
        double a[4] = {t, x, y, z};
        const double e = step(1, a[i]);
        double p[4] = {t, x, y, z}, m[4] = {t, x, y, z};
        p[i] += e;
        m[i] -= e;
        return (fn(p[0], p[1], p[2], p[3]) - fn(m[0], m[1], m[2], m[3])) / (2.0 * e);
    }

    double dh2(const DriverFn& fn, int i, int j, double t, double x, double y, double z) const {
        double a[4] = {t, x, y, z};
        if (i == j) {
            const double e = step(2, a[i]);
            double p[4] = {t, x, y, z}, m[4] = {t, x, y, z};
            p[i] += e;
            m[i] -= e;
            return (fn(p[0], p[1], p[2], p[3]) - 2.0 * fn(t, x, y, z) + fn(m[0], m[1], m[2], m[3])) / (e * e);
        }
        const double ei = step(2, a[i]), ej = step(2, a[j]);
        auto at = [&](double si, double sj) {
            double q[4] = {t, x, y, z};
            q[i] += si * ei;
            q[j] += sj * ej;
            return fn(q[0], q[1], q[2], q[3]);
        };
        return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * ei * ej);
    }
};

}  // namespace bsdens::model
