#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/numerics/quadrature.hpp"
#include "bsdens/numerics/special.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/tails/growth.hpp"

namespace bsdens::tails {

/// The map x -> v(t, x) at one time on grid nodes, with v' = dv. `fold` describes how it was made increasing.
struct MonotoneSlice {
    std::vector<double> x, v, dv;
    /// Orientation -1 means the input was decreasing and x was reflected.
    int orientation = 1;
    bool folded = false;
    /// Fold point c and v(c); the branch on `mirror_side` of c was replaced by 2 v(c) - v.
    double fold_x = 0.0, fold_v = 0.0;
    int mirror_side = 0;

    /// Increasing image of an original value v(x) at state x.
    double map(double x, double value) const {
        const double xr = orientation * x;
        if (!folded) return value;
        const bool mirrored = mirror_side < 0 ? xr < fold_x : xr > fold_x;
        return mirrored ? 2.0 * fold_v - value : value;
    }
};

namespace detail {

/// Cubic Hermite interpolation of (x, f, df) at q; q must lie inside the node range.
inline double hermite(std::span<const double> x, std::span<const double> f, std::span<const double> df, double q) {
    const auto it = std::upper_bound(x.begin(), x.end(), q);
    const std::size_t j = std::clamp<std::size_t>(it - x.begin(), 1, x.size() - 1) - 1;
    const double h = x[j + 1] - x[j], s = (q - x[j]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * f[j] + h10 * h * df[j] + h01 * f[j + 1] + h11 * h * df[j + 1];
}

inline double linear(std::span<const double> x, std::span<const double> f, double q) {
    const auto it = std::upper_bound(x.begin(), x.end(), q);
    const std::size_t j = std::clamp<std::size_t>(it - x.begin(), 1, x.size() - 1) - 1;
    const double w = (q - x[j]) / (x[j + 1] - x[j]);
    return (1 - w) * f[j] + w * f[j + 1];
}

}  // namespace detail

/// Increasing version of a slice. A decreasing slice is reflected in x; a slice whose derivative changes sign once
/// is folded at the sign change c: the branch on which v decreases is replaced by 2 v(c) - v, so that v' becomes |v'|.
/// More than one sign change raises PreconditionError.
inline MonotoneSlice monotone_restriction(std::vector<double> x, std::vector<double> v, std::vector<double> dv) {
    if (x.size() < 4 || v.size() != x.size() || dv.size() != x.size())
        throw PreconditionError("monotone_restriction: need at least four nodes with matching arrays");
    MonotoneSlice m;
    double scale = 0.0;
    for (double d : dv) scale = std::max(scale, std::abs(d));
    const double zero = 1e-12 * scale;
    auto sign = [zero](double d) { return d > zero ? 1 : (d < -zero ? -1 : 0); };
    std::vector<std::size_t> changes;
    int last = 0;
    std::size_t last_j = 0;
    for (std::size_t j = 0; j < dv.size(); ++j) {
        const int s = sign(dv[j]);
        if (s == 0) continue;
        if (last != 0 && s != last) changes.push_back(last_j);
        last = s;
        last_j = j;
    }
    if (changes.size() > 1)
        throw PreconditionError("monotone_restriction: v' changes sign " + std::to_string(changes.size()) +
                                " times, first near x = " + std::to_string(x[changes[0]]) + " and x = " +
                                std::to_string(x[changes[1]]));
    if (changes.empty()) {
        if (last < 0) {
            m.orientation = -1;
            std::reverse(x.begin(), x.end());
            std::reverse(v.begin(), v.end());
            std::reverse(dv.begin(), dv.end());
            for (auto& q : x) q = -q;
            for (auto& d : dv) d = -d;
        }
        m.x = std::move(x);
        m.v = std::move(v);
        m.dv = std::move(dv);
        return m;
    }
    // Sign change between node a (last signed node before) and the next signed node b.
    const std::size_t a = changes[0];
    std::size_t b = a + 1;
    while (sign(dv[b]) == 0) ++b;
    const double c = x[a] + (x[b] - x[a]) * dv[a] / (dv[a] - dv[b]);
    m.folded = true;
    m.fold_x = c;
    m.fold_v = detail::hermite(x, v, dv, c);
    m.mirror_side = dv[a] < 0 ? -1 : 1;  // v decreases left of a minimum, right of a maximum
    for (std::size_t j = 0; j < x.size(); ++j) {
        const bool mirrored = m.mirror_side < 0 ? x[j] < c : x[j] > c;
        if (mirrored) v[j] = 2.0 * m.fold_v - v[j];
        dv[j] = std::abs(dv[j]);
    }
    m.x = std::move(x);
    m.v = std::move(v);
    m.dv = std::move(dv);
    return m;
}

/// Growth rates of v, v' and the inverse v^{-1} on the slice, each on a two-decade window at the box edge.
struct EnvelopeRates {
    GrowthRates v, vp, vinv;
};

inline EnvelopeRates slice_rates(const MonotoneSlice& s, int n_pts = 4000) {
    const double X = std::min(-s.x.front(), s.x.back());
    if (!(X > 0.0)) throw PreconditionError("slice_rates: the box must contain a neighbourhood of 0");
    const double Y = std::min(-s.v.front(), s.v.back());
    if (!(Y > 0.0)) throw PreconditionError("slice_rates: the range of v must contain a neighbourhood of 0");
    EnvelopeRates r;
    auto v = [&s](double q) { return detail::hermite(s.x, s.v, s.dv, q); };
    auto dv = [&s](double q) { return detail::linear(s.x, s.dv, q); };
    std::vector<double> inv_slope(s.x.size());
    for (std::size_t j = 0; j < s.x.size(); ++j) inv_slope[j] = 1.0 / s.dv[j];
    auto vinv = [&](double y) { return detail::hermite(s.v, s.x, inv_slope, y); };
    r.v = growth_rate(v, X / 100.0, X, n_pts);
    r.vp = growth_rate(dv, X / 100.0, X, n_pts);
    r.vinv = growth_rate(vinv, Y / 100.0, Y, n_pts);
    return r;
}

/// delta_a = max(1, 2^a).
inline double delta_const(double a) { return std::max(1.0, std::exp2(a)); }

/// Xi_a = a Gamma((1 + a)/2) / (2 sqrt(pi)).
inline double xi_const(double a) { return a * numerics::gamma(0.5 * (1.0 + a)) / (2.0 * std::sqrt(std::numbers::pi)); }

/// mu(a) = integral of phi(z) / (1 + |z|^a) over the real line, by exp-sinh quadrature on the half line.
inline double mu_const(double a) {
    if (!(a > 0.0)) throw PreconditionError("mu_const: exponent must be positive");
    return 2.0 * numerics::exp_sinh([a](double z) { return numerics::normal_pdf(z) / (1.0 + std::pow(z, a)); });
}

/// D_a = max(1 + delta_a Xi_a + delta_a^2/2 (Xi_a + 1/(1+a))^2, 1/2 + delta_a/(1+a)).
inline double d_const(double a) {
    const double d = delta_const(a), xi = xi_const(a), w = xi + 1.0 / (1.0 + a);
    return std::max(1.0 + d * xi + 0.5 * d * d * w * w, 0.5 + d / (1.0 + a));
}

namespace detail {

/// Independent evaluations for the cross-checks: Gamma from Euler's integral, mu by adaptive Simpson.
inline double xi_by_euler_integral(double a) {
    const double s = 0.5 * (1.0 + a);
    const double g = numerics::exp_sinh([s](double u) { return std::exp(-u) * std::pow(u, s - 1.0); });
    return a * g / (2.0 * std::sqrt(std::numbers::pi));
}

inline double mu_by_simpson(double a) {
    // z = w^4 on [0, 1] removes the cusp of z^a at 0.
    auto inner = [a](double w) {
        const double z = w * w * w * w;
        return numerics::normal_pdf(z) / (1.0 + std::pow(z, a)) * 4.0 * w * w * w;
    };
    auto outer = [a](double z) { return numerics::normal_pdf(z) / (1.0 + std::pow(z, a)); };
    return 2.0 * (numerics::adaptive_simpson(inner, 0.0, 1.0, 1e-13, 50) +
                  numerics::adaptive_simpson(outer, 1.0, 40.0, 1e-13, 50));
}

}  // namespace detail

struct TailConstants {
    double t = 0.0;
    double eps = 0.0, eps_p = 0.0, alpha_tilde = 0.0;
    /// K used and the smallest K with 1/v' <= K (1 + |x|^alpha_tilde) on the nodes.
    double K = 0.0, K_fitted = 0.0;
    /// Rates entering the constants.
    double alpha_bar_v = 0.0, alpha_under_v = 0.0, alpha_bar_vp = 0.0, alpha_bar_vinv = 0.0;
    /// Sup constants C_{eps, f, alpha_bar_f} over the grid box at time t, for f = v, v', v^{-1}.
    double C_v = 0.0, C_vp = 0.0, C_vinv = 0.0;
    bool box_relative = true;
    /// a = alpha_bar_vp + eps.
    double a = 0.0;
    double delta_a = 0.0, delta_2a = 0.0, delta_2at = 0.0;
    double Xi = 0.0, D = 0.0, mu = 0.0;
    double M = 0.0, M_prime = 0.0;
    /// gamma = (alpha_bar_vp + eps)(alpha_bar_vinv + eps'); p = alpha_tilde (alpha_bar_vinv + eps').
    double gamma = 0.0, p = 0.0;
    /// Residuals of the cross-checks against independent evaluations.
    double xi_check = 0.0, mu_check = 0.0, delta_check = 0.0;
};

/// Constants of the density envelope at time t on an increasing slice.
/// K is fitted when not given; a given K below the fitted one raises PreconditionError.
inline TailConstants compute_constants(const MonotoneSlice& s, double t, double eps, double eps_p, double alpha_tilde,
                                       std::optional<double> K, const EnvelopeRates& rates) {
    if (!(t > 0.0)) throw PreconditionError("compute_constants: need t > 0");
    if (!(eps > 0.0) || !(eps_p > 0.0) || !(alpha_tilde > 0.0))
        throw PreconditionError("compute_constants: eps, eps' and alpha_tilde must be positive");
    for (std::size_t j = 0; j < s.x.size(); ++j)
        if (!(s.dv[j] > 0.0))
            throw PreconditionError("compute_constants: v' <= 0 at x = " + std::to_string(s.x[j]) +
                                    " (v' = " + std::to_string(s.dv[j]) + ")");
    for (const auto* r : {&rates.v, &rates.vp, &rates.vinv})
        if (!std::isfinite(r->alpha_bar)) throw PreconditionError("compute_constants: infinite growth rate");
    TailConstants c;
    c.t = t;
    c.eps = eps;
    c.eps_p = eps_p;
    c.alpha_tilde = alpha_tilde;
    c.alpha_bar_v = rates.v.alpha_bar;
    c.alpha_under_v = rates.v.alpha_under;
    c.alpha_bar_vp = rates.vp.alpha_bar;
    c.alpha_bar_vinv = rates.vinv.alpha_bar;
    for (std::size_t j = 0; j < s.x.size(); ++j) {
        const double ax = std::abs(s.x[j]), av = std::abs(s.v[j]);
        c.K_fitted = std::max(c.K_fitted, 1.0 / (s.dv[j] * (1.0 + std::pow(ax, alpha_tilde))));
        c.C_v = std::max(c.C_v, av / (1.0 + std::pow(ax, c.alpha_bar_v + eps)));
        c.C_vp = std::max(c.C_vp, s.dv[j] / (1.0 + std::pow(ax, c.alpha_bar_vp + eps)));
        c.C_vinv = std::max(c.C_vinv, ax / (1.0 + std::pow(av, c.alpha_bar_vinv + eps_p)));
    }
    if (K && *K < c.K_fitted * (1.0 - 1e-12))
        throw PreconditionError("compute_constants: K = " + std::to_string(*K) +
                                " violates 1/v' <= K(1+|x|^alpha_tilde); smallest admissible K is " +
                                std::to_string(c.K_fitted));
    c.K = K ? *K : c.K_fitted;
    c.a = c.alpha_bar_vp + eps;
    c.delta_a = delta_const(c.a);
    c.delta_2a = delta_const(2.0 * c.a);
    c.delta_2at = delta_const(2.0 * alpha_tilde);
    c.Xi = xi_const(c.a);
    c.D = d_const(c.a);
    c.mu = mu_const(alpha_tilde);
    c.M_prime = c.C_vp * c.C_vp * c.D * (1.0 + std::pow(c.C_vinv, 2.0 * c.a)) * c.delta_2a;
    c.M = c.mu / (c.K * c.K * (1.0 + std::pow(c.C_vinv, 2.0 * alpha_tilde) * c.delta_2at));
    c.gamma = c.a * (c.alpha_bar_vinv + eps_p);
    c.p = alpha_tilde * (c.alpha_bar_vinv + eps_p);
    c.xi_check = std::abs(c.Xi - detail::xi_by_euler_integral(c.a));
    c.mu_check = std::abs(c.mu - detail::mu_by_simpson(alpha_tilde));
    c.delta_check = std::abs(c.delta_a - std::exp(std::max(0.0, c.a * std::numbers::ln2)));
    return c;
}

struct EpsChoice {
    double eps = 0.0, eps_p = 0.0, gamma = 0.0;
    bool found = false;
    /// Every pair tried, in order, with its gamma.
    std::vector<EpsChoice> ladder;
};

/// Smallest (eps, eps') on the ladder, ordered by max then sum, with (alpha_bar_vp + eps)(alpha_bar_vinv + eps') < 1.
inline EpsChoice choose_eps(const EnvelopeRates& r, std::vector<double> ladder = {0.01, 0.02, 0.05, 0.1}) {
    std::vector<std::pair<double, double>> pairs;
    for (double a : ladder)
        for (double b : ladder) pairs.emplace_back(a, b);
    std::stable_sort(pairs.begin(), pairs.end(), [](auto l, auto rr) {
        const double ml = std::max(l.first, l.second), mr = std::max(rr.first, rr.second);
        return ml != mr ? ml < mr : l.first + l.second < rr.first + rr.second;
    });
    EpsChoice out;
    for (auto [e, ep] : pairs) {
        EpsChoice c;
        c.eps = e;
        c.eps_p = ep;
        c.gamma = (r.vp.alpha_bar + e) * (r.vinv.alpha_bar + ep);
        c.found = c.gamma < 1.0;
        out.ladder.push_back(c);
        if (c.found && !out.found) {
            out.eps = e;
            out.eps_p = ep;
            out.gamma = c.gamma;
            out.found = true;
        }
    }
    return out;
}

enum class EnvelopeForm { theorem, corollary };

inline const char* to_string(EnvelopeForm f) { return f == EnvelopeForm::theorem ? "theorem" : "corollary"; }

struct TailEnvelope {
    double t = 0.0;
    std::string target = "Z";
    EnvelopeForm form = EnvelopeForm::theorem;
    std::vector<double> y, upper, lower;
    /// Nodes evaluated in closed form (corollary region |y - E| > d0).
    std::vector<bool> closed_form;
    double mean = 0.0, mad = 0.0;
    double gamma = 0.0, p = 0.0;
    /// Exponents of the Gaussian-type bounds: p1 = 2(1 - gamma), p2 = p.
    double p1 = 0.0, p2 = 0.0;
    /// Distance d0 from the mean where the closed form starts, and y0 = max(|E - d0|, |E + d0|); NaN if none.
    double d0 = std::numeric_limits<double>::quiet_NaN();
    double y0 = std::numeric_limits<double>::quiet_NaN();
    bool degenerate = false;
};

namespace detail {

/// Composite 8-point Gauss-Legendre on [a, b] with 64 panels; the integrands are smooth power laws on each side of
/// their kink, so this is accurate to near rounding relative to the integral.
template <class F>
double panel_integral(F& f, double a, double b) {
    static const auto unit = numerics::gauss_legendre(8, 0.0, 1.0);
    const int panels = 64;
    const double h = (b - a) / panels;
    double acc = 0.0;
    for (int k = 0; k < panels; ++k)
        for (std::size_t q = 0; q < unit.nodes.size(); ++q) acc += unit.weights[q] * f(a + h * (k + unit.nodes[q]));
    return acc * h;
}

/// Integral over [0, d] of f, split at -E where the integrand has a kink.
template <class F>
double split_integral(F&& f, double d, double E) {
    const double k = -E;
    const double lo = std::min(0.0, d), hi = std::max(0.0, d);
    const double sgn = d >= 0 ? 1.0 : -1.0;
    if (k > lo && k < hi) return sgn * (panel_integral(f, lo, k) + panel_integral(f, k, hi));
    return sgn * panel_integral(f, lo, hi);
}

}  // namespace detail

/// Upper and lower density envelopes of P_t at the nodes y.
/// The theorem form integrates the exponents; the corollary form needs gamma < 1 and uses closed-form exponents for
/// |y - E| > d0, with d0 the first distance from which 1 + |x + E|^q <= 2|x|^q holds at all farther nodes for
/// q = 2 gamma and q = 2p, and the integral of x(1 + |x + E|^{2p}) up to d0 is at most d0^2 (1 + y0^{2p}).
inline TailEnvelope envelope(double t, const TailConstants& c, double mean, double mad, std::span<const double> y,
                             EnvelopeForm form) {
    if (form == EnvelopeForm::corollary && !(c.gamma < 1.0))
        throw PreconditionError("envelope: corollary form needs gamma < 1; gamma = " + std::to_string(c.gamma) +
                                " from alpha_bar_vp = " + std::to_string(c.alpha_bar_vp) +
                                " and alpha_bar_vinv = " + std::to_string(c.alpha_bar_vinv));
    if (!(c.alpha_bar_vp < c.alpha_under_v) && form == EnvelopeForm::corollary)
        throw PreconditionError("envelope: corollary form needs alpha_bar_vp < alpha_under_v");
    TailEnvelope e;
    e.t = t;
    e.form = form;
    e.mean = mean;
    e.mad = mad;
    e.gamma = c.gamma;
    e.p = c.p;
    e.p1 = 2.0 * (1.0 - c.gamma);
    e.p2 = c.p;
    e.y.assign(y.begin(), y.end());
    const std::size_t n = e.y.size();
    e.upper.assign(n, 0.0);
    e.lower.assign(n, 0.0);
    e.closed_form.assign(n, false);
    if (!(mad > 0.0)) {
        e.degenerate = true;
        return e;
    }
    const double E = mean, g2 = 2.0 * c.gamma, p2 = 2.0 * c.p;
    const double Mt = c.M * t, Mpt = c.M_prime * t;
    auto up_integrand = [&](double x) { return x / (Mpt * (1.0 + std::pow(std::abs(x + E), g2))); };
    auto lo_integrand = [&](double x) { return x * (1.0 + std::pow(std::abs(x + E), p2)) / Mt; };
    auto upper_pref = [&](double yy) { return mad / (2.0 * Mt) * (1.0 + std::pow(std::abs(yy), p2)); };
    auto lower_pref = [&](double yy) { return mad / (2.0 * Mpt) / (1.0 + std::pow(std::abs(yy), g2)); };
    for (std::size_t j = 0; j < n; ++j) {
        const double d = e.y[j] - E;
        e.upper[j] = upper_pref(e.y[j]) * std::exp(-detail::split_integral(up_integrand, d, E));
        e.lower[j] = lower_pref(e.y[j]) * std::exp(-detail::split_integral(lo_integrand, d, E));
    }
    if (form == EnvelopeForm::theorem) return e;

    std::vector<double> dist(n);
    for (std::size_t j = 0; j < n; ++j) dist[j] = std::abs(e.y[j] - E);
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    auto dominated = [E](double x, double q) { return 1.0 + std::pow(std::abs(x + E), q) <= 2.0 * std::pow(std::abs(x), q); };
    // ok_from[k]: the factor-2 inequalities hold at every sorted distance >= sorted[k], for x = +d and x = -d.
    std::vector<bool> ok_from(n + 1, true);
    for (std::size_t k = n; k-- > 0;) {
        const double dd = sorted[k];
        const bool here = dd > 0 && dominated(dd, g2) && dominated(dd, p2) && dominated(-dd, g2) &&
                          dominated(-dd, p2);
        ok_from[k] = ok_from[k + 1] && here;
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (!ok_from[k]) continue;
        const double d0 = sorted[k];
        const double y0 = std::max(std::abs(E - d0), std::abs(E + d0));
        const double I1 = std::max(detail::split_integral(lo_integrand, d0, E),
                                   detail::split_integral(lo_integrand, -d0, E)) * Mt;
        if (I1 <= d0 * d0 * (1.0 + std::pow(y0, p2))) {
            e.d0 = d0;
            e.y0 = y0;
            break;
        }
    }
    if (std::isnan(e.d0)) return e;
    const double d0 = e.d0, g = c.gamma, pp = c.p;
    for (std::size_t j = 0; j < n; ++j) {
        if (!(dist[j] > d0)) continue;
        e.closed_form[j] = true;
        const double up_exp = (std::pow(dist[j], 2.0 * (1.0 - g)) - std::pow(d0, 2.0 * (1.0 - g))) / (4.0 * (1.0 - g) * Mpt);
        const double lo_exp = (std::pow(dist[j], 2.0 * (pp + 1.0)) - std::pow(d0, 2.0 * (pp + 1.0))) / (Mt * (pp + 1.0)) +
                              d0 * d0 * (1.0 + std::pow(e.y0, p2)) / Mt;
        e.upper[j] = upper_pref(e.y[j]) * std::exp(-up_exp);
        e.lower[j] = lower_pref(e.y[j]) * std::exp(-lo_exp);
    }
    return e;
}

struct TailDomination {
    numerics::KernelDensity kde;
    double confidence = 0.99;
    /// Bonferroni critical value over the tested nodes.
    double z_crit = 0.0;
    std::size_t tested = 0;
    /// Largest (kde - z se) - upper over tested nodes, and its node; negative when dominated.
    double worst_excess = -std::numeric_limits<double>::infinity();
    double worst_y = std::numeric_limits<double>::quiet_NaN();
    bool holds = false;
};

/// Simultaneous one-sided test that the KDE of `sample` lies below the upper envelope. In the corollary form the
/// tested nodes are those with |y - E| > d0; the theorem form, or a corollary envelope without d0, tests every node.
inline TailDomination check_domination(const TailEnvelope& e, std::span<const double> sample,
                                       double confidence = 0.99) {
    TailDomination r;
    r.confidence = confidence;
    r.kde = numerics::gaussian_kde(sample, e.y);
    const bool all = e.form == EnvelopeForm::theorem || std::isnan(e.d0);
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < e.y.size(); ++j)
        if (all || std::abs(e.y[j] - e.mean) > e.d0) idx.push_back(j);
    r.tested = idx.size();
    if (idx.empty()) return r;
    r.z_crit = numerics::normal_quantile(1.0 - (1.0 - confidence) / static_cast<double>(idx.size()));
    for (std::size_t j : idx) {
        const double ex = r.kde.density[j] - r.z_crit * r.kde.std_error[j] - e.upper[j];
        if (ex > r.worst_excess) {
            r.worst_excess = ex;
            r.worst_y = e.y[j];
        }
    }
    r.holds = r.worst_excess <= 0.0;
    return r;
}

/// True when lower <= upper at every node; `worst` receives max(lower - upper).
inline bool envelope_ordered(const TailEnvelope& e, double* worst = nullptr) {
    double w = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < e.y.size(); ++j) w = std::max(w, e.lower[j] - e.upper[j]);
    if (worst) *worst = w;
    return w <= 0.0;
}

/// CSV with columns y, lower, upper, empirical_density, empirical_ci (half-width at the domination level).
inline void write_envelope_csv(std::ostream& os, const TailEnvelope& e, const TailDomination* dom = nullptr) {
    char buf[160];
    os << "y,lower,upper,empirical_density,empirical_ci\n";
    for (std::size_t j = 0; j < e.y.size(); ++j) {
        double f = std::numeric_limits<double>::quiet_NaN(), ci = f;
        if (dom && j < dom->kde.density.size()) {
            f = dom->kde.density[j];
            ci = (dom->z_crit > 0 ? dom->z_crit : 2.5758293035489) * dom->kde.std_error[j];
        }
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", e.y[j], e.lower[j], e.upper[j], f, ci);
        os << buf;
    }
}

}  // namespace bsdens::tails
