#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/numerics/quadrature.hpp"

namespace bsdens::tails {

/// Rates of growth at infinity: alpha_bar = inf{a : limsup |f|/|x|^a < inf}, alpha_under = inf{a : liminf ... < inf}.
/// Both are lattice values (step `lattice`); +inf when no trial exponent up to the search cap bounds f.
struct GrowthRates {
    double alpha_bar = 0.0;
    double alpha_under = 0.0;
    /// Per branch: index 0 is x -> +inf, index 1 is x -> -inf; NaN when the branch vanishes on the window.
    double branch_bar[2] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double branch_under[2] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    /// Window in |x|; log_window is the same in log|x|.
    double x_lo = 0.0, x_hi = 0.0;
    double log_lo = 0.0, log_hi = 0.0;
    int n_pts = 0;
    int decades = 0;
    double lattice = 0.01;
    /// Least-squares slope and R^2 of the decade maxima of log|f| against log|x|, pooled over branches.
    double regression_slope = 0.0;
    double regression_r2 = 0.0;
};

/// ln|f| as a function of L = ln|x| on branch side = +1 or -1; -inf where f vanishes.
using LogBranch = std::function<double(double L, int side)>;

namespace detail {

struct DecadeTable {
    std::vector<std::vector<double>> L, F;  // per decade
    std::vector<bool> upper;                 // decade belongs to the upper half of the window
};

inline DecadeTable tabulate(const LogBranch& lf, int side, double L_lo, double L_hi, int n) {
    const double width = std::log(10.0);
    const int D = static_cast<int>(std::floor((L_hi - L_lo) / width + 1e-9));
    DecadeTable tab;
    tab.L.resize(D);
    tab.F.resize(D);
    for (int i = 0; i < n; ++i) {
        const double L = L_lo + (L_hi - L_lo) * i / (n - 1);
        const double F = lf(L, side);
        if (std::isnan(F)) throw EvaluationError("growth_rate: log|f| is NaN", 0.0, side * std::exp(L));
        if (F == std::numeric_limits<double>::infinity())
            throw EvaluationError("growth_rate: f is not finite", 0.0, side * std::exp(L));
        if (F == -std::numeric_limits<double>::infinity()) continue;
        const int d = std::min(D - 1, static_cast<int>(std::floor((L - L_lo) / width)));
        tab.L[d].push_back(L);
        tab.F[d].push_back(F);
    }
    // Split at the geometric mean of the log-window, so both halves span comparable scales.
    const double split = L_lo > 0.0 ? std::sqrt(L_lo * L_hi) : 0.5 * (L_lo + L_hi);
    tab.upper.resize(D);
    int n_up = 0;
    for (int d = 0; d < D; ++d) {
        const double centre = L_lo + (d + 0.5) * width;
        tab.upper[d] = centre > split;
        n_up += tab.upper[d] ? 1 : 0;
    }
    if (n_up == 0 || n_up == D)
        for (int d = 0; d < D; ++d) tab.upper[d] = 2 * d >= D;
    return tab;
}

/// max over the decade of (ln|f| - a L); -inf for an empty decade.
inline double decade_sup(const DecadeTable& tab, int d, double a) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tab.L[d].size(); ++i) m = std::max(m, tab.F[d][i] - a * tab.L[d][i]);
    return m;
}

/// For limsup (use_max) or liminf: true when the decade envelope of |f|/|x|^a still grows from the lower to the
/// upper half of the window.
inline bool still_grows(const DecadeTable& tab, double a, bool use_max) {
    const double inf = std::numeric_limits<double>::infinity();
    double up = use_max ? -inf : inf, lo = use_max ? -inf : inf;
    for (std::size_t d = 0; d < tab.L.size(); ++d) {
        const double A = decade_sup(tab, static_cast<int>(d), a);
        if (!std::isfinite(A)) continue;
        double& acc = tab.upper[d] ? up : lo;
        acc = use_max ? std::max(acc, A) : std::min(acc, A);
    }
    if (!std::isfinite(up) || !std::isfinite(lo)) return false;
    return up - lo > 1e-9 * (1.0 + std::abs(lo));
}

/// Smallest lattice exponent at which the envelope stops growing; binary search since growth is monotone in a.
inline double smallest_bounding(const DecadeTable& tab, bool use_max, double lattice, double cap) {
    long lo = 0, hi = static_cast<long>(std::llround(cap / lattice));
    if (!still_grows(tab, 0.0, use_max)) return 0.0;
    if (still_grows(tab, hi * lattice, use_max)) return std::numeric_limits<double>::infinity();
    while (hi - lo > 1) {
        const long mid = (lo + hi) / 2;
        (still_grows(tab, mid * lattice, use_max) ? lo : hi) = mid;
    }
    return hi * lattice;
}

}  // namespace detail

/// Growth rates from ln|f| given on the log-window [L_lo, L_hi] (needs at least two decades).
inline GrowthRates growth_rate_log(const LogBranch& log_abs, double L_lo, double L_hi, int n_pts = 4000,
                                   double lattice = 0.01, double cap = 50.0) {
    if (!(L_hi - L_lo >= 2.0 * std::log(10.0) - 1e-12))
        throw PreconditionError("growth_rate: window must span at least two decades");
    if (n_pts < 40) throw PreconditionError("growth_rate: need at least 40 sample points");
    GrowthRates r;
    r.log_lo = L_lo;
    r.log_hi = L_hi;
    r.x_lo = std::exp(L_lo);
    r.x_hi = std::exp(L_hi);
    r.n_pts = n_pts;
    r.lattice = lattice;
    double bar = -1.0, under = std::numeric_limits<double>::infinity();
    std::vector<double> rl, rf;
    for (int b = 0; b < 2; ++b) {
        const int side = b == 0 ? 1 : -1;
        const auto tab = detail::tabulate(log_abs, side, L_lo, L_hi, n_pts);
        r.decades = static_cast<int>(tab.L.size());
        bool any = false;
        for (std::size_t d = 0; d < tab.L.size(); ++d) {
            if (tab.L[d].empty()) continue;
            any = true;
            const auto it = std::max_element(tab.F[d].begin(), tab.F[d].end());
            rl.push_back(tab.L[d][it - tab.F[d].begin()]);
            rf.push_back(*it);
        }
        if (!any) continue;
        r.branch_bar[b] = detail::smallest_bounding(tab, true, lattice, cap);
        r.branch_under[b] = detail::smallest_bounding(tab, false, lattice, cap);
        bar = std::max(bar, r.branch_bar[b]);
        under = std::min(under, r.branch_under[b]);
    }
    if (bar < 0.0) throw PreconditionError("growth_rate: undefined rate, f vanishes on the whole window");
    r.alpha_bar = bar;
    r.alpha_under = under;
    if (rl.size() >= 2) {
        const double n = static_cast<double>(rl.size());
        double ml = 0, mf = 0;
        for (std::size_t i = 0; i < rl.size(); ++i) ml += rl[i] / n, mf += rf[i] / n;
        double sll = 0, slf = 0, sff = 0;
        for (std::size_t i = 0; i < rl.size(); ++i) {
            sll += (rl[i] - ml) * (rl[i] - ml);
            slf += (rl[i] - ml) * (rf[i] - mf);
            sff += (rf[i] - mf) * (rf[i] - mf);
        }
        r.regression_slope = sll > 0 ? slf / sll : 0.0;
        r.regression_r2 = sll > 0 && sff > 0 ? slf * slf / (sll * sff) : 1.0;
    }
    return r;
}

/// Growth rates of f at +-infinity sampled log-uniformly on |x| in [x_lo, x_hi] on both branches.
inline GrowthRates growth_rate(const std::function<double(double)>& f, double x_lo, double x_hi, int n_pts = 4000,
                               double lattice = 0.01) {
    if (!(x_lo > 0.0) || !(x_hi / x_lo >= 100.0 * (1.0 - 1e-12)))
        throw PreconditionError("growth_rate: window needs x_lo > 0 and x_hi / x_lo >= 100");
    auto lf = [&f](double L, int side) {
        const double v = f(side * std::exp(L));
        if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(std::abs(v));
    };
    auto r = growth_rate_log(lf, std::log(x_lo), std::log(x_hi), n_pts, lattice);
    r.x_lo = x_lo;
    r.x_hi = x_hi;
    return r;
}

/// Upper bound 1/(alpha_under - eta) on the upper rate of the inverse function.
inline double inverse_growth_bound(double alpha_under, double eta) {
    if (!(eta > 0.0) || !(eta < alpha_under))
        throw PreconditionError("inverse_growth_bound: need 0 < eta < alpha_under");
    return 1.0 / (alpha_under - eta);
}

/// Inverse of an increasing function by bracketed bisection; the bracket doubles until it contains y.
inline double invert_increasing(const std::function<double(double)>& f, double y, double tol = 1e-12) {
    double lo = -1.0, hi = 1.0;
    for (int i = 0; f(lo) > y; ++i) {
        if (i > 2000) throw EvaluationError("invert_increasing: no lower bracket", 0.0, lo);
        lo *= 2.0;
    }
    for (int i = 0; f(hi) < y; ++i) {
        if (i > 2000) throw EvaluationError("invert_increasing: no upper bracket", 0.0, hi);
        hi *= 2.0;
    }
    for (int i = 0; i < 400 && hi - lo > tol * std::max(1.0, std::abs(lo) + std::abs(hi)); ++i) {
        const double m = 0.5 * (lo + hi);
        (f(m) < y ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

struct RegularVariationReport {
    double beta = 0.0;
    /// Karamata ratio x f'(x) / (f(x) - f(x0)) at the window edge, per branch (+x_hi, -x_hi).
    double ratio[2] = {0.0, 0.0};
    double ratio_error = 0.0;  // max over branches of |ratio - (beta + 1)|
    bool ratio_ok = false;
    GrowthRates rates_f, rates_fp;
    /// alpha_bar_f = alpha_under_f = alpha_bar_f' + 1 = alpha_under_f' + 1 within rate_tol.
    bool rates_ok = false;
    bool holds = false;
    std::string note;
};

namespace detail {

inline void settle(RegularVariationReport& r, double ratio_tol, double rate_tol) {
    const double b1 = r.beta + 1.0;
    r.ratio_error = std::max(std::abs(r.ratio[0] - b1), std::abs(r.ratio[1] - b1));
    r.ratio_ok = r.ratio_error <= ratio_tol * b1;
    const auto& f = r.rates_f;
    const auto& p = r.rates_fp;
    auto near = [rate_tol](double a, double b) { return std::abs(a - b) <= rate_tol; };
    r.rates_ok = near(f.alpha_bar, f.alpha_under) && near(f.alpha_bar, p.alpha_bar + 1.0) &&
                 near(f.alpha_under, p.alpha_under + 1.0) && near(f.alpha_bar, b1);
    r.holds = r.ratio_ok && r.rates_ok;
    if (!near(f.alpha_bar, f.alpha_under)) r.note = "upper and lower growth rates of f differ";
    else if (!r.rates_ok) r.note = "growth rates of f and f' are not offset by one";
    else if (!r.ratio_ok) r.note = "Karamata ratio does not approach beta + 1";
}

}  // namespace detail

/// Regular-variation check for an index-beta derivative fprime, positive on the window tails.
/// f(x) - f(x0) is integrated from fprime by Gauss-Legendre panels on a log-grid; the growth comparison uses
/// |f(x) - f(+-x0)| and |fprime| on [x_lo, x_hi]. ratio_tol is relative to beta + 1.
inline RegularVariationReport regular_variation_check(const std::function<double(double)>& fprime, double beta,
                                                      double x_lo, double x_hi, double x0 = 1.0, int n_pts = 4000,
                                                      double ratio_tol = 1e-3, double rate_tol = 0.05) {
    if (!(x0 > 0.0) || !(x0 <= x_lo)) throw PreconditionError("regular_variation_check: need 0 < x0 <= x_lo");
    RegularVariationReport r;
    r.beta = beta;
    // Primitive from +-x0 on a log-grid covering [x0, x_hi].
    const int n = std::max(n_pts, 400);
    const double L0 = std::log(x0), L1 = std::log(x_hi);
    const auto unit = numerics::gauss_legendre(8, 0.0, 1.0);
    std::vector<double> L(n), prim[2];
    for (int b = 0; b < 2; ++b) {
        const double side = b == 0 ? 1.0 : -1.0;
        prim[b].assign(n, 0.0);
        for (int i = 0; i < n; ++i) L[i] = L0 + (L1 - L0) * i / (n - 1);
        for (int i = 1; i < n; ++i) {
            const double a = std::exp(L[i - 1]), c = std::exp(L[i]);
            double acc = 0.0;
            for (std::size_t q = 0; q < unit.nodes.size(); ++q) {
                const double x = a + (c - a) * unit.nodes[q];
                acc += unit.weights[q] * fprime(side * x);
            }
            prim[b][i] = prim[b][i - 1] + side * (c - a) * acc;
        }
        const double xe = side * x_hi;
        r.ratio[b] = xe * fprime(xe) / prim[b][n - 1];
    }
    auto f_minus_f0 = [&](double x) {
        const int b = x >= 0 ? 0 : 1;
        const double Lx = std::log(std::abs(x));
        const double pos = (Lx - L0) / (L1 - L0) * (n - 1);
        const int i = std::clamp(static_cast<int>(pos), 0, n - 2);
        const double w = std::clamp(pos - i, 0.0, 1.0);
        return (1.0 - w) * prim[b][i] + w * prim[b][i + 1];
    };
    r.rates_f = growth_rate(f_minus_f0, x_lo, x_hi, n_pts);
    r.rates_fp = growth_rate(fprime, x_lo, x_hi, n_pts);
    detail::settle(r, ratio_tol, rate_tol);
    return r;
}

/// Log-space variant for functions too large to evaluate directly: log_f and log_fp give ln|f| and ln|f'| at
/// L = ln|x|; f(x0) is taken as negligible at the window edge.
inline RegularVariationReport regular_variation_check_log(const LogBranch& log_f, const LogBranch& log_fp,
                                                          double beta, double L_lo, double L_hi, int n_pts = 4000,
                                                          double ratio_tol = 1e-3, double rate_tol = 0.05) {
    RegularVariationReport r;
    r.beta = beta;
    for (int b = 0; b < 2; ++b) {
        const int side = b == 0 ? 1 : -1;
        r.ratio[b] = std::exp(L_hi + log_fp(L_hi, side) - log_f(L_hi, side));
    }
    r.rates_f = growth_rate_log(log_f, L_lo, L_hi, n_pts);
    r.rates_fp = growth_rate_log(log_fp, L_lo, L_hi, n_pts);
    detail::settle(r, ratio_tol, rate_tol);
    return r;
}

}  // namespace bsdens::tails
