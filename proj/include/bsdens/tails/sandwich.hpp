#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/pde/grid.hpp"
#include "bsdens/tails/envelope.hpp"
#include "bsdens/tails/growth.hpp"

namespace bsdens::tails {

struct SandwichParams {
    double eps = 0.1, eps_p = 0.05;
    double C_lo = 0.0, C_hi = 0.0;
    double D_lo = 0.0, D_hi = 0.0;
    double B_lo = 0.0, B_hi = 0.0;
    double lambda = 1.0;
    /// Slack on pointwise bounds over solved grids, and on lattice growth rates.
    double grid_tol = 1e-3;
    double rate_tol = 0.05;
};

enum class SandwichVerdict { holds, fails, inapplicable };

inline const char* to_string(SandwichVerdict v) {
    switch (v) {
        case SandwichVerdict::holds: return "holds";
        case SandwichVerdict::fails: return "fails";
        case SandwichVerdict::inapplicable: return "inapplicable";
    }
    return "?";
}

struct SandwichItem {
    std::string label;
    double value = 0.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool holds = true;
    /// Worst node when the item is pointwise.
    double t = std::numeric_limits<double>::quiet_NaN();
    double x = std::numeric_limits<double>::quiet_NaN();
};

struct SandwichReport {
    SandwichVerdict verdict = SandwichVerdict::holds;
    std::vector<SandwichItem> hypotheses, conclusions;
    GrowthRates rates_u, rates_up, rates_upp;
    /// Smallest C~, C~1 >= 0 with C_lo(1+|x|^{1-eps}) - C~1 (T-t) <= u <= C_hi(1+|x|^{1+eps}) + C~ (T-t) on t < T.
    double C_tilde = 0.0, C_tilde1 = 0.0;
    /// Smallest C with |h_z| <= C(1 + |z|^lambda) on the sampled z-range.
    double C_hz = 0.0;
    std::string note;

    const SandwichItem* find(const std::string& label) const {
        for (const auto* v : {&hypotheses, &conclusions})
            for (const auto& it : *v)
                if (it.label == label) return &it;
        return nullptr;
    }
};

namespace detail {

/// Running minimum of a pointwise margin; the item holds while the margin is >= -tol.
struct PointwiseMin {
    SandwichItem item;
    double tol = 0.0;
    PointwiseMin(std::string label, double tol_) : tol(tol_) {
        item.label = std::move(label);
        item.value = std::numeric_limits<double>::infinity();
        item.lo = -tol_;
    }
    void add(double margin, double t, double x) {
        if (margin < item.value) {
            item.value = margin;
            item.t = t;
            item.x = x;
        }
    }
    SandwichItem done() {
        item.holds = item.value >= -tol;
        return item;
    }
};

inline std::vector<std::size_t> thin(std::size_t n, std::size_t keep) {
    std::vector<std::size_t> out;
    const std::size_t step = std::max<std::size_t>(1, n / keep);
    for (std::size_t i = 0; i < n; i += step) out.push_back(i);
    if (out.back() != n - 1) out.push_back(n - 1);
    return out;
}

inline SandwichItem band(std::string label, double value, double lo, double hi) {
    SandwichItem it;
    it.label = std::move(label);
    it.value = value;
    it.lo = lo;
    it.hi = hi;
    it.holds = value >= lo && value <= hi;
    return it;
}

}  // namespace detail

/// Checks the hypotheses of the growth sandwich on the grid nodes and evaluates every conclusion on the solved
/// grids u, u' and u''. All checks are box-relative. A failing hypothesis gives an inapplicable verdict; the
/// conclusions are still reported.
inline SandwichReport verify_growth_sandwich(const pde::GridSolution& u, const pde::GridSolution& up,
                                             const pde::GridSolution& upp, const model::ModelSpec& s,
                                             const SandwichParams& p) {
    if (u.n_x() != up.n_x() || u.n_x() != upp.n_x() || u.n_t() != up.n_t() || u.n_t() != upp.n_t())
        throw PreconditionError("verify_growth_sandwich: the three grids must share their nodes");
    SandwichReport r;
    const auto& xs = u.grid.x_nodes;
    const auto& ts = u.grid.t_nodes;
    const double T = s.T;
    auto hyp = [&](SandwichItem it) { r.hypotheses.push_back(std::move(it)); };

    hyp(detail::band("0 < eps' < eps < 1", p.eps_p > 0 && p.eps_p < p.eps && p.eps < 1 ? 1.0 : 0.0, 1.0, 1.0));
    hyp(detail::band("0 < lambda <= 1/eps - 1", p.lambda, std::nextafter(0.0, 1.0), 1.0 / p.eps - 1.0));

    const auto ti = detail::thin(ts.size(), 40), xi = detail::thin(xs.size(), 80);
    double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin, ymin = zmin, ymax = -zmin;
    for (std::size_t k = 0; k < up.u.size(); ++k) {
        zmin = std::min(zmin, up.u[k]);
        zmax = std::max(zmax, up.u[k]);
        ymin = std::min(ymin, u.u[k]);
        ymax = std::max(ymax, u.u[k]);
    }
    std::vector<double> zs(33), yv(5);
    for (int k = 0; k < 33; ++k) zs[k] = zmin + (zmax - zmin) * k / 32.0;
    for (int k = 0; k < 5; ++k) yv[k] = ymin + (ymax - ymin) * k / 4.0;

    {
        detail::PointwiseMin xw("X = W", 0.0);
        for (std::size_t i : ti)
            for (std::size_t j : xi)
                xw.add(-std::max(std::abs(s.b(ts[i], xs[j])), std::abs(s.sigma(ts[i], xs[j]) - 1.0)), ts[i], xs[j]);
        hyp(xw.done());
    }
    detail::PointwiseMin only_z("h depends on (t, z) only", 1e-12), neg("h <= 0", 1e-12),
        hzz_lo("h_zz >= 0", 1e-12), hzz_hi("h_zz < 1/(4 B_hi T)", 0.0);
    for (std::size_t i : ti)
        for (double z : zs) {
            const double t = ts[i];
            for (std::size_t j : detail::thin(xs.size(), 9))
                for (double y : yv) {
                    only_z.add(-std::max(std::abs(s.h_x(t, xs[j], y, z)), std::abs(s.h_y(t, xs[j], y, z))), t, xs[j]);
                    neg.add(-s.h(t, xs[j], y, z), t, xs[j]);
                }
            const double hzz = s.h_zz(t, 0.0, 0.0, z);
            // Driver items record z in the x slot of the witness.
            hzz_lo.add(hzz, t, z);
            hzz_hi.add(p.B_hi > 0 ? 1.0 / (4.0 * p.B_hi * T) - hzz : -std::numeric_limits<double>::infinity(), t, z);
            r.C_hz = std::max(r.C_hz, std::abs(s.h_z(t, 0.0, 0.0, z)) / (1.0 + std::pow(std::abs(z), p.lambda)));
        }
    hyp(only_z.done());
    hyp(neg.done());
    hyp(hzz_lo.done());
    {
        auto it = hzz_hi.done();
        it.holds = it.value > 0.0;
        hyp(it);
    }
    detail::PointwiseMin g_lo("g >= C_lo(1+|x|^{1-eps})", 1e-12), g_hi("g <= C_hi(1+|x|^{1+eps})", 1e-12),
        gp_lo("g' >= D_lo(1+|x|^eps')", 1e-12), gp_hi("g' <= D_hi(1+|x|^eps)", 1e-12), gpp_lo("g'' >= B_lo", 1e-12),
        gpp_hi("g'' <= B_hi", 1e-12);
    for (double x : xs) {
        const double ax = std::abs(x), g = s.g(x), gp = s.g_p(x), gpp = s.g_pp(x);
        g_lo.add(g - p.C_lo * (1.0 + std::pow(ax, 1.0 - p.eps)), T, x);
        g_hi.add(p.C_hi * (1.0 + std::pow(ax, 1.0 + p.eps)) - g, T, x);
        gp_lo.add(gp - p.D_lo * (1.0 + std::pow(ax, p.eps_p)), T, x);
        gp_hi.add(p.D_hi * (1.0 + std::pow(ax, p.eps)) - gp, T, x);
        gpp_lo.add(gpp - p.B_lo, T, x);
        gpp_hi.add(p.B_hi - gpp, T, x);
    }
    for (auto* m : {&g_lo, &g_hi, &gp_lo, &gp_hi, &gpp_lo, &gpp_hi}) hyp(m->done());
    {
        auto it = detail::band("|h_z| <= C(1+|z|^lambda)", r.C_hz, 0.0, std::numeric_limits<double>::infinity());
        hyp(it);
    }

    auto row_fn = [&](const pde::GridSolution& g) {
        std::vector<double> v(xs.size());
        for (std::size_t j = 0; j < xs.size(); ++j) v[j] = g.u[g.idx(0, j)];
        return [v, &xs](double q) { return detail::linear(xs, v, q); };
    };
    const double X = std::min(-xs.front(), xs.back());
    if (!(X > 0.0)) throw PreconditionError("verify_growth_sandwich: the box must contain 0");
    // A row vanishing on the window is bounded by every power: both rates are 0.
    auto rate = [&](const pde::GridSolution& g) {
        try {
            return growth_rate(row_fn(g), X / 100.0, X);
        } catch (const PreconditionError&) {
            GrowthRates z;
            z.x_lo = X / 100.0;
            z.x_hi = X;
            return z;
        }
    };
    r.rates_u = rate(u);
    r.rates_up = rate(up);
    r.rates_upp = rate(upp);
    auto& c = r.conclusions;
    c.push_back(detail::band("alpha_under_u in [1-eps, 1+eps]", r.rates_u.alpha_under, 1.0 - p.eps - p.rate_tol,
                             1.0 + p.eps + p.rate_tol));
    c.push_back(detail::band("alpha_bar_u' in [eps', eps]", r.rates_up.alpha_bar, p.eps_p - p.rate_tol,
                             p.eps + p.rate_tol));
    c.push_back(detail::band("alpha_under_u' in [eps', eps]", r.rates_up.alpha_under, p.eps_p - p.rate_tol,
                             p.eps + p.rate_tol));
    c.push_back(detail::band("alpha_bar_u'' = 0", r.rates_upp.alpha_bar, 0.0, p.rate_tol));
    detail::PointwiseMin up_lo("u' >= D_lo", p.grid_tol), upp_lo("u'' >= B_lo", p.grid_tol);
    // Edge nodes carry the boundary closure rather than the PDE, so pointwise conclusions use interior nodes.
    for (std::size_t i = 0; i < ts.size(); ++i)
        for (std::size_t j = 1; j + 1 < xs.size(); ++j) {
            up_lo.add(up.u[up.idx(i, j)] - p.D_lo, ts[i], xs[j]);
            upp_lo.add(upp.u[upp.idx(i, j)] - p.B_lo, ts[i], xs[j]);
            if (ts[i] < T) {
                const double ax = std::abs(xs[j]), tau = T - ts[i], w = u.u[u.idx(i, j)];
                r.C_tilde = std::max(r.C_tilde, (w - p.C_hi * (1.0 + std::pow(ax, 1.0 + p.eps))) / tau);
                r.C_tilde1 = std::max(r.C_tilde1, (p.C_lo * (1.0 + std::pow(ax, 1.0 - p.eps)) - w) / tau);
            }
        }
    c.push_back(up_lo.done());
    c.push_back(upp_lo.done());

    for (const auto& h : r.hypotheses)
        if (!h.holds) {
            r.verdict = SandwichVerdict::inapplicable;
            r.note = "hypothesis '" + h.label + "' fails";
            if (std::isfinite(h.x)) r.note += " at t = " + std::to_string(h.t) + ", x = " + std::to_string(h.x);
            return r;
        }
    for (const auto& it : c)
        if (!it.holds) {
            r.verdict = SandwichVerdict::fails;
            r.note = "conclusion '" + it.label + "' fails";
            return r;
        }
    return r;
}

}  // namespace bsdens::tails
