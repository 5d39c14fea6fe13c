#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "bsdens/criteria/core.hpp"

namespace bsdens::criteria {

namespace detail {

using model::SamplePoint;

inline void need_time(const model::ModelSpec& s, double t) {
    if (!(t > 0.0) || t > s.T + 1e-12) throw PreconditionError("criteria: t must lie in (0, T]");
}

inline CriterionReport start(const char* id, double t, const IntervalSet& A) {
    CriterionReport r;
    r.id = id;
    r.t = t;
    r.A = A;
    return r;
}

inline void record(CriterionReport& r, const std::string& key, const Extremum& e) {
    r.scalars[key] = e.value;
    r.grids[key] = e.grid;
}

/// Declared constant or the sup of |fn| on the box.
inline double constant_or_sup(const std::optional<double>& declared, const model::SampleBox& box, bool yz,
                              const PointFn& fn, const char* label) {
    if (declared) return *declared;
    return model::detail::sup_abs(box, yz, yz, fn, label).value;
}

/// Empty A-restricted grid means A misses the box: the report is inapplicable.
inline bool a_misses_box(CriterionReport& r, const GridPair& g) {
    if (!g.full.x.empty()) return false;
    r.verdict = CriterionVerdict::inapplicable;
    r.note += "A does not meet the extremization box; ";
    return true;
}

/// Minimal sign margin of sense * fn over the grid (equality conditions use -|fn|).
inline Extremum sign_margin(const Grid& g, int sense, bool equality, const PointFn& fn, const char* label) {
    return scan(g, true, [&](const SamplePoint& p) { return equality ? -std::abs(fn(p)) : sense * fn(p); }, label);
}

inline Line structural(const std::string& label, const Extremum& e, double tol) {
    Line l;
    l.label = label;
    l.value = e.value;
    l.tol = tol;
    return l;
}

inline double lead_term(double g, double K, double T) { return g * std::exp(-sgn(g) * K * T); }

}  // namespace detail

/// (H+) / (H-): first-order conditions for Y_t under (L), K = k_b + k_y + k_sigma k_z.
inline CriterionPair first_order_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                                       const CriteriaOptions& o = {}) {
    using namespace detail;
    need_time(s, t);
    CriterionPair out{start("H+", t, A), start("H-", t, A)};
    if (s.regime != model::Regime::lipschitz) {
        for (auto* r : {&out.plus, &out.minus}) r->note = "(L) is not declared: the model is in the quadratic regime; ";
        return out;
    }
    const auto gx = make_grids(o, 0.0, 0.0, 1, false, false), gA = make_grids(o, 0.0, 0.0, 1, false, false, &A);
    const auto gh = make_grids(o, t, s.T, o.n_s, true, true);
    const PointFn gp = [&](const SamplePoint& p) { return s.g_p(p.x); };
    const PointFn hx = [&](const SamplePoint& p) { return s.h_x(p.t, p.x, p.y, p.z); };
    auto box = o.box;
    const double kb = constant_or_sup(s.constants.k_b, box, false, [&](const SamplePoint& p) { return s.b_x(p.t, p.x); }, "b_x");
    const double ks = constant_or_sup(s.constants.k_sigma, box, false,
                                      [&](const SamplePoint& p) { return s.sigma_x(p.t, p.x); }, "sigma_x");
    const double ky = constant_or_sup(s.constants.k_y, box, true,
                                      [&](const SamplePoint& p) { return s.h_y(p.t, p.x, p.y, p.z); }, "h_y");
    const double kz = constant_or_sup(s.constants.k_z, box, true,
                                      [&](const SamplePoint& p) { return s.h_z(p.t, p.x, p.y, p.z); }, "h_z");
    const double K = kb + ky + ks * kz;
    auto slice = [&](bool minimize) {
        return [&, minimize](double sv) {
            Grid g = gh.full;
            g.t = {sv};
            return scan(g, minimize, hx, "h_x").value;
        };
    };

    for (int side : {+1, -1}) {
        CriterionReport& r = side > 0 ? out.plus : out.minus;
        const bool lo = side > 0;
        r.scalars["K"] = K;
        if (a_misses_box(r, gA)) continue;
        const auto g = extremum(gx, o, lo, gp, "g'"), gAe = extremum(gA, o, lo, gp, "g'");
        const auto h = extremum(gh, o, lo, hx, "h_x");
        bool sign_constant = true;
        const double I = sign_weighted_integral(slice(lo), lo, t, s.T, K, false, o.n_quad, &sign_constant);
        record(r, lo ? "g_lo" : "g_hi", g);
        record(r, lo ? "g_lo_A" : "g_hi_A", gAe);
        record(r, lo ? "h_lo" : "h_hi", h);
        r.scalars["time_integral"] = I;
        r.grids["time_integral"] = sign_constant ? "closed form" : std::to_string(o.n_quad) + "-node Gauss-Legendre";
        const bool exact = g.constant && gAe.constant && h.constant;
        const double tol = exact ? o.res_analytic : o.res_grid;
        r.lines.push_back({"line 1", lead_term(g.value, K, s.T) + h.value * I, false, side, tol, g.unbounded || h.unbounded});
        r.lines.push_back({"line 2 (A)", lead_term(gAe.value, K, s.T) + h.value * I, true, side, tol,
                           gAe.unbounded || h.unbounded});
        r.witnesses.push_back({lo ? "argmin g'" : "argmax g'", 0.0, g.arg.x, 0, 0, g.value});
        r.witnesses.push_back({lo ? "argmin h_x" : "argmax h_x", h.arg.t, h.arg.x, h.arg.y, h.arg.z, h.value});
        attach_hit(r, s, o);
        settle(r);
    }
    return out;
}

/// h~ of the corrected second-order conditions, for h independent of z (z is the value of Z_s):
///   -(h_xt + b h_xx - h h_xy + (sigma^2 h_xxx + 2 z sigma h_xxy + z^2 h_xyy) / 2)
///   - ((h_y + b_x) h_x + sigma sigma_x h_xx + z sigma_x h_xy).
inline double h_tilde(const model::ModelSpec& s, double t, double x, double y, double z) {
    const double sg = s.sigma(t, x), sx = s.sigma_x(t, x), b = s.b(t, x), bx = s.b_x(t, x);
    const double hxx = s.h_xx(t, x, y, z), hxy = s.h_xy(t, x, y, z);
    const double e = s.step(1, y);
    const double hxyy = (s.h_xy(t, x, y + e, z) - s.h_xy(t, x, y - e, z)) / (2.0 * e);
    const double a1 = s.h_xt(t, x, y, z) + b * hxx - s.h(t, x, y, z) * hxy +
                      0.5 * (sg * sg * s.h_xxx(t, x, y, z) + 2.0 * z * sg * s.h_xxy(t, x, y, z) + z * z * hxyy);
    const double a2 = (s.h_y(t, x, y, z) + bx) * s.h_x(t, x, y, z) + sg * sx * hxx + z * sx * hxy;
    return -a1 - a2;
}

/// (H~+) / (H~-): corrected second-order conditions for Y_t with K = k_y + k_b and the (T - s) weight.
inline CriterionPair second_order_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                                        const CriteriaOptions& o = {}) {
    using namespace detail;
    need_time(s, t);
    CriterionPair out{start("H~+", t, A), start("H~-", t, A)};
    if (s.regime != model::Regime::lipschitz) {
        for (auto* r : {&out.plus, &out.minus}) r->note = "(L) is not declared: the model is in the quadratic regime; ";
        return out;
    }
    const auto gh = make_grids(o, t, s.T, o.n_s, true, true);
    for (double tt : gh.full.t)
        for (double x : gh.full.x)
            for (double y : gh.full.y)
                for (double z : gh.full.z)
                    if (std::abs(s.h_z(tt, x, y, z)) > 1e-10)
                        throw PreconditionError("second_order_check: h depends on z (h_z = " + io::fmt(s.h_z(tt, x, y, z)) +
                                                " at t=" + io::fmt(tt) + ", x=" + io::fmt(x) + ", y=" + io::fmt(y) +
                                                ", z=" + io::fmt(z) + ")");
    const auto gx = make_grids(o, 0.0, 0.0, 1, false, false), gA = make_grids(o, 0.0, 0.0, 1, false, false, &A);
    const double T = s.T;
    const PointFn gt = [&](const SamplePoint& p) { return s.g_p(p.x) + (T - t) * s.h_x(T, p.x, s.g(p.x), 0.0); };
    const PointFn ht = [&](const SamplePoint& p) { return h_tilde(s, p.t, p.x, p.y, p.z); };
    const auto box = o.box;
    const double kb = constant_or_sup(s.constants.k_b, box, false, [&](const SamplePoint& p) { return s.b_x(p.t, p.x); }, "b_x");
    const double ky = constant_or_sup(s.constants.k_y, box, true,
                                      [&](const SamplePoint& p) { return s.h_y(p.t, p.x, p.y, p.z); }, "h_y");
    const double K = ky + kb;
    auto slice = [&](bool minimize) {
        return [&, minimize](double sv) {
            Grid g = gh.full;
            g.t = {sv};
            return scan(g, minimize, ht, "h~").value;
        };
    };
    for (int side : {+1, -1}) {
        CriterionReport& r = side > 0 ? out.plus : out.minus;
        const bool lo = side > 0;
        r.scalars["K"] = K;
        if (a_misses_box(r, gA)) continue;
        const auto g = extremum(gx, o, lo, gt, "g~"), gAe = extremum(gA, o, lo, gt, "g~");
        const auto h = extremum(gh, o, lo, ht, "h~");
        bool sign_constant = true;
        const double I = sign_weighted_integral(slice(lo), lo, t, T, K, true, o.n_quad, &sign_constant);
        record(r, lo ? "gt_lo" : "gt_hi", g);
        record(r, lo ? "gt_lo_A" : "gt_hi_A", gAe);
        record(r, lo ? "ht_lo" : "ht_hi", h);
        r.scalars["time_integral"] = I;
        r.grids["time_integral"] = sign_constant ? "closed form" : std::to_string(o.n_quad) + "-node Gauss-Legendre";
        const bool exact = g.constant && gAe.constant && h.constant;
        const double tol = exact ? o.res_analytic : o.res_grid;
        r.lines.push_back({"line 1", lead_term(g.value, K, T) + h.value * I, false, side, tol, g.unbounded || h.unbounded});
        r.lines.push_back({"line 2 (A)", lead_term(gAe.value, K, T) + h.value * I, true, side, tol,
                           gAe.unbounded || h.unbounded});
        r.witnesses.push_back({lo ? "argmin g~" : "argmax g~", 0.0, g.arg.x, 0, 0, g.value});
        r.witnesses.push_back({lo ? "argmin h~" : "argmax h~", h.arg.t, h.arg.x, h.arg.y, h.arg.z, h.value});
        attach_hit(r, s, o);
        settle(r);
    }
    return out;
}

/// (Q+) / (Q-): pointwise sign conditions on g' (box and A) and on h_x over [t, T] x box, under (Q).
inline CriterionPair quadratic_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                                     const CriteriaOptions& o = {}) {
    using namespace detail;
    need_time(s, t);
    CriterionPair out{start("Q+", t, A), start("Q-", t, A)};
    if (s.regime != model::Regime::quadratic) {
        for (auto* r : {&out.plus, &out.minus}) r->note = "(Q) is not declared: the model is in the Lipschitz regime; ";
        return out;
    }
    const auto gx = make_grids(o, 0.0, 0.0, 1, false, false), gA = make_grids(o, 0.0, 0.0, 1, false, false, &A);
    const auto gh = make_grids(o, t, s.T, o.n_s, true, true);
    const PointFn gp = [&](const SamplePoint& p) { return s.g_p(p.x); };
    const PointFn hx = [&](const SamplePoint& p) { return s.h_x(p.t, p.x, p.y, p.z); };
    for (int side : {+1, -1}) {
        CriterionReport& r = side > 0 ? out.plus : out.minus;
        const bool lo = side > 0;
        if (a_misses_box(r, gA)) continue;
        const auto g = scan(gx.full, lo, gp, "g'"), gAe = scan(gA.full, lo, gp, "g'");
        const auto h = scan(gh.full, lo, hx, "h_x");
        record(r, lo ? "g_lo" : "g_hi", g);
        record(r, lo ? "g_lo_A" : "g_hi_A", gAe);
        record(r, lo ? "h_lo" : "h_hi", h);
        r.lines.push_back({lo ? "g' >= 0" : "g' <= 0", g.value, false, side, o.sign_tolerance, false});
        r.lines.push_back({lo ? "h_lo(t) >= 0" : "h_hi(t) <= 0", h.value, false, side, o.sign_tolerance, false});
        r.lines.push_back({lo ? "g'|_A > 0" : "g'|_A < 0", gAe.value, true, side, o.res_analytic, false});
        r.witnesses.push_back({lo ? "argmin g'" : "argmax g'", 0.0, g.arg.x, 0, 0, g.value});
        attach_hit(r, s, o);
        settle(r);
    }
    return out;
}

enum class ZVariant { bounds, x_plus, x_minus };

inline const char* to_string(ZVariant v) {
    switch (v) {
        case ZVariant::bounds: return "bounds";
        case ZVariant::x_plus: return "x-plus";
        default: return "x-minus";
    }
}

inline ZVariant z_variant_from_string(const std::string& s) {
    if (s == "bounds") return ZVariant::bounds;
    if (s == "x-plus" || s == "a") return ZVariant::x_plus;
    if (s == "x-minus" || s == "b") return ZVariant::x_minus;
    throw ConfigurationError("unknown Z-criterion variant '" + s + "' (expected bounds, x-plus or x-minus)");
}

/// (X+) / (X-): sign conditions on sigma and its derivatives and on [sigma, [sigma, b]], [b, sigma] = b'sigma + sigma'b.
inline CriterionPair x_sign_check(const model::ModelSpec& s, const CriteriaOptions& o = {}) {
    using namespace detail;
    CriterionPair out{start("X+", 0.0, IntervalSet::whole()), start("X-", 0.0, IntervalSet::whole())};
    const auto g = make_grids(o, 0.0, s.T, o.n_s, false, false).full;
    const PointFn sg = [&](const SamplePoint& p) { return s.sigma(p.t, p.x); };
    const PointFn s1 = [&](const SamplePoint& p) { return s.sigma_x(p.t, p.x); };
    const PointFn s2 = [&](const SamplePoint& p) { return s.sigma_xx(p.t, p.x); };
    const PointFn s3 = [&](const SamplePoint& p) { return s.sigma_xxx(p.t, p.x); };
    const PointFn br = [&](const SamplePoint& p) {
        const double a = s.sigma(p.t, p.x), a1 = s.sigma_x(p.t, p.x), a2 = s.sigma_xx(p.t, p.x);
        const double b = s.b(p.t, p.x), b1 = s.b_x(p.t, p.x), b2 = s.b_xx(p.t, p.x);
        // [sigma, b] = sigma' b + b' sigma, then [sigma, L] = sigma' L + L' sigma
        const double L = a1 * b + b1 * a, L1 = a2 * b + 2.0 * a1 * b1 + b2 * a;
        return a1 * L + L1 * a;
    };
    struct Cond {
        const char* plus;
        const char* minus;
        const PointFn* fn;
        int sense_plus;
        bool strict;
    };
    const Cond conds[] = {{"sigma >= c > 0", "sigma <= c < 0", &sg, +1, true},
                          {"sigma' >= 0", "sigma' <= 0", &s1, +1, false},
                          {"sigma'' <= 0", "sigma'' >= 0", &s2, -1, false},
                          {"sigma''' <= 0", "sigma''' >= 0", &s3, -1, false},
                          {"[sigma,[sigma,b]] >= 0", "[sigma,[sigma,b]] <= 0", &br, +1, false}};
    for (int side : {+1, -1}) {
        CriterionReport& r = side > 0 ? out.plus : out.minus;
        for (const auto& c : conds) {
            const int sense = side * c.sense_plus;
            const auto e = scan(g, sense > 0, *c.fn, c.plus);
            const std::string label = side > 0 ? c.plus : c.minus;
            record(r, label, e);
            const double tol = c.strict ? o.res_analytic : o.sign_tolerance;
            r.lines.push_back({label, e.value, c.strict, sense, tol, false});
            if (sense * e.value < -tol || (c.strict && sense * e.value <= tol)) {
                // witness: the violating node nearest to a satisfied one on the t = t_0 slice
                Witness w{label, g.t.front(), e.arg.x, 0, 0, e.value};
                const auto& xs = g.x;
                auto bad = [&](double x) {
                    const double v = sense * (*c.fn)({g.t.front(), x, 0, 0});
                    return c.strict ? v <= tol : v < -tol;
                };
                for (std::size_t i = 0; i < xs.size(); ++i) {
                    if (!bad(xs[i])) continue;
                    const bool edge = (i > 0 && !bad(xs[i - 1])) || (i + 1 < xs.size() && !bad(xs[i + 1]));
                    if (edge) {
                        w.x = xs[i];
                        w.value = (*c.fn)({g.t.front(), xs[i], 0, 0});
                        break;
                    }
                }
                r.witnesses.push_back(w);
            }
        }
        settle(r);
    }
    return out;
}

namespace detail {

/// Shared body of the Z-criteria under either regime.
inline CriterionReport z_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                               const std::optional<VariationalBounds>& declared, const CriteriaOptions& o,
                               ZVariant variant, bool quadratic) {
    need_time(s, t);
    CriterionReport r = start(quadratic ? "Z-quad" : "Z-lip", t, A);
    r.scalars["variant_code"] = static_cast<double>(variant);
    const auto wanted = quadratic ? model::Regime::quadratic : model::Regime::lipschitz;
    if (s.regime != wanted) {
        r.note = quadratic ? "(Q) is not declared: the model is in the Lipschitz regime; "
                           : "(L) is not declared: the model is in the quadratic regime; ";
        return r;
    }
    const auto gx = make_grids(o, 0.0, 0.0, 1, false, false), gA = make_grids(o, 0.0, 0.0, 1, false, false, &A);
    if (a_misses_box(r, gA)) return r;
    const auto gh = make_grids(o, t, s.T, o.n_s, true, true);
    const double T = s.T, tol_s = o.sign_tolerance;
    // (C+) or (C-) on [t, T] x box
    const int c_sense = variant == ZVariant::x_minus ? -1 : +1;
    const char* cs = c_sense > 0 ? ">= 0" : "<= 0";
    struct HPart {
        const char* name;
        double (model::ModelSpec::*fn)(double, double, double, double) const;
        bool equality;
    };
    const HPart parts[] = {{"h_x", &model::ModelSpec::h_x, false},   {"h_xx", &model::ModelSpec::h_xx, false},
                           {"h_yy", &model::ModelSpec::h_yy, false}, {"h_zz", &model::ModelSpec::h_zz, false},
                           {"h_xy", &model::ModelSpec::h_xy, false}, {"h_xz", &model::ModelSpec::h_xz, true},
                           {"h_yz", &model::ModelSpec::h_yz, true}};
    for (const auto& hp : parts) {
        const auto e = sign_margin(gh.full, c_sense, hp.equality,
                                   [&](const SamplePoint& p) { return (s.*hp.fn)(p.t, p.x, p.y, p.z); }, hp.name);
        r.lines.push_back(structural(std::string(hp.name) + (hp.equality ? " = 0" : std::string(" ") + cs), e, tol_s));
    }
    const PointFn g1 = [&](const SamplePoint& p) { return s.g_p(p.x); };
    const PointFn g2 = [&](const SamplePoint& p) { return s.g_pp(p.x); };
    if (quadratic) {
        const auto e = sign_margin(gh.full, +1, false,
                                   [&](const SamplePoint& p) { return s.h_y(p.t, p.x, p.y, p.z); }, "h_y");
        r.lines.push_back(structural("h_y >= 0", e, tol_s));
    }

    if (variant != ZVariant::bounds) {
        // alternative conditions: (X+-), (C+-) and sign conditions on g', g''
        const auto xs = x_sign_check(s, o);
        const auto& xr = variant == ZVariant::x_plus ? xs.plus : xs.minus;
        for (const auto& l : xr.lines) r.lines.push_back(l);
        const bool lo = variant == ZVariant::x_plus;
        const int sense = lo ? +1 : -1;
        const auto e2 = scan(gx.full, lo, g2, "g''"), e2A = scan(gA.full, lo, g2, "g''"), e1 = scan(gx.full, lo, g1, "g'");
        record(r, lo ? "g2_lo" : "g2_hi", e2);
        record(r, lo ? "g2_lo_A" : "g2_hi_A", e2A);
        record(r, lo ? "g1_lo" : "g1_hi", e1);
        r.lines.push_back({lo ? "g'' >= 0" : "g'' <= 0", e2.value, false, sense, tol_s, false});
        r.lines.push_back({lo ? "g' >= 0" : "g' <= 0", e1.value, false, sense, tol_s, false});
        r.lines.push_back({lo ? "g''|_A > 0" : "g''|_A < 0", e2A.value, true, sense, o.res_analytic, false});
        attach_hit(r, s, o);
        settle(r);
        return r;
    }

    // h_xy = 0 or (h_xy >= 0 and g' >= 0)
    {
        const auto zero = sign_margin(gh.full, 1, true, [&](const SamplePoint& p) { return s.h_xy(p.t, p.x, p.y, p.z); }, "h_xy");
        const auto pos = sign_margin(gh.full, 1, false, [&](const SamplePoint& p) { return s.h_xy(p.t, p.x, p.y, p.z); }, "h_xy");
        const auto gpos = scan(gx.full, true, g1, "g'");
        Extremum branch = zero;
        branch.value = std::max(zero.value, std::min(pos.value, gpos.value));
        r.lines.push_back(structural("h_xy = 0 or (h_xy >= 0 and g' >= 0)", branch, tol_s));
    }

    VariationalBounds vb = declared ? *declared : estimate_variational_bounds(s, 2000, 64, o.seed);
    r.scalars["a_lo"] = vb.a_lo;
    r.scalars["a_hi"] = vb.a_hi;
    r.scalars["b_lo"] = vb.b_lo;
    r.scalars["b_hi"] = vb.b_hi;
    r.grids["a_lo"] = r.grids["a_hi"] = r.grids["b_lo"] = r.grids["b_hi"] = vb.source;
    if (vb.unbounded) {
        r.note += "D_rX or D2X is not bounded on the simulated paths; the bound hypotheses are unavailable; ";
        r.verdict = CriterionVerdict::inapplicable;
    }
    r.lines.push_back({"a_lo > 0", vb.a_lo, true, +1, o.res_analytic, false, true});
    r.lines.push_back({"D2X >= 0", vb.b_lo, false, +1, tol_s, false, true});

    const auto e2 = extremum(gx, o, true, g2, "g''"), e2A = extremum(gA, o, true, g2, "g''");
    const auto e1 = extremum(gx, o, true, g1, "g'"), e1A = extremum(gA, o, true, g1, "g'");
    const auto hxx = extremum(gh, o, true, [&](const SamplePoint& p) { return s.h_xx(p.t, p.x, p.y, p.z); }, "h_xx");
    record(r, "g2_lo", e2);
    record(r, "g2_lo_A", e2A);
    record(r, "g1_lo", e1);
    record(r, "g1_lo_A", e1A);
    record(r, "hxx_lo", hxx);
    const double a2lo = vb.a_lo * vb.a_lo, a2hi = vb.a_hi * vb.a_hi, tau = T - t;
    const double ind_g1 = e1.value < 0.0 ? 1.0 : 0.0;
    auto line = [&](double g2v, double g1v) {
        return (g2v < 0.0 ? g2v * a2hi : 0.0) + g1v * ind_g1 * vb.b_hi + ((g2v >= 0.0 ? g2v : 0.0) + hxx.value * tau) * a2lo;
    };
    const bool exact = e2.constant && e2A.constant && e1.constant && e1A.constant && hxx.constant;
    const double tol = exact ? o.res_analytic : o.res_grid;
    r.lines.push_back({"line 1", line(e2.value, e1.value), false, +1, tol, e2.unbounded || e1.unbounded || hxx.unbounded});
    r.lines.push_back({"line 2 (A)", line(e2A.value, e1A.value), true, +1, tol,
                       e2A.unbounded || e1A.unbounded || hxx.unbounded});
    r.witnesses.push_back({"argmin g''", 0.0, e2.arg.x, 0, 0, e2.value});
    attach_hit(r, s, o);
    settle(r);
    return r;
}

}  // namespace detail

/// Z-criterion under (L). Bounds a_lo <= D_rX <= a_hi, 0 <= D2X <= b_hi are estimated from paths when not given.
inline CriterionReport z_lipschitz_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                                         const std::optional<VariationalBounds>& bounds = std::nullopt,
                                         const CriteriaOptions& o = {}, ZVariant variant = ZVariant::bounds) {
    return detail::z_check(s, t, A, bounds, o, variant, false);
}

/// Z-criterion under (Q): as z_lipschitz_check plus h_y >= 0.
inline CriterionReport z_quadratic_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                                         const std::optional<VariationalBounds>& bounds = std::nullopt,
                                         const CriteriaOptions& o = {}, ZVariant variant = ZVariant::bounds) {
    return detail::z_check(s, t, A, bounds, o, variant, true);
}

/// Z-criteria under (M), X_t = f(t, W_t): with Gamma(w) = ((g' o f) f')'(T, w) = g''(f) f_w^2 + g'(f) f_ww and
///   h~ = h_xx f_w^2 + h_x f_ww + (h_yy z + 2 h_xy f_w) z + h_y z~   over [t, T] x (w, x, y, z, z~),
/// variant a) needs (C~+) and Gamma_lo + (T - t) h~_lo >= 0 (> 0 on A); b) mirrors it.
inline CriterionPair z_markovian_check(const model::ModelSpec& s, double t, const IntervalSet& A,
                                       const CriteriaOptions& o = {}) {
    using namespace detail;
    need_time(s, t);
    if (!s.has_markovian_map()) throw PreconditionError("z_markovian_check: assumption (M) needs a markovian map f");
    CriterionPair out{start("Z-markov-a", t, A), start("Z-markov-b", t, A)};
    const double T = s.T, tau = T - t;
    const auto& b = o.box;
    // w axis reuses the x range of the box; A is a condition on x = f(T, w)
    auto w_nodes = [&](double lo, double hi, const IntervalSet* a) {
        auto v = nodes(lo, hi, b.n_x);
        if (!a || a->is_whole()) return v;
        std::vector<double> out;
        for (double w : v)
            if (a->contains(s.f(T, w))) out.push_back(w);
        for (auto& [l, u] : a->parts)
            for (double w : {l, u})
                if (w >= lo && w <= hi && a->contains(s.f(T, w))) out.push_back(w);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    };
    const auto in = b.inner(0.5);
    GridPair gw, gwA;
    gw.full.t = gw.inner.t = gwA.full.t = gwA.inner.t = {T};
    gw.full.x = w_nodes(b.x_min, b.x_max, nullptr);
    gw.inner.x = w_nodes(in.x_min, in.x_max, nullptr);
    gwA.full.x = w_nodes(b.x_min, b.x_max, &A);
    gwA.inner.x = w_nodes(in.x_min, in.x_max, &A);
    for (auto* g : {&gw.full, &gw.inner, &gwA.full, &gwA.inner}) g->y = g->z = {0.0};
    const PointFn gamma = [&](const SamplePoint& p) {
        const double x = s.f(T, p.x), fw = s.f_w(T, p.x);
        return s.g_pp(x) * fw * fw + s.g_p(x) * s.f_ww(T, p.x);
    };
    const auto wn = nodes(b.x_min, b.x_max, b.n_x), xn = nodes(b.x_min, b.x_max, b.n_x);
    const auto yn = nodes(b.y_min, b.y_max, b.n_y), zn = nodes(b.z_min, b.z_max, b.n_z);
    const auto sn = nodes(t, T, o.n_s);
    // h~ is linear in z~, so its extremum over z~ sits at an end of the z range
    auto htilde_extremum = [&](bool lo) {
        double best = lo ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        model::SamplePoint arg;
        double lo_v = std::numeric_limits<double>::infinity(), hi_v = -lo_v;
        for (double sv : sn)
            for (double w : wn) {
                const double fw = s.f_w(sv, w), fww = s.f_ww(sv, w);
                for (double x : xn)
                    for (double y : yn)
                        for (double z : zn) {
                            const double hy = s.h_y(sv, x, y, z);
                            const double base = s.h_xx(sv, x, y, z) * fw * fw + s.h_x(sv, x, y, z) * fww +
                                                (s.h_yy(sv, x, y, z) * z + 2.0 * s.h_xy(sv, x, y, z) * fw) * z;
                            for (double zt : {b.z_min, b.z_max}) {
                                const double v = base + hy * zt;
                                if (!std::isfinite(v)) throw EvaluationError("non-finite h~", sv, x);
                                lo_v = std::min(lo_v, v);
                                hi_v = std::max(hi_v, v);
                                if (lo ? v < best : v > best) {
                                    best = v;
                                    arg = {sv, x, y, z};
                                }
                            }
                        }
            }
        Extremum e;
        e.value = best;
        e.arg = arg;
        e.constant = hi_v - lo_v <= 1e-12 * (1.0 + std::abs(lo_v));
        e.grid = "s in [" + io::fmt(t) + ", " + io::fmt(T) + "] (" + std::to_string(sn.size()) + "); w, x in [" +
                 io::fmt(b.x_min) + ", " + io::fmt(b.x_max) + "] (" + std::to_string(b.n_x) + "); y (" +
                 std::to_string(b.n_y) + "); z (" + std::to_string(b.n_z) + "); z~ at the z range ends";
        return e;
    };
    const auto gh = make_grids(o, t, T, o.n_s, true, true);
    for (int side : {+1, -1}) {
        CriterionReport& r = side > 0 ? out.plus : out.minus;
        const bool lo = side > 0;
        if (gwA.full.x.empty()) {
            r.verdict = CriterionVerdict::inapplicable;
            r.note += "A does not meet the extremization box; ";
            continue;
        }
        const char* cs = lo ? ">= 0" : "<= 0";
        r.lines.push_back(structural(std::string("h_zz ") + cs,
                                     sign_margin(gh.full, side, false,
                                                 [&](const SamplePoint& p) { return s.h_zz(p.t, p.x, p.y, p.z); }, "h_zz"),
                                     o.sign_tolerance));
        r.lines.push_back(structural("h_xz = 0",
                                     sign_margin(gh.full, 1, true,
                                                 [&](const SamplePoint& p) { return s.h_xz(p.t, p.x, p.y, p.z); }, "h_xz"),
                                     o.sign_tolerance));
        r.lines.push_back(structural("h_yz = 0",
                                     sign_margin(gh.full, 1, true,
                                                 [&](const SamplePoint& p) { return s.h_yz(p.t, p.x, p.y, p.z); }, "h_yz"),
                                     o.sign_tolerance));
        const auto G = extremum(gw, o, lo, gamma, "Gamma"), GA = extremum(gwA, o, lo, gamma, "Gamma");
        const auto H = htilde_extremum(lo);
        record(r, lo ? "gamma_lo" : "gamma_hi", G);
        record(r, lo ? "gamma_lo_A" : "gamma_hi_A", GA);
        record(r, lo ? "ht_lo" : "ht_hi", H);
        const bool exact = G.constant && GA.constant && H.constant;
        const double tol = exact ? o.res_analytic : o.res_grid;
        r.lines.push_back({"line 1", G.value + tau * H.value, false, side, tol, G.unbounded});
        r.lines.push_back({"line 2 (A)", GA.value + tau * H.value, true, side, tol, GA.unbounded});
        r.witnesses.push_back({lo ? "argmin Gamma" : "argmax Gamma", T, G.arg.x, 0, 0, G.value});
        attach_hit(r, s, o);
        settle(r);
    }
    return out;
}

}  // namespace bsdens::criteria
