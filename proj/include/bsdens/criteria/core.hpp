#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/assumptions.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/quadrature.hpp"
#include "bsdens/numerics/rng.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/pde/io.hpp"

namespace bsdens::criteria {

/// Finite union of closed intervals; no parts means the whole real line.
struct IntervalSet {
    std::vector<std::pair<double, double>> parts;

    static IntervalSet whole() { return {}; }
    static IntervalSet of(std::vector<std::pair<double, double>> p) {
        for (auto& [a, b] : p)
            if (!(a <= b)) throw ConfigurationError("interval set: lower end exceeds upper end");
        std::sort(p.begin(), p.end());
        return {std::move(p)};
    }

    bool is_whole() const { return parts.empty(); }
    bool contains(double x) const {
        if (parts.empty()) return true;
        for (auto& [a, b] : parts)
            if (x >= a && x <= b) return true;
        return false;
    }

    /// Grammar: "R" | interval ("u" interval)*, interval = "[" bound "," bound "]", bound = number | "inf" | "-inf".
    static IntervalSet parse(const std::string& text) {
        std::string s;
        for (char c : text)
            if (!std::isspace(static_cast<unsigned char>(c))) s += c;
        if (s == "R" || s == "all" || s.empty()) return whole();
        std::vector<std::pair<double, double>> out;
        std::size_t i = 0;
        auto bound = [&](char stop) {
            const std::size_t j = s.find(stop, i);
            if (j == std::string::npos) throw ConfigurationError("interval set '" + text + "': missing '" + stop + "'");
            const std::string tok = s.substr(i, j - i);
            i = j + 1;
            if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
            if (tok == "-inf") return -std::numeric_limits<double>::infinity();
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != tok.size() || tok.empty())
                throw ConfigurationError("interval set '" + text + "': bad bound '" + tok + "'");
            return v;
        };
        while (i < s.size()) {
            if (s[i] != '[') throw ConfigurationError("interval set '" + text + "': expected '['");
            ++i;
            const double a = bound(','), b = bound(']');
            out.emplace_back(a, b);
            if (i < s.size()) {
                if (s[i] != 'u' && s[i] != 'U') throw ConfigurationError("interval set '" + text + "': expected 'u'");
                ++i;
            }
        }
        return of(std::move(out));
    }

    std::string describe() const {
        if (parts.empty()) return "R";
        std::string out;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            if (k) out += " u ";
            out += "[" + io::fmt(parts[k].first) + ", " + io::fmt(parts[k].second) + "]";
        }
        return out;
    }
};

enum class CriterionVerdict { holds, fails, boundary, inconclusive_unbounded, inapplicable };

inline const char* to_string(CriterionVerdict v) {
    switch (v) {
        case CriterionVerdict::holds: return "holds";
        case CriterionVerdict::fails: return "fails";
        case CriterionVerdict::boundary: return "boundary";
        case CriterionVerdict::inconclusive_unbounded: return "inconclusive-unbounded";
        default: return "inapplicable";
    }
}

/// One inequality of a criterion: sense * value >= 0 (or > 0 when strict), judged at tolerance tol.
struct Line {
    std::string label;
    double value = 0.0;
    bool strict = false;
    int sense = 1;
    double tol = 1e-8;
    bool unbounded = false;
    /// Hypothesis of the criterion (a_lo > 0 and the like): never a boundary and never the margin.
    bool hypothesis = false;
};

struct Witness {
    std::string label;
    double t = 0, x = 0, y = 0, z = 0, value = 0;
};

struct HitProbability {
    /// Minimum over the conditioning states of the Wilson interval for P(X_T in A | X_t = x).
    double lower = 0.0, upper = 1.0, fraction = 0.0;
    std::vector<double> states;
    std::size_t paths_per_state = 0;
};

struct CriterionReport {
    std::string id;
    double t = 0.0;
    IntervalSet A;
    std::map<std::string, double> scalars;
    /// Grid on which each scalar was extremized.
    std::map<std::string, std::string> grids;
    std::vector<Line> lines;
    std::vector<Witness> witnesses;
    CriterionVerdict verdict = CriterionVerdict::inapplicable;
    double margin = 0.0;
    double resolution = 0.0;
    std::string note;
    std::optional<HitProbability> hit;
};

/// Plus and minus variants of one criterion; the pair holds when either side holds.
struct CriterionPair {
    CriterionReport plus, minus;

    CriterionVerdict verdict() const {
        const auto a = plus.verdict, b = minus.verdict;
        auto any = [&](CriterionVerdict v) { return a == v || b == v; };
        if (any(CriterionVerdict::holds)) return CriterionVerdict::holds;
        if (a == CriterionVerdict::inapplicable && b == CriterionVerdict::inapplicable) return CriterionVerdict::inapplicable;
        if (any(CriterionVerdict::inconclusive_unbounded)) return CriterionVerdict::inconclusive_unbounded;
        if (any(CriterionVerdict::boundary)) return CriterionVerdict::boundary;
        return CriterionVerdict::fails;
    }
};

struct CriteriaOptions {
    /// Extremization box in (x, y, z) with node counts; its t range is replaced by [t, T] where needed.
    model::SampleBox box;
    /// Time nodes on [t, T].
    int n_s = 33;
    /// Treat the box as the domain: skips the growth test that flags extrema over R as unbounded.
    bool box_is_domain = false;
    /// Resolution for margins built from extrema that are constant on the grid (exact) and for pointwise signs.
    double res_analytic = 1e-8;
    /// Resolution for margins built from non-constant grid extrema.
    double res_grid = 1e-3;
    /// Tolerance of structural sign conditions (h_xx >= 0 and the like).
    double sign_tolerance = 1e-6;
    /// Relative growth between the half box and the box that flags an extremum as unbounded.
    double growth_tolerance = 0.25;
    /// Nodes of the time rule used when sgn of the running extremum changes on [t, T].
    int n_quad = 128;
    /// Monte Carlo certification of P(X_T in A | F_t) > 0; disabled when hit_paths == 0.
    std::size_t hit_paths = 2000;
    std::size_t hit_steps = 64;
    std::uint64_t seed = 1;

    static CriteriaOptions around(const model::ModelSpec& s, double half_width = 6.0) {
        CriteriaOptions o;
        o.box = model::SampleBox::around(s, half_width);
        return o;
    }
};

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

namespace detail {

/// Tensor grid of evaluation nodes; unused axes hold the single node 0.
struct Grid {
    std::vector<double> t, x, y, z;

    std::string describe() const {
        auto axis = [](const char* n, const std::vector<double>& v) {
            if (v.size() <= 1 && (v.empty() || v[0] == 0.0)) return std::string();
            return std::string(n) + " in [" + io::fmt(v.front()) + ", " + io::fmt(v.back()) + "] (" +
                   std::to_string(v.size()) + "); ";
        };
        std::string s = axis("t", t) + axis("x", x) + axis("y", y) + axis("z", z);
        if (s.size() >= 2) s.resize(s.size() - 2);
        return s;
    }
};

inline std::vector<double> nodes(double lo, double hi, int n) {
    std::vector<double> v(std::max(n, 1));
    for (int i = 0; i < static_cast<int>(v.size()); ++i) v[i] = model::SampleBox::node(lo, hi, n, i);
    return v;
}

/// x nodes of [lo, hi] restricted to A, plus the ends of A's parts that fall inside [lo, hi].
inline std::vector<double> x_nodes(double lo, double hi, int n, const IntervalSet* A) {
    auto v = nodes(lo, hi, n);
    if (!A || A->is_whole()) return v;
    std::vector<double> out;
    for (double x : v)
        if (A->contains(x)) out.push_back(x);
    for (auto& [a, b] : A->parts) {
        if (a >= lo && a <= hi) out.push_back(a);
        if (b >= lo && b <= hi) out.push_back(b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct GridPair {
    Grid full, inner;
};

/// Grids for s in [t_lo, t_hi] (single node when n_s = 1), x from the box restricted to A, y and z on demand.
inline GridPair make_grids(const CriteriaOptions& o, double t_lo, double t_hi, int n_s, bool use_y, bool use_z,
                           const IntervalSet* A = nullptr) {
    const auto& b = o.box;
    const auto in = b.inner(0.5);
    GridPair g;
    for (auto* pair : {&g.full, &g.inner}) {
        const auto& bx = pair == &g.full ? b : in;
        pair->t = n_s <= 1 ? std::vector<double>{t_lo} : nodes(t_lo, t_hi, n_s);
        pair->x = x_nodes(bx.x_min, bx.x_max, b.n_x, A);
        pair->y = use_y ? nodes(bx.y_min, bx.y_max, b.n_y) : std::vector<double>{0.0};
        pair->z = use_z ? nodes(bx.z_min, bx.z_max, b.n_z) : std::vector<double>{0.0};
    }
    return g;
}

struct Extremum {
    double value = 0.0;
    model::SamplePoint arg;
    bool unbounded = false;
    bool constant = true;
    std::string grid;
};

using PointFn = std::function<double(const model::SamplePoint&)>;

inline Extremum scan(const Grid& g, bool minimize, const PointFn& fn, const char* label) {
    Extremum e;
    e.value = minimize ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double t : g.t)
        for (double x : g.x)
            for (double y : g.y)
                for (double z : g.z) {
                    const model::SamplePoint p{t, x, y, z};
                    const double v = fn(p);
                    if (!std::isfinite(v)) throw EvaluationError(std::string("non-finite ") + label, t, x);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                    if (minimize ? v < e.value : v > e.value) {
                        e.value = v;
                        e.arg = p;
                    }
                }
    e.constant = hi - lo <= 1e-12 * (1.0 + std::abs(lo));
    e.grid = g.describe();
    return e;
}

/// Extremum on the full grid, flagged unbounded when it still moves by more than growth_tolerance
/// (relative to max(1, |inner value|)) between the half box and the box.
inline Extremum extremum(const GridPair& g, const CriteriaOptions& o, bool minimize, const PointFn& fn,
                         const char* label) {
    if (g.full.x.empty()) throw PreconditionError(std::string("empty extremization grid for ") + label);
    auto e = scan(g.full, minimize, fn, label);
    if (!o.box_is_domain && !g.inner.x.empty()) {
        const auto in = scan(g.inner, minimize, fn, label);
        const double growth = minimize ? in.value - e.value : e.value - in.value;
        e.unbounded = growth > o.growth_tolerance * std::max(1.0, std::abs(in.value));
    }
    return e;
}

/// int_t^T e^{-c K s} w(s) ds with w = 1 or w = T - s, closed form for a constant sign c.
inline double signed_exp_integral(double a, double t, double T, bool weighted) {
    const double tau = T - t;
    if (std::abs(a) * std::max(std::abs(t), std::abs(T)) < 1e-12) return weighted ? 0.5 * tau * tau : tau;
    const double et = std::exp(-a * t), eT = std::exp(-a * T);
    if (!weighted) return (et - eT) / a;
    return tau * et / a - (et - eT) / (a * a);
}

}  // namespace detail

/// int_t^T exp(-sgn(m(s)) K s) w(s) ds where m(s) is the running extremum on [s, T] of a slice function.
/// m is evaluated nodewise on an n_quad Gauss-Legendre rule; the closed form is used when sgn(m) is constant.
inline double sign_weighted_integral(const std::function<double(double)>& slice_extremum, bool minimize, double t,
                                     double T, double K, bool weighted, int n_quad, bool* sign_constant = nullptr) {
    if (!(T > t)) {
        if (sign_constant) *sign_constant = true;
        return 0.0;
    }
    const auto rule = numerics::gauss_legendre(n_quad, t, T);
    std::vector<std::pair<double, double>> sw;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) sw.emplace_back(rule.nodes[i], rule.weights[i]);
    std::sort(sw.begin(), sw.end());
    std::vector<double> running(sw.size());
    double m = slice_extremum(T);
    for (std::size_t i = sw.size(); i-- > 0;) {
        const double v = slice_extremum(sw[i].first);
        m = minimize ? std::min(m, v) : std::max(m, v);
        running[i] = m;
    }
    bool constant = true;
    for (double r : running) constant = constant && sgn(r) == sgn(running.front());
    if (sign_constant) *sign_constant = constant;
    if (constant) return detail::signed_exp_integral(sgn(running.front()) * K, t, T, weighted);
    double acc = 0.0;
    for (std::size_t i = 0; i < sw.size(); ++i) {
        const double s = sw[i].first;
        acc += sw[i].second * std::exp(-sgn(running[i]) * K * s) * (weighted ? T - s : 1.0);
    }
    return acc;
}

/// Verdict and margin from the lines. A line passes when sense * value >= -tol (non-strict) or > tol (strict);
/// a strict line with |value| <= tol is a boundary. The margin is the worst failing line, else the tightest
/// strict line. A hypothesis line only passes or fails.
inline void settle(CriterionReport& r) {
    const Line* worst_fail = nullptr;
    const Line* tightest = nullptr;
    bool unbounded = false;
    for (const auto& l : r.lines) {
        const double s = l.sense * l.value;
        unbounded = unbounded || l.unbounded;
        const bool failing = l.hypothesis && l.strict ? s <= l.tol : s < -l.tol;
        if (failing && (!worst_fail || s < worst_fail->sense * worst_fail->value)) worst_fail = &l;
        if (l.hypothesis) continue;
        if (l.strict && (!tightest || s < tightest->sense * tightest->value)) tightest = &l;
    }
    if (worst_fail) {
        r.margin = worst_fail->value;
        r.resolution = worst_fail->tol;
    } else if (tightest) {
        r.margin = tightest->value;
        r.resolution = tightest->tol;
    }
    if (r.verdict == CriterionVerdict::inapplicable && !r.note.empty()) return;
    if (unbounded)
        r.verdict = CriterionVerdict::inconclusive_unbounded;
    else if (worst_fail)
        r.verdict = CriterionVerdict::fails;
    else if (tightest && std::abs(tightest->value) <= tightest->tol)
        r.verdict = CriterionVerdict::boundary;
    else
        r.verdict = CriterionVerdict::holds;
}

/// Monte Carlo lower bound of P(X_T in A | X_t = x) at the 5%, 50% and 95% quantiles of X_t (X0 when t = 0).
inline HitProbability hit_probability(const model::ModelSpec& s, double t, const IntervalSet& A, std::size_t n_paths,
                                      std::size_t n_steps, std::uint64_t seed) {
    if (n_paths < 1 || n_steps < 1) throw PreconditionError("hit_probability: need paths and steps");
    HitProbability h;
    h.paths_per_state = n_paths;
    const double dt_all = s.T / static_cast<double>(n_steps);
    const std::size_t k_t = std::min<std::size_t>(n_steps, static_cast<std::size_t>(std::llround(t / dt_all)));
    std::vector<double> xt(n_paths, s.X0);
    if (k_t > 0) {
        for (std::size_t p = 0; p < n_paths; ++p) {
            const numerics::NormalStream rng(seed, numerics::substream_id("criteria.hit.pre"), static_cast<std::uint32_t>(p));
            double x = s.X0;
            for (std::size_t k = 0; k < k_t; ++k) {
                const double tk = k * dt_all;
                x += s.b(tk, x) * dt_all + s.sigma(tk, x) * std::sqrt(dt_all) * rng.normal(static_cast<std::uint32_t>(k));
            }
            xt[p] = x;
        }
        std::sort(xt.begin(), xt.end());
        h.states = {numerics::quantile_sorted(xt, 0.05), numerics::quantile_sorted(xt, 0.5),
                    numerics::quantile_sorted(xt, 0.95)};
    } else {
        h.states = {s.X0};
    }
    h.lower = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < h.states.size(); ++i) {
        std::size_t hits = 0;
        for (std::size_t p = 0; p < n_paths; ++p) {
            const numerics::NormalStream rng(seed, numerics::substream_id("criteria.hit.post"),
                                             static_cast<std::uint32_t>(i * n_paths + p));
            double x = h.states[i];
            for (std::size_t k = k_t; k < n_steps; ++k) {
                const double tk = k * dt_all;
                x += s.b(tk, x) * dt_all + s.sigma(tk, x) * std::sqrt(dt_all) * rng.normal(static_cast<std::uint32_t>(k));
            }
            if (A.contains(x)) ++hits;
        }
        const auto [lo, hi] = numerics::wilson_interval(hits, n_paths);
        if (lo < h.lower) {
            h.lower = lo;
            h.upper = hi;
            h.fraction = static_cast<double>(hits) / static_cast<double>(n_paths);
        }
    }
    return h;
}

/// Attaches the hit probability; a zero Wilson lower bound makes the report inapplicable.
inline void attach_hit(CriterionReport& r, const model::ModelSpec& s, const CriteriaOptions& o) {
    if (o.hit_paths == 0) return;
    r.hit = hit_probability(s, r.t, r.A, o.hit_paths, o.hit_steps, o.seed);
    if (!(r.hit->lower > 0.0)) {
        r.verdict = CriterionVerdict::inapplicable;
        r.note += "P(X_T in A | F_t) > 0 is not certified at 95%; ";
    }
}

/// Bounds a_lo <= D_rX_u <= a_hi and b_lo <= D2_{r,s}X_u <= b_hi over r, s < u, from an Euler ensemble.
struct VariationalBounds {
    double a_lo = 0.0, a_hi = 0.0, b_lo = 0.0, b_hi = 0.0;
    /// True when either supremum grows by more than 25% from half of the paths to all of them.
    bool unbounded = false;
    std::string source = "declared";
};

inline VariationalBounds estimate_variational_bounds(const model::ModelSpec& s, std::size_t n_paths = 2000,
                                                     std::size_t n_steps = 64, std::uint64_t seed = 1,
                                                     std::size_t n_second = 8) {
    const auto e = mc::simulate_forward(s, n_paths, n_steps, seed);
    const auto v = mc::variational_processes(s, e);
    const std::size_t n = e.n_paths, N = e.n_steps;
    struct Acc {
        double a_lo = std::numeric_limits<double>::infinity(), a_hi = -a_lo, b_lo = a_lo, b_hi = -a_lo;
    };
    Acc all, half;
    std::vector<std::size_t> sub;
    for (std::size_t i = 0; i < n_second; ++i) sub.push_back(i * N / n_second);
    for (std::size_t p = 0; p < n; ++p) {
        Acc local;
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t j = k + 1; j <= N; ++j) {
                const double d = v.d_x_flow(k, j, p);
                local.a_lo = std::min(local.a_lo, d);
                local.a_hi = std::max(local.a_hi, d);
            }
        for (std::size_t ks : sub) {
            const double cs = v.sigma[ks * n + p] / v.psi(ks, p);
            double dpsi = s.sigma_x(e.time(ks), e.x(ks, p)) * v.psi(ks, p);
            for (std::size_t j = ks; j < N; ++j) {
                const double t = e.time(j), x = e.x(j, p), psi = v.psi(j, p), dsx = cs * psi;
                dpsi += (s.b_xx(t, x) * dsx * psi + s.b_x(t, x) * dpsi) * e.dt +
                        (s.sigma_xx(t, x) * dsx * psi + s.sigma_x(t, x) * dpsi) * e.dw(j, p);
                for (std::size_t kr : sub) {
                    if (kr > ks) break;
                    const double d2 = v.sigma[kr * n + p] / v.psi(kr, p) * dpsi;
                    local.b_lo = std::min(local.b_lo, d2);
                    local.b_hi = std::max(local.b_hi, d2);
                }
            }
        }
        for (Acc* a : {&half, &all}) {
            if (a == &half && p >= n / 2) continue;
            a->a_lo = std::min(a->a_lo, local.a_lo);
            a->a_hi = std::max(a->a_hi, local.a_hi);
            a->b_lo = std::min(a->b_lo, local.b_lo);
            a->b_hi = std::max(a->b_hi, local.b_hi);
        }
    }
    VariationalBounds b;
    b.a_lo = all.a_lo;
    b.a_hi = all.a_hi;
    b.b_lo = all.b_lo;
    b.b_hi = all.b_hi;
    auto grows = [](double full, double part) { return std::abs(full) > 1.25 * std::abs(part) + 1e-12; };
    b.unbounded = grows(all.a_hi, half.a_hi) || grows(all.b_hi, half.b_hi) || grows(all.b_lo, half.b_lo) ||
                  grows(1.0 / std::max(all.a_lo, 1e-300), 1.0 / std::max(half.a_lo, 1e-300));
    b.source = "estimated from " + std::to_string(n_paths) + " Euler paths, " + std::to_string(n_steps) + " steps";
    return b;
}

}  // namespace bsdens::criteria
