#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/rng.hpp"

namespace bsdens::model {

/// Axis-aligned sampling box in (t, x, y, z) with per-axis node counts (endpoints included).
struct SampleBox {
    double t_min = 0.0, t_max = 1.0;
    double x_min = -6.0, x_max = 6.0;
    double y_min = -6.0, y_max = 6.0;
    double z_min = -6.0, z_max = 6.0;
    int n_t = 11, n_x = 41, n_y = 9, n_z = 9;

    static SampleBox around(const ModelSpec& s, double half_width = 6.0) {
        SampleBox b;
        b.t_min = 0.0;
        b.t_max = s.T;
        b.x_min = s.X0 - half_width;
        b.x_max = s.X0 + half_width;
        return b;
    }

    static double node(double lo, double hi, int n, int i) { return n <= 1 ? lo : lo + (hi - lo) * i / (n - 1); }

    /// Box with each of x, y, z shrunk by `factor` about its centre.
    SampleBox inner(double factor = 0.5) const {
        SampleBox b = *this;
        auto shrink = [factor](double& lo, double& hi) {
            const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo) * factor;
            lo = c - r;
            hi = c + r;
        };
        shrink(b.x_min, b.x_max);
        shrink(b.y_min, b.y_max);
        shrink(b.z_min, b.z_max);
        return b;
    }
};

struct SamplePoint {
    double t = 0, x = 0, y = 0, z = 0;
};

enum class Verdict { holds, violated, not_applicable };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::holds: return "holds";
        case Verdict::violated: return "violated";
        case Verdict::not_applicable: return "not-applicable";
    }
    return "?";
}

struct AssumptionCheck {
    Verdict verdict = Verdict::holds;
    std::vector<SamplePoint> violated_at;
    double margin = 0.0;
    std::map<std::string, double> estimates;
    std::string note;
};

struct AssumptionReport {
    std::map<std::string, AssumptionCheck> checks;
    SampleBox box;
    double resolution = 1e-8;
    /// Relative growth between the half box and the full box that flags a sup as unbounded.
    double growth_tolerance = 0.25;

    const AssumptionCheck& at(const std::string& id) const { return checks.at(id); }
};

namespace detail {

struct SupResult {
    double value = 0.0;
    SamplePoint arg;
};

template <class F>
void for_each_point(const SampleBox& b, bool use_y, bool use_z, F&& fn) {
    const int ny = use_y ? b.n_y : 1, nz = use_z ? b.n_z : 1;
    for (int it = 0; it < b.n_t; ++it)
        for (int ix = 0; ix < b.n_x; ++ix)
            for (int iy = 0; iy < ny; ++iy)
                for (int iz = 0; iz < nz; ++iz) {
                    SamplePoint p{SampleBox::node(b.t_min, b.t_max, b.n_t, it),
                                  SampleBox::node(b.x_min, b.x_max, b.n_x, ix),
                                  use_y ? SampleBox::node(b.y_min, b.y_max, b.n_y, iy) : 0.0,
                                  use_z ? SampleBox::node(b.z_min, b.z_max, b.n_z, iz) : 0.0};
                    fn(p);
                }
}

template <class F>
SupResult sup_abs(const SampleBox& b, bool use_y, bool use_z, F&& fn, const char* label) {
    SupResult r;
    for_each_point(b, use_y, use_z, [&](const SamplePoint& p) {
        const double v = fn(p);
        if (!std::isfinite(v)) throw EvaluationError(std::string("non-finite ") + label, p.t, p.x);
        if (std::abs(v) > r.value) {
            r.value = std::abs(v);
            r.arg = p;
        }
    });
    return r;
}

/// Sup of |fn| on the box plus a flag when it still grows from the half box to the full box.
template <class F>
std::pair<SupResult, bool> sup_with_growth(const SampleBox& b, bool use_y, bool use_z, double tol, F&& fn,
                                           const char* label) {
    const auto full = sup_abs(b, use_y, use_z, fn, label);
    const auto half = sup_abs(b.inner(0.5), use_y, use_z, fn, label);
    const bool growing = full.value > (1.0 + tol) * half.value + 1e-9;
    return {full, growing};
}

}  // namespace detail

/// Grid-sampled assumption report; constants are certified on `box` only.
inline AssumptionReport validate_assumptions(const ModelSpec& s, const SampleBox& box) {
    using detail::sup_with_growth;
    AssumptionReport rep;
    rep.box = box;
    const double res = rep.resolution;
    const double gt = rep.growth_tolerance;

    auto declared_check = [&](AssumptionCheck& c, const char* key, const std::optional<double>& declared,
                              const detail::SupResult& sup, bool growing) {
        c.estimates[key] = sup.value;
        if (growing) {
            c.verdict = Verdict::violated;
            c.violated_at.push_back(sup.arg);
            c.note += std::string(key) + " grows towards the box edge; ";
        }
        if (declared && sup.value > *declared + res * (1.0 + *declared)) {
            c.verdict = Verdict::violated;
            c.violated_at.push_back(sup.arg);
            c.note += std::string(key) + " exceeds declared value; ";
        }
    };

    {  // (X)
        AssumptionCheck c;
        double min_sigma = std::numeric_limits<double>::infinity();
        SamplePoint arg;
        detail::for_each_point(box, false, false, [&](const SamplePoint& p) {
            const double v = s.sigma(p.t, p.x);
            if (!std::isfinite(v)) throw EvaluationError("non-finite sigma", p.t, p.x);
            if (std::abs(v) < min_sigma) {
                min_sigma = std::abs(v);
                arg = p;
            }
        });
        const double c_req = s.constants.c.value_or(0.0);
        c.estimates["c"] = min_sigma;
        c.margin = min_sigma - c_req;
        if (!(min_sigma > res) || min_sigma + res < c_req) {
            c.verdict = Verdict::violated;
            c.violated_at.push_back(arg);
            c.note += "ellipticity fails; ";
        }
        auto [bx, bx_grow] = sup_with_growth(box, false, false, gt,
                                             [&](const SamplePoint& p) { return s.b_x(p.t, p.x); }, "b_x");
        declared_check(c, "k_b", s.constants.k_b, bx, bx_grow);
        auto [sx, sx_grow] = sup_with_growth(box, false, false, gt,
                                             [&](const SamplePoint& p) { return s.sigma_x(p.t, p.x); }, "sigma_x");
        declared_check(c, "k_sigma", s.constants.k_sigma, sx, sx_grow);
        rep.checks["X"] = c;
    }

    {  // (L)
        AssumptionCheck c;
        auto [hx, gx] = sup_with_growth(box, true, true, gt,
                                        [&](const SamplePoint& p) { return s.h_x(p.t, p.x, p.y, p.z); }, "h_x");
        declared_check(c, "k_x", s.constants.k_x, hx, gx);
        auto [hy, gy] = sup_with_growth(box, true, true, gt,
                                        [&](const SamplePoint& p) { return s.h_y(p.t, p.x, p.y, p.z); }, "h_y");
        declared_check(c, "k_y", s.constants.k_y, hy, gy);
        auto [hz, gz] = sup_with_growth(box, true, true, gt,
                                        [&](const SamplePoint& p) { return s.h_z(p.t, p.x, p.y, p.z); }, "h_z");
        declared_check(c, "k_z", s.constants.k_z, hz, gz);
        c.margin = -std::max({hx.value, hy.value, hz.value});
        rep.checks["L"] = c;
    }

    {  // (Q)
        AssumptionCheck c;
        auto [kq, gq] = sup_with_growth(
            box, true, true, gt,
            [&](const SamplePoint& p) { return s.h(p.t, p.x, p.y, p.z) / (1.0 + std::abs(p.y) + p.z * p.z); }, "h");
        declared_check(c, "K", s.constants.K, kq, gq);
        auto [ky, gy] = sup_with_growth(box, true, true, gt,
                                        [&](const SamplePoint& p) { return s.h_y(p.t, p.x, p.y, p.z); }, "h_y");
        declared_check(c, "K_y", s.constants.K_y, ky, gy);
        auto [kz, gz] = sup_with_growth(
            box, true, true, gt,
            [&](const SamplePoint& p) { return s.h_z(p.t, p.x, p.y, p.z) / (1.0 + std::abs(p.z)); }, "h_z");
        declared_check(c, "K_z", s.constants.K_z, kz, gz);
        auto [gsup, ggrow] =
            sup_with_growth(box, false, false, gt, [&](const SamplePoint& p) { return s.g(p.x); }, "g");
        c.estimates["sup_g"] = gsup.value;
        if (ggrow) {
            c.verdict = Verdict::violated;
            c.violated_at.push_back(gsup.arg);
            c.note += "g is not bounded on the box; ";
        }
        c.margin = -kq.value;
        rep.checks["Q"] = c;
    }

    auto finiteness = [&](const char* id, std::vector<std::pair<const char*, std::function<double(const SamplePoint&)>>> fns) {
        AssumptionCheck c;
        for (auto& [label, fn] : fns) {
            detail::for_each_point(box, true, true, [&](const SamplePoint& p) {
                if (!std::isfinite(fn(p))) {
                    if (c.violated_at.empty()) c.note += std::string(label) + " is not finite; ";
                    c.verdict = Verdict::violated;
                    c.violated_at.push_back(p);
                }
            });
        }
        rep.checks[id] = c;
    };
    finiteness("D1", {{"g'", [&](const SamplePoint& p) { return s.g_p(p.x); }},
                      {"h_x", [&](const SamplePoint& p) { return s.h_x(p.t, p.x, p.y, p.z); }},
                      {"h_y", [&](const SamplePoint& p) { return s.h_y(p.t, p.x, p.y, p.z); }},
                      {"h_z", [&](const SamplePoint& p) { return s.h_z(p.t, p.x, p.y, p.z); }},
                      {"b_x", [&](const SamplePoint& p) { return s.b_x(p.t, p.x); }},
                      {"sigma_x", [&](const SamplePoint& p) { return s.sigma_x(p.t, p.x); }}});
    finiteness("D2", {{"g''", [&](const SamplePoint& p) { return s.g_pp(p.x); }},
                      {"h_xx", [&](const SamplePoint& p) { return s.h_xx(p.t, p.x, p.y, p.z); }},
                      {"h_yy", [&](const SamplePoint& p) { return s.h_yy(p.t, p.x, p.y, p.z); }},
                      {"h_zz", [&](const SamplePoint& p) { return s.h_zz(p.t, p.x, p.y, p.z); }},
                      {"h_xy", [&](const SamplePoint& p) { return s.h_xy(p.t, p.x, p.y, p.z); }},
                      {"h_xz", [&](const SamplePoint& p) { return s.h_xz(p.t, p.x, p.y, p.z); }},
                      {"h_yz", [&](const SamplePoint& p) { return s.h_yz(p.t, p.x, p.y, p.z); }},
                      {"sigma_xx", [&](const SamplePoint& p) { return s.sigma_xx(p.t, p.x); }}});

    {  // (M): f(t, W_t) against a fine Euler scheme driven by the same increments
        AssumptionCheck c;
        if (!s.has_markovian_map()) {
            c.verdict = Verdict::not_applicable;
            c.note = "no markovian map declared";
        } else {
            constexpr int paths = 64, steps = 512;
            const double dt = s.T / steps;
            double worst = 0.0;
            SamplePoint arg;
            for (int pth = 0; pth < paths; ++pth) {
                numerics::NormalStream rng(0x4d4d4d4dULL, numerics::substream_id("assumption.M"), pth);
                double x = s.X0, w = 0.0, max_err = 0.0, max_scale = 1.0;
                for (int k = 0; k < steps; ++k) {
                    const double t = k * dt;
                    const double dw = std::sqrt(dt) * rng.normal(k);
                    x += s.b(t, x) * dt + s.sigma(t, x) * dw;
                    w += dw;
                    const double err = std::abs(s.f(t + dt, w) - x);
                    max_scale = std::max(max_scale, std::abs(x));
                    if (err > max_err) {
                        max_err = err;
                        arg = {t + dt, x, 0.0, 0.0};
                    }
                }
                worst = std::max(worst, max_err / max_scale);
            }
            const double tol = 10.0 * std::sqrt(dt);
            c.estimates["max_relative_error"] = worst;
            c.margin = tol - worst;
            if (worst > tol) {
                c.verdict = Verdict::violated;
                c.violated_at.push_back(arg);
            }
        }
        rep.checks["M"] = c;
    }

    auto sign_check = [&](const char* id, int sign, bool full) {
        AssumptionCheck c;
        c.margin = std::numeric_limits<double>::infinity();
        auto need = [&](const SamplePoint& p, double v, bool equality) {
            const double m = equality ? -std::abs(v) : sign * v;
            c.margin = std::min(c.margin, m);
            if (m < -res) {
                c.verdict = Verdict::violated;
                if (c.violated_at.size() < 8) c.violated_at.push_back(p);
            }
        };
        detail::for_each_point(box, true, true, [&](const SamplePoint& p) {
            if (full) {
                need(p, s.h_x(p.t, p.x, p.y, p.z), false);
                need(p, s.h_xx(p.t, p.x, p.y, p.z), false);
                need(p, s.h_yy(p.t, p.x, p.y, p.z), false);
                need(p, s.h_xy(p.t, p.x, p.y, p.z), false);
            }
            need(p, s.h_zz(p.t, p.x, p.y, p.z), false);
            need(p, s.h_xz(p.t, p.x, p.y, p.z), true);
            need(p, s.h_yz(p.t, p.x, p.y, p.z), true);
        });
        rep.checks[id] = c;
    };
    sign_check("C+", +1, true);
    sign_check("C-", -1, true);
    sign_check("C~+", +1, false);
    sign_check("C~-", -1, false);
    return rep;
}

}  // namespace bsdens::model
