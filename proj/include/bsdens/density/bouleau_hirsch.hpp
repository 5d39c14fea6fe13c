#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "bsdens/density/samplers.hpp"
#include "bsdens/errors.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/numerics/stats.hpp"

namespace bsdens::density {

enum class PositivityVerdict { supports_density, degenerate, inconclusive };

inline const char* to_string(PositivityVerdict v) {
    switch (v) {
        case PositivityVerdict::supports_density: return "supports-density";
        case PositivityVerdict::degenerate: return "degenerate";
        default: return "inconclusive";
    }
}

struct BouleauHirschReport {
    Target target = Target::y;
    double t = 0.0;
    std::size_t index = 0;
    double threshold = 0.0;
    /// Per-path int_0^t |D_r F|^2 dr.
    std::vector<double> norms;
    double min = 0.0, q01 = 0.0, q05 = 0.0, median = 0.0, q95 = 0.0, max = 0.0;
    std::size_t below = 0;
    double fraction_below = 0.0;
    /// 95% Wilson interval for P(norm < threshold).
    double mass_low = 0.0, mass_high = 0.0;
    PositivityVerdict verdict = PositivityVerdict::inconclusive;
};

/// Rectangle-rule H-norm of D_.F for F = Y_t or Z_t on every path of the ensemble, F at the grid node nearest t.
/// supports-density: no path below threshold; degenerate: the Wilson lower bound of the below-threshold mass
/// exceeds min_mass; otherwise inconclusive.
inline BouleauHirschReport bouleau_hirsch_diagnostic(const mc::MalliavinEnsemble& m, double t, Target target = Target::y,
                                                     double threshold = 1e-4, double min_mass = 0.01) {
    if (t < -1e-12 || t > m.n_steps * m.dt + 1e-12) throw PreconditionError("bouleau_hirsch_diagnostic: t outside [0, T]");
    if (m.V.empty()) throw PreconditionError("bouleau_hirsch_diagnostic: empty Malliavin ensemble");
    BouleauHirschReport r;
    r.target = target;
    r.threshold = threshold;
    r.index = std::min<std::size_t>(static_cast<std::size_t>(std::llround(t / m.dt)), m.n_steps);
    r.t = m.time(r.index);
    const std::size_t j = r.index, n = m.n_paths;
    r.norms.assign(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) {
        double s = 0.0;
        for (std::size_t k = 0; k < j; ++k) {
            const double d = target == Target::y ? m.dy(k, j, p) : m.dz(k, j, p);
            s += d * d;
        }
        r.norms[p] = s * m.dt;
        if (r.norms[p] < threshold) ++r.below;
    }
    std::vector<double> sorted = r.norms;
    std::sort(sorted.begin(), sorted.end());
    r.min = sorted.front();
    r.max = sorted.back();
    r.q01 = numerics::quantile_sorted(sorted, 0.01);
    r.q05 = numerics::quantile_sorted(sorted, 0.05);
    r.median = numerics::quantile_sorted(sorted, 0.5);
    r.q95 = numerics::quantile_sorted(sorted, 0.95);
    r.fraction_below = static_cast<double>(r.below) / static_cast<double>(n);
    std::tie(r.mass_low, r.mass_high) = numerics::wilson_interval(r.below, n);
    if (r.below == 0)
        r.verdict = PositivityVerdict::supports_density;
    else if (r.mass_low > min_mass)
        r.verdict = PositivityVerdict::degenerate;
    else
        r.verdict = PositivityVerdict::inconclusive;
    return r;
}

}  // namespace bsdens::density
