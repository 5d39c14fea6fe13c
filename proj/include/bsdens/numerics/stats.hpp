#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/numerics/special.hpp"

namespace bsdens::numerics {

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
}

inline double variance(std::span<const double> v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.size() < 2 ? 0.0 : s / (v.size() - 1);
}

/// Mean absolute deviation about the sample mean.
inline double mean_abs_deviation(std::span<const double> v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += std::abs(x - m);
    return v.empty() ? 0.0 : s / v.size();
}

/// Linear-interpolation quantile of an ascending sample.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw PreconditionError("quantile of empty sample");
    const double pos = std::clamp(p, 0.0, 1.0) * (sorted.size() - 1);
    const std::size_t i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= sorted.size()) return sorted.back();
    const double w = pos - i;
    return (1.0 - w) * sorted[i] + w * sorted[i + 1];
}

/// Wilson score interval for a binomial proportion at normal quantile z.
inline std::pair<double, double> wilson_interval(std::size_t hits, std::size_t n, double z = 1.959963984540054) {
    if (n == 0) return {0.0, 1.0};
    const double p = static_cast<double>(hits) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    // the bounds are exactly 0 and 1 at the extremes; avoid rounding residue there
    return {hits == 0 ? 0.0 : std::max(0.0, centre - half), hits == n ? 1.0 : std::min(1.0, centre + half)};
}

struct KernelDensity {
    std::vector<double> x;
    std::vector<double> density;
    std::vector<double> std_error;
    double bandwidth = 0.0;
};

/// Gaussian KDE on `nodes` with pointwise standard errors sqrt(f R(K) / (n h)), R(K) = 1/(2 sqrt(pi)).
/// Bandwidth <= 0 selects 1.06 sigma n^{-1/5}.
inline KernelDensity gaussian_kde(std::span<const double> sample, std::span<const double> nodes,
                                  double bandwidth = 0.0) {
    if (sample.size() < 2) throw PreconditionError("gaussian_kde: need at least two samples");
    std::vector<double> s(sample.begin(), sample.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double h = bandwidth;
    if (h <= 0.0) h = 1.06 * std::sqrt(variance(s)) * std::pow(n, -0.2);
    KernelDensity out;
    out.bandwidth = h;
    const double rk = 0.5 / std::sqrt(std::numbers::pi);
    for (double x : nodes) {
        const auto lo = std::lower_bound(s.begin(), s.end(), x - 8.0 * h);
        const auto hi = std::upper_bound(s.begin(), s.end(), x + 8.0 * h);
        double acc = 0.0;
        for (auto it = lo; it != hi; ++it) acc += normal_pdf((x - *it) / h);
        const double f = acc / (n * h);
        out.x.push_back(x);
        out.density.push_back(f);
        out.std_error.push_back(std::sqrt(std::max(f, 0.0) * rk / (n * h)));
    }
    return out;
}

}  // namespace bsdens::numerics
