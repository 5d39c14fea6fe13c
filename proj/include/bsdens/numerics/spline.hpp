#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bsdens/errors.hpp"

namespace bsdens::numerics {

/// Cubic B-spline on [knots.front(), knots.back()], continued linearly (value and slope matched) outside.
struct SplineFit {
    std::vector<double> breaks;  // equally spaced, size K + 2 (boundaries included)
    std::vector<double> coeff;   // size K + 4
    double residual_rms = 0.0;

    /// Index i of the interval [breaks[i], breaks[i+1]) containing x, clamped to the valid range.
    /// Breaks are equally spaced, so the index is computed directly.
    std::size_t interval(double x) const {
        const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(breaks.size()) - 2;
        const double u = (x - breaks.front()) / (breaks.back() - breaks.front()) * static_cast<double>(last + 1);
        std::ptrdiff_t i = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(std::floor(u)), 0, last);
        // rounding in u can land one interval off
        if (i > 0 && x < breaks[i]) --i;
        if (i < last && x >= breaks[i + 1]) ++i;
        return static_cast<std::size_t>(i);
    }

    /// Knot t_m of the clamped knot vector (boundary knots repeated four times).
    double knot(std::ptrdiff_t m) const {
        const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(breaks.size()) - 1;
        return breaks[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(m - 3, 0, last))];
    }

    /// The four nonzero basis values (and first derivatives) at x in interval i; basis index offset is i.
    void basis(std::size_t i, double x, std::array<double, 4>& v, std::array<double, 4>* dv = nullptr) const {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(i) + 3;  // x in [t_s, t_{s+1})
        // Cox-de Boor up to degree 2, then degree 3 with derivative
        std::array<double, 4> n{1.0, 0.0, 0.0, 0.0};
        for (int d = 1; d <= 3; ++d) {
            std::array<double, 4> next{0.0, 0.0, 0.0, 0.0};
            if (d == 3 && dv) {
                for (int r = 0; r <= 3; ++r) {
                    const std::ptrdiff_t j = s - 3 + r;
                    double acc = 0.0;
                    if (r > 0) {
                        const double den = knot(j + 3) - knot(j);
                        if (den > 0) acc += 3.0 * n[r - 1] / den;
                    }
                    if (r < 3) {
                        const double den = knot(j + 4) - knot(j + 1);
                        if (den > 0) acc -= 3.0 * n[r] / den;
                    }
                    (*dv)[r] = acc;
                }
            }
            for (int r = 0; r <= d; ++r) {
                const std::ptrdiff_t j = s - d + r;  // basis N_{j,d}
                double acc = 0.0;
                if (r > 0) {
                    const double den = knot(j + d) - knot(j);
                    if (den > 0) acc += (x - knot(j)) / den * n[r - 1];
                }
                if (r < d) {
                    const double den = knot(j + d + 1) - knot(j + 1);
                    if (den > 0) acc += (knot(j + d + 1) - x) / den * n[r];
                }
                next[r] = acc;
            }
            n = next;
        }
        v = n;
    }

    double inside(double x, double* slope) const {
        const std::size_t i = interval(x);
        std::array<double, 4> v{}, dv{};
        basis(i, x, v, slope ? &dv : nullptr);
        double y = 0.0, d = 0.0;
        for (int r = 0; r < 4; ++r) {
            y += coeff[i + r] * v[r];
            d += coeff[i + r] * dv[r];
        }
        if (slope) *slope = d;
        return y;
    }

    double operator()(double x) const {
        const double lo = breaks.front(), hi = breaks.back();
        if (x >= lo && x <= hi) return inside(std::min(x, std::nextafter(hi, lo)), nullptr);
        const double edge = x < lo ? lo : std::nextafter(hi, lo);
        double slope = 0.0;
        const double y = inside(edge, &slope);
        return y + slope * (x - edge);
    }

    double derivative(double x) const {
        const double lo = breaks.front(), hi = breaks.back();
        double slope = 0.0;
        inside(std::clamp(x, lo, std::nextafter(hi, lo)), &slope);
        return slope;
    }
};

/// Least squares on a cubic B-spline basis with `interior` equally spaced knots over the sample range and a
/// second-difference coefficient penalty of weight `ridge` (constants and linear trends are not penalized).
inline SplineFit fit_spline(std::span<const double> xs, std::span<const double> ys, int interior, double ridge = 1e-8) {
    if (xs.size() != ys.size() || xs.empty()) throw PreconditionError("fit_spline: size mismatch or empty sample");
    if (interior < 0 || interior > 200) throw PreconditionError("fit_spline: interior knot count must lie in [0, 200]");
    const std::size_t n = xs.size();
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    SplineFit fit;
    const double lo = sorted.front(), hi = sorted.back();
    if (!(hi - lo > 1e-14 * (1.0 + std::abs(lo)))) {
        double ym = 0.0;
        for (double y : ys) ym += y;
        ym /= n;
        fit.breaks = {lo - 0.5, lo + 0.5};
        fit.coeff.assign(4, ym);
        double r = 0.0;
        for (double y : ys) r += (y - ym) * (y - ym);
        fit.residual_rms = std::sqrt(r / n);
        return fit;
    }
    for (int k = 0; k <= interior + 1; ++k) fit.breaks.push_back(lo + (hi - lo) * k / (interior + 1));
    fit.breaks.back() = hi;
    const int p = static_cast<int>(fit.breaks.size()) + 2;
    fit.coeff.assign(p, 0.0);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    std::array<double, 4> v{};
    for (std::size_t m = 0; m < n; ++m) {
        const double x = std::min(xs[m], std::nextafter(hi, lo));
        const std::size_t i = fit.interval(x);
        fit.basis(i, x, v);
        for (int a = 0; a < 4; ++a) {
            rhs(i + a) += v[a] * ys[m];
            for (int b = 0; b < 4; ++b) A(i + a, i + b) += v[a] * v[b];
        }
    }
    A /= static_cast<double>(n);
    rhs /= static_cast<double>(n);
    // second divided differences of the coefficients over the Greville abscissae vanish exactly on linear functions
    std::vector<double> greville(p);
    for (int k = 0; k < p; ++k) greville[k] = (fit.knot(k + 1) + fit.knot(k + 2) + fit.knot(k + 3)) / 3.0;
    const double span = hi - lo;
    for (int k = 0; k + 2 < p; ++k) {
        const double h0 = (greville[k + 1] - greville[k]) / span, h1 = (greville[k + 2] - greville[k + 1]) / span;
        const std::array<double, 3> d{1.0 / h0, -1.0 / h0 - 1.0 / h1, 1.0 / h1};
        const double w = ridge / static_cast<double>(p * p);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) A(k + a, k + b) += w * d[a] * d[b];
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    const auto D = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || D.minCoeff() <= 1e-13 * D.maxCoeff())
        throw BasisError("fit_spline: rank-deficient design for " + std::to_string(interior) + " interior knots");
    const Eigen::VectorXd beta = ldlt.solve(rhs);
    for (int k = 0; k < p; ++k) fit.coeff[k] = beta(k);
    double r = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        const double e = ys[m] - fit(xs[m]);
        r += e * e;
    }
    fit.residual_rms = std::sqrt(r / n);
    return fit;
}

}  // namespace bsdens::numerics
