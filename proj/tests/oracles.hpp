#pragma once

// Independent reference computations shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/special.hpp"

namespace oracle {

/// Central difference of the regression solution Y_j on `path` with respect to the increment dW_k:
/// (Y_j(dW_k + eps) - Y_j(dW_k - eps)) / (2 eps) for every j, from two complete forward and backward re-runs.
inline std::vector<double> brute_force_dy(const bsdens::model::ModelSpec& s, const bsdens::mc::PathEnsemble& e,
                                          const bsdens::mc::BasisSpec& basis, std::size_t k, std::size_t path,
                                          double eps = 1e-4) {
    auto run = [&](double bump) {
        auto dW = e.dW;
        dW[k * e.n_paths + path] += bump;
        const auto pe = bsdens::mc::simulate_from_increments(s, std::move(dW), e.n_paths, e.n_steps);
        const auto sol = bsdens::mc::solve_bsde_regression(s, pe, basis);
        std::vector<double> y(e.n_steps + 1);
        for (std::size_t j = 0; j <= e.n_steps; ++j) y[j] = sol.y(j, path);
        return y;
    };
    const auto up = run(eps), dn = run(-eps);
    std::vector<double> d(e.n_steps + 1);
    for (std::size_t j = 0; j <= e.n_steps; ++j) d[j] = (up[j] - dn[j]) / (2.0 * eps);
    return d;
}

/// Acceptance rule for Malliavin agreement: |a - b| <= max(rel |b|, abs).
inline bool within(double a, double b, double rel = 5e-2, double abs = 1e-3) {
    return std::abs(a - b) <= std::max(rel * std::abs(b), abs);
}

/// Exact density of 3 W_1^2: phi(sqrt(z/3)) / sqrt(3 z) for z > 0.
inline double chi_square_density_3(double z) {
    return z > 0 ? bsdens::numerics::normal_pdf(std::sqrt(z / 3.0)) / std::sqrt(3.0 * z) : 0.0;
}

/// Coefficient of W_t in the counterexample; vanishes at t = 2 - sqrt(3).
inline double counter_coefficient(double t) { return -0.5 + 2.0 * t - 0.5 * t * t; }

/// ln f at L = ln x for the oscillating-rate fixture: F(L) = L up to L = 1, then repeated cycles that rise with
/// slope 4 from the line F = L to the line F = 2L and fall back with slope 1/2; each cycle scales L by 4.5.
/// Touches F = 2L at L = 1.5, 6.75, 30.375, ... and F = L at L = 1, 4.5, 20.25, ...; f is odd.
inline double oscillating_log(double L, double* slope = nullptr) {
    if (L <= 1.0) {
        if (slope) *slope = 1.0;
        return L;
    }
    double a = 1.0;
    while (L >= 4.5 * a) a *= 4.5;
    const double b = 1.5 * a;
    if (L <= b) {
        if (slope) *slope = 4.0;
        return a + 4.0 * (L - a);
    }
    if (slope) *slope = 0.5;
    return 2.0 * b + 0.5 * (L - b);
}

/// ln f' = F - L + ln F' for the same fixture.
inline double oscillating_log_derivative(double L) {
    double slope = 0.0;
    const double F = oscillating_log(L, &slope);
    return F - L + std::log(slope);
}

}  // namespace oracle
