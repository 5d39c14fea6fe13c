#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "bsdens/errors.hpp"

namespace bsdens::numerics {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    template <class F>
    double integrate(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

namespace detail {

/// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights mu0 * (first eigenvector component)^2.
inline QuadratureRule golub_welsch(const std::vector<double>& diag, const std::vector<double>& offdiag, double mu0) {
    const int n = static_cast<int>(diag.size());
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) J(i, i) = diag[i];
    for (int i = 0; i + 1 < n; ++i) J(i, i + 1) = J(i + 1, i) = offdiag[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    QuadratureRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        r.weights[i] = mu0 * v * v;
    }
    return r;
}

}  // namespace detail

/// Gauss-Hermite rule for the standard normal weight: sum w_i f(x_i) ~ E[f(xi)], xi ~ N(0,1).
inline QuadratureRule gauss_hermite_normal(int n) {
    if (n < 1) throw PreconditionError("gauss_hermite_normal: n >= 1 required");
    std::vector<double> d(n, 0.0), e(n > 1 ? n - 1 : 0);
    for (int i = 0; i + 1 < n; ++i) e[i] = std::sqrt(static_cast<double>(i + 1));
    return detail::golub_welsch(d, e, 1.0);
}

/// Gauss-Laguerre rule for the weight e^{-u} on [0, inf).
inline QuadratureRule gauss_laguerre(int n) {
    if (n < 1) throw PreconditionError("gauss_laguerre: n >= 1 required");
    std::vector<double> d(n), e(n > 1 ? n - 1 : 0);
    for (int i = 0; i < n; ++i) d[i] = 2.0 * i + 1.0;
    for (int i = 0; i + 1 < n; ++i) e[i] = i + 1.0;
    return detail::golub_welsch(d, e, 1.0);
}

/// Gauss-Legendre rule mapped to [a, b].
inline QuadratureRule gauss_legendre(int n, double a, double b) {
    if (n < 1) throw PreconditionError("gauss_legendre: n >= 1 required");
    std::vector<double> d(n, 0.0), e(n > 1 ? n - 1 : 0);
    for (int i = 0; i + 1 < n; ++i) {
        const double k = i + 1.0;
        e[i] = k / std::sqrt(4.0 * k * k - 1.0);
    }
    auto r = detail::golub_welsch(d, e, 2.0);
    const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
    for (int i = 0; i < n; ++i) {
        r.nodes[i] = mid + half * r.nodes[i];
        r.weights[i] *= half;
    }
    return r;
}

namespace detail {

template <class F>
double adaptive_simpson_step(F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                             int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature on [a, b] with absolute tolerance tol.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-10, int max_depth = 40) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// Double-exponential (exp-sinh) quadrature of f on [0, inf): z = exp(pi/2 sinh s), step halved until two levels
/// agree to tol relative to max(1, |I|). Tolerates integrable endpoint singularities at 0.
template <class F>
double exp_sinh(F&& f, double tol = 1e-13, int max_levels = 12) {
    const double half_pi = 0.5 * std::numbers::pi, s_max = 4.5;
    auto term = [&](double s) {
        const double z = std::exp(half_pi * std::sinh(s));
        const double v = f(z) * z * half_pi * std::cosh(s);
        return std::isfinite(v) ? v : 0.0;
    };
    double h = 0.5;
    double sum = term(0.0);
    for (double s = h; s <= s_max; s += h) sum += term(s) + term(-s);
    double est = h * sum;
    for (int level = 0; level < max_levels; ++level) {
        h *= 0.5;
        for (double s = h; s <= s_max; s += 2.0 * h) sum += term(s) + term(-s);
        const double next = h * sum;
        if (std::abs(next - est) <= tol * std::max(1.0, std::abs(next))) return next;
        est = next;
    }
    return est;
}

/// Composite trapezoid on tabulated values.
inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

}  // namespace bsdens::numerics
