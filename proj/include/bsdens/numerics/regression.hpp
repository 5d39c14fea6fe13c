#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsdens/errors.hpp"

namespace bsdens::numerics {

/// E[xi^k] for xi ~ N(0,1).
inline double normal_moment(int k) {
    if (k % 2 != 0) return 0.0;
    double m = 1.0;
    for (int j = k - 1; j > 1; j -= 2) m *= j;
    return m;
}

/// Least-squares polynomial p(x) = sum_m a_m u^m with u = (x - center) / scale.
/// Fitted through an orthonormal probabilists' Hermite design for conditioning, stored as monomials in u.
struct PolynomialFit {
    double center = 0.0;
    double scale = 1.0;
    std::vector<double> coeff;  // monomial coefficients in u
    double residual_rms = 0.0;

    int degree() const { return static_cast<int>(coeff.size()) - 1; }

    double operator()(double x) const {
        const double u = (x - center) / scale;
        double v = 0.0;
        for (int m = degree(); m >= 0; --m) v = v * u + coeff[m];
        return v;
    }

    double derivative(double x) const {
        const double u = (x - center) / scale;
        double v = 0.0;
        for (int m = degree(); m >= 1; --m) v = v * u + m * coeff[m];
        return v / scale;
    }

    /// E[p(mu + sd * xi) * xi^q] for xi ~ N(0,1), exact for the stored polynomial.
    double gaussian_moment(double mu, double sd, int q) const {
        const double u0 = (mu - center) / scale, v = sd / scale;
        const int d = degree();
        // binomial expansion (u0 + v xi)^m = sum_j C(m,j) u0^{m-j} v^j xi^j
        double total = 0.0;
        std::array<double, 32> u0pow{}, vpow{};
        u0pow[0] = vpow[0] = 1.0;
        for (int k = 1; k <= d; ++k) {
            u0pow[k] = u0pow[k - 1] * u0;
            vpow[k] = vpow[k - 1] * v;
        }
        for (int m = 0; m <= d; ++m) {
            if (coeff[m] == 0.0) continue;
            double binom = 1.0, s = 0.0;
            for (int j = 0; j <= m; ++j) {
                if (j > 0) binom = binom * (m - j + 1) / j;
                if ((j + q) % 2 == 0) s += binom * u0pow[m - j] * vpow[j] * normal_moment(j + q);
            }
            total += coeff[m] * s;
        }
        return total;
    }
};

namespace detail {

/// Monomial coefficients of He_0..He_d.
inline std::vector<std::vector<double>> hermite_table(int d) {
    std::vector<std::vector<double>> he(d + 1, std::vector<double>(d + 1, 0.0));
    he[0][0] = 1.0;
    if (d >= 1) he[1][1] = 1.0;
    for (int n = 1; n < d; ++n) {
        for (int m = 0; m <= d; ++m) {
            double v = -n * he[n - 1][m];
            if (m > 0) v += he[n][m - 1];
            he[n + 1][m] = v;
        }
    }
    return he;
}

}  // namespace detail

/// Ridge-regularized least squares of ys on a degree-d polynomial basis in xs (ridge on non-constant terms).
/// A constant design (all xs equal) reduces to the sample mean; a singular design raises BasisError.
inline PolynomialFit fit_polynomial(std::span<const double> xs, std::span<const double> ys, int degree,
                                   double ridge = 1e-8) {
    if (xs.size() != ys.size() || xs.empty()) throw PreconditionError("fit_polynomial: size mismatch or empty sample");
    if (degree < 0 || degree > 24) throw PreconditionError("fit_polynomial: degree must lie in [0, 24]");
    const std::size_t n = xs.size();
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= n;
    PolynomialFit fit;
    fit.center = mean;
    fit.scale = std::sqrt(var);
    if (!(fit.scale > 1e-14 * (1.0 + std::abs(mean)))) {
        double ym = 0.0;
        for (double y : ys) ym += y;
        ym /= n;
        double r = 0.0;
        for (double y : ys) r += (y - ym) * (y - ym);
        fit.scale = 1.0;
        fit.coeff = {ym};
        fit.residual_rms = std::sqrt(r / n);
        return fit;
    }
    const int p = degree + 1;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    std::vector<double> phi(p), inv_norm(p, 1.0);
    for (int k = 1; k < p; ++k) inv_norm[k] = inv_norm[k - 1] / std::sqrt(static_cast<double>(k));
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (xs[i] - fit.center) / fit.scale;
        phi[0] = 1.0;
        if (p > 1) phi[1] = u;
        for (int k = 1; k + 1 < p; ++k) phi[k + 1] = u * phi[k] - k * phi[k - 1];
        for (int k = 0; k < p; ++k) phi[k] *= inv_norm[k];
        for (int a = 0; a < p; ++a) {
            rhs(a) += phi[a] * ys[i];
            for (int b = 0; b <= a; ++b) A(a, b) += phi[a] * phi[b];
        }
    }
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < a; ++b) A(b, a) = A(a, b);
    A /= static_cast<double>(n);
    rhs /= static_cast<double>(n);
    for (int a = 1; a < p; ++a) A(a, a) += ridge;  // the intercept is not penalized
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    const auto D = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || D.minCoeff() <= std::max(1e-13, 100.0 * ridge) * D.maxCoeff())
        throw BasisError("fit_polynomial: rank-deficient design for degree " + std::to_string(degree));
    const Eigen::VectorXd beta = ldlt.solve(rhs);
    const auto he = detail::hermite_table(degree);
    fit.coeff.assign(p, 0.0);
    for (int k = 0; k < p; ++k)
        for (int m = 0; m <= k; ++m) fit.coeff[m] += beta(k) * inv_norm[k] * he[k][m];
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ys[i] - fit(xs[i]);
        r += e * e;
    }
    fit.residual_rms = std::sqrt(r / n);
    return fit;
}

}  // namespace bsdens::numerics
