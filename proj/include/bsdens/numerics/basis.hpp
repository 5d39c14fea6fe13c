#pragma once

#include <span>
#include <string>

#include "bsdens/errors.hpp"
#include "bsdens/numerics/regression.hpp"
#include "bsdens/numerics/spline.hpp"

namespace bsdens::numerics {

enum class BasisFamily { polynomial, spline };

inline const char* to_string(BasisFamily f) { return f == BasisFamily::polynomial ? "polynomial" : "spline"; }

inline BasisFamily basis_family_from_string(const std::string& s) {
    if (s == "polynomial") return BasisFamily::polynomial;
    if (s == "spline") return BasisFamily::spline;
    throw ConfigurationError("unknown basis family '" + s + "' (expected polynomial or spline)");
}

/// A fitted regression function of either family.
struct BasisFit {
    BasisFamily family = BasisFamily::polynomial;
    PolynomialFit poly;
    SplineFit spline;

    double operator()(double x) const { return family == BasisFamily::polynomial ? poly(x) : spline(x); }
    double derivative(double x) const {
        return family == BasisFamily::polynomial ? poly.derivative(x) : spline.derivative(x);
    }
    double residual_rms() const { return family == BasisFamily::polynomial ? poly.residual_rms : spline.residual_rms; }
};

/// `size` is the polynomial degree or the number of interior spline knots.
inline BasisFit fit_basis(std::span<const double> xs, std::span<const double> ys, BasisFamily family, int size,
                          double ridge) {
    BasisFit f;
    f.family = family;
    if (family == BasisFamily::polynomial)
        f.poly = fit_polynomial(xs, ys, size, ridge);
    else
        f.spline = fit_spline(xs, ys, size, ridge);
    return f;
}

}  // namespace bsdens::numerics
