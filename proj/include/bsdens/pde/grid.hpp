#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"

namespace bsdens::pde {

enum class Boundary { linear_extrapolation, dirichlet_terminal_growth };

enum class Equation { u, u_prime, u_doubleprime };

inline const char* to_string(Equation e) {
    switch (e) {
        case Equation::u: return "u";
        case Equation::u_prime: return "u_prime";
        case Equation::u_doubleprime: return "u_doubleprime";
    }
    return "?";
}

struct GridSpec {
    std::vector<double> t_nodes;
    std::vector<double> x_nodes;
    Boundary boundary = Boundary::linear_extrapolation;

    /// n_t time intervals on [0, T] and n_x space nodes on [x_min, x_max].
    static GridSpec uniform(double T, int n_t, double x_min, double x_max, int n_x,
                            Boundary b = Boundary::linear_extrapolation) {
        if (n_t < 1 || n_x < 3 || !(x_max > x_min) || !(T > 0.0))
            throw ConfigurationError("GridSpec::uniform: need n_t >= 1, n_x >= 3, x_max > x_min, T > 0");
        GridSpec g;
        g.boundary = b;
        g.t_nodes.resize(n_t + 1);
        for (int i = 0; i <= n_t; ++i) g.t_nodes[i] = T * i / n_t;
        g.t_nodes.back() = T;
        g.x_nodes.resize(n_x);
        for (int j = 0; j < n_x; ++j) g.x_nodes[j] = x_min + (x_max - x_min) * j / (n_x - 1);
        return g;
    }

    /// Default truncation X0 +- width sqrt(T) sigma_max, sigma_max sampled at t = 0 and T on X0 +- width sqrt(T).
    static GridSpec for_model(const model::ModelSpec& s, int n_t, int n_x, double width = 6.0) {
        const double probe = width * std::sqrt(s.T);
        double smax = 0.0;
        for (int j = 0; j <= 64; ++j) {
            const double x = s.X0 - probe + 2.0 * probe * j / 64.0;
            smax = std::max({smax, std::abs(s.sigma(0.0, x)), std::abs(s.sigma(s.T, x))});
        }
        if (!(smax > 0.0)) throw ConfigurationError("GridSpec::for_model: sigma vanishes on the sampled range");
        return uniform(s.T, n_t, s.X0 - probe * smax, s.X0 + probe * smax, n_x);
    }

    double dx() const { return x_nodes[1] - x_nodes[0]; }

    void validate() const {
        if (x_nodes.size() < 3) throw ConfigurationError("GridSpec: at least 3 x-nodes required");
        if (t_nodes.size() < 2) throw ConfigurationError("GridSpec: at least 2 t-nodes required");
        if (t_nodes.front() != 0.0) throw ConfigurationError("GridSpec: t_nodes must start at 0");
        for (std::size_t i = 1; i < t_nodes.size(); ++i)
            if (!(t_nodes[i] > t_nodes[i - 1])) throw ConfigurationError("GridSpec: t_nodes must increase");
        const double h = dx();
        if (!(h > 0.0)) throw ConfigurationError("GridSpec: x_nodes must increase");
        for (std::size_t j = 1; j < x_nodes.size(); ++j)
            if (std::abs((x_nodes[j] - x_nodes[j - 1]) - h) > 1e-9 * (1.0 + std::abs(h)))
                throw ConfigurationError("GridSpec: x-spacing must be uniform");
    }
};

struct SchemeInfo {
    double theta = 0.5;
    int max_iterations = 0;
    int fallback_steps = 0;
    double last_residual = 0.0;
};

/// Values over t_nodes x x_nodes in row-major order (row = time index).
struct GridSolution {
    GridSpec grid;
    Equation which = Equation::u;
    std::vector<double> u, u_x, u_xx;
    SchemeInfo scheme;

    std::size_t n_t() const { return grid.t_nodes.size(); }
    std::size_t n_x() const { return grid.x_nodes.size(); }
    std::size_t idx(std::size_t i, std::size_t j) const { return i * n_x() + j; }

    struct Sample {
        double u = 0.0, u_x = 0.0, u_xx = 0.0;
        bool extrapolated = false;
    };

    /// Interpolated values; queries outside the box are clamped and flagged.
    Sample at(double t, double x) const {
        Sample s;
        const auto& tn = grid.t_nodes;
        const auto& xn = grid.x_nodes;
        if (t < tn.front() - 1e-12 || t > tn.back() + 1e-12 || x < xn.front() || x > xn.back()) s.extrapolated = true;
        t = std::clamp(t, tn.front(), tn.back());
        x = std::clamp(x, xn.front(), xn.back());
        std::size_t i = std::upper_bound(tn.begin(), tn.end(), t) - tn.begin();
        i = std::clamp<std::size_t>(i, 1, tn.size() - 1) - 1;
        const double wt = (t - tn[i]) / (tn[i + 1] - tn[i]);
        const double h = grid.dx();
        std::size_t j = static_cast<std::size_t>(std::floor((x - xn.front()) / h));
        j = std::min(j, xn.size() - 2);
        const double wx = (x - xn[j]) / h;
        auto bil = [&](const std::vector<double>& f) {
            const double a = (1 - wx) * f[idx(i, j)] + wx * f[idx(i, j + 1)];
            const double b = (1 - wx) * f[idx(i + 1, j)] + wx * f[idx(i + 1, j + 1)];
            return (1 - wt) * a + wt * b;
        };
        // cubic Hermite in x for u (slopes u_x) and u_x (slopes u_xx), linear in t
        const double h00 = (1 + 2 * wx) * (1 - wx) * (1 - wx), h10 = wx * (1 - wx) * (1 - wx);
        const double h01 = wx * wx * (3 - 2 * wx), h11 = -wx * wx * (1 - wx);
        auto herm = [&](const std::vector<double>& f, const std::vector<double>& fx) {
            auto at_row = [&](std::size_t r) {
                return h00 * f[idx(r, j)] + h10 * h * fx[idx(r, j)] + h01 * f[idx(r, j + 1)] + h11 * h * fx[idx(r, j + 1)];
            };
            return (1 - wt) * at_row(i) + wt * at_row(i + 1);
        };
        s.u = herm(u, u_x);
        s.u_x = herm(u_x, u_xx);
        s.u_xx = bil(u_xx);
        return s;
    }

    /// Row of `field` at time index i.
    std::vector<double> row(const std::vector<double>& field, std::size_t i) const {
        return {field.begin() + idx(i, 0), field.begin() + idx(i, 0) + n_x()};
    }

    /// Time index of the node closest to t.
    std::size_t nearest_time(double t) const {
        const auto& tn = grid.t_nodes;
        std::size_t best = 0;
        for (std::size_t i = 1; i < tn.size(); ++i)
            if (std::abs(tn[i] - t) < std::abs(tn[best] - t)) best = i;
        return best;
    }
};

/// Centered first and second differences with second-order one-sided stencils at the ends.
inline void difference_row(const double* w, std::size_t n, double h, double* d1, double* d2) {
    for (std::size_t j = 1; j + 1 < n; ++j) {
        d1[j] = (w[j + 1] - w[j - 1]) / (2.0 * h);
        d2[j] = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (h * h);
    }
    d1[0] = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) / (2.0 * h);
    if (n >= 4) {
        d2[0] = (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / (h * h);
        d2[n - 1] = (2.0 * w[n - 1] - 5.0 * w[n - 2] + 4.0 * w[n - 3] - w[n - 4]) / (h * h);
    } else {
        d2[0] = d2[n - 1] = d2[1];
    }
}

}  // namespace bsdens::pde
