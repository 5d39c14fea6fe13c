#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/parallel.hpp"
#include "bsdens/numerics/rng.hpp"

namespace bsdens::mc {

/// Increment sanity gate: normalized increments have |mean| <= 5/sqrt(N) and variance within 5% of 1.
struct SanityGate {
    double mean = 0.0;
    double variance_ratio = 1.0;
    bool passed = true;
};

/// Euler paths stored step-major: value (step k, path p) lives at k * n_paths + p.
struct PathEnsemble {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double T = 1.0;
    double dt = 1.0;
    std::uint64_t seed = 0;
    std::string substream = "forward";
    bool antithetic = false;
    std::vector<double> dW;  // n_steps x n_paths
    std::vector<double> X;   // (n_steps + 1) x n_paths
    SanityGate sanity;

    double time(std::size_t k) const { return k == n_steps ? T : k * dt; }
    double x(std::size_t k, std::size_t p) const { return X[k * n_paths + p]; }
    double dw(std::size_t k, std::size_t p) const { return dW[k * n_paths + p]; }
    /// Brownian value W_{t_k} on path p.
    double w(std::size_t k, std::size_t p) const {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += dw(i, p);
        return s;
    }
    std::vector<double> slice(std::size_t k) const { return {X.begin() + k * n_paths, X.begin() + (k + 1) * n_paths}; }
};

struct ForwardOptions {
    int threads = 1;
    /// Path 2m+1 uses the negated increments of path 2m.
    bool antithetic = false;
    std::string substream = "forward";
};

inline SanityGate sanity_gate(const std::vector<double>& dW, double dt) {
    SanityGate g;
    const double n = static_cast<double>(dW.size());
    if (dW.empty()) return g;
    const double sd = std::sqrt(dt);
    double s = 0.0, s2 = 0.0;
    for (double v : dW) {
        s += v / sd;
        s2 += (v / sd) * (v / sd);
    }
    g.mean = s / n;
    g.variance_ratio = s2 / n - g.mean * g.mean;
    g.passed = std::abs(g.mean) <= 5.0 / std::sqrt(n) && std::abs(g.variance_ratio - 1.0) <= 0.05;
    return g;
}

/// Euler-Maruyama forward paths driven by given increments (n_steps x n_paths, step-major).
inline PathEnsemble simulate_from_increments(const model::ModelSpec& s, std::vector<double> dW, std::size_t n_paths,
                                             std::size_t n_steps, int threads = 1) {
    if (n_paths < 1 || n_steps < 1) throw PreconditionError("simulate_forward: need n_paths >= 1 and n_steps >= 1");
    if (dW.size() != n_paths * n_steps) throw PreconditionError("simulate_from_increments: increment matrix size");
    PathEnsemble e;
    e.n_paths = n_paths;
    e.n_steps = n_steps;
    e.T = s.T;
    e.dt = s.T / static_cast<double>(n_steps);
    e.dW = std::move(dW);
    e.X.assign((n_steps + 1) * n_paths, s.X0);
    numerics::parallel_for(n_paths, threads, [&](std::size_t p) {
        double x = s.X0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double t = e.time(k);
            const double b = s.b(t, x), sg = s.sigma(t, x);
            if (!std::isfinite(b) || !std::isfinite(sg))
                throw EvaluationError("non-finite coefficient on path " + std::to_string(p) + " step " + std::to_string(k),
                                      t, x);
            x += b * e.dt + sg * e.dW[k * n_paths + p];
            e.X[(k + 1) * n_paths + p] = x;
        }
    });
    e.sanity = sanity_gate(e.dW, e.dt);
    return e;
}

/// Increments for path p come from the counter-based stream (seed, substream, p); results do not depend on threads.
inline PathEnsemble simulate_forward(const model::ModelSpec& s, std::size_t n_paths, std::size_t n_steps,
                                     std::uint64_t seed, const ForwardOptions& opt = {}) {
    if (n_paths < 1 || n_steps < 1) throw PreconditionError("simulate_forward: need n_paths >= 1 and n_steps >= 1");
    if (!(s.T > 0.0)) throw PreconditionError("simulate_forward: T must be positive");
    const double sd = std::sqrt(s.T / static_cast<double>(n_steps));
    std::vector<double> dW(n_paths * n_steps);
    const auto sub = numerics::substream_id(opt.substream);
    numerics::parallel_for(n_paths, opt.threads, [&](std::size_t p) {
        const std::size_t src = opt.antithetic ? p / 2 : p;
        const double sign = (opt.antithetic && p % 2 == 1) ? -1.0 : 1.0;
        numerics::NormalStream rng(seed, sub, static_cast<std::uint32_t>(src));
        for (std::size_t k = 0; k < n_steps; ++k)
            dW[k * n_paths + p] = sign * sd * rng.normal(static_cast<std::uint32_t>(k));
    });
    auto e = simulate_from_increments(s, std::move(dW), n_paths, n_steps, opt.threads);
    e.seed = seed;
    e.substream = opt.substream;
    e.antithetic = opt.antithetic;
    return e;
}

/// First variation Psi (= grad X) by the Euler scheme Psi_{k+1} = Psi_k (1 + b_x dt + sigma_x dW_k), Psi_0 = 1.
struct VariationalPaths {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<double> grad;   // (n_steps + 1) x n_paths
    std::vector<double> sigma;  // sigma(t_k, X_k), (n_steps + 1) x n_paths

    double psi(std::size_t k, std::size_t p) const { return grad[k * n_paths + p]; }

    /// Discrete D_{t_k} X_{t_j}: sigma(t_k, X_k) at j = k, and dX_j / d(dW_k) = sigma(t_k, X_k) Psi_j / Psi_{k+1} for j > k.
    double d_x(std::size_t k, std::size_t j, std::size_t p) const {
        if (j < k) return 0.0;
        const double s = sigma[k * n_paths + p];
        if (j == k) return s;
        return s * psi(j, p) / psi(k + 1, p);
    }

    /// Flow representation grad X_t (grad X_r)^{-1} sigma(r, X_r) with r = t_k, t = t_j.
    double d_x_flow(std::size_t k, std::size_t j, std::size_t p) const {
        if (j < k) return 0.0;
        return sigma[k * n_paths + p] * psi(j, p) / psi(k, p);
    }
};

inline VariationalPaths variational_processes(const model::ModelSpec& s, const PathEnsemble& e, int threads = 1) {
    VariationalPaths v;
    v.n_paths = e.n_paths;
    v.n_steps = e.n_steps;
    v.grad.assign((e.n_steps + 1) * e.n_paths, 1.0);
    v.sigma.assign((e.n_steps + 1) * e.n_paths, 0.0);
    numerics::parallel_for(e.n_paths, threads, [&](std::size_t p) {
        double psi = 1.0;
        for (std::size_t k = 0; k <= e.n_steps; ++k) {
            const double t = e.time(k), x = e.x(k, p);
            v.sigma[k * e.n_paths + p] = s.sigma(t, x);
            v.grad[k * e.n_paths + p] = psi;
            if (k == e.n_steps) break;
            const double bx = s.b_x(t, x), sx = s.sigma_x(t, x);
            if (!std::isfinite(bx) || !std::isfinite(sx))
                throw EvaluationError("non-finite b_x or sigma_x on path " + std::to_string(p), t, x);
            psi *= 1.0 + bx * e.dt + sx * e.dw(k, p);
        }
    });
    return v;
}

}  // namespace bsdens::mc
