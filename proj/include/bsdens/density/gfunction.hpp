#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bsdens/density/samplers.hpp"
#include "bsdens/errors.hpp"
#include "bsdens/numerics/parallel.hpp"
#include "bsdens/numerics/quadrature.hpp"
#include "bsdens/numerics/rng.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/pde/io.hpp"

namespace bsdens::density {

enum class ConditionalMethod { local_linear, bins };

inline const char* to_string(ConditionalMethod m) { return m == ConditionalMethod::local_linear ? "local_linear" : "bins"; }

inline ConditionalMethod conditional_method_from_string(const std::string& s) {
    if (s == "local_linear") return ConditionalMethod::local_linear;
    if (s == "bins") return ConditionalMethod::bins;
    throw ConfigurationError("unknown conditional estimator '" + s + "' (expected local_linear or bins)");
}

/// How E[S | F - E F = x] is estimated from the draws.
struct ConditionalSpec {
    ConditionalMethod method = ConditionalMethod::local_linear;
    /// Gaussian kernel bandwidth; 0 selects 1.06 sd n^{-1/5}.
    double bandwidth = 0.0;
    int n_bins = 32;
    /// Nodes with fewer samples within one bandwidth (or in the bin) are flagged unreliable.
    std::size_t min_count = 50;
    int n_nodes = 101;
    /// Nodes span this central fraction of F - E F.
    double coverage = 0.99;
    /// Average each W* draw with its reflection -W*.
    bool antithetic = true;
    /// Re-estimate at half and double bandwidth and report the largest relative change.
    bool sensitivity = true;
    int threads = 1;
};

/// g_F tabulated on centered nodes (arguments are F - E F).
struct GFunction {
    std::vector<double> x, g, ci_low, ci_high;
    std::vector<unsigned char> reliable;
    std::vector<std::size_t> count;
    std::string method;
    double bandwidth = 0.0;
    std::vector<double> u_nodes, u_weights;
    /// Fraction of nodes whose raw estimate was negative and was clipped to 0.
    double clip_rate = 0.0;
    /// max |g(2h) - g(h/2)| / g(h) over reliable nodes; 0 when not computed.
    double bandwidth_sensitivity = 0.0;
    std::size_t n_mc = 0;
    double mean_F = 0.0, mad_F = 0.0;
    /// The draws of F, kept for comparisons with kernel estimates.
    std::vector<double> sample;

    std::size_t unreliable_count() const {
        return static_cast<std::size_t>(std::count(reliable.begin(), reliable.end(), 0));
    }
};

namespace detail {

struct ConditionalValue {
    double value = 0.0, se = 0.0;
    std::size_t count = 0;
};

/// Local linear Gaussian-kernel fit at x0 on samples sorted by x; the kernel is cut at 5 bandwidths.
inline ConditionalValue local_linear(std::span<const double> xs, std::span<const double> ys, double x0, double h) {
    const auto lo = std::lower_bound(xs.begin(), xs.end(), x0 - 5 * h) - xs.begin();
    const auto hi = std::upper_bound(xs.begin(), xs.end(), x0 + 5 * h) - xs.begin();
    double S0 = 0, S1 = 0, S2 = 0, T0 = 0, T1 = 0;
    ConditionalValue out;
    for (auto i = lo; i < hi; ++i) {
        const double d = (xs[i] - x0) / h, k = std::exp(-0.5 * d * d);
        S0 += k;
        S1 += k * d;
        S2 += k * d * d;
        T0 += k * ys[i];
        T1 += k * d * ys[i];
        if (std::abs(d) <= 1.0) ++out.count;
    }
    if (!(S0 > 0)) return out;
    const double det = S0 * S2 - S1 * S1;
    const bool linear = det > 1e-10 * S0 * S0;
    const double a = linear ? (S2 * T0 - S1 * T1) / det : T0 / S0;
    const double b = linear ? (S0 * T1 - S1 * T0) / det : 0.0;
    double r2 = 0, l2 = 0;
    for (auto i = lo; i < hi; ++i) {
        const double d = (xs[i] - x0) / h, k = std::exp(-0.5 * d * d);
        const double r = ys[i] - a - b * d;
        r2 += k * r * r;
        const double l = linear ? k * (S2 - d * S1) / det : k / S0;
        l2 += l * l;
    }
    out.value = a;
    out.se = std::sqrt(r2 / S0 * l2);
    return out;
}

}  // namespace detail

/// Monte Carlo estimate of
///   g_F(x) = int_0^inf e^{-u} E[ E*[<Phi_F(W), Phi_F(e^{-u} W + sqrt(1 - e^{-2u}) W*)>] | F - E F = x ] du
/// with a Gauss-Laguerre rule in u and one (antithetic) W* draw per sample shared by all u nodes.
inline GFunction estimate_gF(const Sampler& sampler, std::size_t n_mc, int n_u_nodes = 16,
                             const ConditionalSpec& cond = {}, std::uint64_t seed = 1) {
    if (!sampler.eval) throw PreconditionError("estimate_gF: sampler has no evaluator");
    if (n_mc < 2) throw PreconditionError("estimate_gF: need at least two draws");
    if (n_u_nodes < 1) throw PreconditionError("estimate_gF: need at least one u node");
    if (!(cond.coverage > 0.0 && cond.coverage <= 1.0)) throw ConfigurationError("coverage must lie in (0, 1]");
    const std::size_t m = sampler.n_steps;
    const double dt = sampler.dt(), sqdt = std::sqrt(dt);
    const auto rule = numerics::gauss_laguerre(n_u_nodes);
    const std::uint32_t sw = numerics::substream_id("nv.w"), ss = numerics::substream_id("nv.wstar");
    std::vector<double> F(n_mc), S(n_mc);

    numerics::parallel_for(n_mc, cond.threads, [&](std::size_t i) {
        std::vector<double> dw(m), dws(m), rot(m), phi(m), phr(m);
        const numerics::NormalStream a(seed, sw, static_cast<std::uint32_t>(i)), b(seed, ss, static_cast<std::uint32_t>(i));
        for (std::size_t k = 0; k < m; ++k) {
            dw[k] = sqdt * a.normal(static_cast<std::uint32_t>(k));
            dws[k] = sqdt * b.normal(static_cast<std::uint32_t>(k));
        }
        F[i] = sampler.eval(dw, phi);
        double total = 0.0;
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            const double c = std::exp(-rule.nodes[q]), s = std::sqrt(std::max(0.0, 1.0 - c * c));
            double inner = 0.0;
            for (int sign : {1, -1}) {
                if (sign < 0 && !cond.antithetic) break;
                for (std::size_t k = 0; k < m; ++k) rot[k] = c * dw[k] + sign * s * dws[k];
                sampler.eval(rot, phr);
                double ip = 0.0;
                for (std::size_t k = 0; k < m; ++k) ip += phi[k] * phr[k];
                inner += ip * dt;
            }
            total += rule.weights[q] * (cond.antithetic ? 0.5 * inner : inner);
        }
        if (!std::isfinite(F[i]) || !std::isfinite(total))
            throw EvaluationError("non-finite functional value in draw " + std::to_string(i), sampler.horizon, F[i]);
        S[i] = total;
    });

    GFunction out;
    out.n_mc = n_mc;
    out.u_nodes = rule.nodes;
    out.u_weights = rule.weights;
    out.method = to_string(cond.method);
    out.mean_F = numerics::mean(F);
    out.mad_F = numerics::mean_abs_deviation(F);
    out.sample = F;

    std::vector<std::size_t> order(n_mc);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return F[p] < F[q]; });
    std::vector<double> xs(n_mc), ys(n_mc);
    for (std::size_t k = 0; k < n_mc; ++k) {
        xs[k] = F[order[k]] - out.mean_F;
        ys[k] = S[order[k]];
    }
    const double sd = std::sqrt(numerics::variance(xs));
    std::size_t clipped = 0;
    auto push = [&](double x, double v, double se, std::size_t cnt) {
        if (v < 0.0) {
            v = 0.0;
            ++clipped;
        }
        out.x.push_back(x);
        out.g.push_back(v);
        out.ci_low.push_back(std::max(0.0, v - 1.96 * se));
        out.ci_high.push_back(v + 1.96 * se);
        out.count.push_back(cnt);
        out.reliable.push_back(cnt >= cond.min_count ? 1 : 0);
    };

    if (!(sd > 1e-14 * (1.0 + std::abs(out.mean_F)))) {
        // F is numerically constant: a single node at 0
        const double v = numerics::mean(ys);
        push(0.0, v, std::sqrt(numerics::variance(ys) / n_mc), n_mc);
    } else if (cond.method == ConditionalMethod::bins) {
        const std::size_t nb = static_cast<std::size_t>(std::max(1, cond.n_bins));
        for (std::size_t bin = 0; bin < nb; ++bin) {
            const std::size_t lo = bin * n_mc / nb, hi = (bin + 1) * n_mc / nb;
            if (hi <= lo) continue;
            const std::span<const double> bx(xs.data() + lo, hi - lo), by(ys.data() + lo, hi - lo);
            const double se = hi - lo > 1 ? std::sqrt(numerics::variance(by) / (hi - lo)) : 0.0;
            push(numerics::mean(bx), numerics::mean(by), se, hi - lo);
        }
    } else {
        const double h = cond.bandwidth > 0 ? cond.bandwidth : 1.06 * sd * std::pow(static_cast<double>(n_mc), -0.2);
        out.bandwidth = h;
        const double tail = 0.5 * (1.0 - cond.coverage);
        const double a = numerics::quantile_sorted(xs, tail), b = numerics::quantile_sorted(xs, 1.0 - tail);
        const int nn = std::max(2, cond.n_nodes);
        for (int k = 0; k < nn; ++k) {
            const double x0 = a + (b - a) * k / (nn - 1);
            const auto v = detail::local_linear(xs, ys, x0, h);
            push(x0, v.value, v.se, v.count);
        }
        if (cond.sensitivity) {
            for (std::size_t k = 0; k < out.x.size(); ++k) {
                if (!out.reliable[k] || !(out.g[k] > 0)) continue;
                const double lo = detail::local_linear(xs, ys, out.x[k], 0.5 * h).value;
                const double hi = detail::local_linear(xs, ys, out.x[k], 2.0 * h).value;
                out.bandwidth_sensitivity = std::max(out.bandwidth_sensitivity, std::abs(hi - lo) / out.g[k]);
            }
        }
    }
    out.clip_rate = out.x.empty() ? 0.0 : static_cast<double>(clipped) / static_cast<double>(out.x.size());
    return out;
}

enum class DensityVerdict { exists, undetermined };

inline const char* to_string(DensityVerdict v) { return v == DensityVerdict::exists ? "exists" : "undetermined"; }

struct DensityEstimate {
    DensityVerdict verdict = DensityVerdict::undetermined;
    std::string note;
    /// Nodes on the F scale (mean_F + centered node); empty when undetermined.
    std::vector<double> x, rho, ci_low, ci_high;
    std::vector<unsigned char> reliable;
    double support_low = 0.0, support_high = 0.0;
    /// |int rho dx - P(F in node range)| with the probability taken from the g_F sample (1 without one);
    /// rho itself is never renormalized.
    double normalization_defect = 0.0;
};

namespace detail {

/// int_a^b u / g(u) du with g linear through (u0, g0), (u1, g1) and positive on [a, b]. Exact, so the
/// integrable blow-up of u / g where g_F vanishes linearly at a support end is resolved on coarse nodes.
inline double segment_integral(double u0, double g0, double u1, double g1, double a, double b) {
    const double beta = (g1 - g0) / (u1 - u0), alpha = g0 - beta * u0;
    const double ga = alpha + beta * a, gb = alpha + beta * b;
    if (std::abs(gb - ga) <= 1e-4 * std::max(ga, gb)) {
        // nearly constant g: Simpson is exact to far below the cutoff
        const double m = 0.5 * (a + b);
        return (b - a) / 6.0 * (a / ga + 4.0 * m / (alpha + beta * m) + b / gb);
    }
    return (b - a) / beta - alpha / (beta * beta) * std::log(gb / ga);
}

/// rho(x) = mad / (2 g(x)) exp(-int_0^x u / g(u) du) on centered nodes, g interpolated linearly between nodes
/// (and continued linearly from the end segment when 0 lies outside the node range).
inline std::vector<double> nv_formula(const std::vector<double>& x, const std::vector<double>& g, double mad) {
    const std::size_t n = x.size();
    std::vector<double> C(n, 0.0), rho(n);
    for (std::size_t k = 1; k < n; ++k)
        C[k] = C[k - 1] + segment_integral(x[k - 1], g[k - 1], x[k], g[k], x[k - 1], x[k]);
    std::size_t j = 0;
    if (0.0 >= x.back())
        j = n - 2;
    else if (0.0 > x.front())
        j = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), 0.0) - x.begin()) - 1;
    j = std::min(j, n - 2);
    const double C0 = C[j] + segment_integral(x[j], g[j], x[j + 1], g[j + 1], x[j], 0.0);
    for (std::size_t k = 0; k < n; ++k) rho[k] = mad / (2.0 * g[k]) * std::exp(-(C[k] - C0));
    return rho;
}

/// int rho dx over the node range with the same piecewise-linear g as nv_formula. On a segment where g varies,
/// rho du = rho_k g_k exp(-(C(u) - C_k)) d(log g) / beta is smooth in log g, which keeps a steep edge
/// (g vanishing linearly) accurate.
inline double nv_mass(const std::vector<double>& x, const std::vector<double>& g, const std::vector<double>& rho) {
    constexpr int m = 32;  // even Simpson panels per segment
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double u0 = x[k], u1 = x[k + 1], g0 = g[k], g1 = g[k + 1];
        const double beta = (g1 - g0) / (u1 - u0), alpha = g0 - beta * u0;
        const bool flat = std::abs(g1 - g0) <= 1e-4 * std::max(g0, g1);
        const double s0 = flat ? u0 : std::log(g0), s1 = flat ? u1 : std::log(g1), hs = (s1 - s0) / m;
        double acc = 0.0;
        for (int i = 0; i <= m; ++i) {
            const double s = s0 + i * hs;
            const double u = flat ? s : std::clamp((std::exp(s) - alpha) / beta, std::min(u0, u1), std::max(u0, u1));
            const double e = rho[k] * std::exp(-segment_integral(u0, g0, u1, g1, u0, u));
            const double f = flat ? e * g0 / (alpha + beta * u) : e * g0 / beta;
            acc += (i == 0 || i == m ? 1.0 : (i % 2 ? 4.0 : 2.0)) * f;
        }
        total += acc * hs / 3.0;
    }
    return total;
}

}  // namespace detail

/// Density reconstruction from g_F. Interior nodes with g <= positivity_floor make the verdict undetermined
/// and no density is emitted; non-positive end nodes only shrink the support.
inline DensityEstimate density_from_gF(const GFunction& gF, double mean_F, double mad_F,
                                       double positivity_floor = 1e-4) {
    DensityEstimate d;
    const std::size_t n = gF.x.size();
    if (n < 3) {
        d.note = "fewer than three g_F nodes; F is numerically degenerate";
        return d;
    }
    std::size_t first = 0, last = n - 1;
    while (first < n && !(gF.g[first] > positivity_floor)) ++first;
    while (last > first && !(gF.g[last] > positivity_floor)) --last;
    if (first >= last) {
        d.note = "g_F does not exceed the positivity floor on any node pair";
        return d;
    }
    for (std::size_t k = first; k <= last; ++k)
        if (!(gF.g[k] > positivity_floor)) {
            d.note = "g_F <= " + io::fmt(positivity_floor) + " at interior node x = " + io::fmt(gF.x[k]);
            return d;
        }
    const std::vector<double> x(gF.x.begin() + first, gF.x.begin() + last + 1);
    const std::vector<double> g(gF.g.begin() + first, gF.g.begin() + last + 1);
    std::vector<double> glo(g.size()), ghi(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        glo[k] = std::max(gF.ci_low[first + k], positivity_floor);
        ghi[k] = std::max(gF.ci_high[first + k], positivity_floor);
    }
    d.verdict = DensityVerdict::exists;
    d.rho = detail::nv_formula(x, g, mad_F);
    const auto ra = detail::nv_formula(x, glo, mad_F), rb = detail::nv_formula(x, ghi, mad_F);
    for (std::size_t k = 0; k < x.size(); ++k) {
        d.x.push_back(mean_F + x[k]);
        d.ci_low.push_back(std::min({d.rho[k], ra[k], rb[k]}));
        d.ci_high.push_back(std::max({d.rho[k], ra[k], rb[k]}));
        d.reliable.push_back(gF.reliable[first + k]);
    }
    d.support_low = d.x.front();
    d.support_high = d.x.back();
    double covered = 1.0;
    if (!gF.sample.empty()) {
        const auto inside = std::count_if(gF.sample.begin(), gF.sample.end(),
                                          [&](double f) { return f >= d.support_low && f <= d.support_high; });
        covered = static_cast<double>(inside) / static_cast<double>(gF.sample.size());
    }
    d.normalization_defect = std::abs(detail::nv_mass(x, g, d.rho) - covered);
    return d;
}

/// Columns x, value, ci_low, ci_high; unreliable nodes are listed in the header.
inline void write_csv(std::ostream& os, const GFunction& gF, const io::FileHeader& h = {}) {
    io::write_header(os, h);
    os << "# quantity: g_F\n# method: " << gF.method << "\n# bandwidth: " << io::fmt(gF.bandwidth)
       << "\n# n_mc: " << gF.n_mc << "\n# clip_rate: " << io::fmt(gF.clip_rate)
       << "\n# bandwidth_sensitivity: " << io::fmt(gF.bandwidth_sensitivity) << "\n# unreliable:";
    for (std::size_t k = 0; k < gF.x.size(); ++k)
        if (!gF.reliable[k]) os << ' ' << k;
    os << "\nx,value,ci_low,ci_high\n";
    for (std::size_t k = 0; k < gF.x.size(); ++k)
        os << io::fmt(gF.x[k]) << ',' << io::fmt(gF.g[k]) << ',' << io::fmt(gF.ci_low[k]) << ','
           << io::fmt(gF.ci_high[k]) << '\n';
}

inline void write_csv(std::ostream& os, const DensityEstimate& d, const io::FileHeader& h = {}) {
    io::write_header(os, h);
    os << "# quantity: density\n# verdict: " << to_string(d.verdict) << "\n";
    if (!d.note.empty()) os << "# note: " << d.note << "\n";
    os << "# support: " << io::fmt(d.support_low) << ' ' << io::fmt(d.support_high)
       << "\n# normalization_defect: " << io::fmt(d.normalization_defect) << "\nx,value,ci_low,ci_high\n";
    for (std::size_t k = 0; k < d.x.size(); ++k)
        os << io::fmt(d.x[k]) << ',' << io::fmt(d.rho[k]) << ',' << io::fmt(d.ci_low[k]) << ','
           << io::fmt(d.ci_high[k]) << '\n';
}

}  // namespace bsdens::density
