#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/model/spec.hpp"
#include "bsdens/numerics/rng.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/pde/grid.hpp"
#include "bsdens/pde/solver.hpp"
#include "bsdens/tails/envelope.hpp"

namespace bsdens::tails {

struct TailStudyOptions {
    /// "Y": P_t = u(t, W_t); "Z": P_t = u_x(t, W_t).
    std::string target = "Z";
    double t = 1.0;
    double x_lim = 6.0;
    /// Even, so that no node sits on a symmetric fold at 0.
    int n_x = 400;
    int n_t = 200;
    double alpha_tilde = 0.5;
    std::optional<double> K;
    /// Both unset: smallest pair on the ladder with gamma < 1.
    std::optional<double> eps, eps_p;
    EnvelopeForm form = EnvelopeForm::corollary;
    std::size_t n_samples = 100000;
    std::uint64_t seed = 1;
    int n_y = 201;
    double q_lo = 0.0005;
    double confidence = 0.99;
};

struct TailStudy {
    TailStudyOptions options;
    MonotoneSlice slice;
    EnvelopeRates rates;
    EpsChoice eps;
    TailConstants constants;
    TailEnvelope envelope;
    TailDomination domination;
    bool ordered = false;
    double worst_order_gap = 0.0;
    /// Samples whose state fell outside the grid box.
    std::size_t extrapolated = 0;
};

namespace detail {

inline void require_brownian(const model::ModelSpec& s) {
    if (s.X0 != 0.0) throw PreconditionError("tail study: needs X = W (X0 = 0)");
    for (int i = 0; i <= 4; ++i)
        for (int j = -4; j <= 4; ++j) {
            const double t = s.T * i / 4.0, x = 2.0 * j;
            if (s.b(t, x) != 0.0 || s.sigma(t, x) != 1.0)
                throw PreconditionError("tail study: needs X = W (b = 0, sigma = 1); fails at t = " + std::to_string(t) +
                                        ", x = " + std::to_string(x));
        }
}

}  // namespace detail

/// Envelope of the density of P_t on the monotone restriction of x -> v(t, x), with v = u for Y and v = u_x for Z,
/// compared against a KDE of P_t drawn from W_t ~ N(0, t) on substream "tails.samples".
inline TailStudy tail_study(const model::ModelSpec& s, const TailStudyOptions& o) {
    if (o.target != "Y" && o.target != "Z") throw ConfigurationError("tail study: target must be Y or Z");
    if (!(o.t > 0.0) || o.t > s.T) throw PreconditionError("tail study: need 0 < t <= T");
    detail::require_brownian(s);
    TailStudy st;
    st.options = o;
    const auto grid = pde::GridSpec::uniform(s.T, o.n_t, -o.x_lim, o.x_lim, o.n_x);
    const auto u = pde::solve_u(s, grid);
    std::optional<pde::GridSolution> up;
    if (o.target == "Z") up = pde::solve_u_prime(s, grid, u);
    const auto& sol = up ? *up : u;
    const std::size_t i = sol.nearest_time(o.t);
    std::vector<double> v(grid.x_nodes.size()), dv(grid.x_nodes.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] = sol.u[sol.idx(i, j)];
        dv[j] = sol.u_x[sol.idx(i, j)];
    }
    st.slice = monotone_restriction(grid.x_nodes, v, dv);
    st.rates = slice_rates(st.slice);
    if (o.eps && o.eps_p) {
        st.eps.eps = *o.eps;
        st.eps.eps_p = *o.eps_p;
        st.eps.gamma = (st.rates.vp.alpha_bar + *o.eps) * (st.rates.vinv.alpha_bar + *o.eps_p);
        st.eps.found = st.eps.gamma < 1.0;
    } else {
        st.eps = choose_eps(st.rates);
        if (!st.eps.found) {
            if (o.form == EnvelopeForm::corollary)
                throw PreconditionError("tail study: no (eps, eps') on the ladder gives gamma < 1");
            st.eps.eps = st.eps.eps_p = 0.01;
        }
    }
    const double t_eval = grid.t_nodes[i];
    st.constants = compute_constants(st.slice, t_eval, st.eps.eps, st.eps.eps_p, o.alpha_tilde, o.K, st.rates);

    const auto sub = numerics::substream_id("tails.samples");
    std::vector<double> sample(o.n_samples);
    const double sd = std::sqrt(t_eval);
    for (std::size_t k = 0; k < o.n_samples; ++k) {
        const double w = sd * numerics::NormalStream(o.seed, sub, static_cast<std::uint32_t>(k)).normal(0);
        const auto a = sol.at(t_eval, w);
        if (a.extrapolated) ++st.extrapolated;
        sample[k] = st.slice.map(w, a.u);
    }
    const double mean = numerics::mean(sample), mad = numerics::mean_abs_deviation(sample);
    auto sorted = sample;
    std::sort(sorted.begin(), sorted.end());
    const double y_lo = numerics::quantile_sorted(sorted, o.q_lo), y_hi = numerics::quantile_sorted(sorted, 1.0 - o.q_lo);
    std::vector<double> y(o.n_y);
    for (int j = 0; j < o.n_y; ++j) y[j] = y_lo + (y_hi - y_lo) * j / (o.n_y - 1);
    st.envelope = envelope(t_eval, st.constants, mean, mad, y, o.form);
    st.envelope.target = o.target;
    st.domination = check_domination(st.envelope, sample, o.confidence);
    st.ordered = envelope_ordered(st.envelope, &st.worst_order_gap);
    return st;
}

}  // namespace bsdens::tails
