#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "bsdens/cli/config.hpp"
#include "bsdens/criteria/checks.hpp"
#include "bsdens/criteria/report.hpp"
#include "bsdens/density/bouleau_hirsch.hpp"
#include "bsdens/density/gfunction.hpp"
#include "bsdens/density/samplers.hpp"
#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/io.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/numerics/parallel.hpp"
#include "bsdens/numerics/stats.hpp"
#include "bsdens/pde/io.hpp"
#include "bsdens/pde/solver.hpp"
#include "bsdens/tails/pipeline.hpp"

namespace bsdens::cli {

/// Process exit codes.
enum ExitCode : int { exit_ok = 0, exit_task_failed = 1, exit_config_error = 2, exit_io_error = 3 };

struct RunOptions {
    /// Overrides of the config values when set.
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    /// Off: headers and the manifest carry no timestamp or timings, so repeated runs are byte-identical.
    bool timestamps = true;
};

enum class TaskStatus { ok, failed, skipped };

inline const char* to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::ok: return "ok";
        case TaskStatus::failed: return "failed";
        default: return "skipped";
    }
}

struct TaskResult {
    std::string id;
    TaskKind kind = TaskKind::solve;
    TaskStatus status = TaskStatus::skipped;
    bool auto_inserted = false;
    std::string message;
    std::vector<std::string> files;
    double seconds = 0.0;
};

struct Manifest {
    nlohmann::json json;
    std::vector<TaskResult> tasks;
    std::filesystem::path directory;

    int exit_code() const {
        for (const auto& t : tasks)
            if (t.status != TaskStatus::ok) return exit_task_failed;
        return exit_ok;
    }
};

/// Lower-case hex SHA-256.
inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256: libcrypto digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Tasks needing the PDE grids (nv density, oracle-compare) or the Monte Carlo solution (Bouleau-Hirsch, oracle-compare).
inline bool needs_solve(const Task& t) { return t.kind == TaskKind::density || t.kind == TaskKind::oracle_compare; }

/// Keeps the tasks of one kind, adding a default task when there is none, and resolves dependencies again.
inline ExperimentConfig select_tasks(const ExperimentConfig& c, TaskKind kind) {
    ExperimentConfig out = c;
    out.tasks.clear();
    out.notes.clear();
    const Task* user_solve = nullptr;
    for (const auto& t : c.tasks) {
        if (t.kind == kind) out.tasks.push_back(t);
        if (t.kind == TaskKind::solve && !t.auto_inserted) user_solve = &t;
    }
    if (out.tasks.empty()) {
        Task t;
        t.kind = kind;
        t.id = kind == TaskKind::oracle_compare ? "oracle_compare" : to_string(kind);
        if (kind == TaskKind::solve) t.solve.mc = true;
        out.tasks.push_back(t);
        out.notes.push_back(std::string("no ") + to_string(kind) + " task in the configuration; ran one with defaults");
    }
    const bool dependent = std::any_of(out.tasks.begin(), out.tasks.end(), needs_solve);
    if (dependent && user_solve) out.tasks.insert(out.tasks.begin(), *user_solve);
    resolve_dependencies(out);
    return out;
}

namespace detail {

inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

/// Products of the solve task shared with its dependents.
struct Shared {
    model::ModelSpec spec;
    std::optional<pde::GridSpec> grid;
    std::optional<pde::GridSolution> u, up;
    std::optional<mc::PathEnsemble> paths;
    std::optional<mc::BsdeSolution> bsde;
};

class Context {
public:
    Context(const ExperimentConfig& c, const RunOptions& o, std::filesystem::path dir)
        : config(c), dir_(std::move(dir)) {
        seed = o.seed.value_or(c.numerics.seed);
        threads = o.threads.value_or(c.numerics.threads);
        header.seed = seed;
        header.config_hash = sha256_hex(c.source);
        if (o.timestamps) header.timestamp = utc_timestamp();
    }

    /// Opens <dir>/<name>, writes through fn and records the file on the task.
    template <class Fn>
    void write(TaskResult& r, const std::string& name, Fn&& fn) {
        const auto path = dir_ / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw Error("cannot write '" + path.string() + "'");
        fn(os);
        os.close();
        if (!os) throw Error("write to '" + path.string() + "' failed");
        r.files.push_back(name);
    }

    void write_json(TaskResult& r, const std::string& name, nlohmann::json j) {
        j["version"] = header.version;
        j["seed"] = seed;
        j["config_hash"] = header.config_hash;
        if (!header.timestamp.empty()) j["timestamp"] = header.timestamp;
        write(r, name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    }

    const ExperimentConfig& config;
    Shared shared;
    io::FileHeader header;
    std::uint64_t seed = 1;
    int threads = 1;

private:
    std::filesystem::path dir_;
};

inline void run_solve(Context& ctx, const Task& t, TaskResult& r) {
    const auto& n = ctx.config.numerics;
    auto& sh = ctx.shared;
    const auto& s = sh.spec;
    if (t.solve.pde) {
        sh.grid = pde::GridSpec::for_model(s, n.pde.n_t, n.pde.n_x, n.pde.width);
        pde::SchemeOptions so;
        so.theta = n.pde.theta;
        sh.u = pde::solve_u(s, *sh.grid, so);
        sh.up = pde::solve_u_prime(s, *sh.grid, *sh.u, so);
        ctx.write(r, "solve_u.csv", [&](std::ostream& os) { pde::write_csv(os, *sh.u, ctx.header); });
        ctx.write(r, "solve_u_prime.csv", [&](std::ostream& os) { pde::write_csv(os, *sh.up, ctx.header); });
    }
    if (t.solve.mc) {
        mc::ForwardOptions fo;
        fo.threads = ctx.threads;
        sh.paths = mc::simulate_forward(s, n.mc.n_paths, n.mc.n_steps, ctx.seed, fo);
        mc::BasisSpec b;
        b.family = numerics::basis_family_from_string(n.mc.basis);
        b.degree = n.mc.degree;
        b.knots = n.mc.knots;
        b.ridge = n.mc.ridge;
        b.scheme = n.mc.scheme == "now" ? mc::RegressionScheme::now : mc::RegressionScheme::later;
        b.threads = ctx.threads;
        sh.bsde = mc::solve_bsde_regression(s, *sh.paths, b);
        const auto& e = *sh.paths;
        const auto& sol = *sh.bsde;
        auto times = t.solve.summary_times;
        if (times.empty()) times = {0.0, 0.5 * s.T, s.T};
        ctx.write(r, "mc_summary.csv", [&](std::ostream& os) {
            io::write_header(os, ctx.header);
            os << "# basis: " << sol.basis_description << "\n# saturation_rate: " << io::fmt(sol.saturation_rate)
               << "\nt,mean_x,mean_y,sd_y,mean_z,sd_z\n";
            for (double tq : times) {
                if (tq < 0.0 || tq > s.T + 1e-12)
                    throw ConfigurationError("solve: summary time " + io::fmt(tq) + " outside [0, T]");
                const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::llround(tq / e.dt)), e.n_steps);
                std::vector<double> x(e.n_paths), y(e.n_paths), z(e.n_paths);
                for (std::size_t p = 0; p < e.n_paths; ++p) {
                    x[p] = e.x(k, p);
                    y[p] = sol.y(k, p);
                    z[p] = sol.z(k, p);
                }
                os << io::fmt(e.time(k)) << ',' << io::fmt(numerics::mean(x)) << ',' << io::fmt(numerics::mean(y))
                   << ',' << io::fmt(std::sqrt(numerics::variance(y))) << ',' << io::fmt(numerics::mean(z)) << ','
                   << io::fmt(std::sqrt(numerics::variance(z))) << '\n';
            }
        });
        if (t.solve.write_paths)
            ctx.write(r, "mc_paths.csv", [&](std::ostream& os) { mc::write_csv(os, e, &sol, ctx.header); });
    }
}

inline void run_density(Context& ctx, const Task& t, TaskResult& r) {
    const auto& d = t.density;
    auto& sh = ctx.shared;
    const auto target = density::target_from_string(d.target);
    nlohmann::json j{{"task", "density"}, {"method", d.method}, {"target", d.target}, {"t", d.t}};
    if (d.method == "nv") {
        if (!sh.u || !sh.up) throw PreconditionError("density: PDE grids are missing");
        const auto sampler = density::bsde_target_sampler(sh.spec, *sh.u, &*sh.up, target, d.t, d.n_steps);
        density::ConditionalSpec cs;
        cs.method = density::conditional_method_from_string(d.conditional);
        cs.n_nodes = d.n_nodes;
        cs.threads = ctx.threads;
        const auto gF = density::estimate_gF(sampler, d.n_mc, d.n_u_nodes, cs, ctx.seed);
        const auto est = density::density_from_gF(gF, gF.mean_F, gF.mad_F);
        ctx.write(r, t.id + "_gF.csv", [&](std::ostream& os) { density::write_csv(os, gF, ctx.header); });
        ctx.write(r, t.id + "_density.csv", [&](std::ostream& os) { density::write_csv(os, est, ctx.header); });
        j["verdict"] = density::to_string(est.verdict);
        j["note"] = est.note;
        j["mean_F"] = num(gF.mean_F);
        j["mad_F"] = num(gF.mad_F);
        j["clip_rate"] = num(gF.clip_rate);
        j["bandwidth"] = num(gF.bandwidth);
        j["bandwidth_sensitivity"] = num(gF.bandwidth_sensitivity);
        j["unreliable_nodes"] = gF.unreliable_count();
        j["normalization_defect"] = num(est.normalization_defect);
        j["support"] = {num(est.support_low), num(est.support_high)};
    } else {
        if (!sh.paths || !sh.bsde) throw PreconditionError("density: Monte Carlo solution is missing");
        mc::MalliavinOptions mo;
        const auto& n = ctx.config.numerics.mc;
        mo.family = numerics::basis_family_from_string(n.basis);
        mo.degree = n.degree;
        mo.knots = n.knots;
        mo.ridge = n.ridge;
        mo.threads = ctx.threads;
        const auto m = mc::solve_malliavin_bsde(sh.spec, *sh.paths, *sh.bsde, 0.0, mo);
        const auto rep = density::bouleau_hirsch_diagnostic(m, d.t, target, d.threshold);
        ctx.write(r, t.id + "_norms.csv", [&](std::ostream& os) {
            io::write_header(os, ctx.header);
            os << "# t: " << io::fmt(rep.t) << "\npath,norm\n";
            for (std::size_t p = 0; p < rep.norms.size(); ++p) os << p << ',' << io::fmt(rep.norms[p]) << '\n';
        });
        j["verdict"] = density::to_string(rep.verdict);
        j["t_grid"] = num(rep.t);
        j["threshold"] = num(rep.threshold);
        j["norm_quantiles"] = {{"min", num(rep.min)},       {"q01", num(rep.q01)}, {"q05", num(rep.q05)},
                               {"median", num(rep.median)}, {"q95", num(rep.q95)}, {"max", num(rep.max)}};
        j["below"] = rep.below;
        j["fraction_below"] = num(rep.fraction_below);
        j["mass_interval"] = {num(rep.mass_low), num(rep.mass_high)};
        j["weight_warning"] = m.weight_warning;
    }
    ctx.write_json(r, t.id + ".json", j);
}

inline void run_criteria(Context& ctx, const Task& t, TaskResult& r) {
    const auto& c = t.criteria;
    const auto& s = ctx.shared.spec;
    auto o = criteria::CriteriaOptions::around(s, c.half_width);
    o.box_is_domain = c.box_is_domain;
    o.hit_paths = c.hit_paths;
    o.seed = ctx.seed;
    const auto A = criteria::IntervalSet::parse(c.A);
    const auto variant = criteria::z_variant_from_string(c.variant);
    std::vector<criteria::CriterionReport> rows;
    nlohmann::json results = nlohmann::json::array();
    auto add_pair = [&](const std::string& name, double tt, const criteria::CriterionPair& p) {
        rows.push_back(p.plus);
        rows.push_back(p.minus);
        results.push_back({{"check", name}, {"t", tt}, {"result", criteria::to_json(p)}});
    };
    auto add_one = [&](const std::string& name, double tt, const criteria::CriterionReport& rep) {
        rows.push_back(rep);
        results.push_back({{"check", name}, {"t", tt}, {"result", criteria::to_json(rep)}});
    };
    for (const auto& name : c.checks) {
        if (name == "x_sign") {
            add_pair(name, 0.0, criteria::x_sign_check(s, o));
            continue;
        }
        for (double tt : c.t) {
            if (name == "first_order") add_pair(name, tt, criteria::first_order_check(s, tt, A, o));
            else if (name == "second_order") add_pair(name, tt, criteria::second_order_check(s, tt, A, o));
            else if (name == "quadratic") add_pair(name, tt, criteria::quadratic_check(s, tt, A, o));
            else if (name == "z_lipschitz") add_one(name, tt, criteria::z_lipschitz_check(s, tt, A, std::nullopt, o, variant));
            else if (name == "z_quadratic") add_one(name, tt, criteria::z_quadratic_check(s, tt, A, std::nullopt, o, variant));
            else if (name == "z_markovian") add_pair(name, tt, criteria::z_markovian_check(s, tt, A, o));
        }
    }
    ctx.write(r, t.id + "_table.txt", [&](std::ostream& os) {
        io::write_header(os, ctx.header);
        criteria::write_table(os, rows);
    });
    ctx.write_json(r, t.id + ".json", {{"task", "criteria"}, {"A", A.describe()}, {"results", results}});
}

inline void run_tails(Context& ctx, const Task& t, TaskResult& r) {
    const auto& p = t.tails;
    tails::TailStudyOptions o;
    o.target = p.target;
    o.t = p.t;
    o.x_lim = p.x_lim;
    o.n_x = p.n_x;
    o.n_t = p.n_t;
    o.alpha_tilde = p.alpha_tilde;
    o.K = p.K;
    o.eps = p.eps;
    o.eps_p = p.eps_p;
    o.form = p.form == "theorem" ? tails::EnvelopeForm::theorem : tails::EnvelopeForm::corollary;
    o.n_samples = p.n_samples;
    o.seed = ctx.seed;
    o.n_y = p.n_y;
    o.confidence = p.confidence;
    const auto st = tails::tail_study(ctx.shared.spec, o);
    ctx.write(r, t.id + "_envelope.csv", [&](std::ostream& os) {
        io::write_header(os, ctx.header);
        os << "# target: " << st.envelope.target << "\n# t: " << io::fmt(st.envelope.t) << "\n# form: "
           << tails::to_string(st.envelope.form) << "\n";
        tails::write_envelope_csv(os, st.envelope, &st.domination);
    });
    const auto& k = st.constants;
    const auto& rt = st.rates;
    nlohmann::json j{{"task", "tails"},
                     {"target", p.target},
                     {"t", num(st.envelope.t)},
                     {"form", tails::to_string(st.envelope.form)},
                     {"slice", {{"orientation", st.slice.orientation}, {"folded", st.slice.folded}}},
                     {"rates",
                      {{"v", {num(rt.v.alpha_bar), num(rt.v.alpha_under)}},
                       {"v_prime", {num(rt.vp.alpha_bar), num(rt.vp.alpha_under)}},
                       {"v_inverse", {num(rt.vinv.alpha_bar), num(rt.vinv.alpha_under)}}}},
                     {"eps", num(k.eps)},
                     {"eps_prime", num(k.eps_p)},
                     {"constants",
                      {{"K", num(k.K)},         {"K_fitted", num(k.K_fitted)}, {"C_v", num(k.C_v)},
                       {"C_vp", num(k.C_vp)},   {"C_vinv", num(k.C_vinv)},     {"a", num(k.a)},
                       {"Xi", num(k.Xi)},       {"D", num(k.D)},               {"mu", num(k.mu)},
                       {"M", num(k.M)},         {"M_prime", num(k.M_prime)},   {"gamma", num(k.gamma)},
                       {"p", num(k.p)}}},
                     {"cross_checks",
                      {{"xi", num(k.xi_check)}, {"mu", num(k.mu_check)}, {"delta", num(k.delta_check)}}},
                     {"envelope",
                      {{"mean", num(st.envelope.mean)},
                       {"mad", num(st.envelope.mad)},
                       {"d0", num(st.envelope.d0)},
                       {"y0", num(st.envelope.y0)},
                       {"degenerate", st.envelope.degenerate}}},
                     {"domination",
                      {{"holds", st.domination.holds},
                       {"confidence", num(st.domination.confidence)},
                       {"tested", st.domination.tested},
                       {"worst_excess", num(st.domination.worst_excess)},
                       {"worst_y", num(st.domination.worst_y)}}},
                     {"ordered", st.ordered},
                     {"worst_order_gap", num(st.worst_order_gap)},
                     {"extrapolated_samples", st.extrapolated}};
    ctx.write_json(r, t.id + ".json", j);
}

inline void run_oracle_compare(Context& ctx, const Task& t, TaskResult& r) {
    auto& sh = ctx.shared;
    const auto& s = sh.spec;
    if (!s.oracle_y || !s.oracle_z) throw PreconditionError("oracle-compare: the model has no closed-form solution");
    if (!s.has_markovian_map()) throw PreconditionError("oracle-compare: needs a markovian map X_t = f(t, W_t)");
    if (t.oracle.n_w < 2) throw ConfigurationError("oracle-compare: n_w must be at least 2");
    for (double tt : t.oracle.t)
        if (tt < 0.0 || tt > s.T) throw ConfigurationError("oracle-compare: t = " + io::fmt(tt) + " outside [0, T]");
    struct Err {
        double max_y = 0, sq_y = 0, max_z = 0, sq_z = 0;
        std::size_t n = 0;
        void add(double ey, double ez) {
            max_y = std::max(max_y, std::abs(ey));
            max_z = std::max(max_z, std::abs(ez));
            sq_y += ey * ey;
            sq_z += ez * ez;
            ++n;
        }
    };
    std::vector<std::pair<std::string, std::pair<double, Err>>> summary;
    ctx.write(r, t.id + "_pde.csv", [&](std::ostream& os) {
        io::write_header(os, ctx.header);
        os << "t,w,x,y,y_exact,z,z_exact,extrapolated\n";
        for (double tt : t.oracle.t) {
            Err err;
            const double span = 2.0 * std::sqrt(std::max(tt, 1e-12));
            for (int i = 0; i < t.oracle.n_w; ++i) {
                const double w = -span + 2.0 * span * i / (t.oracle.n_w - 1);
                const double x = s.markovian_f(tt, w);
                const auto yz = pde::eval_yz(*sh.u, &*sh.up, s, tt, x);
                const double ye = s.oracle_y(tt, w), ze = s.oracle_z(tt, w);
                err.add(yz.y - ye, yz.z - ze);
                os << io::fmt(tt) << ',' << io::fmt(w) << ',' << io::fmt(x) << ',' << io::fmt(yz.y) << ','
                   << io::fmt(ye) << ',' << io::fmt(yz.z) << ',' << io::fmt(ze) << ',' << (yz.extrapolated ? 1 : 0)
                   << '\n';
            }
            summary.push_back({"pde", {tt, err}});
        }
    });
    const auto& e = *sh.paths;
    const auto& sol = *sh.bsde;
    std::vector<double> W(e.n_paths, 0.0);
    std::size_t k_done = 0;
    for (double tt : t.oracle.t) {
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(std::llround(tt / e.dt)), e.n_steps);
        // W_k is the running sum of increments; times are visited in the listed order.
        if (k < k_done) std::fill(W.begin(), W.end(), 0.0), k_done = 0;
        for (; k_done < k; ++k_done)
            for (std::size_t p = 0; p < e.n_paths; ++p) W[p] += e.dW[k_done * e.n_paths + p];
        Err err;
        const double tk = e.time(k);
        for (std::size_t p = 0; p < e.n_paths; ++p)
            err.add(sol.y(k, p) - s.oracle_y(tk, W[p]), sol.z(k, p) - s.oracle_z(tk, W[p]));
        summary.push_back({"mc", {tk, err}});
    }
    ctx.write(r, t.id + "_summary.csv", [&](std::ostream& os) {
        io::write_header(os, ctx.header);
        os << "route,t,points,max_err_y,rms_err_y,max_err_z,rms_err_z\n";
        for (const auto& [route, te] : summary) {
            const auto& [tt, err] = te;
            const double n = static_cast<double>(err.n);
            os << route << ',' << io::fmt(tt) << ',' << err.n << ',' << io::fmt(err.max_y) << ','
               << io::fmt(std::sqrt(err.sq_y / n)) << ',' << io::fmt(err.max_z) << ','
               << io::fmt(std::sqrt(err.sq_z / n)) << '\n';
        }
    });
}

inline void run_task(Context& ctx, const Task& t, TaskResult& r) {
    switch (t.kind) {
        case TaskKind::solve: run_solve(ctx, t, r); break;
        case TaskKind::density: run_density(ctx, t, r); break;
        case TaskKind::criteria: run_criteria(ctx, t, r); break;
        case TaskKind::tails: run_tails(ctx, t, r); break;
        case TaskKind::oracle_compare: run_oracle_compare(ctx, t, r); break;
    }
}

}  // namespace detail

/// Runs the tasks of a parsed configuration and writes manifest.json into the output directory.
/// The solve task runs first; the other tasks depend on it only and run concurrently when threads > 1.
/// A failed task marks its dependents skipped; independent tasks still run.
inline Manifest run(const ExperimentConfig& config, const RunOptions& opt = {}) {
    Manifest m;
    m.directory = opt.out.value_or(std::filesystem::path(config.output));
    std::error_code ec;
    std::filesystem::create_directories(m.directory, ec);
    if (ec || !std::filesystem::is_directory(m.directory))
        throw Error("cannot create output directory '" + m.directory.string() + "'");
    detail::Context ctx(config, opt, m.directory);
    ctx.shared.spec = build_model(config.model);

    m.tasks.resize(config.tasks.size());
    for (std::size_t i = 0; i < config.tasks.size(); ++i) {
        m.tasks[i].id = config.tasks[i].id;
        m.tasks[i].kind = config.tasks[i].kind;
        m.tasks[i].auto_inserted = config.tasks[i].auto_inserted;
    }
    auto execute = [&](std::size_t i) {
        auto& r = m.tasks[i];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            detail::run_task(ctx, config.tasks[i], r);
            r.status = TaskStatus::ok;
        } catch (const std::exception& e) {
            r.status = TaskStatus::failed;
            r.message = e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    std::size_t first = 0;
    bool solve_ok = true;
    if (!config.tasks.empty() && config.tasks[0].kind == TaskKind::solve) {
        execute(0);
        solve_ok = m.tasks[0].status == TaskStatus::ok;
        first = 1;
    }
    std::vector<std::size_t> pending;
    for (std::size_t i = first; i < config.tasks.size(); ++i) {
        if (!solve_ok && needs_solve(config.tasks[i])) {
            m.tasks[i].status = TaskStatus::skipped;
            m.tasks[i].message = "dependency '" + config.tasks[0].id + "' failed";
        } else {
            pending.push_back(i);
        }
    }
    // Modules parallelize internally; with several tasks the threads go to the task level instead.
    const int task_threads = pending.size() > 1 ? ctx.threads : 1;
    if (task_threads > 1) ctx.threads = 1;
    numerics::parallel_for(pending.size(), task_threads, [&](std::size_t i) { execute(pending[i]); });

    auto& j = m.json;
    j["version"] = ctx.header.version;
    j["seed"] = ctx.seed;
    j["config_hash"] = ctx.header.config_hash;
    if (opt.timestamps) j["timestamp"] = ctx.header.timestamp;
    j["notes"] = config.notes;
    j["tasks"] = nlohmann::json::array();
    j["files"] = nlohmann::json::array();
    for (const auto& r : m.tasks) {
        nlohmann::json t{{"id", r.id},
                         {"kind", to_string(r.kind)},
                         {"status", to_string(r.status)},
                         {"auto_inserted", r.auto_inserted},
                         {"files", r.files}};
        if (!r.message.empty()) t["message"] = r.message;
        if (opt.timestamps) t["seconds"] = r.seconds;
        j["tasks"].push_back(t);
        for (const auto& f : r.files) {
            const auto data = read_file(m.directory / f);
            j["files"].push_back({{"path", f}, {"task", r.id}, {"bytes", data.size()}, {"sha256", sha256_hex(data)}});
        }
    }
    j["exit_code"] = m.exit_code();
    std::ofstream os(m.directory / "manifest.json", std::ios::binary);
    os << j.dump(2) << '\n';
    if (!os) throw Error("cannot write manifest in '" + m.directory.string() + "'");
    return m;
}

}  // namespace bsdens::cli
