#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "bsdens/errors.hpp"
#include "bsdens/criteria/core.hpp"
#include "bsdens/model/presets.hpp"

namespace bsdens::cli {

enum class TaskKind { solve, density, criteria, tails, oracle_compare };

inline const char* to_string(TaskKind k) {
    switch (k) {
        case TaskKind::solve: return "solve";
        case TaskKind::density: return "density";
        case TaskKind::criteria: return "criteria";
        case TaskKind::tails: return "tails";
        case TaskKind::oracle_compare: return "oracle-compare";
    }
    return "?";
}

inline std::optional<TaskKind> task_kind_from_string(const std::string& s) {
    for (auto k : {TaskKind::solve, TaskKind::density, TaskKind::criteria, TaskKind::tails, TaskKind::oracle_compare})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

struct ModelSection {
    /// Exactly one of preset and expressions is set.
    std::optional<std::string> preset;
    std::optional<model::ModelExpressions> expressions;
    /// Terminal condition of the ex_quad_exp preset: tanh, softplus or zero.
    std::string terminal = "tanh";
    int quadrature_nodes = 96;
};

struct PdeSection {
    int n_t = 200;
    int n_x = 401;
    /// Half-width of the x-box in units of sqrt(T) max sigma.
    double width = 6.0;
    double theta = 0.5;
};

struct McSection {
    std::size_t n_paths = 10000;
    std::size_t n_steps = 64;
    std::string basis = "polynomial";
    int degree = 4;
    int knots = 8;
    double ridge = 1e-8;
    std::string scheme = "later";
};

struct NumericsSection {
    std::uint64_t seed = 1;
    int threads = 1;
    PdeSection pde;
    McSection mc;
};

struct SolveParams {
    bool pde = true;
    bool mc = false;
    /// Also write the full path ensemble (large).
    bool write_paths = false;
    /// Times of the Monte Carlo summary table; empty means {0, T/2, T}.
    std::vector<double> summary_times;
};

struct DensityParams {
    std::string target = "Y";
    double t = 0.5;
    /// nv: g_F and the density formula from PDE grids; bouleau_hirsch: Malliavin norm diagnostic on the MC route.
    std::string method = "nv";
    std::size_t n_mc = 20000;
    std::size_t n_steps = 64;
    int n_u_nodes = 16;
    std::string conditional = "local_linear";
    int n_nodes = 101;
    double threshold = 1e-4;
};

struct CriteriaParams {
    std::vector<std::string> checks = {"first_order", "second_order"};
    std::vector<double> t = {0.5};
    std::string A = "[0, inf]";
    double half_width = 6.0;
    bool box_is_domain = false;
    std::size_t hit_paths = 2000;
    std::string variant = "bounds";
};

struct TailsParams {
    std::string target = "Z";
    double t = 1.0;
    double x_lim = 6.0;
    int n_x = 400;
    int n_t = 200;
    double alpha_tilde = 0.5;
    std::optional<double> K, eps, eps_p;
    std::string form = "corollary";
    std::size_t n_samples = 100000;
    int n_y = 201;
    double confidence = 0.99;
};

struct OracleParams {
    std::vector<double> t = {0.1, 0.5, 0.9};
    /// Number of W values in [-2 sqrt(t), 2 sqrt(t)] for the PDE comparison.
    int n_w = 11;
};

struct Task {
    TaskKind kind = TaskKind::solve;
    std::string id;
    bool auto_inserted = false;
    int line = 0, column = 0;
    SolveParams solve;
    DensityParams density;
    CriteriaParams criteria;
    TailsParams tails;
    OracleParams oracle;
};

struct ExperimentConfig {
    ModelSection model;
    NumericsSection numerics;
    std::vector<Task> tasks;
    std::string output = "out";
    /// Text the configuration was parsed from; hashed into every artifact header.
    std::string source;
    /// Notes made while resolving dependencies.
    std::vector<std::string> notes;
};

namespace detail {

inline ParseError error_at(const YAML::Node& n, const std::string& what) {
    const auto m = n.Mark();
    return ParseError(what, m.line + 1, m.column + 1);
}

/// Map reader that rejects duplicate and unknown keys.
class MapReader {
public:
    MapReader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node.IsMap()) throw error_at(node, path_ + ": expected a mapping");
        std::set<std::string> seen;
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!seen.insert(key).second) throw error_at(kv.first, "duplicate key '" + qualify(key) + "'");
            keys_.emplace_back(key, kv.first);
        }
    }

    bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

    YAML::Node child(const std::string& key) {
        used_.insert(key);
        return node_[key];
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        const auto n = child(key);
        if (!n) return fallback;
        return convert<T>(n, key);
    }

    template <class T>
    std::optional<T> optional(const std::string& key) {
        const auto n = child(key);
        if (!n) return std::nullopt;
        return convert<T>(n, key);
    }

    /// A scalar or a sequence of scalars.
    template <class T>
    std::vector<T> list(const std::string& key, std::vector<T> fallback) {
        const auto n = child(key);
        if (!n) return fallback;
        std::vector<T> out;
        if (n.IsSequence()) {
            for (const auto& e : n) out.push_back(convert<T>(e, key));
        } else {
            out.push_back(convert<T>(n, key));
        }
        return out;
    }

    void finish() const {
        for (const auto& [k, n] : keys_)
            if (!used_.count(k)) throw error_at(n, "unknown key '" + qualify(k) + "'");
    }

    std::string qualify(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const YAML::Node& node() const { return node_; }

private:
    template <class T>
    T convert(const YAML::Node& n, const std::string& key) const {
        if (!n.IsScalar()) throw error_at(n, qualify(key) + ": expected a scalar");
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            throw error_at(n, qualify(key) + ": cannot read '" + n.Scalar() + "'");
        }
    }

    YAML::Node node_;
    std::string path_;
    std::vector<std::pair<std::string, YAML::Node>> keys_;
    std::set<std::string> used_;
};

inline void one_of(const std::string& v, std::initializer_list<const char*> allowed, const YAML::Node& n,
                   const std::string& key) {
    for (const char* a : allowed)
        if (v == a) return;
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    throw error_at(n, key + ": '" + v + "' is not one of " + list);
}

/// Expression text checked against its variable set, with errors placed at the expression inside the YAML file.
inline std::string expression(MapReader& r, const std::string& key, const std::string& fallback,
                              std::string_view vars) {
    const auto n = r.child(key);
    const std::string text = n ? (n.IsScalar() ? n.Scalar() : throw error_at(n, r.qualify(key) + ": expected text"))
                               : fallback;
    try {
        (void)model::Expression::parse(text, vars);
    } catch (const ParseError& e) {
        std::string msg = e.what();
        const auto p = msg.find(": ");
        if (p != std::string::npos) msg = msg.substr(p + 2);
        if (!n) throw ParseError(r.qualify(key) + ": " + msg, 0, 0);
        // Quoted scalars are tagged "!" and their mark sits on the opening quote.
        const auto m = n.Mark();
        const int quote = n.Tag() == "!" ? 1 : 0;
        throw ParseError(r.qualify(key) + ": " + msg, m.line + 1, m.column + quote + e.column());
    }
    return text;
}

inline ModelSection parse_model(const YAML::Node& node) {
    MapReader r(node, "model");
    ModelSection m;
    const bool has_preset = r.has("preset"), has_expr = r.has("expressions");
    if (has_preset == has_expr) throw error_at(node, "model: give exactly one of 'preset' and 'expressions'");
    if (has_preset) {
        const auto n = r.child("preset");
        m.preset = n.as<std::string>();
        one_of(*m.preset, {"ex_counter", "ex_cubic", "ex_quad_exp", "custom"}, n, "model.preset");
        m.terminal = r.get<std::string>("terminal", m.terminal);
        one_of(m.terminal, {"tanh", "softplus", "zero"}, r.has("terminal") ? r.child("terminal") : n, "model.terminal");
        m.quadrature_nodes = r.get<int>("quadrature_nodes", m.quadrature_nodes);
    } else {
        MapReader e(r.child("expressions"), "model.expressions");
        model::ModelExpressions x;
        x.b = expression(e, "b", x.b, "tx");
        x.sigma = expression(e, "sigma", x.sigma, "tx");
        x.g = expression(e, "g", x.g, "x");
        x.h = expression(e, "h", x.h, "txyz");
        if (e.has("f")) x.f = expression(e, "f", "w", "tw");
        x.T = e.get<double>("T", x.T);
        x.X0 = e.get<double>("X0", x.X0);
        const auto reg = e.get<std::string>("regime", "lipschitz");
        one_of(reg, {"lipschitz", "quadratic"}, e.has("regime") ? e.child("regime") : e.node(), "model.expressions.regime");
        x.regime = reg == "quadratic" ? model::Regime::quadratic : model::Regime::lipschitz;
        if (!(x.T > 0.0)) throw error_at(e.node(), "model.expressions.T must be positive");
        e.finish();
        m.expressions = x;
    }
    r.finish();
    return m;
}

inline NumericsSection parse_numerics(const YAML::Node& node) {
    NumericsSection s;
    if (!node) return s;
    MapReader r(node, "numerics");
    s.seed = r.get<std::uint64_t>("seed", s.seed);
    s.threads = r.get<int>("threads", s.threads);
    if (r.has("pde")) {
        MapReader p(r.child("pde"), "numerics.pde");
        s.pde.n_t = p.get<int>("n_t", s.pde.n_t);
        s.pde.n_x = p.get<int>("n_x", s.pde.n_x);
        s.pde.width = p.get<double>("width", s.pde.width);
        s.pde.theta = p.get<double>("theta", s.pde.theta);
        if (s.pde.n_t < 1 || s.pde.n_x < 3 || !(s.pde.width > 0.0))
            throw error_at(p.node(), "numerics.pde: need n_t >= 1, n_x >= 3 and width > 0");
        p.finish();
    }
    if (r.has("mc")) {
        MapReader m(r.child("mc"), "numerics.mc");
        s.mc.n_paths = m.get<std::size_t>("n_paths", s.mc.n_paths);
        s.mc.n_steps = m.get<std::size_t>("n_steps", s.mc.n_steps);
        s.mc.basis = m.get<std::string>("basis", s.mc.basis);
        one_of(s.mc.basis, {"polynomial", "spline"}, m.node(), "numerics.mc.basis");
        s.mc.degree = m.get<int>("degree", s.mc.degree);
        s.mc.knots = m.get<int>("knots", s.mc.knots);
        s.mc.ridge = m.get<double>("ridge", s.mc.ridge);
        s.mc.scheme = m.get<std::string>("scheme", s.mc.scheme);
        one_of(s.mc.scheme, {"later", "now"}, m.node(), "numerics.mc.scheme");
        if (s.mc.n_paths < 2 || s.mc.n_steps < 1) throw error_at(m.node(), "numerics.mc: need n_paths >= 2, n_steps >= 1");
        m.finish();
    }
    if (s.threads < 1) throw error_at(node, "numerics.threads must be at least 1");
    r.finish();
    return s;
}

inline Task parse_task(const YAML::Node& entry, std::size_t index) {
    std::string kind_text;
    YAML::Node body;
    if (entry.IsScalar()) {
        kind_text = entry.Scalar();
    } else if (entry.IsMap() && entry.size() == 1) {
        const auto kv = *entry.begin();
        kind_text = kv.first.as<std::string>();
        body = kv.second;
    } else {
        throw error_at(entry, "tasks[" + std::to_string(index) + "]: expected a task name or a one-key mapping");
    }
    const auto kind = task_kind_from_string(kind_text);
    if (!kind)
        throw error_at(entry, "tasks[" + std::to_string(index) + "]: unknown task '" + kind_text +
                                  "' (solve, density, criteria, tails, oracle-compare)");
    Task t;
    t.kind = *kind;
    t.line = entry.Mark().line + 1;
    t.column = entry.Mark().column + 1;
    if (!body || body.IsNull()) body = YAML::Node(YAML::NodeType::Map);
    MapReader r(body, "tasks[" + std::to_string(index) + "]." + kind_text);
    t.id = r.get<std::string>("id", "");
    switch (t.kind) {
        case TaskKind::solve: {
            const auto route = r.get<std::string>("route", "pde");
            one_of(route, {"pde", "mc", "both"}, body, r.qualify("route"));
            t.solve.pde = route != "mc";
            t.solve.mc = route != "pde";
            t.solve.write_paths = r.get<bool>("write_paths", false);
            t.solve.summary_times = r.list<double>("summary_times", {});
            break;
        }
        case TaskKind::density: {
            auto& d = t.density;
            d.target = r.get<std::string>("target", d.target);
            one_of(d.target, {"Y", "Z"}, body, r.qualify("target"));
            d.t = r.get<double>("t", d.t);
            d.method = r.get<std::string>("method", d.method);
            one_of(d.method, {"nv", "bouleau_hirsch"}, body, r.qualify("method"));
            d.n_mc = r.get<std::size_t>("n_mc", d.n_mc);
            d.n_steps = r.get<std::size_t>("n_steps", d.n_steps);
            d.n_u_nodes = r.get<int>("n_u_nodes", d.n_u_nodes);
            d.conditional = r.get<std::string>("conditional", d.conditional);
            one_of(d.conditional, {"local_linear", "bins"}, body, r.qualify("conditional"));
            d.n_nodes = r.get<int>("n_nodes", d.n_nodes);
            d.threshold = r.get<double>("threshold", d.threshold);
            break;
        }
        case TaskKind::criteria: {
            auto& c = t.criteria;
            c.checks = r.list<std::string>("checks", c.checks);
            for (const auto& name : c.checks)
                one_of(name, {"first_order", "second_order", "quadratic", "z_lipschitz", "z_quadratic", "z_markovian",
                              "x_sign"},
                       body, r.qualify("checks"));
            c.t = r.list<double>("t", c.t);
            c.A = r.get<std::string>("A", c.A);
            try {
                (void)criteria::IntervalSet::parse(c.A);
            } catch (const ConfigurationError& e) {
                throw error_at(r.has("A") ? r.child("A") : body, r.qualify("A") + ": " + e.what());
            }
            c.half_width = r.get<double>("half_width", c.half_width);
            c.box_is_domain = r.get<bool>("box_is_domain", c.box_is_domain);
            c.hit_paths = r.get<std::size_t>("hit_paths", c.hit_paths);
            c.variant = r.get<std::string>("variant", c.variant);
            one_of(c.variant, {"bounds", "x-plus", "x-minus"}, body, r.qualify("variant"));
            break;
        }
        case TaskKind::tails: {
            auto& p = t.tails;
            p.target = r.get<std::string>("target", p.target);
            one_of(p.target, {"Y", "Z"}, body, r.qualify("target"));
            p.t = r.get<double>("t", p.t);
            p.x_lim = r.get<double>("x_lim", p.x_lim);
            p.n_x = r.get<int>("n_x", p.n_x);
            p.n_t = r.get<int>("n_t", p.n_t);
            p.alpha_tilde = r.get<double>("alpha_tilde", p.alpha_tilde);
            p.K = r.optional<double>("K");
            p.eps = r.optional<double>("eps");
            p.eps_p = r.optional<double>("eps_prime");
            if (p.eps.has_value() != p.eps_p.has_value())
                throw error_at(body, r.qualify("eps") + ": give both eps and eps_prime or neither");
            p.form = r.get<std::string>("form", p.form);
            one_of(p.form, {"theorem", "corollary"}, body, r.qualify("form"));
            p.n_samples = r.get<std::size_t>("n_samples", p.n_samples);
            p.n_y = r.get<int>("n_y", p.n_y);
            p.confidence = r.get<double>("confidence", p.confidence);
            break;
        }
        case TaskKind::oracle_compare: {
            t.oracle.t = r.list<double>("t", t.oracle.t);
            t.oracle.n_w = r.get<int>("n_w", t.oracle.n_w);
            break;
        }
    }
    r.finish();
    return t;
}

}  // namespace detail

/// Puts the solve task first, inserting one when density or oracle-compare needs it.
/// A declared solve whose route misses a needed product is a ParseError at the task.
inline void resolve_dependencies(ExperimentConfig& c) {
    // Dependency closure: density and oracle-compare read the solve products.
    bool need_pde = false, need_mc = false;
    for (const auto& t : c.tasks) {
        if (t.kind == TaskKind::density) (t.density.method == "nv" ? need_pde : need_mc) = true;
        if (t.kind == TaskKind::oracle_compare) need_pde = need_mc = true;
    }
    auto solve = std::find_if(c.tasks.begin(), c.tasks.end(), [](const Task& t) { return t.kind == TaskKind::solve; });
    if ((need_pde || need_mc) && solve == c.tasks.end()) {
        Task s;
        s.kind = TaskKind::solve;
        s.id = "solve";
        s.auto_inserted = true;
        s.solve.pde = need_pde;
        s.solve.mc = need_mc;
        if (std::any_of(c.tasks.begin(), c.tasks.end(), [](const Task& t) { return t.id == "solve"; })) throw ParseError("task id 'solve' is reserved for the inserted solve task", 1, 1);
        c.tasks.insert(c.tasks.begin(), s);
        c.notes.push_back(std::string("inserted solve task (route ") +
                          (need_pde && need_mc ? "both" : need_pde ? "pde" : "mc") + ") required by later tasks");
    } else if (solve != c.tasks.end()) {
        if ((need_pde && !solve->solve.pde) || (need_mc && !solve->solve.mc))
            throw ParseError(std::string("solve route must include ") + (need_pde && !solve->solve.pde ? "pde" : "mc") +
                                 " for the tasks that follow",
                             solve->line, solve->column);
        if (solve != c.tasks.begin()) {
            Task s = *solve;
            c.tasks.erase(solve);
            c.tasks.insert(c.tasks.begin(), s);
            c.notes.push_back("moved solve task ahead of its dependents");
        }
    }
}

/// Parses a configuration, resolves task ids and inserts a solve task when a task needs one.
/// Parse errors carry 1-based line and column.
inline ExperimentConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ParseError(e.msg, e.mark.line + 1, e.mark.column + 1);
    }
    if (!root || root.IsNull()) throw ParseError("empty configuration", 1, 1);
    ExperimentConfig c;
    c.source = text;
    detail::MapReader r(root, "");
    if (!r.has("model")) throw detail::error_at(root, "missing section 'model'");
    c.model = detail::parse_model(r.child("model"));
    c.numerics = detail::parse_numerics(r.child("numerics"));
    c.output = r.get<std::string>("output", c.output);
    const auto tasks = r.child("tasks");
    if (tasks && !tasks.IsNull()) {
        if (!tasks.IsSequence()) throw detail::error_at(tasks, "tasks: expected a sequence");
        std::size_t i = 0;
        for (const auto& e : tasks) c.tasks.push_back(detail::parse_task(e, i++));
    }
    r.finish();

    // One solve task at most; ids default to the kind, numbered when a kind repeats.
    std::map<TaskKind, int> count, seen;
    for (const auto& t : c.tasks) ++count[t.kind];
    if (count[TaskKind::solve] > 1) {
        int n = 0;
        for (const auto& t : c.tasks)
            if (t.kind == TaskKind::solve && ++n == 2) throw ParseError("only one solve task is allowed", t.line, t.column);
    }
    std::set<std::string> ids;
    for (auto& t : c.tasks) {
        const int k = ++seen[t.kind];
        if (t.id.empty()) t.id = std::string(to_string(t.kind)) + (count[t.kind] > 1 ? "_" + std::to_string(k) : "");
        std::replace(t.id.begin(), t.id.end(), '-', '_');
        for (char ch : t.id)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
                throw ParseError("task id '" + t.id + "' may only use letters, digits and '_'", t.line, t.column);
        if (!ids.insert(t.id).second) throw ParseError("duplicate task id '" + t.id + "'", t.line, t.column);
    }

    resolve_dependencies(c);
    return c;
}

/// Model described by the configuration.
inline model::ModelSpec build_model(const ModelSection& m) {
    if (m.expressions) return model::from_expressions(*m.expressions);
    if (*m.preset == "ex_quad_exp") {
        const auto tc = m.terminal == "softplus" ? model::terminal_softplus()
                        : m.terminal == "zero"   ? model::terminal_zero()
                                                 : model::terminal_tanh();
        return model::ex_quad_exp(tc, m.quadrature_nodes);
    }
    return model::preset(*m.preset);
}

}  // namespace bsdens::cli
