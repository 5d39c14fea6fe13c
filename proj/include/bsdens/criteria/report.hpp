#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "bsdens/criteria/core.hpp"
#include "json.hpp"

namespace bsdens::criteria {

namespace detail {

/// JSON has no infinities; non-finite values are written as strings.
inline nlohmann::json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

}  // namespace detail

inline nlohmann::json to_json(const CriterionReport& r) {
    using detail::number;
    nlohmann::json j;
    j["id"] = r.id;
    j["t"] = number(r.t);
    j["A"] = r.A.describe();
    j["verdict"] = to_string(r.verdict);
    j["margin"] = number(r.margin);
    j["resolution"] = number(r.resolution);
    if (!r.note.empty()) j["note"] = r.note;
    auto& sc = j["scalars"] = nlohmann::json::object();
    for (const auto& [k, v] : r.scalars) {
        sc[k]["value"] = number(v);
        const auto g = r.grids.find(k);
        if (g != r.grids.end()) sc[k]["grid"] = g->second;
    }
    auto& lines = j["lines"] = nlohmann::json::array();
    for (const auto& l : r.lines)
        lines.push_back({{"label", l.label},
                         {"value", number(l.value)},
                         {"relation", std::string(l.sense > 0 ? ">" : "<") + (l.strict ? "" : "=")},
                         {"tol", number(l.tol)},
                         {"unbounded", l.unbounded}});
    auto& w = j["witnesses"] = nlohmann::json::array();
    for (const auto& x : r.witnesses)
        w.push_back({{"label", x.label},
                     {"t", number(x.t)},
                     {"x", number(x.x)},
                     {"y", number(x.y)},
                     {"z", number(x.z)},
                     {"value", number(x.value)}});
    if (r.hit) {
        j["hit_probability"] = {{"wilson_lower", number(r.hit->lower)},
                                {"wilson_upper", number(r.hit->upper)},
                                {"fraction", number(r.hit->fraction)},
                                {"paths_per_state", r.hit->paths_per_state},
                                {"states", nlohmann::json::array()}};
        for (double s : r.hit->states) j["hit_probability"]["states"].push_back(number(s));
    }
    return j;
}

inline nlohmann::json to_json(const CriterionPair& p) {
    return {{"verdict", to_string(p.verdict())}, {"plus", to_json(p.plus)}, {"minus", to_json(p.minus)}};
}

/// One row per report: id, t, A, verdict, margin, resolution.
inline void write_table(std::ostream& os, const std::vector<CriterionReport>& rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-12s %8s  %-22s %-24s %14s %10s\n", "criterion", "t", "A", "verdict", "margin",
                  "resolution");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-12s %8.4f  %-22s %-24s %14.6e %10.1e\n", r.id.c_str(), r.t,
                      r.A.describe().c_str(), to_string(r.verdict), r.margin, r.resolution);
        os << buf;
    }
}

}  // namespace bsdens::criteria
