#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bsdens/errors.hpp"
#include "bsdens/pde/grid.hpp"

namespace bsdens::io {

/// Header lines written as "# key: value" before the column row.
struct FileHeader {
    std::string version = "1";
    std::uint64_t seed = 0;
    std::string config_hash;
    /// Empty when timestamps are disabled.
    std::string timestamp;
};

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_header(std::ostream& os, const FileHeader& h) {
    os << "# version: " << h.version << "\n# seed: " << h.seed << "\n";
    if (!h.config_hash.empty()) os << "# config_hash: " << h.config_hash << "\n";
    if (!h.timestamp.empty()) os << "# timestamp: " << h.timestamp << "\n";
}

/// Little-endian scalar IO. Hosts are assumed little-endian (checked at compile time).
static_assert(std::endian::native == std::endian::little && sizeof(double) == 8);

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("truncated binary file", 0, 0);
    return v;
}

}  // namespace bsdens::io

namespace bsdens::pde {

inline void write_csv(std::ostream& os, const GridSolution& s, const io::FileHeader& h = {}) {
    io::write_header(os, h);
    os << "# equation: " << to_string(s.which) << "\n# theta: " << io::fmt(s.scheme.theta) << "\n";
    os << "t,x,u,u_x,u_xx\n";
    for (std::size_t i = 0; i < s.n_t(); ++i)
        for (std::size_t j = 0; j < s.n_x(); ++j) {
            const auto k = s.idx(i, j);
            os << io::fmt(s.grid.t_nodes[i]) << ',' << io::fmt(s.grid.x_nodes[j]) << ',' << io::fmt(s.u[k]) << ','
               << io::fmt(s.u_x[k]) << ',' << io::fmt(s.u_xx[k]) << '\n';
        }
}

/// Reads the CSV written by write_csv; the grid is recovered from the t and x columns.
inline GridSolution read_csv(std::istream& is) {
    GridSolution s;
    std::string line;
    int lineno = 0;
    bool have_columns = false;
    std::vector<double> t, x;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# equation: ", 0) == 0) {
                const auto e = line.substr(12);
                s.which = e == "u_prime" ? Equation::u_prime : e == "u_doubleprime" ? Equation::u_doubleprime : Equation::u;
            }
            continue;
        }
        if (!have_columns) {
            if (line != "t,x,u,u_x,u_xx") throw ParseError("unexpected column row", lineno, 1);
            have_columns = true;
            continue;
        }
        double v[5];
        std::stringstream ss(line);
        std::string cell;
        for (int c = 0; c < 5; ++c) {
            if (!std::getline(ss, cell, ',')) throw ParseError("expected 5 columns", lineno, 1);
            try {
                v[c] = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError("invalid number '" + cell + "'", lineno, 1);
            }
        }
        if (t.empty() || v[0] != t.back()) t.push_back(v[0]);
        if (t.size() == 1) x.push_back(v[1]);
        s.u.push_back(v[2]);
        s.u_x.push_back(v[3]);
        s.u_xx.push_back(v[4]);
    }
    if (t.empty() || s.u.size() != t.size() * x.size()) throw ParseError("ragged grid", lineno, 1);
    s.grid.t_nodes = t;
    s.grid.x_nodes = x;
    return s;
}

/// Binary layout: "BSDG", u32 version = 1, u32 equation, u64 n_t, u64 n_x, then t, x, u, u_x, u_xx as doubles.
inline void write_binary(std::ostream& os, const GridSolution& s) {
    os.write("BSDG", 4);
    io::put<std::uint32_t>(os, 1);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(s.which));
    io::put<std::uint64_t>(os, s.n_t());
    io::put<std::uint64_t>(os, s.n_x());
    for (double v : s.grid.t_nodes) io::put(os, v);
    for (double v : s.grid.x_nodes) io::put(os, v);
    for (const auto* f : {&s.u, &s.u_x, &s.u_xx})
        for (double v : *f) io::put(os, v);
}

inline GridSolution read_binary(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "BSDG", 4) != 0) throw ParseError("bad magic", 0, 0);
    if (io::get<std::uint32_t>(is) != 1) throw ParseError("unsupported version", 0, 0);
    GridSolution s;
    const auto eq = io::get<std::uint32_t>(is);
    if (eq > 2) throw ParseError("bad equation tag", 0, 0);
    s.which = static_cast<Equation>(eq);
    const auto nt = io::get<std::uint64_t>(is), nx = io::get<std::uint64_t>(is);
    auto read_vec = [&](std::vector<double>& v, std::uint64_t n) {
        v.resize(n);
        for (auto& a : v) a = io::get<double>(is);
    };
    read_vec(s.grid.t_nodes, nt);
    read_vec(s.grid.x_nodes, nx);
    read_vec(s.u, nt * nx);
    read_vec(s.u_x, nt * nx);
    read_vec(s.u_xx, nt * nx);
    return s;
}

}  // namespace bsdens::pde
