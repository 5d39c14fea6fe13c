#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "bsdens/mc/bsde.hpp"
#include "bsdens/mc/malliavin.hpp"
#include "bsdens/mc/paths.hpp"
#include "bsdens/pde/io.hpp"

namespace bsdens::mc {

/// Columns t, path, x, y, z at the requested step indices (all steps when empty); y, z omitted without a solution.
inline void write_csv(std::ostream& os, const PathEnsemble& e, const BsdeSolution* sol, io::FileHeader h = {},
                      std::vector<std::size_t> steps = {}) {
    h.seed = e.seed;
    io::write_header(os, h);
    os << "# substream: " << e.substream << "\n# n_paths: " << e.n_paths << "\n# n_steps: " << e.n_steps << "\n";
    os << (sol ? "t,path,x,y,z\n" : "t,path,x\n");
    if (steps.empty())
        for (std::size_t k = 0; k <= e.n_steps; ++k) steps.push_back(k);
    for (std::size_t k : steps)
        for (std::size_t p = 0; p < e.n_paths; ++p) {
            os << io::fmt(e.time(k)) << ',' << p << ',' << io::fmt(e.x(k, p));
            if (sol) os << ',' << io::fmt(sol->y(k, p)) << ',' << io::fmt(sol->z(k, p));
            os << '\n';
        }
}

/// Columns t, path, dx, dy, dz for t >= r.
inline void write_csv(std::ostream& os, const MalliavinEnsemble& m, std::uint64_t seed, io::FileHeader h = {}) {
    h.seed = seed;
    io::write_header(os, h);
    os << "# r: " << io::fmt(m.r) << "\n# method: " << m.method << "\n";
    os << "t,path,dx,dy,dz\n";
    for (std::size_t j = m.r_index; j <= m.n_steps; ++j)
        for (std::size_t p = 0; p < m.n_paths; ++p) {
            const auto k = j * m.n_paths + p;
            os << io::fmt(m.time(j)) << ',' << p << ',' << io::fmt(m.DX[k]) << ',' << io::fmt(m.DY[k]) << ','
               << io::fmt(m.DZ[k]) << '\n';
        }
}

/// Binary layout: "BSDE", u32 version = 1, u64 seed, u64 n_paths, u64 n_steps, f64 T, then X, dW and
/// (flag u8) Y, Z as step-major little-endian doubles.
inline void write_binary(std::ostream& os, const PathEnsemble& e, const BsdeSolution* sol) {
    os.write("BSDE", 4);
    io::put<std::uint32_t>(os, 1);
    io::put<std::uint64_t>(os, e.seed);
    io::put<std::uint64_t>(os, e.n_paths);
    io::put<std::uint64_t>(os, e.n_steps);
    io::put<double>(os, e.T);
    for (double v : e.X) io::put(os, v);
    for (double v : e.dW) io::put(os, v);
    io::put<std::uint8_t>(os, sol ? 1 : 0);
    if (sol) {
        for (double v : sol->Y) io::put(os, v);
        for (double v : sol->Z) io::put(os, v);
    }
}

}  // namespace bsdens::mc
