#pragma once

// File formats for exporting and re-loading runs.
//   frames.csv       t,x,rho,omega,zeta   collocated values at time midpoints
//   nodes.csv        t,x,rho              densities at time nodes
//   phi.csv          t,x,phi              potential at time nodes
//   convergence.csv  iteration,dr_residual,energy,ce_residual,constraint_residual
//   path.json        staggered (and collocated) fields, for exact re-loading
// Rows are time-outer, space-inner; reals use 17 significant digits so that
// values survive a write/read round trip bit-exactly. Negative densities
// (round-off in vacuum) are clamped to 0 in the CSV exports and the largest
// clamp is reported to the caller.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "wfr/config.hpp"
#include "wfr/errors.hpp"
#include "wfr/grid.hpp"
#include "wfr/paths.hpp"
#include "wfr/solver.hpp"

namespace wfr {

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace io_detail {

inline std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write \"" + file.string() + "\"");
  return out;
}

inline double clamp_density(double v, double& worst) {
  if (v >= 0.0) return v;
  worst = std::max(worst, -v);
  return 0.0;
}

inline json field_to_json(const Field& f) {
  json rows = json::array();
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    json row = json::array();
    for (Eigen::Index j = 0; j < f.cols(); ++j) row.push_back(f(k, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Field field_from_json(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ShapeError(what + ": expected " + std::to_string(rows) + " rows");
  Field f(rows, cols);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const json& row = j[k];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ShapeError(what + ": row " + std::to_string(k) + " should have " + std::to_string(cols) + " values");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[c].is_number()) throw ShapeError(what + ": non-numeric entry in row " + std::to_string(k));
      f(k, c) = row[c].get<double>();
    }
  }
  return f;
}

}  // namespace io_detail

// Writes collocated midpoint values every `stride` midpoints; returns the
// largest negative density clamped to zero.
inline double write_frames(const std::filesystem::path& file, const PathTriple& p, int stride) {
  if (stride < 1) throw InvalidArgument("frame stride must be >= 1");
  const Grids& g = p.grids;
  auto out = io_detail::open_out(file);
  out << "t,x,rho,omega,zeta\n";
  double clamped = 0.0;
  for (int k = 0; k < g.time.n_steps; k += stride) {
    const std::string t = format_real(g.time.midpoint(k));
    for (int j = 0; j < g.space.n_cells; ++j) {
      out << t << ',' << format_real(g.space.cell_centers[j]) << ','
          << format_real(io_detail::clamp_density(p.centered.rho(k, j), clamped)) << ','
          << format_real(p.centered.omega(k, j)) << ',' << format_real(p.centered.zeta(k, j)) << '\n';
    }
  }
  return clamped;
}

inline double write_nodes(const std::filesystem::path& file, const PathTriple& p) {
  const Grids& g = p.grids;
  auto out = io_detail::open_out(file);
  out << "t,x,rho\n";
  double clamped = 0.0;
  for (int k = 0; k <= g.time.n_steps; ++k) {
    const std::string t = format_real(g.time.node(k));
    for (int j = 0; j < g.space.n_cells; ++j)
      out << t << ',' << format_real(g.space.cell_centers[j]) << ','
          << format_real(io_detail::clamp_density(p.staggered.rho(k, j), clamped)) << '\n';
  }
  return clamped;
}

// phi has one row per time node.
inline void write_phi(const std::filesystem::path& file, const Field& phi, const Grids& g) {
  detail::require_shape(phi, g.time.n_steps + 1, g.space.n_cells, "potential");
  auto out = io_detail::open_out(file);
  out << "t,x,phi\n";
  for (int k = 0; k <= g.time.n_steps; ++k) {
    const std::string t = format_real(g.time.node(k));
    for (int j = 0; j < g.space.n_cells; ++j)
      out << t << ',' << format_real(g.space.cell_centers[j]) << ',' << format_real(phi(k, j)) << '\n';
  }
}

// Reads a t,x,phi table back into (n_steps+1) x n_cells, checking that it
// has exactly one row per (time node, cell) of the grid.
inline Field read_phi(const std::filesystem::path& file, const Grids& g) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open potential file \"" + file.string() + "\"");
  std::string line;
  if (!std::getline(in, line) || line != "t,x,phi")
    throw ShapeError("\"" + file.string() + "\": expected header t,x,phi");
  std::vector<std::vector<double>> rows;
  std::map<double, int> time_index;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = config_detail::split_csv(line);
    if (cells.size() != 3)
      throw ShapeError("\"" + file.string() + "\" line " + std::to_string(lineno) + ": expected 3 columns");
    double t = 0.0, v = 0.0;
    try {
      t = std::stod(cells[0]);
      v = std::stod(cells[2]);
    } catch (const std::exception&) {
      throw ShapeError("\"" + file.string() + "\" line " + std::to_string(lineno) + ": not a number");
    }
    auto [it, inserted] = time_index.emplace(t, static_cast<int>(rows.size()));
    if (inserted) rows.emplace_back();
    rows[it->second].push_back(v);
  }
  const int nt = g.time.n_steps, n = g.space.n_cells;
  if (static_cast<int>(rows.size()) != nt + 1)
    throw ShapeError("\"" + file.string() + "\": expected " + std::to_string(nt + 1) + " time nodes, found " +
                     std::to_string(rows.size()));
  Field phi(nt + 1, n);
  for (int k = 0; k <= nt; ++k) {
    if (static_cast<int>(rows[k].size()) != n)
      throw ShapeError("\"" + file.string() + "\": time node " + std::to_string(k) + " has " +
                       std::to_string(rows[k].size()) + " cells, expected " + std::to_string(n));
    for (int j = 0; j < n; ++j) phi(k, j) = rows[k][j];
  }
  return phi;
}

inline void write_convergence(const std::filesystem::path& file, const ConvergenceLog& log) {
  auto out = io_detail::open_out(file);
  out << "iteration,dr_residual,energy,ce_residual,constraint_residual\n";
  for (const auto& r : log)
    out << r.iteration << ',' << format_real(r.dr_residual) << ',' << format_real(r.energy) << ','
        << format_real(r.ce_residual) << ',' << format_real(r.constraint_residual) << '\n';
}

inline void write_json(const std::filesystem::path& file, const json& doc) {
  auto out = io_detail::open_out(file);
  out << doc.dump(2) << '\n';
}

inline json path_to_json(const PathTriple& p) {
  const Grids& g = p.grids;
  return json{{"domain", to_string(g.space.kind)},
              {"n_cells", g.space.n_cells},
              {"n_steps", g.time.n_steps},
              {"delta", p.delta},
              {"staggered",
               {{"rho", io_detail::field_to_json(p.staggered.rho)},
                {"omega", io_detail::field_to_json(p.staggered.omega)},
                {"zeta", io_detail::field_to_json(p.staggered.zeta)}}},
              {"centered",
               {{"rho", io_detail::field_to_json(p.centered.rho)},
                {"omega", io_detail::field_to_json(p.centered.omega)},
                {"zeta", io_detail::field_to_json(p.centered.zeta)}}}};
}

// Loads a path written by path_to_json onto the grid g; any disagreement in
// domain, sizes or array shapes is a ShapeError.
inline PathTriple path_from_json(const json& j, const Grids& g, double delta) {
  if (!j.is_object() || !j.contains("staggered")) throw ShapeError("path document lacks \"staggered\" fields");
  if (j.contains("domain") && j["domain"] != to_string(g.space.kind))
    throw ShapeError("path domain does not match the configuration");
  if (j.contains("n_cells") && j["n_cells"] != g.space.n_cells)
    throw ShapeError("path n_cells does not match the configuration");
  if (j.contains("n_steps") && j["n_steps"] != g.time.n_steps)
    throw ShapeError("path n_steps does not match the configuration");
  const int nt = g.time.n_steps, n = g.space.n_cells;
  const json& s = j["staggered"];
  StaggeredFields u;
  u.rho = io_detail::field_from_json(s.value("rho", json()), nt + 1, n, "path rho");
  u.omega = io_detail::field_from_json(s.value("omega", json()), nt, g.space.n_faces(), "path omega");
  u.zeta = io_detail::field_from_json(s.value("zeta", json()), nt, n, "path zeta");
  PathTriple p = PathTriple::from_staggered(std::move(u), g, delta);
  if (j.contains("centered")) {
    const json& c = j["centered"];
    p.centered.rho = io_detail::field_from_json(c.value("rho", json()), nt, n, "path centered rho");
    p.centered.omega = io_detail::field_from_json(c.value("omega", json()), nt, n, "path centered omega");
    p.centered.zeta = io_detail::field_from_json(c.value("zeta", json()), nt, n, "path centered zeta");
  }
  return p;
}

inline PathTriple load_path(const std::filesystem::path& file, const Grids& g, double delta) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open path file \"" + file.string() + "\"");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ShapeError(file.string() + ": " + e.what());
  }
  return path_from_json(j, g, delta);
}

}  // namespace wfr
