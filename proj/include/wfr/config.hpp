#pragma once

// JSON run configuration: grids, endpoint measures, constraint, solver
// parameters and output options. Every object is checked for unknown keys
// and every error names the offending field path (e.g. "$.solver.max_iters").
//
// Measure descriptors:
//   {"preset": "uniform", "mass": m}
//   {"preset": "bump", "center": c, "width": w, "mass": m}
//   {"preset": "dirac", "index": j, "mass": m}
//   {"preset": "random", "mass": m, "floor": f, "seed": s}
//   {"preset": "explicit", "density": [...]}
//   {"preset": "explicit", "file": "nodes.csv", "t": 1.0}   (rho column of a node/frame CSV)
//   {"preset": "mixture", "components": [descriptor, ...]}
// Constraint descriptors:
//   "none" | {"preset": "none"} | {"preset": "spherical_hk"} | {"preset": "closure"}
//   {"preset": "total_mass", "F": {"polynomial": [c0, c1, ...]} | {"samples": [...]}}
//   {"preset": "moment", "centers": [...], "value": v}
//   {"preset": "barrier", "a0": .., "b0": .., "a1": .., "b1": ..}
//   {"preset": "explicit", "h": [H_1, ...], "f": F}
// where each H_i is either one row of n_cells values (time independent) or
// n_steps+1 rows, and F is either d constants or n_steps+1 rows of d values.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wfr/errors.hpp"
#include "wfr/grid.hpp"
#include "wfr/measures.hpp"
#include "wfr/solver.hpp"

namespace wfr {

using json = nlohmann::json;

struct OutputOptions {
  std::string directory = "wfr_output";
  int frame_stride = 1;
  bool csv = true;
  bool json = true;
};

struct RunConfig {
  Problem problem;
  SolverParams solver;
  OutputOptions outputs;
  std::uint64_t seed = 0;
};

namespace config_detail {

// Reads the members of one JSON object, remembering which keys were used so
// that leftovers can be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return path_ + "." + key; }

  const json& at(const std::string& key) {
    if (!j_.contains(key)) throw ConfigError(path(key) + ": missing required field");
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    return convert<T>(at(key), path(key));
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    return has(key) ? get<T>(key) : fallback;
  }

  // Rejects unknown keys before any field is read, so that a misspelled key
  // is reported as such rather than as a missing required field.
  void allow_only(std::initializer_list<const char*> keys) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const char* k : keys) known = known || it.key() == k;
      if (!known) throw ConfigError(path(it.key()) + ": unknown key \"" + it.key() + "\"");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(path(it.key()) + ": unknown key \"" + it.key() + "\"");
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline std::vector<double> number_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    out.push_back(ObjectReader::convert<double>(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

inline DomainKind parse_domain_kind(const std::string& s, const std::string& where) {
  if (s == "interval") return DomainKind::Interval;
  if (s == "circle") return DomainKind::Circle;
  throw ConfigError(where + ": unknown domain kind \"" + s + "\" (expected \"interval\" or \"circle\")");
}

// Splits one CSV line on commas (no quoting is used by the files we write).
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

// Reads the rho column of the rows whose t column equals t (to 1e-12).
inline std::vector<double> density_from_csv(const std::filesystem::path& file, double t, const std::string& where) {
  std::ifstream in(file);
  if (!in) throw ConfigError(where + ": cannot open \"" + file.string() + "\"");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(where + ": \"" + file.string() + "\" is empty");
  const auto header = split_csv(line);
  int col_t = -1, col_rho = -1;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (header[c] == "t") col_t = c;
    if (header[c] == "rho") col_rho = c;
  }
  if (col_t < 0 || col_rho < 0) throw ConfigError(where + ": \"" + file.string() + "\" lacks t/rho columns");
  std::vector<double> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<int>(cells.size()) != static_cast<int>(header.size()))
      throw ConfigError(where + ": \"" + file.string() + "\" line " + std::to_string(lineno) +
                        ": wrong number of columns");
    try {
      if (std::abs(std::stod(cells[col_t]) - t) <= 1e-12) out.push_back(std::stod(cells[col_rho]));
    } catch (const std::exception&) {
      throw ConfigError(where + ": \"" + file.string() + "\" line " + std::to_string(lineno) + ": not a number");
    }
  }
  if (out.empty()) throw ConfigError(where + ": no rows with t = " + std::to_string(t) + " in \"" + file.string() + "\"");
  return out;
}

struct ParseContext {
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  int random_count = 0;  // random presets without their own seed draw seed, seed+1, ...
};

inline preset::MeasurePreset parse_measure(const json& j, const std::string& where, ParseContext& ctx);

inline preset::Component parse_component(const json& j, const std::string& where, ParseContext& ctx) {
  preset::MeasurePreset m = parse_measure(j, where, ctx);
  return std::visit(
      [&](auto&& v) -> preset::Component {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, preset::Mixture>)
          throw ConfigError(where + ": mixtures cannot be nested");
        else
          return v;
      },
      m);
}

inline preset::MeasurePreset parse_measure(const json& j, const std::string& where, ParseContext& ctx) {
  ObjectReader r(j, where);
  const std::string name = r.get<std::string>("preset");
  preset::MeasurePreset out;
  if (name == "uniform") {
    out = preset::Uniform{r.get_or<double>("mass", 1.0)};
  } else if (name == "bump") {
    out = preset::Bump{r.get_or<double>("center", 0.5), r.get_or<double>("width", 0.1), r.get_or<double>("mass", 1.0)};
  } else if (name == "dirac") {
    out = preset::DiracCell{r.get<int>("index"), r.get_or<double>("mass", 1.0)};
  } else if (name == "random") {
    preset::Random p{r.get_or<double>("mass", 1.0), r.get_or<double>("floor", 0.2), 0};
    p.seed = r.has("seed") ? r.get<std::uint64_t>("seed") : ctx.seed + static_cast<std::uint64_t>(ctx.random_count++);
    out = p;
  } else if (name == "explicit") {
    if (r.has("density") == r.has("file"))
      throw ConfigError(where + ": explicit measures need exactly one of \"density\" or \"file\"");
    if (r.has("density")) {
      out = preset::Explicit{number_array(r.at("density"), r.path("density"))};
    } else {
      std::filesystem::path file = r.get<std::string>("file");
      if (file.is_relative()) file = ctx.base_dir / file;
      const double t = r.get<double>("t");
      out = preset::Explicit{density_from_csv(file, t, r.path("file"))};
    }
  } else if (name == "mixture") {
    const json& comps = r.at("components");
    if (!comps.is_array() || comps.empty()) throw ConfigError(r.path("components") + ": expected a non-empty array");
    preset::Mixture mix;
    for (std::size_t i = 0; i < comps.size(); ++i)
      mix.components.push_back(parse_component(comps[i], r.path("components") + "[" + std::to_string(i) + "]", ctx));
    out = mix;
  } else {
    throw ConfigError(r.path("preset") + ": unknown measure preset \"" + name + "\"");
  }
  r.finish();
  return out;
}

inline DiscreteMeasure build_measure(const preset::MeasurePreset& p, const SpatialGrid& grid, const std::string& where) {
  try {
    return make_measure(p, grid);
  } catch (const ShapeError& e) {
    throw ShapeError(where + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

// F(t) as polynomial coefficients (constant term first) or node samples.
inline Vector parse_time_function(const json& j, const std::string& where, const TimeGrid& time) {
  ObjectReader r(j, where);
  if (r.has("polynomial") == r.has("samples"))
    throw ConfigError(where + ": give exactly one of \"polynomial\" or \"samples\"");
  Vector out(time.n_steps + 1);
  if (r.has("polynomial")) {
    const auto c = number_array(r.at("polynomial"), r.path("polynomial"));
    if (c.empty()) throw ConfigError(r.path("polynomial") + ": needs at least one coefficient");
    for (int k = 0; k <= time.n_steps; ++k) {
      double v = 0.0;
      for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * time.node(k) + *it;
      out[k] = v;
    }
  } else {
    const auto s = number_array(r.at("samples"), r.path("samples"));
    if (static_cast<int>(s.size()) != time.n_steps + 1)
      throw ShapeError(r.path("samples") + ": expected n_steps + 1 = " + std::to_string(time.n_steps + 1) +
                       " samples, got " + std::to_string(s.size()));
    for (int k = 0; k <= time.n_steps; ++k) out[k] = s[k];
  }
  r.finish();
  return out;
}

inline Field parse_h_field(const json& j, const std::string& where, const Grids& g) {
  const int nt = g.time.n_steps, n = g.space.n_cells;
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected an array");
  Field h(nt + 1, n);
  if (j[0].is_number()) {
    const auto row = number_array(j, where);
    if (static_cast<int>(row.size()) != n)
      throw ShapeError(where + ": expected " + std::to_string(n) + " values, got " + std::to_string(row.size()));
    for (int k = 0; k <= nt; ++k)
      for (int c = 0; c < n; ++c) h(k, c) = row[c];
    return h;
  }
  if (static_cast<int>(j.size()) != nt + 1)
    throw ShapeError(where + ": expected n_steps + 1 = " + std::to_string(nt + 1) + " rows, got " +
                     std::to_string(j.size()));
  for (int k = 0; k <= nt; ++k) {
    const auto row = number_array(j[k], where + "[" + std::to_string(k) + "]");
    if (static_cast<int>(row.size()) != n)
      throw ShapeError(where + "[" + std::to_string(k) + "]: expected " + std::to_string(n) + " values");
    for (int c = 0; c < n; ++c) h(k, c) = row[c];
  }
  return h;
}

inline Field parse_f_values(const json& j, const std::string& where, int d, int nt) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected an array");
  Field f(nt + 1, d);
  if (j[0].is_number()) {
    const auto c = number_array(j, where);
    if (static_cast<int>(c.size()) != d)
      throw ShapeError(where + ": expected " + std::to_string(d) + " constants, got " + std::to_string(c.size()));
    for (int k = 0; k <= nt; ++k)
      for (int i = 0; i < d; ++i) f(k, i) = c[i];
    return f;
  }
  if (static_cast<int>(j.size()) != nt + 1)
    throw ShapeError(where + ": expected n_steps + 1 = " + std::to_string(nt + 1) + " rows");
  for (int k = 0; k <= nt; ++k) {
    const auto row = number_array(j[k], where + "[" + std::to_string(k) + "]");
    if (static_cast<int>(row.size()) != d)
      throw ShapeError(where + "[" + std::to_string(k) + "]: expected " + std::to_string(d) + " values");
    for (int i = 0; i < d; ++i) f(k, i) = row[i];
  }
  return f;
}

inline ConstraintSpec parse_constraint(const json& j, const std::string& where, const Grids& g) {
  if (j.is_string()) {
    if (j.get<std::string>() == "none") return constraints::none(g);
    throw ConfigError(where + ": expected \"none\" or a constraint object");
  }
  ObjectReader r(j, where);
  const std::string name = r.get<std::string>("preset");
  ConstraintSpec spec;
  try {
    if (name == "none") {
      spec = constraints::none(g);
    } else if (name == "spherical_hk") {
      spec = constraints::spherical_hk(g);
    } else if (name == "closure") {
      spec = constraints::closure(g);
    } else if (name == "total_mass") {
      const Vector F = parse_time_function(r.at("F"), r.path("F"), g.time);
      spec = constraints::explicit_arrays({Field::Ones(g.time.n_steps + 1, g.space.n_cells)}, Field(F), g);
      spec.name = "total_mass";
      spec.time_independent = (F.array() == F[0]).all();
    } else if (name == "moment") {
      spec = constraints::moment(number_array(r.at("centers"), r.path("centers")), r.get_or<double>("value", 0.0), g);
    } else if (name == "barrier") {
      spec = constraints::barrier({r.get<double>("a0"), r.get<double>("b0"), r.get<double>("a1"), r.get<double>("b1")}, g);
    } else if (name == "explicit") {
      const json& hs = r.at("h");
      if (!hs.is_array() || hs.empty()) throw ConfigError(r.path("h") + ": expected a non-empty array");
      std::vector<Field> h;
      for (std::size_t i = 0; i < hs.size(); ++i)
        h.push_back(parse_h_field(hs[i], r.path("h") + "[" + std::to_string(i) + "]", g));
      Field f = parse_f_values(r.at("f"), r.path("f"), static_cast<int>(h.size()), g.time.n_steps);
      spec = constraints::explicit_arrays(std::move(h), std::move(f), g);
    } else {
      throw ConfigError(r.path("preset") + ": unknown constraint preset \"" + name + "\"");
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  r.finish();
  return spec;
}

inline void parse_refine(const json& j, const std::string& where, RefineParams& p) {
  ObjectReader r(j, where);
  p.mu_initial = r.get_or("mu_initial", p.mu_initial);
  p.mu_final = r.get_or("mu_final", p.mu_final);
  p.mu_factor = r.get_or("mu_factor", p.mu_factor);
  p.max_newton_steps = r.get_or("max_newton_steps", p.max_newton_steps);
  p.centering_tol = r.get_or("centering_tol", p.centering_tol);
  r.finish();
}

inline void parse_solver(const json& j, const std::string& where, SolverParams& p) {
  ObjectReader r(j, where);
  p.max_iters = r.get_or("max_iters", p.max_iters);
  p.dr_step = r.get_or("dr_step", p.dr_step);
  p.relaxation = r.get_or("relaxation", p.relaxation);
  p.projection_tol = r.get_or("projection_tol", p.projection_tol);
  p.projection_max_refinements = r.get_or("projection_max_refinements", p.projection_max_refinements);
  p.fixed_point_tol = r.get_or("fixed_point_tol", p.fixed_point_tol);
  p.log_every = r.get_or("log_every", p.log_every);
  p.refine = r.get_or("refine", p.refine);
  if (r.has("refine_params")) parse_refine(r.at("refine_params"), r.path("refine_params"), p.refine_params);
  r.finish();
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline void parse_outputs(const json& j, const std::string& where, OutputOptions& o) {
  ObjectReader r(j, where);
  o.directory = r.get_or("directory", o.directory);
  o.frame_stride = r.get_or("frame_stride", o.frame_stride);
  if (o.frame_stride < 1) throw ConfigError(r.path("frame_stride") + ": must be >= 1");
  if (r.has("formats")) {
    const json& f = r.at("formats");
    if (!f.is_array()) throw ConfigError(r.path("formats") + ": expected an array of strings");
    o.csv = o.json = false;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string name = ObjectReader::convert<std::string>(f[i], r.path("formats") + "[" + std::to_string(i) + "]");
      if (name == "csv") o.csv = true;
      else if (name == "json") o.json = true;
      else throw ConfigError(r.path("formats") + "[" + std::to_string(i) + "]: unknown format \"" + name + "\"");
    }
  }
  r.finish();
}

}  // namespace config_detail

// Builds a run from a parsed document. base_dir resolves relative file
// references; seed_override (if set) replaces the document's "seed".
inline RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir = ".",
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
  using namespace config_detail;
  ObjectReader r(doc, "$");
  r.allow_only({"domain", "time", "delta", "balanced", "feasibility_tol", "seed", "rho0", "rho1", "constraint",
                "solver", "outputs"});
  RunConfig cfg;
  cfg.seed = seed_override ? *seed_override : r.get_or<std::uint64_t>("seed", 0);
  if (seed_override && r.has("seed")) r.at("seed");

  ObjectReader dom(r.at("domain"), r.path("domain"));
  dom.allow_only({"kind", "n_cells"});
  const DomainKind kind = parse_domain_kind(dom.get<std::string>("kind"), dom.path("kind"));
  const int n_cells = dom.get<int>("n_cells");
  dom.finish();
  ObjectReader tm(r.at("time"), r.path("time"));
  tm.allow_only({"n_steps"});
  const int n_steps = tm.get<int>("n_steps");
  tm.finish();

  Problem& p = cfg.problem;
  p.grids = build_grids(kind, n_cells, n_steps);
  p.delta = r.get<double>("delta");
  if (!(p.delta > 0.0)) throw ConfigError(r.path("delta") + ": must be > 0");
  p.balanced = r.get_or("balanced", false);
  p.feasibility_tol = r.get_or("feasibility_tol", p.feasibility_tol);
  if (!(p.feasibility_tol > 0.0)) throw ConfigError(r.path("feasibility_tol") + ": must be > 0");

  ParseContext ctx{base_dir, cfg.seed, 0};
  p.rho0 = build_measure(parse_measure(r.at("rho0"), r.path("rho0"), ctx), p.grids.space, r.path("rho0"));
  p.rho1 = build_measure(parse_measure(r.at("rho1"), r.path("rho1"), ctx), p.grids.space, r.path("rho1"));
  p.spec = r.has("constraint") ? parse_constraint(r.at("constraint"), r.path("constraint"), p.grids)
                               : constraints::none(p.grids);
  if (r.has("solver")) parse_solver(r.at("solver"), r.path("solver"), cfg.solver);
  if (r.has("outputs")) parse_outputs(r.at("outputs"), r.path("outputs"), cfg.outputs);
  r.finish();
  return cfg;
}

inline json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file \"" + file.string() + "\"");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& file,
                             std::optional<std::uint64_t> seed_override = std::nullopt) {
  return parse_config(read_json_file(file), file.parent_path().empty() ? "." : file.parent_path(), seed_override);
}

}  // namespace wfr
