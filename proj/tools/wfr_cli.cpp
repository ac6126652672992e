// Command-line front end.
//
//   wfr solve <config>                              solve and export frames, logs, summary
//   wfr path <config> --constructor <name>          build a closed-form path and export it
//   wfr certify <config> --path <file> --phi <file> check optimality conditions
//   wfr distance <config>                           solve and print sqrt(energy) only
//
// Exit codes: 0 ok, 1 not certified, 2 configuration or shape error,
// 3 infeasible problem or failed precondition, 4 solver failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "wfr/wfr.hpp"

namespace fs = std::filesystem;
using namespace wfr;

namespace {

enum ExitCode { kOk = 0, kNotCertified = 1, kConfig = 2, kInfeasible = 3, kSolver = 4 };

struct CommonOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string vector_text(const Vector& v) {
  std::string s = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_real(v[i]);
  return s + ")";
}

void print_feasibility(const FeasibilityReport& r) {
  std::cerr << "infeasible: endpoints violate the path constraint (tolerance " << format_real(r.tolerance) << ")\n"
            << "  residual_0 = " << vector_text(r.residual_0) << "\n"
            << "  residual_1 = " << vector_text(r.residual_1) << "\n";
}

fs::path output_dir(const CommonOptions& opt, const RunConfig& cfg) {
  fs::path dir = opt.out.empty() ? fs::path(cfg.outputs.directory) : fs::path(opt.out);
  fs::create_directories(dir);
  return dir;
}

RunConfig load(const CommonOptions& opt) { return load_config(opt.config, opt.seed); }

json grid_json(const RunConfig& cfg) {
  const Problem& p = cfg.problem;
  return json{{"domain", to_string(p.grids.space.kind)},
              {"n_cells", p.grids.space.n_cells},
              {"n_steps", p.grids.time.n_steps},
              {"delta", p.delta},
              {"balanced", p.balanced},
              {"constraint", p.spec.name},
              {"seed", cfg.seed}};
}

// Frames, node densities and the re-loadable path document.
double export_path(const fs::path& dir, const PathTriple& path, const OutputOptions& o) {
  double clamped = 0.0;
  if (o.csv) {
    clamped = std::max(clamped, write_frames(dir / "frames.csv", path, o.frame_stride));
    clamped = std::max(clamped, write_nodes(dir / "nodes.csv", path));
  }
  if (o.json) write_json(dir / "path.json", path_to_json(path));
  return clamped;
}

int cmd_solve(const CommonOptions& opt) {
  const RunConfig cfg = load(opt);
  const Solution s = solve(cfg.problem, cfg.solver);
  const fs::path dir = output_dir(opt, cfg);

  const double clamped = export_path(dir, s.path, cfg.outputs);
  if (cfg.outputs.csv) {
    write_convergence(dir / "convergence.csv", s.log);
    write_phi(dir / "phi.csv", midpoints_to_nodes(s.phi), cfg.problem.grids);
  }
  json summary = grid_json(cfg);
  summary["energy"] = s.energy;
  summary["distance"] = s.distance;
  summary["iterations"] = s.iterations;
  summary["converged"] = s.converged;
  summary["refined"] = s.refined;
  summary["newton_steps"] = s.newton_steps;
  summary["dr_residual"] = s.final_dr_residual;
  summary["ce_residual"] = s.ce_residual;
  summary["constraint_residual"] = s.constraint_residual;
  summary["energy_interpolated"] = real_or_null(s.energy_interpolated);
  summary["interp_gap"] = s.interp_gap;
  summary["density_clamp"] = clamped;
  write_json(dir / "summary.json", summary);
  // Wall time lives in its own file so that summary.json is reproducible bit for bit.
  write_json(dir / "timing.json", json{{"wall_seconds", s.wall_seconds}});

  if (clamped > 0.0) std::cerr << "note: clamped negative densities of magnitude up to " << format_real(clamped) << " to 0\n";
  if (!opt.quiet) {
    std::cout << "energy = " << format_real(s.energy) << "\n"
              << "distance = " << format_real(s.distance) << "\n"
              << "iterations = " << s.iterations << (s.converged ? " (converged)" : " (iteration cap)")
              << (s.refined ? ", refined in " + std::to_string(s.newton_steps) + " Newton steps" : "") << "\n"
              << "ce_residual = " << format_real(s.ce_residual) << "\n"
              << "constraint_residual = " << format_real(s.constraint_residual) << "\n"
              << "wall_seconds = " << format_real(s.wall_seconds) << "\n"
              << "outputs written to " << dir.string() << "\n";
  }
  return kOk;
}

Vector total_mass_profile(const Problem& p, const std::string& constructor) {
  const ConstraintSpec& spec = p.spec;
  if (spec.d != 1 || !(spec.h_values[0].array() == 1.0).all())
    throw InfeasibleError(constructor + " needs a total-mass constraint (H = 1)");
  return spec.f_values.col(0);
}

PathTriple construct(const std::string& name, const Problem& p) {
  const Grids& g = p.grids;
  if (name == "teleport") return teleport_path(p.rho0, p.rho1, g, p.delta);
  if (name == "linear_fr") return linear_fr_path(p.rho0, p.rho1, g, p.delta);
  if (name == "scaling") return scaling_path(p.rho0, total_mass_profile(p, name), g, p.delta);
  if (name == "balanced_quantile") return balanced_quantile_path(p.rho0, p.rho1, g, p.delta);
  if (name == "scaled_balanced") return scaled_balanced_path(p.rho0, p.rho1, total_mass_profile(p, name), g, p.delta);
  throw ConfigError("unknown constructor \"" + name +
                    "\" (expected teleport, linear_fr, scaling, balanced_quantile or scaled_balanced)");
}

int cmd_path(const CommonOptions& opt, const std::string& constructor) {
  const RunConfig cfg = load(opt);
  const Problem& p = cfg.problem;
  PathTriple path;
  try {
    path = construct(constructor, p);
  } catch (const InvalidArgument& e) {
    throw InfeasibleError(constructor + ": " + e.what());
  }
  // The constructed path must respect the configured constraint at every node.
  if (p.spec.d > 0) {
    const Field r = constraint_eval(p.spec, path.staggered.rho, p.grids.space);
    const double scale = std::max(1.0, p.spec.f_values.cwiseAbs().maxCoeff());
    const double worst = r.cwiseAbs().maxCoeff();
    if (worst > p.feasibility_tol * scale)
      throw InfeasibleError(constructor + " path violates the constraint (max residual " + format_real(worst) + ")");
  }
  const double energy = path.energy();
  const fs::path dir = output_dir(opt, cfg);
  const double clamped = export_path(dir, path, cfg.outputs);
  json summary = grid_json(cfg);
  summary["constructor"] = constructor;
  summary["energy"] = real_or_null(energy);
  summary["distance_bound"] = real_or_null(std::sqrt(energy));
  summary["density_clamp"] = clamped;
  write_json(dir / "summary.json", summary);
  if (!opt.quiet)
    std::cout << "energy = " << format_real(energy) << "\n"
              << "outputs written to " << dir.string() << "\n";
  return kOk;
}

int cmd_certify(const CommonOptions& opt, const std::string& path_file, const std::string& phi_file, double tol) {
  const RunConfig cfg = load(opt);
  const Problem& p = cfg.problem;
  const PathTriple path = load_path(path_file, p.grids, p.delta);
  const Field phi = read_phi(phi_file, p.grids);
  const CertificateReport rep = certify(path, phi, p.spec, p.delta, tol);

  json doc{{"certified", rep.certified},       {"tolerance", rep.tolerance},
           {"r_hj", rep.r_hj},                 {"r_membership", rep.r_membership},
           {"r_momentum", rep.r_momentum},     {"r_source", rep.r_source}};
  if (!opt.out.empty()) {
    fs::create_directories(opt.out);
    write_json(fs::path(opt.out) / "certificate.json", doc);
  }
  if (!opt.quiet) std::cout << doc.dump(2) << "\n";
  std::cout << (rep.certified ? "certified" : "not certified") << "\n";
  return rep.certified ? kOk : kNotCertified;
}

int cmd_distance(const CommonOptions& opt) {
  const RunConfig cfg = load(opt);
  const Solution s = solve(cfg.problem, cfg.solver);
  std::cout << format_real(s.distance) << "\n";
  return kOk;
}

void add_common(CLI::App* sub, CommonOptions& opt) {
  sub->add_option("config", opt.config, "JSON run configuration")->required();
  sub->add_option("--out", opt.out, "output directory (overrides outputs.directory)");
  sub->add_option("--seed", opt.seed, "seed for random measure presets (overrides the config)");
  sub->add_flag("--quiet", opt.quiet, "suppress informational output");
}

template <class F>
int guarded(F&& run) {
  try {
    return run();
  } catch (const InfeasibleProblem& e) {
    print_feasibility(e.report);
    return kInfeasible;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kConfig;
  } catch (const SizingError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const InvalidArgument& e) {
    std::cerr << "precondition failed: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolver;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Wasserstein-Fisher-Rao transport: solve, construct, certify"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::string constructor, path_file, phi_file;
  double tol = kDefaultCertifyTol;

  auto* solve_cmd = app.add_subcommand("solve", "solve the transport problem and export results");
  add_common(solve_cmd, opt);
  auto* path_cmd = app.add_subcommand("path", "build a closed-form path and export it");
  add_common(path_cmd, opt);
  path_cmd->add_option("--constructor", constructor, "teleport | linear_fr | scaling | balanced_quantile | scaled_balanced")
      ->required();
  auto* certify_cmd = app.add_subcommand("certify", "check the optimality conditions for a path and potential");
  add_common(certify_cmd, opt);
  certify_cmd->add_option("--path", path_file, "path document (path.json)")->required();
  certify_cmd->add_option("--phi", phi_file, "potential table t,x,phi at time nodes")->required();
  certify_cmd->add_option("--tol", tol, "certification tolerance");
  auto* distance_cmd = app.add_subcommand("distance", "solve and print the distance only");
  add_common(distance_cmd, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (solve_cmd->parsed()) return guarded([&] { return cmd_solve(opt); });
  if (path_cmd->parsed()) return guarded([&] { return cmd_path(opt, constructor); });
  if (certify_cmd->parsed()) return guarded([&] { return cmd_certify(opt, path_file, phi_file, tol); });
  return guarded([&] { return cmd_distance(opt); });
}
