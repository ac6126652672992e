#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct RunResult {
  int exit_code;
  std::string output;  // stdout and stderr
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(WFR_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wfr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  fs::path write_config(const std::string& name, const json& doc) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << doc.dump(2);
    return p;
  }
  static json scaling(int n) {
    return {{"domain", {{"kind", "interval"}, {"n_cells", n}}},
            {"time", {{"n_steps", n}}},
            {"delta", 1.0},
            {"rho0", {{"preset", "uniform"}, {"mass", 1.0}}},
            {"rho1", {{"preset", "uniform"}, {"mass", 2.0}}},
            {"constraint", {{"preset", "total_mass"}, {"F", {{"polynomial", {1.0, 1.0}}}}}}};
  }
  void write_phi(const fs::path& p, int n, double shift, int cells) {
    std::ofstream out(p);
    out << "t,x,phi\n";
    out.precision(17);
    for (int k = 0; k <= n; ++k) {
      const double t = static_cast<double>(k) / n;
      for (int j = 0; j < cells; ++j) out << t << ',' << (j + 0.5) / cells << ',' << 1.0 / (1.0 + t) + shift << '\n';
    }
  }
  fs::path dir_;
};

TEST_F(Cli, SolveScalingWritesSummaryAndFrames) {
  const fs::path cfg = write_config("scaling.json", scaling(64));
  const RunResult r = run("solve " + cfg.string() + " --out " + (dir_ / "out").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const json summary = json::parse(slurp(dir_ / "out" / "summary.json"));
  const double e = summary["energy"].get<double>();
  EXPECT_NEAR(e, 0.5 * std::log(2.0), 0.02 * 0.5 * std::log(2.0));
  EXPECT_DOUBLE_EQ(summary["distance"].get<double>(), std::sqrt(e));
  for (const char* f : {"frames.csv", "nodes.csv", "phi.csv", "convergence.csv", "path.json", "timing.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  std::ifstream frames(dir_ / "out" / "frames.csv");
  std::string header;
  std::getline(frames, header);
  EXPECT_EQ(header, "t,x,rho,omega,zeta");
  std::ifstream conv(dir_ / "out" / "convergence.csv");
  std::getline(conv, header);
  EXPECT_EQ(header, "iteration,dr_residual,energy,ce_residual,constraint_residual");
}

TEST_F(Cli, SolveIsDeterministic) {
  json doc = scaling(16);
  doc["rho0"] = {{"preset", "random"}};
  doc["rho1"] = {{"preset", "random"}};
  doc["constraint"] = {{"preset", "spherical_hk"}};
  doc["domain"]["kind"] = "circle";
  doc["solver"] = {{"max_iters", 300}};
  const fs::path cfg = write_config("rand.json", doc);
  ASSERT_EQ(run("solve " + cfg.string() + " --seed 5 --quiet --out " + (dir_ / "a").string()).exit_code, 0);
  ASSERT_EQ(run("solve " + cfg.string() + " --seed 5 --quiet --out " + (dir_ / "b").string()).exit_code, 0);
  ASSERT_EQ(run("solve " + cfg.string() + " --seed 6 --quiet --out " + (dir_ / "c").string()).exit_code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "summary.json"), slurp(dir_ / "b" / "summary.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "nodes.csv"), slurp(dir_ / "b" / "nodes.csv"));
  EXPECT_NE(slurp(dir_ / "a" / "summary.json"), slurp(dir_ / "c" / "summary.json"));
}

TEST_F(Cli, InfeasibleEndpointsExitThreeAndPrintResiduals) {
  json doc = scaling(8);
  doc["rho1"]["mass"] = 3.0;
  const RunResult r = run("solve " + write_config("bad.json", doc).string() + " --out " + dir_.string());
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("residual_1 = (1)"), std::string::npos) << r.output;
}

TEST_F(Cli, UnknownKeyExitsTwoNamingTheKey) {
  json doc = scaling(8);
  doc["deltas"] = 1.0;
  doc.erase("delta");
  const RunResult r = run("solve " + write_config("typo.json", doc).string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("deltas"), std::string::npos) << r.output;
}

TEST_F(Cli, MalformedJsonExitsTwoWithLocation) {
  const fs::path p = dir_ / "broken.json";
  std::ofstream(p) << "{\n  \"domain\": {\n";
  const RunResult r = run("solve " + p.string());
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("line"), std::string::npos) << r.output;
}

TEST_F(Cli, TeleportPathPrintsClosedFormEnergy) {
  json doc = scaling(16);
  doc["rho1"]["mass"] = 1.0;
  doc["constraint"] = "none";
  const RunResult r = run("path " + write_config("tp.json", doc).string() + " --constructor teleport --out " +
                          (dir_ / "tp").string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("energy = 8\n"), std::string::npos) << r.output;
}

TEST_F(Cli, PathConstructorPreconditionsExitThree) {
  // Teleporting violates a nonzero mass profile.
  EXPECT_EQ(run("path " + write_config("s.json", scaling(8)).string() + " --constructor teleport --out " +
                dir_.string())
                .exit_code,
            3);
  json circle = scaling(8);
  circle["domain"]["kind"] = "circle";
  circle["rho1"]["mass"] = 1.0;
  circle["constraint"] = "none";
  EXPECT_EQ(run("path " + write_config("c.json", circle).string() + " --constructor balanced_quantile --out " +
                dir_.string())
                .exit_code,
            3);
  EXPECT_EQ(run("path " + write_config("c2.json", circle).string() + " --constructor nonsense").exit_code, 2);
}

TEST_F(Cli, ScalingPathEnergyAndCertificate) {
  const fs::path cfg = write_config("s.json", scaling(64));
  const RunResult p = run("path " + cfg.string() + " --constructor scaling --out " + (dir_ / "p").string());
  ASSERT_EQ(p.exit_code, 0) << p.output;
  const json summary = json::parse(slurp(dir_ / "p" / "summary.json"));
  EXPECT_NEAR(summary["energy"].get<double>(), 0.3466, 1e-3);

  const std::string path = (dir_ / "p" / "path.json").string();
  write_phi(dir_ / "phi.csv", 64, 0.0, 64);
  write_phi(dir_ / "phi_bad.csv", 64, 0.1, 64);
  write_phi(dir_ / "phi_shape.csv", 64, 0.0, 63);
  const RunResult ok = run("certify " + cfg.string() + " --path " + path + " --phi " + (dir_ / "phi.csv").string());
  EXPECT_EQ(ok.exit_code, 0) << ok.output;
  const RunResult bad =
      run("certify " + cfg.string() + " --path " + path + " --phi " + (dir_ / "phi_bad.csv").string() + " --out " +
          (dir_ / "cert").string());
  EXPECT_EQ(bad.exit_code, 1) << bad.output;
  const json rep = json::parse(slurp(dir_ / "cert" / "certificate.json"));
  EXPECT_GE(rep["r_source"].get<double>(), rep["r_hj"].get<double>());
  EXPECT_GE(rep["r_source"].get<double>(), rep["r_momentum"].get<double>());
  EXPECT_GE(rep["r_source"].get<double>(), rep["r_membership"].get<double>());
  EXPECT_GT(rep["r_source"].get<double>(), 0.01);
  const RunResult shape =
      run("certify " + cfg.string() + " --path " + path + " --phi " + (dir_ / "phi_shape.csv").string());
  EXPECT_EQ(shape.exit_code, 2) << shape.output;
}

TEST_F(Cli, FramesReloadByteIdentically) {
  json doc = scaling(16);
  doc["rho0"] = {{"preset", "bump"}, {"center", 0.3}, {"width", 0.07}, {"mass", 1.0}};
  doc["rho1"] = {{"preset", "bump"}, {"center", 0.6}, {"width", 0.1}, {"mass", 2.0}};
  doc["constraint"] = "none";
  ASSERT_EQ(run("path " + write_config("a.json", doc).string() + " --constructor linear_fr --quiet --out " +
                (dir_ / "a").string())
                .exit_code,
            0);
  json again = doc;
  again["rho0"] = {{"preset", "explicit"}, {"file", "a/nodes.csv"}, {"t", 0.0}};
  again["rho1"] = {{"preset", "explicit"}, {"file", "a/nodes.csv"}, {"t", 1.0}};
  ASSERT_EQ(run("path " + write_config("b.json", again).string() + " --constructor linear_fr --quiet --out " +
                (dir_ / "b").string())
                .exit_code,
            0);
  EXPECT_EQ(slurp(dir_ / "a" / "nodes.csv"), slurp(dir_ / "b" / "nodes.csv"));
  EXPECT_EQ(slurp(dir_ / "a" / "frames.csv"), slurp(dir_ / "b" / "frames.csv"));
}

TEST_F(Cli, DistancePrintsOnlyTheDistance) {
  const RunResult r = run("distance " + write_config("s.json", scaling(16)).string());
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const double d = std::stod(r.output);
  EXPECT_NEAR(d * d, 0.5 * std::log(2.0), 0.02);
  EXPECT_EQ(r.output.find('\n'), r.output.size() - 1);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("solve").exit_code, 2);
  EXPECT_EQ(run("solve " + (dir_ / "missing.json").string()).exit_code, 2);
}

}  // namespace
