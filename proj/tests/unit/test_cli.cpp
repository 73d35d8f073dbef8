#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "support.hpp"

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run_cli(const std::string& args) {
  const auto log = vmsim::testing::scratch_dir("cli_log") / "out.txt";
  const std::string cmd = std::string(VMSIM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  o.output = ss.str();
  return o;
}

std::string scenario_arg(const std::string& name) {
  return "--scenario " + vmsim::testing::scenario_path(name).string();
}

}  // namespace

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    if (std::string(VMSIM_CLI_PATH).empty()) GTEST_SKIP() << "command-line tool not built";
  }
};

TEST_F(Cli, VacuumRunKeepsEnergyColumnConstant) {
  const auto dir = vmsim::testing::scratch_dir("cli_vacuum");
  const Outcome o = run_cli("run " + scenario_arg("vacuum_plane_wave") + " --out " + dir.string() +
                            " --override t_end=0.5");
  ASSERT_EQ(o.code, 0) << o.output;
  std::ifstream csv(dir / "diagnostics.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header.rfind("t,em_energy,", 0), 0u);
  double first = -1.0;
  while (std::getline(csv, line)) {
    const double e = std::stod(line.substr(line.find(',') + 1));
    if (first < 0.0) first = e;
    EXPECT_NEAR(e, first, 1e-12 * first);
  }
}

TEST_F(Cli, OverrideEchoedInManifest) {
  const auto dir = vmsim::testing::scratch_dir("cli_override");
  const Outcome o = run_cli("run " + scenario_arg("vacuum_plane_wave") + " --out " + dir.string() +
                            " --override dt=0.004 --override t_end=0.02");
  ASSERT_EQ(o.code, 0) << o.output;
  std::ifstream in(dir / "manifest.json");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_NE(ss.str().find("\"dt\": 0.004"), std::string::npos);
  EXPECT_NE(ss.str().find("\"steps\": 5"), std::string::npos);
}

TEST_F(Cli, CflViolationExitCode) {
  const auto dir = vmsim::testing::scratch_dir("cli_cfl");
  const Outcome o = run_cli("run " + scenario_arg("vacuum_plane_wave") + " --out " + dir.string() +
                            " --override dt=0.5");
  EXPECT_EQ(o.code, 4);
  EXPECT_NE(o.output.find("dt=0.5"), std::string::npos) << o.output;
}

TEST_F(Cli, ValidationExitCode) {
  const Outcome o = run_cli("validate " + scenario_arg("slab_beam_absorbing") + " --override species.0.rest_mass=0.5");
  EXPECT_EQ(o.code, 3);
  EXPECT_NE(o.output.find("rest_mass >= 1"), std::string::npos);
}

TEST_F(Cli, ParseErrorExitCode) {
  const auto dir = vmsim::testing::scratch_dir("cli_parse");
  {
    std::ofstream bad(dir / "bad.json");
    bad << "{\"name\": ";
  }
  EXPECT_EQ(run_cli("validate --scenario " + (dir / "bad.json").string()).code, 2);
  EXPECT_EQ(run_cli("frobnicate").code, 2);
}

TEST_F(Cli, CheckDetectsTamperingAndMissingHistory) {
  const auto dir = vmsim::testing::scratch_dir("cli_check");
  ASSERT_EQ(run_cli("run " + scenario_arg("slab_reflecting") + " --out " + dir.string() + " --override t_end=0.05").code,
            0);
  const Outcome ok = run_cli("check " + dir.string());
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_NE(ok.output.find("PASS energy_estimate"), std::string::npos);
  std::filesystem::path victim;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.path().extension() == ".bin") victim = e.path();
  ASSERT_FALSE(victim.empty());
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put('\x7f');
  }
  EXPECT_EQ(run_cli("check " + dir.string()).code, 5);
  EXPECT_EQ(run_cli("check " + vmsim::testing::scratch_dir("cli_empty").string()).code, 6);
}

TEST_F(Cli, ReportWritesMarkdown) {
  const auto dir = vmsim::testing::scratch_dir("cli_report");
  ASSERT_EQ(run_cli("run " + scenario_arg("slab_reflecting") + " --out " + dir.string() + " --override t_end=0.05").code,
            0);
  run_cli("report " + dir.string());
  EXPECT_TRUE(std::filesystem::exists(dir / "report.md"));
}
