#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hallreach/controller.hpp"
#include "hallreach/fixtures.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = HALLREACH_CLI_PATH;
const std::string kData = HALLREACH_DATA_DIR;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hallreach_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Runs the CLI with `args`; stdout goes to `out`.
  int run(const std::string& args, std::string* out = nullptr) const {
    const std::string log = path("stdout.txt");
    const std::string cmd = "cd '" + dir_.string() + "' && '" + kCli + "' " + args + " > '" + log + "' 2>&1";
    const int status = std::system(cmd.c_str());
    if (out) *out = slurp(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

std::string turn() { return " --scenario '" + kData + "/turn.json'"; }
std::string straight() { return " --scenario '" + kData + "/straight_hallway.json'"; }
std::string weights(const std::string& name) { return " --weights '" + kData + "/" + name + "_controller.json'"; }

}  // namespace

TEST_F(Cli, VerifySafeExitsZeroAndReportIsStable) {
  std::string out;
  ASSERT_EQ(run("verify" + straight() + weights("proportional") + " --subset-size 0.02 --report a.json --timing t.json",
                &out),
            0)
      << out;
  EXPECT_NE(out.find("10/10 safe"), std::string::npos) << out;
  ASSERT_EQ(run("verify" + straight() + weights("proportional") + " --subset-size 0.02 --report b.json --jobs 3"), 0);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
  EXPECT_NE(slurp(path("t.json")).find("mean_nn_time"), std::string::npos);
}

TEST_F(Cli, VerifySubsetCounts) {
  ASSERT_EQ(run("verify" + turn() + weights("proportional") + " --subset-size 0.005 --horizon 0.5"), 0);
  EXPECT_NE(slurp(path("report.json")).find("\"num_subsets\": 40"), std::string::npos);
  ASSERT_EQ(run("verify" + turn() + weights("proportional") + " --subset-size 0.002 --horizon 0.5"), 0);
  EXPECT_NE(slurp(path("report.json")).find("\"num_subsets\": 100"), std::string::npos);
}

TEST_F(Cli, VerifyUnknownExitsOne) {
  EXPECT_EQ(run("verify" + turn() + weights("sensitive") + " --subset-size 0.05"), 1);
  EXPECT_NE(slurp(path("report.json")).find("Unknown"), std::string::npos);
}

TEST_F(Cli, ConfigurationErrorsExitTwo) {
  hallreach::save_weights(hallreach::fixtures::straight(41), path("w41.json"));
  std::string out;
  EXPECT_EQ(run("verify" + turn() + " --weights w41.json", &out), 2);
  EXPECT_NE(out.find("41"), std::string::npos) << out;
  EXPECT_EQ(run("verify" + turn()), 2);
  EXPECT_EQ(run("verify" + turn() + weights("proportional") + " --subset-size 0"), 2);
  EXPECT_EQ(run("monte-carlo" + turn() + weights("proportional") + " --runs 0"), 2);
  EXPECT_EQ(run("simulate" + turn() + weights("proportional") + " --init-lateral 3"), 2);
  EXPECT_EQ(run("serve-env" + turn() + " --bind nonsense"), 2);
  std::ofstream(path("bad.json")) << R"({"track": {"width": 2}})";
  EXPECT_EQ(run("simulate --scenario bad.json" + weights("proportional")), 2);
}

TEST_F(Cli, SimulateWritesIdenticalTraces) {
  std::string out;
  ASSERT_EQ(run("simulate" + turn() + weights("straight") + " --seed 4 --trace a.csv", &out), 0);
  EXPECT_NE(out.find("outcome"), std::string::npos);
  ASSERT_EQ(run("simulate" + turn() + weights("straight") + " --seed 4 --trace b.csv"), 0);
  const std::string a = slurp(path("a.csv"));
  EXPECT_EQ(a, slurp(path("b.csv")));
  EXPECT_EQ(a.rfind("k,t,x,y,v,theta,delta_rad,reward,min_clearance,fault_count\n", 0), 0u);

  ASSERT_EQ(run("simulate" + straight() + weights("straight") + " --init-lateral 0", &out), 0);
  EXPECT_NE(out.find("outcome Completed"), std::string::npos) << out;
}

TEST_F(Cli, SimulateFaultCountColumn) {
  ASSERT_EQ(run("simulate" + turn() + weights("proportional") + " --faults 5 --seed 3"), 0);
  std::istringstream csv(slurp(path("trace.csv")));
  std::string line;
  std::getline(csv, line);
  int faulted = 0;
  while (std::getline(csv, line)) {
    const std::string last = line.substr(line.rfind(',') + 1);
    EXPECT_TRUE(last == "0" || last == "5") << line;
    faulted += last == "5";
  }
  EXPECT_GT(faulted, 0);
}

TEST_F(Cli, MonteCarloSummaryAndDeterminism) {
  std::string a;
  std::string b;
  ASSERT_EQ(run("monte-carlo" + turn() + weights("proportional") + " --runs 10 --out a.json", &a), 0);
  EXPECT_NE(a.find("10/10 safe"), std::string::npos) << a;
  ASSERT_EQ(run("monte-carlo" + turn() + weights("proportional") + " --runs 10 --jobs 2 --out b.json", &b), 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
}

TEST_F(Cli, ExportedFixtureMatchesShippedFile) {
  ASSERT_EQ(run("export-fixture --name sensitive --out s.json"), 0);
  EXPECT_EQ(slurp(path("s.json")), slurp(kData + "/sensitive_controller.json"));
  EXPECT_EQ(run("export-fixture --name nothing --out x.json"), 2);
}
