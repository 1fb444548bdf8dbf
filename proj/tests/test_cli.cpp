#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "adaptvo/io.hpp"
#include "adaptvo/sdd.hpp"

using namespace adaptvo;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string output;  // stdout and stderr
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(ADAPTVO_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// "key = value" lines
std::map<std::string, double> parse_report(const std::string& text) {
  std::map<std::string, double> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    try {
      out[line.substr(0, eq)] = std::stod(line.substr(eq + 3));
    } catch (const std::exception&) {
    }
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("adaptvo_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name, std::ios::binary) << text;
    return dir_ / name;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UnknownFlagFails) {
  const CliRun r = run("eval depth --bogus");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(run("").code, 0);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, EvalDepthIdenticalFiles) {
  DepthMap d(20, 20, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 + 0.25 * static_cast<double>(i % 7);
  io::write_file(dir_ / "a.dpf", [&](std::ostream& o) { io::write_depth(o, d); });
  const CliRun r = run("eval depth --pred " + path("a.dpf") + " --gt " + path("a.dpf"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto m = parse_report(r.output);
  EXPECT_EQ(m.at("abs_rel"), 0.0);
  EXPECT_EQ(m.at("rmse"), 0.0);
  EXPECT_EQ(m.at("delta1"), 1.0);

  io::write_file(dir_ / "b.dpf", [&](std::ostream& o) { io::write_depth(o, scale_depth(d, 2.0)); });
  const auto u = parse_report(run("eval depth --no-align --pred " + path("b.dpf") + " --gt " + path("a.dpf")).output);
  EXPECT_EQ(u.at("abs_rel"), 1.0);
  EXPECT_EQ(u.at("delta1"), 0.0);
}

TEST_F(Cli, MalformedFileNamesByteOffset) {
  DepthMap d(4, 4, 2.0);
  io::write_file(dir_ / "good.dpf", [&](std::ostream& o) { io::write_depth(o, d); });
  const std::string bytes = slurp(dir_ / "good.dpf");
  write("cut.dpf", bytes.substr(0, 30));
  const CliRun r = run("eval depth --pred " + path("cut.dpf") + " --gt " + path("good.dpf"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("byte offset 28"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("cut.dpf"), std::string::npos) << r.output;
}

TEST_F(Cli, EvalTrajectory) {
  write("gt.tum", "0 0 0 0 0 0 0 1\n1 1 0 0 0 0 0 1\n2 2 0.5 0 0 0 0 1\n3 3 1 0 0 0 0 1\n");
  write("est.tum", "0 0 0 0 0 0 0 1\n1 5 0 0 0 0 0 1\n2 10 2.5 0 0 0 0 1\n3 15 5 0 0 0 0 1\n");
  const CliRun r = run("eval traj --pred " + path("est.tum") + " --gt " + path("gt.tum"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_LT(parse_report(r.output).at("ate_rmse"), 1e-9);
}

TEST_F(Cli, DensifyMatchesLibrary) {
  SegMap seg;
  seg.labels = LabelRaster(40, 20, 1);
  for (int v = 0; v < 20; ++v)
    for (int u = 20; u < 40; ++u) seg.labels(u, v) = 2;
  SparseDepth sparse;
  sparse.samples = {{1, 1, 2.0}, {5, 9, 3.0}, {30, 4, 7.0}, {25, 15, 6.5}, {3, 17, 2.5}};
  io::write_file(dir_ / "s.txt", [&](std::ostream& o) { io::write_sparse(o, sparse); });
  io::write_file(dir_ / "s.seg", [&](std::ostream& o) { io::write_labels(o, seg.labels); });
  const CliRun r = run("densify --sparse " + path("s.txt") + " --seg " + path("s.seg") + " --out " + path("d.dpf"));
  ASSERT_EQ(r.code, 0) << r.output;
  DepthMap expect = densify(sparse, seg, GridSpec{});
  for (auto& v : expect.values()) v = static_cast<double>(static_cast<float>(v));
  EXPECT_EQ(io::load_depth(dir_ / "d.dpf"), expect);
}

TEST_F(Cli, GradcheckAndOracles) {
  const CliRun g = run("gradcheck --seeds 2");
  EXPECT_EQ(g.code, 0) << g.output;
  EXPECT_LE(parse_report(g.output).at("max_relative_error"), 1e-5);
  EXPECT_EQ(run("oracle densify --cases 5").code, 0);
  EXPECT_EQ(run("oracle triangulate --cases 10 --seed 3").code, 0);
}

TEST_F(Cli, AdaptBeatsNoLearningAndIsDeterministic) {
  write("source.json", R"({"scene": "room", "seed": 100, "frames": 40, "texture_amplitude": 0.08})");
  write("target.json",
        R"({"scene": "room", "seed": 7, "frames": 9, "shift": "default", "texture_amplitude": 0.08})");
  write("config.json", R"({"lr": {"base": 0.005}, "loss": {"lambda_d": 1.0}})");
  ASSERT_EQ(run("synth --spec " + path("source.json") + " --out " + path("source")).code, 0);
  ASSERT_EQ(run("synth --spec " + path("target.json") + " --out " + path("target")).code, 0);
  const CliRun p = run("pretrain --scenes " + path("source") + " --out " + path("net.bin") + " --stride 4");
  ASSERT_EQ(p.code, 0) << p.output;

  const std::string common = "adapt --frames " + path("target") + " --net " + path("net.bin") + " --config " +
                             path("config.json");
  const CliRun a = run(common + " --out " + path("run_a"));
  ASSERT_EQ(a.code, 0) << a.output;
  const CliRun b = run(common + " --out " + path("run_b"));
  const CliRun n = run(common + " --no-learning --out " + path("run_n"));
  ASSERT_EQ(n.code, 0) << n.output;

  const auto ra = parse_report(a.output), rn = parse_report(n.output);
  EXPECT_EQ(ra.at("steps"), 8.0);
  EXPECT_EQ(rn.at("steps"), 0.0);
  EXPECT_EQ(rn.at("abs_rel_final"), rn.at("abs_rel_initial"));
  EXPECT_LT(ra.at("abs_rel_final"), rn.at("abs_rel_final"));

  for (const char* f : {"losses.csv", "trajectory.tum", "net.bin", "events.txt"})
    EXPECT_EQ(slurp(dir_ / "run_a" / f), slurp(dir_ / "run_b" / f)) << f;
  EXPECT_EQ(slurp(dir_ / "run_n" / "net.bin"), slurp(dir_ / "net.bin"));
  const std::string csv = slurp(dir_ / "run_a" / "losses.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,l_p,l_s,l_g,l_d,l_total,n_p,n_g,n_d");
}
