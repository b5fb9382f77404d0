#include "spinshield/attacks.hpp"
#include "spinshield/clip_io.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(SPINSHIELD_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path work_dir() {
  auto dir = fs::temp_directory_path() / "spinshield_cli_test";
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, HelpOnEverySubcommand) {
  EXPECT_EQ(run("--help").code, 0);
  for (const char* sub : {"gen-data", "train", "eval", "sweep", "adaptive", "attack", "features"}) {
    auto r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.output.find("Usage"), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --bogus").code, 1);
  EXPECT_EQ(run("eval --checkpoint x").code, 1);
}

TEST(Cli, MissingCheckpointIsDataError) {
  const auto dir = work_dir();
  const auto missing = (dir / "no_such.spck").string();
  auto r = run("eval --checkpoint " + missing + " --manifest " + (dir / "m.json").string() + " --out " +
               (dir / "r.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find(missing), std::string::npos) << r.output;
}

TEST(Cli, BadManifestIsDataError) {
  const auto dir = work_dir();
  write(dir / "broken.json", "{not json");
  write(dir / "t.json", R"({"mode":"baseline","epochs":1})");
  auto r = run("train --config " + (dir / "t.json").string() + " --manifest " + (dir / "broken.json").string() +
               " --out " + (dir / "c.spck").string());
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST(Cli, PipelineAndNumericalAbort) {
  const auto dir = work_dir();
  const auto m = (dir / "data" / "m.json").string();
  write(dir / "d.json", R"({"n_clips":200,"seed":4})");
  ASSERT_EQ(run("gen-data --config " + (dir / "d.json").string() + " --out " + m + " --format csv").code, 0);

  write(dir / "t.json", R"({"mode":"spinshield","epochs":2,"seed":1})");
  const auto ck = (dir / "s.spck").string();
  auto tr = run("train --config " + (dir / "t.json").string() + " --manifest " + m + " --out " + ck + " --log " +
                (dir / "log.csv").string() + " --split-seed 3");
  ASSERT_EQ(tr.code, 0) << tr.output;
  EXPECT_TRUE(fs::exists(dir / "log.csv"));

  const auto rep = (dir / "r.json").string(), rep2 = (dir / "r2.json").string();
  ASSERT_EQ(run("eval --checkpoint " + ck + " --manifest " + m + " --seeds 2 --out " + rep).code, 0);
  ASSERT_EQ(run("eval --checkpoint " + ck + " --manifest " + m + " --replay " + rep + " --out " + rep2).code, 0);
  auto a = nlohmann::json::parse(std::ifstream(rep)), b = nlohmann::json::parse(std::ifstream(rep2));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.at("config").at("checkpoint_metadata").at("split_seed"), 3);
  EXPECT_EQ(a.at("clip_ids").size(), 20u);

  ASSERT_EQ(run("sweep --checkpoint " + ck + " --manifest " + m + " --out " + (dir / "sw.csv").string()).code, 0);
  std::ifstream sw(dir / "sw.csv");
  std::string header, first;
  std::getline(sw, header);
  std::getline(sw, first);
  EXPECT_EQ(header, "omega_k,auc");
  EXPECT_EQ(first.substr(0, 5), "none,");

  ASSERT_EQ(run("adaptive --checkpoint " + ck + " --manifest " + m + " --steps 3 --limit 10 --out " +
                (dir / "a.json").string())
                .code,
            0);
  ASSERT_EQ(run("features --checkpoint " + ck + " --manifest " + m + " --out " + (dir / "f.csv").string()).code, 0);

  write(dir / "bad.json", R"({"mode":"baseline","epochs":3,"optimizer":{"lr":1e306}})");
  auto bad = run("train --config " + (dir / "bad.json").string() + " --manifest " + m + " --out " + (dir / "x.spck").string());
  EXPECT_EQ(bad.code, 3) << bad.output;
}

TEST(Cli, AttackSubcommand) {
  using namespace spinshield;
  const auto dir = work_dir();
  Eigen::MatrixXd x(2, 16);
  for (int t = 0; t < 16; ++t) x(0, t) = x(1, t) = 0.5 + std::cos(2 * std::numbers::pi * 5 * t / 16.0);
  io::write_clip_csv(dir / "in.csv", {x});
  write(dir / "spec.json", nlohmann::json(attacks::full_notch(5)).dump());
  auto r = run("attack --spec " + (dir / "spec.json").string() + " --in " + (dir / "in.csv").string() + " --out " +
               (dir / "out.bin").string());
  ASSERT_EQ(r.code, 0) << r.output;
  auto out = io::read_clip_binary(dir / "out.bin");
  EXPECT_LT((out.signals.array() - 0.5).abs().maxCoeff(), 1e-9);
}
