#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("qent_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static CliRun run(const std::string& args) {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" + std::string(QENT_CLI) + "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, GenerateIsReproducibleAndWritesProvenance) {
  ASSERT_EQ(run("gen-dataset --preset qutrit-warmup --seed 7 --scale 0.005 --out a").code, 0);
  ASSERT_EQ(run("--threads 2 gen-dataset --preset qutrit-warmup --seed 7 --scale 0.005 --out b").code, 0);
  EXPECT_EQ(slurp(dir_ / "a/dataset.csv"), slurp(dir_ / "b/dataset.csv"));
  const auto prov = nlohmann::json::parse(slurp(dir_ / "a/dataset.provenance.json"));
  EXPECT_EQ(prov["spec"]["seed"], 7);
  EXPECT_EQ(prov["spec"]["preset"], "qutrit-warmup");
  EXPECT_EQ(prov["samples"], 215);
  EXPECT_FALSE(prov["version"].get<std::string>().empty());
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "a/manifest.json"));
  EXPECT_EQ(manifest["command"], "gen-dataset");
}

TEST_F(Cli, TrainEvaluateAnalyze) {
  ASSERT_EQ(run("gen-dataset --preset qutrit-warmup --seed 3 --scale 0.005 --out g").code, 0);
  const auto t = run("train --arch mlp-16-8 --data g/dataset.csv --seed 1 --epochs 3 --batch 0 --out t");
  ASSERT_EQ(t.code, 0) << t.err;
  const auto t2 = run("train --arch mlp-16-8 --data g/dataset.csv --seed 1 --epochs 3 --batch 0 --out t2");
  ASSERT_EQ(t2.code, 0);
  EXPECT_EQ(slurp(dir_ / "t/model.txt"), slurp(dir_ / "t2/model.txt"));
  const auto hist = slurp(dir_ / "t/history.csv");
  EXPECT_EQ(std::count(hist.begin(), hist.end(), '\n'), 4);

  const auto e = run("evaluate --model t/model.txt --preset cglmp-eps-grid --out e");
  ASSERT_EQ(e.code, 0) << e.err;
  const auto pred = slurp(dir_ / "e/predictions.csv");
  EXPECT_EQ(pred.rfind("eps,prediction,exact\n", 0), 0u);
  EXPECT_EQ(std::count(pred.begin(), pred.end(), '\n'), 202);
  const auto report = nlohmann::json::parse(slurp(dir_ / "e/report.json"));
  EXPECT_EQ(report["n"], 201);
  EXPECT_TRUE(report.contains("squared_error_summary"));

  EXPECT_EQ(run("evaluate --model t/model.txt --data g/dataset.csv --out e2").code, 0);

  const auto n = run("analyze-nonlocality --model t/model.txt --out n");
  ASSERT_EQ(n.code, 0) << n.err;
  EXPECT_NE(n.out.find("pcc(squared_error, violation)"), std::string::npos);
  const auto pcc = nlohmann::json::parse(slurp(dir_ / "n/pcc.json"));
  const auto rec = slurp(dir_ / "n/records.csv");
  EXPECT_EQ(std::size_t(std::count(rec.begin(), rec.end(), '\n')), pcc["records"].get<std::size_t>() + 1);

  EXPECT_EQ(run("analyze-nonlocality --model t/model.txt --p 0.9 --gamma 0.65 --out n1").code, 3);
  EXPECT_EQ(run("evaluate --model t/model.txt --preset gme-w-wbar").code, 2);
}

TEST_F(Cli, ErrorsMapToExitCodes) {
  const auto missing = run("train --arch mlp-4 --data nowhere.csv --seed 1");
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("nowhere.csv"), std::string::npos);
  EXPECT_EQ(run("gen-dataset --preset nope --seed 1").code, 2);
  EXPECT_EQ(run("gen-dataset --preset qutrit-warmup").code, 2);
  EXPECT_EQ(run("gen-dataset --preset qutrit-warmup --seed 1 --rank zero").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  ASSERT_EQ(run("gen-dataset --preset qutrit-warmup --seed 3 --scale 0.005 --out f").code, 0);
  EXPECT_EQ(run("train --arch cnn-k2p2 --data f/dataset.csv --seed 1").code, 2);
  EXPECT_EQ(run("train --arch mlp-4 --data f/dataset.csv --seed 1 --epochs 2 --optimizer rmsprop").code, 2);
  EXPECT_EQ(run("evaluate --model none.txt --preset cglmp-eps-grid").code, 3);
}

TEST_F(Cli, ConfigFile) {
  std::ofstream(dir_ / "gen.ini") << "[gen-dataset]\npreset=qutrit-warmup\nseed=5\nscale=0.005\nout=c\n";
  const auto r = run("--config gen.ini gen-dataset");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "c/dataset.csv"));
}
