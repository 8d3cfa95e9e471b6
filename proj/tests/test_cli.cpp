// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pmclust/cli.hpp"
#include "test_support.hpp"

using namespace pmclust;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pmclust_cli_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
    fs::create_directories(dir_);
    RandomSource rng(3);
    Matrix<double> lam(2, 4);
    for (std::size_t j = 0; j < 4; ++j) {
      lam(0, j) = j % 2 == 0 ? 15.0 : 1.0;
      lam(1, j) = j % 2 == 0 ? 1.0 : 15.0;
    }
    const std::vector<double> delta{0.5, 0.5};
    const auto sample = pm_generate(25, RateMatrix(lam), delta, rng);
    std::ofstream out(path("data.csv"));
    io::write_csv(out, sample.counts, "player");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return cli::cli_dispatch(args, out_, err_);
  }

  int fit(const std::string& model, const std::string& out) {
    return run({"fit", "--model", model, "--data", path("data.csv"), "--k", "2", "--iters", "300",
                "--burnin", "100", "--thin", "10", "--seed", "7", "--out", path(out)});
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, FitWritesChain) {
  EXPECT_EQ(fit("pm", "chain.jsonl"), cli::kExitOk) << err_.str();
  const Chain chain = io::load_chain(path("chain.jsonl"));
  EXPECT_EQ(chain.draws.size(), 20u);
  EXPECT_EQ(chain.seed, 7u);
  EXPECT_EQ(chain.spec.hyper, Hyperparams{});
}

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({"fit", "--model", "pm", "--data", path("data.csv")}), cli::kExitUsage);
  EXPECT_NE(err_.str().find("--k"), std::string::npos);
  EXPECT_EQ(run({"fit", "--model", "pm", "--data", path("data.csv"), "--k", "2", "--out",
                 path("c.jsonl"), "--bogus"}),
            cli::kExitUsage);
  EXPECT_EQ(run({"fit", "--model", "lda", "--data", path("data.csv"), "--k", "2", "--out",
                 path("c.jsonl")}),
            cli::kExitUsage);
  EXPECT_EQ(run({"fit", "--model", "pm", "--data", path("missing.csv"), "--k", "2", "--out",
                 path("c.jsonl")}),
            cli::kExitUsage);
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"--help"}), cli::kExitOk);
}

TEST_F(CliTest, InvalidDataExitsThree) {
  std::ofstream(path("bad.csv")) << "id,a,b\nu1,1,2\nu2,3.5,1\n";
  EXPECT_EQ(run({"fit", "--model", "pm", "--data", path("bad.csv"), "--k", "2", "--out",
                 path("c.jsonl")}),
            cli::kExitData);
  EXPECT_NE(err_.str().find("3.5"), std::string::npos);
  EXPECT_EQ(run({"fit", "--model", "pm", "--data", path("data.csv"), "--k", "2", "--iters", "10",
                 "--burnin", "20", "--out", path("c.jsonl")}),
            cli::kExitData);
}

TEST_F(CliTest, ReportAndKindMismatch) {
  ASSERT_EQ(fit("mix", "mix.jsonl"), cli::kExitOk);
  EXPECT_EQ(run({"report", "--chain", path("mix.jsonl"), "--data", path("data.csv"), "--model",
                 "pm", "--out", path("rep")}),
            cli::kExitData);
  EXPECT_NE(err_.str().find("mix"), std::string::npos);
  ASSERT_EQ(fit("pm", "pm.jsonl"), cli::kExitOk);
  EXPECT_EQ(run({"report", "--chain", path("pm.jsonl"), "--data", path("data.csv"), "--mc-draws",
                 "10", "--out", path("rep")}),
            cli::kExitOk)
      << err_.str();
  for (const char* f : {"report.json", "profile_means.csv", "memberships.csv", "simplex_coordinates.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "rep" / f)) << f;
  }
}

TEST_F(CliTest, WaicAndRelabel) {
  ASSERT_EQ(fit("mm", "mm.jsonl"), cli::kExitOk);
  EXPECT_EQ(run({"waic", "--chain", path("mm.jsonl"), "--data", path("data.csv"), "--mode",
                 "conditional"}),
            cli::kExitOk);
  EXPECT_NE(out_.str().find("waic="), std::string::npos);
  EXPECT_EQ(run({"waic", "--chain", path("mm.jsonl"), "--data", path("data.csv"), "--mc-draws",
                 "0"}),
            cli::kExitUsage);
  EXPECT_EQ(run({"relabel", "--chain", path("mm.jsonl"), "--out", path("mm_r.jsonl")}), cli::kExitOk);
  EXPECT_EQ(io::load_chain(path("mm_r.jsonl")).draws.size(), 20u);
}

TEST_F(CliTest, WaicOnMismatchedDataExitsThree) {
  ASSERT_EQ(fit("pm", "pm.jsonl"), cli::kExitOk);
  std::ofstream(path("small.csv")) << "id,a\nu1,1\n";
  EXPECT_EQ(run({"waic", "--chain", path("pm.jsonl"), "--data", path("small.csv")}), cli::kExitData);
}

TEST_F(CliTest, ScanWritesTable) {
  EXPECT_EQ(run({"scan", "--model", "mix", "--data", path("data.csv"), "--kmin", "1", "--kmax",
                 "3", "--iters", "300", "--burnin", "100", "--thin", "5", "--workers", "2",
                 "--out", path("scan")}),
            cli::kExitOk)
      << err_.str();
  std::ifstream in(dir_ / "scan" / "scan.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "model,K,waic,lppd,p_waic,selected_flag");
  int rows = 0, selected = 0;
  for (std::string line; std::getline(in, line);) {
    ++rows;
    selected += line.back() == '1' ? 1 : 0;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(selected, 1);
}

TEST_F(CliTest, SimulateWritesTallies) {
  EXPECT_EQ(run({"simulate", "--replicates", "1", "--n", "20", "--j", "4", "--true-k", "2",
                 "--delta", "0.5,0.5", "--kmin", "1", "--kmax", "2", "--iters", "200", "--burnin",
                 "100", "--thin", "10", "--mc-draws", "5", "--seed", "3", "--out", path("sim")}),
            cli::kExitOk)
      << err_.str();
  std::ifstream in(dir_ / "sim" / "selection.csv");
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_EQ(text.str().substr(0, text.str().find('\n')), "K,waic_c_count,waic_m_count");
  EXPECT_NE(text.str().find(",-\n"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "sim" / "replicates.csv"));
  EXPECT_EQ(run({"simulate", "--true-k", "3", "--delta", "0.5,0.5", "--out", path("sim2")}),
            cli::kExitData);
}
