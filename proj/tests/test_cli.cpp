#include "test_support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vpnet {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun run_cli(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli_output.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" VPNET_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = testing::temp_path(name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fresh_dir("work");
    const CliRun r = run_cli("generate --out data --samples-per-class 10 --m 40 --seed 3", dir_);
    ASSERT_EQ(r.code, 0) << r.output;
  }
  fs::path dir_;
};

TEST_F(CliTest, GenerateWritesBalancedSplits) {
  EXPECT_EQ(line_count(dir_ / "data/train.csv"), 31u);
  EXPECT_EQ(line_count(dir_ / "data/test.csv"), 31u);
  EXPECT_EQ(line_count(dir_ / "data/train_meta.csv"), 31u);
  const LabeledDataset d = load_dataset((dir_ / "data/train.csv").string());
  EXPECT_EQ(d.class_histogram(), (std::vector<std::size_t>{10, 10, 10}));
  EXPECT_EQ(d.signal_length(), 40u);
}

TEST_F(CliTest, GenerateIsDeterministic) {
  ASSERT_EQ(run_cli("generate --out again --samples-per-class 10 --m 40 --seed 3", dir_).code, 0);
  EXPECT_EQ(slurp(dir_ / "data/train.csv"), slurp(dir_ / "again/train.csv"));
  EXPECT_EQ(slurp(dir_ / "data/test.csv"), slurp(dir_ / "again/test.csv"));
}

TEST_F(CliTest, InvalidConfigFailsWithoutWritingFiles) {
  std::ofstream(dir_ / "bad.cfg") << "shell_radii = 1, 1.1, 3\n";
  const CliRun r = run_cli("generate --config bad.cfg --out bad", dir_);
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_FALSE(fs::exists(dir_ / "bad/train.csv"));
  std::ofstream(dir_ / "typo.cfg") << "samples_per_clas = 3\n";
  EXPECT_EQ(run_cli("generate --config typo.cfg --out bad", dir_).code, 1);
}

TEST_F(CliTest, TrainingIsReproducible) {
  const std::string common = "train --train data/train.csv --test data/test.csv --epochs 3 --batch-size 8 --seed 5";
  ASSERT_EQ(run_cli(common + " --checkpoint a.ckpt --report a.csv", dir_).code, 0);
  ASSERT_EQ(run_cli(common + " --checkpoint b.ckpt --report b.csv", dir_).code, 0);
  EXPECT_EQ(slurp(dir_ / "a.ckpt"), slurp(dir_ / "b.ckpt"));
  EXPECT_EQ(slurp(dir_ / "a.csv"), slurp(dir_ / "b.csv"));
  EXPECT_EQ(line_count(dir_ / "a.csv"), 4u);
}

TEST_F(CliTest, TrainRejectsMismatchedLengths) {
  ASSERT_EQ(run_cli("generate --out other --samples-per-class 5 --m 50", dir_).code, 0);
  const CliRun r = run_cli("train --train data/train.csv --test other/test.csv --epochs 1", dir_);
  EXPECT_EQ(r.code, 1) << r.output;
}

TEST_F(CliTest, MissingInputIsDataError) {
  EXPECT_EQ(run_cli("train --train nope.csv --test data/test.csv --epochs 1", dir_).code, 2);
}

TEST_F(CliTest, EvaluateAndInspectCheckpoint) {
  ASSERT_EQ(run_cli("train --train data/train.csv --test data/test.csv --epochs 2 --checkpoint m.ckpt", dir_).code, 0);
  const CliRun ev = run_cli("evaluate --checkpoint m.ckpt --data data/test.csv --out metrics.txt", dir_);
  ASSERT_EQ(ev.code, 0) << ev.output;
  EXPECT_EQ(slurp(dir_ / "metrics.txt").rfind("accuracy ", 0), 0u);

  const CliRun in = run_cli("inspect --checkpoint m.ckpt --data data/test.csv --samples 0,4 --recon recon.csv", dir_);
  ASSERT_EQ(in.code, 0) << in.output;
  std::istringstream lines(in.output);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
    const auto fields = detail::split(line, ',');
    ASSERT_GE(fields.size(), 3u);
    const double r2 = *detail::parse_double(fields[2]);
    EXPECT_GE(r2, 0.0);
    EXPECT_LE(r2, 1.0);
    ++rows;
  }
  EXPECT_EQ(rows, 2u);
  std::ifstream recon(dir_ / "recon.csv");
  std::getline(recon, line);
  EXPECT_EQ(detail::split(line, ',').size(), 41u);
  EXPECT_EQ(line_count(dir_ / "recon.csv"), 5u);
}

TEST(CliStandalone, CondsweepSinglePoint) {
  const fs::path dir = fresh_dir("cond");
  const CliRun r = run_cli("condsweep --m 1000 --n 3 --tau 500:500:1 --lambda 0.05:0.05:1", dir);
  ASSERT_EQ(r.code, 0) << r.output;
  std::istringstream in(r.output);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "tau,lambda,cond");
  const auto fields = detail::split(row, ',');
  ASSERT_EQ(fields.size(), 3u);
  EXPECT_NEAR(*detail::parse_double(fields[2]), 1.0, 1e-3);
}

TEST(CliStandalone, MalformedRangeIsUsageError) {
  const fs::path dir = fresh_dir("range");
  EXPECT_EQ(run_cli("condsweep --tau 1:2", dir).code, 1);
  EXPECT_EQ(run_cli("condsweep --lambda a:b:3", dir).code, 1);
  EXPECT_EQ(run_cli("nosuchcommand", dir).code, 1);
}

TEST(CliStandalone, HelpListsDefaults) {
  const fs::path dir = fresh_dir("help");
  const CliRun r = run_cli("train --help", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("--learning-rate FLOAT [0.001]"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("--epochs UINT [100]"), std::string::npos);
}

}  // namespace
}  // namespace vpnet
