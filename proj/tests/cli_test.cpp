#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "kinmo/kinematics.hpp"
#include "kinmo/motion_io.hpp"

namespace fs = std::filesystem;
using namespace kinmo;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "kinmo_cli_test";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run("make-toy-data --n 6 --seed 2 --out " + path("toy")).code, 0);
    trained_ = run("train-align --corpus " + path("toy") + " --out " + path("align.ckpt") + " --epochs 2 --seed 2");
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string path(const std::string& name) { return (dir_ / name).string(); }

  static CliRun run(const std::string& args) {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const int status = std::system((std::string(KINMO_CLI) + " " + args + " >" + out + " 2>" + err).c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  static fs::path dir_;
  static CliRun trained_;
};
fs::path Cli::dir_;
CliRun Cli::trained_;

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("make-toy-data").code, 2);  // --out missing
}

TEST_F(Cli, UnknownConfigKeyExitsTwo) {
  const CliRun r = run("make-toy-data --out " + path("x") + " --set align.no_such_key=1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
}

TEST_F(Cli, ToyDataIsByteIdentical) {
  ASSERT_EQ(run("make-toy-data --n 6 --seed 2 --out " + path("toy2")).code, 0);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "toy")) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "toy2" / fs::relative(e.path(), dir_ / "toy"))) << e.path();
  }
  EXPECT_GT(files, 6);
}

TEST_F(Cli, TrainAlignWritesCheckpointAndEpochLog) {
  ASSERT_EQ(trained_.code, 0) << trained_.err;
  EXPECT_TRUE(fs::exists(path("align.ckpt")));
  EXPECT_NE(trained_.out.find("epoch=1 loss="), std::string::npos) << trained_.out;
}

TEST_F(Cli, RetrievePrintsRankedNames) {
  ASSERT_EQ(trained_.code, 0);
  const CliRun r = run("retrieve --corpus " + path("toy") + " --align " + path("align.ckpt") + " --query 'a person waves' --top 3");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    int rank = 0;
    std::string name;
    double score = 0.0;
    std::istringstream(line) >> rank >> name >> score;
    EXPECT_EQ(rank, ++lines);
    EXPECT_LE(std::abs(score), 1.0 + 1e-12);
  }
  EXPECT_EQ(lines, 3);
}

TEST_F(Cli, ConfigMismatchWithCheckpointIsRejected) {
  ASSERT_EQ(trained_.code, 0);
  const CliRun r = run("retrieve --corpus " + path("toy") + " --align " + path("align.ckpt") +
                    " --query walk --set align.latent_dim=16");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
}

TEST_F(Cli, ExportAnimMatchesForwardKinematics) {
  fs::path motion;
  for (const auto& e : fs::directory_iterator(dir_ / "toy" / "motions")) motion = e.path();
  const CliRun r = run("export-anim --motion " + motion.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const Eigen::MatrixXd expected = local_to_global(load_motion(motion), JointSkeleton::smpl22());
  std::istringstream in(r.out);
  std::string hash, frames_word, joints_word;
  int frames = 0, joints = 0;
  in >> hash >> frames_word >> frames >> joints_word >> joints;
  EXPECT_EQ(hash, "#");
  ASSERT_EQ(frames, expected.rows());
  ASSERT_EQ(joints, 22);
  for (int t = 0; t < frames; ++t) {
    int index = -1;
    in >> index;
    ASSERT_EQ(index, t);
    for (int c = 0; c < 66; ++c) {
      double v = 0.0;
      in >> v;
      EXPECT_NEAR(v, expected(t, c), 1e-6);
    }
  }
}

TEST_F(Cli, SpecFlagSpellingsAccepted) {
  const CliRun gen = run("generate --help");
  EXPECT_NE(gen.out.find("--length"), std::string::npos);
  EXPECT_NE(gen.out.find("gji"), std::string::npos);
  EXPECT_NE(run("edit --help").out.find("--in"), std::string::npos);
}

TEST_F(Cli, MissingInputFileExitsOne) {
  const CliRun r = run("export-anim --motion " + path("missing.kmot"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
}

}  // namespace
