#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "winflow/checkpoint.hpp"

using namespace winflow;
namespace fs = std::filesystem;

namespace {

const char* kCli = WINFLOW_CLI_PATH;

int run_cli(const std::string& args, const fs::path& stdout_file = {}) {
  std::string cmd = std::string(kCli) + " " + args;
  if (!stdout_file.empty())
    cmd += " > " + stdout_file.string() + " 2>&1";
  else
    cmd += " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

fs::path tiny_config_file() {
  const fs::path p = fs::temp_directory_path() / "winflow_cli_tiny.cfg";
  std::ofstream(p) << "env.kind = point_sparse\n"
                      "train.warmup_steps = 120\n"
                      "train.total_steps = 360\n"
                      "train.eval_interval = 60\n"
                      "train.eval_episodes = 3\n"
                      "train.batch_size = 8\n"
                      "train.pretrain_epochs = 2\n"
                      "net.flow_hidden = 8,8\n"
                      "net.retrieval_hidden = 8,8\n"
                      "flow.M = 6\n"
                      "flow.K = 3\n";
  return p;
}

}  // namespace

TEST(Cli, TrainSmokeProducesRunDirectory) {
  const fs::path out = temp_dir("winflow_cli_train");
  const int rc = run_cli("train --config " + tiny_config_file().string() +
                         " --env point_sparse --variant winflownets --seed 1 --out " +
                         out.string());
  EXPECT_EQ(rc, 0);
  EXPECT_TRUE(fs::exists(out / "config.txt"));
  EXPECT_TRUE(fs::exists(out / "metrics.csv"));
  EXPECT_TRUE(fs::exists(out / "events.log"));
  EXPECT_TRUE(fs::exists(out / "checkpoint_final.bin"));
}

TEST(Cli, TransferWithoutCheckpointIsUsageError) {
  EXPECT_EQ(run_cli("transfer --env point_sparse"), 2);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run_cli("frobnicate"), 2);
}

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run_cli("train --turbo"), 2);
}

TEST(Cli, NoSubcommandIsUsageError) {
  EXPECT_EQ(run_cli(""), 2);
}

TEST(Cli, BadConfigValueIsConfigError) {
  const fs::path p = fs::temp_directory_path() / "winflow_cli_bad.cfg";
  std::ofstream(p) << "train.seed = banana\n";
  EXPECT_EQ(run_cli("train --config " + p.string()), 2);
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
  const fs::path p = fs::temp_directory_path() / "winflow_cli_unknown.cfg";
  std::ofstream(p) << "rocket.thrust = 11\n";
  EXPECT_EQ(run_cli("train --config " + p.string()), 2);
}

TEST(Cli, HelpExitsZero) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("train --help"), 0);
}

TEST(Cli, EvalAndInspectReadBackCheckpoint) {
  const fs::path out = temp_dir("winflow_cli_eval_train");
  ASSERT_EQ(run_cli("train --config " + tiny_config_file().string() +
                    " --variant winflownets --seed 2 --out " + out.string()),
            0);

  const fs::path eval_out = fs::temp_directory_path() / "winflow_cli_eval.txt";
  const fs::path dump = fs::temp_directory_path() / "winflow_cli_dump.csv";
  fs::remove(dump);
  ASSERT_EQ(run_cli("eval --config " + tiny_config_file().string() + " --checkpoint " +
                        (out / "checkpoint_final.bin").string() + " --episodes 3 --dump " +
                        dump.string(),
                    eval_out),
            0);
  const std::string eval_text = slurp(eval_out);
  EXPECT_NE(eval_text.find("mean_reward="), std::string::npos);
  EXPECT_NE(eval_text.find("ci_width="), std::string::npos);
  ASSERT_TRUE(fs::exists(dump));
  const std::string dump_text = slurp(dump);
  EXPECT_EQ(dump_text.rfind("t,s0,s1,s2,s3,a0,a1,r\n", 0), 0u);

  const fs::path inspect_out = fs::temp_directory_path() / "winflow_cli_inspect.txt";
  ASSERT_EQ(run_cli("inspect --checkpoint " + (out / "checkpoint_final.bin").string(), inspect_out),
            0);
  const std::string inspect_text = slurp(inspect_out);
  EXPECT_NE(inspect_text.find("variant: winflownets"), std::string::npos);
  EXPECT_NE(inspect_text.find("buffer: size="), std::string::npos);
}

TEST(Cli, TransferRoundTrip) {
  const fs::path out = temp_dir("winflow_cli_xfer_train");
  ASSERT_EQ(run_cli("train --config " + tiny_config_file().string() +
                    " --variant winflownets --seed 3 --out " + out.string()),
            0);
  const fs::path xfer = temp_dir("winflow_cli_xfer_out");
  EXPECT_EQ(run_cli("transfer --config " + tiny_config_file().string() + " --checkpoint " +
                    (out / "checkpoint_final.bin").string() + " --fault ad --seed 3 --out " +
                    xfer.string()),
            0);
  EXPECT_TRUE(fs::exists(xfer / "checkpoint_final.bin"));
  EXPECT_NE(slurp(xfer / "config.txt").find("env.fault = ad"), std::string::npos);
}

TEST(Cli, AblateProducesFourVariantDirectories) {
  const fs::path out = temp_dir("winflow_cli_ablate");
  ASSERT_EQ(run_cli("ablate --config " + tiny_config_file().string() + " --seed 4 --out " +
                    out.string()),
            0);
  for (const char* name :
       {"winflownets", "v1_no_warmup", "v2_separate_buffers", "cflownets_pretrained"}) {
    EXPECT_TRUE(fs::exists(out / name / "metrics.csv")) << name;
    const std::string metrics = slurp(out / name / "metrics.csv");
    EXPECT_EQ(metrics.rfind("timestep,mean_reward,std_reward,ci_width,n\n", 0), 0u) << name;
  }
}

TEST(Cli, EnvLayoutMismatchOnEvalIsConfigError) {
  const fs::path out = temp_dir("winflow_cli_mismatch_train");
  ASSERT_EQ(run_cli("train --config " + tiny_config_file().string() +
                    " --variant winflownets --seed 5 --out " + out.string()),
            0);
  EXPECT_EQ(run_cli("eval --env reacher2 --checkpoint " +
                    (out / "checkpoint_final.bin").string()),
            2);
}
