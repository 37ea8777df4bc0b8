// Copyright 2026 The mvselect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "support.hpp"

namespace mvs {
namespace {

namespace fs = std::filesystem;

int cli(const std::string& args) {
  const std::string cmd = std::string(MVS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = testing::temp_dir("cli");
    auto cfg = testing::tiny_config();
    cfg.data.episodes = 3;
    cfg.eval.episodes = 2;
    write_config(cfg, dir_ + "/tiny.cfg");
  }
  static inline std::string dir_;
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("collect"), 2);
  EXPECT_EQ(cli("collect -o " + dir_ + "/u1 --set no.such.key=1"), 2);
  EXPECT_EQ(cli("collect -o " + dir_ + "/u2 --set train.lr=abc"), 2);
  EXPECT_EQ(cli("collect -o " + dir_ + "/u3 --set train.stage_split=1.5"), 2);
}

TEST_F(Cli, MissingInputsExitThree) {
  EXPECT_EQ(cli("pretrain -o " + dir_ + "/m1 --data " + dir_ + "/nothing"), 3);
  EXPECT_EQ(cli("eval -o " + dir_ + "/m2 --checkpoint " + dir_ + "/nothing.ckpt"), 3);
  EXPECT_EQ(cli("collect -c " + dir_ + "/nothing.cfg -o " + dir_ + "/m3"), 3);
}

TEST_F(Cli, EndToEndTinyRun) {
  const std::string c = " -c " + dir_ + "/tiny.cfg";
  ASSERT_EQ(cli("collect" + c + " -o " + dir_ + "/data"), 0);
  EXPECT_EQ(parse_config(slurp(dir_ + "/data/resolved_config.txt")), load_config(dir_ + "/tiny.cfg"));
  ASSERT_EQ(cli("pretrain" + c + " -o " + dir_ + "/pre --data " + dir_ + "/data"), 0);
  EXPECT_TRUE(fs::exists(dir_ + "/pre/pretrain_metrics.csv"));
  ASSERT_EQ(cli("train" + c + " -o " + dir_ + "/run --data " + dir_ + "/data --init-checkpoint " + dir_ +
                "/pre/pretrained.ckpt"),
            0);
  EXPECT_TRUE(fs::exists(dir_ + "/run/metrics.csv"));
  EXPECT_TRUE(fs::exists(dir_ + "/run/final.ckpt"));
  ASSERT_EQ(cli("eval -o " + dir_ + "/ev --checkpoint " + dir_ + "/run/final.ckpt --modes learned,fixed:0"), 0);
  EXPECT_TRUE(fs::exists(dir_ + "/ev/results.csv"));
  EXPECT_EQ(cli("eval -o " + dir_ + "/ev2 --checkpoint " + dir_ + "/run/final.ckpt --modes best"), 2);
  ASSERT_EQ(cli("viz -o " + dir_ + "/viz --checkpoint " + dir_ + "/run/final.ckpt --seed 3 --mode learned"), 0);
  EXPECT_TRUE(fs::exists(dir_ + "/viz/rollout_3.png"));

  // A config with a different image size does not fit the dataset or checkpoint.
  EXPECT_EQ(cli("train" + c + " --set scene.world_size=32 -o " + dir_ + "/bad --data " + dir_ + "/data"), 4);
  EXPECT_EQ(cli("train" + c + " --set selector.dim=4 -o " + dir_ + "/bad2 --data " + dir_ +
                "/data --init-checkpoint " + dir_ + "/pre/pretrained.ckpt"),
            4);
  EXPECT_EQ(cli("eval --set scene.num_views=3 -o " + dir_ + "/bad3 --checkpoint " + dir_ + "/run/final.ckpt"), 4);
}

}  // namespace
}  // namespace mvs
