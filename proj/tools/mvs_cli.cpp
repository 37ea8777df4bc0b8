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


// mvs: collect demonstrations, pretrain, train, evaluate and visualise.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration error,
// 3 missing input file, 4 dimension mismatch.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mvs/mvs.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissing = 3;
constexpr int kExitShape = 4;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

mvs::RunConfig resolve(const Common& c, mvs::RunConfig base) {
  if (!c.config_path.empty()) base = mvs::load_config(c.config_path);
  for (const auto& o : c.overrides) mvs::apply_override(base, o);
  mvs::validate(base);
  return base;
}

void add_common(CLI::App* sub, Common& c, bool with_config = true) {
  if (with_config) sub->add_option("-c,--config", c.config_path, "Config file (key = value lines)");
  sub->add_option("--set", c.overrides, "Override one config key, e.g. --set train.lr=3e-4")->take_all();
  sub->add_option("-o,--out", c.out, "Output directory")->required();
}

void snapshot(const mvs::RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  mvs::write_config(cfg, (fs::path(dir) / "resolved_config.txt").string());
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw mvs::MissingFileError(std::string(what) + " '" + path + "' does not exist");
}

void check_dataset(const mvs::Dataset& ds, const mvs::RunConfig& cfg) {
  if (ds.num_views != cfg.scene.num_views || ds.height != cfg.scene.world_size) {
    throw mvs::ShapeError("dataset has " + std::to_string(ds.num_views) + " views of " + std::to_string(ds.height) +
                          " px, config expects " + std::to_string(cfg.scene.num_views) + " views of " +
                          std::to_string(cfg.scene.world_size) + " px");
  }
}

// Architecture and dimensions the checkpoint fixes.
void check_architecture(const mvs::RunConfig& a, const mvs::RunConfig& b) {
  if (!(a.mae == b.mae && a.diffusion == b.diffusion && a.selector == b.selector &&
        a.scene.num_views == b.scene.num_views && a.scene.world_size == b.scene.world_size &&
        a.train.chunk_length == b.train.chunk_length)) {
    throw mvs::ShapeError("checkpoint architecture differs from the configuration");
  }
}

int cmd_collect(const Common& c, int episodes) {
  auto cfg = resolve(c, mvs::desk_preset());
  if (episodes > 0) cfg.data.episodes = episodes;
  const auto ds = mvs::collect(cfg.scene, cfg.data.episodes, cfg.data.seed);
  mvs::save_dataset(ds, c.out);
  snapshot(cfg, c.out);
  std::cout << "collected " << ds.episodes.size() << " episodes into " << c.out << "\n";
  return 0;
}

int cmd_pretrain(const Common& c, const std::string& data) {
  const auto cfg = resolve(c, mvs::desk_preset());
  require_dir(data, "dataset");
  const auto ds = mvs::load_dataset(data);
  check_dataset(ds, cfg);
  snapshot(cfg, c.out);
  auto m = mvs::PolicyModel::create(cfg, mvs::init_seed(cfg.train), ds.state_dim, ds.action_dim);
  m.stats = ds.stats;
  std::ofstream csv(fs::path(c.out) / "pretrain_metrics.csv");
  if (!csv) throw mvs::Error("cannot write metrics in '" + c.out + "'");
  const auto log = mvs::pretrain(m, ds, &csv);
  const auto path = (fs::path(c.out) / "pretrained.ckpt").string();
  mvs::save_checkpoint(m, path);
  std::cout << "pretrained " << log.size() << " steps, final l_mae " << (log.empty() ? 0.0 : log.back().mae)
            << ", checkpoint " << path << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& data, const std::string& init) {
  const auto cfg = resolve(c, mvs::desk_preset());
  require_dir(data, "dataset");
  const auto ds = mvs::load_dataset(data);
  check_dataset(ds, cfg);
  mvs::PolicyModel m;
  if (!init.empty()) {
    m = mvs::load_checkpoint(init);
    check_architecture(m.config, cfg);
    m.config = cfg;
  } else {
    m = mvs::PolicyModel::create(cfg, mvs::init_seed(cfg.train), ds.state_dim, ds.action_dim);
  }
  m.stats = ds.stats;
  snapshot(cfg, c.out);
  std::ofstream csv(fs::path(c.out) / "metrics.csv");
  if (!csv) throw mvs::Error("cannot write metrics in '" + c.out + "'");
  const auto log = mvs::train(m, ds, &csv, (fs::path(c.out) / "checkpoints").string());
  const auto path = (fs::path(c.out) / "final.ckpt").string();
  mvs::save_checkpoint(m, path);
  std::cout << "trained " << log.size() << " steps, checkpoint " << path << "\n";
  return 0;
}

mvs::PolicyModel load_for_eval(const Common& c, const std::string& checkpoint, mvs::RunConfig& cfg) {
  auto m = mvs::load_checkpoint(checkpoint);
  cfg = resolve(c, m.config);
  return m;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& modes, int episodes,
             const std::string& selector_actions) {
  mvs::RunConfig cfg;
  auto m = load_for_eval(c, checkpoint, cfg);
  if (!modes.empty()) cfg.eval.modes = modes;
  if (episodes > 0) cfg.eval.episodes = episodes;
  if (!selector_actions.empty()) mvs::set_config_value(cfg, "eval.selector_actions", selector_actions);
  const auto parsed = mvs::parse_modes(cfg.eval.modes, cfg.scene.num_views);
  snapshot(cfg, c.out);
  mvs::RolloutOptions opt;
  opt.selector_actions = cfg.eval.selector_actions;
  const auto r = mvs::evaluate(m, cfg.scene, parsed, cfg.eval.episodes, cfg.eval.seed, opt);
  mvs::write_results_csv(r, (fs::path(c.out) / "results.csv").string());
  std::cout << mvs::format_table(r);
  const auto [hits, eligible] = mvs::informative_view_hits(r.traces);
  if (eligible > 0) {
    std::cout << "learned: informative view chosen in " << hits << "/" << eligible << " chunks\n";
  }
  return 0;
}

int cmd_viz(const Common& c, const std::string& checkpoint, std::uint64_t seed, const std::string& mode) {
  mvs::RunConfig cfg;
  auto m = load_for_eval(c, checkpoint, cfg);
  const auto parsed = mvs::parse_mode(mode, cfg.scene.num_views);
  snapshot(cfg, c.out);
  mvs::RolloutOptions opt;
  opt.keep_frames = true;
  opt.selector_actions = cfg.eval.selector_actions;
  const auto trace = mvs::run_episode(m, cfg.scene, parsed, seed, opt);
  const auto path = (fs::path(c.out) / ("rollout_" + std::to_string(seed) + ".png")).string();
  mvs::visualize(trace, path);
  std::cout << "episode " << seed << " (" << trace.mode << "): " << (trace.success ? "success" : "failure")
            << " in " << trace.steps << " steps, " << trace.switches << " view switches; wrote " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view masked-autoencoder policy with learned viewpoint selection"};
  app.require_subcommand(1);

  Common collect_c, pretrain_c, train_c, eval_c, viz_c;
  int collect_episodes = 0, eval_episodes = 0;
  std::string pretrain_data, train_data, train_init, eval_ckpt, eval_modes, eval_sel, viz_ckpt, viz_mode = "learned";
  std::uint64_t viz_seed = 0;

  auto* collect = app.add_subcommand("collect", "Record scripted-expert demonstrations");
  add_common(collect, collect_c);
  collect->add_option("--episodes", collect_episodes, "Number of episodes (default: data.episodes)");

  auto* pretrain = app.add_subcommand("pretrain", "Masked-reconstruction pretraining");
  add_common(pretrain, pretrain_c);
  pretrain->add_option("--data", pretrain_data, "Dataset directory")->required();

  auto* train = app.add_subcommand("train", "Two-stage joint training");
  add_common(train, train_c);
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--init-checkpoint", train_init, "Start from this checkpoint (e.g. pretrained.ckpt)");

  auto* eval = app.add_subcommand("eval", "Evaluate view policies on shared seeds");
  add_common(eval, eval_c, false);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--modes", eval_modes, "Comma-separated: learned, fixed:<i>, random, oracle, all_views");
  eval->add_option("--episodes", eval_episodes, "Episodes per mode (default: eval.episodes)");
  eval->add_option("--selector-actions", eval_sel, "Actions fed to the selector: predicted or expert");

  auto* viz = app.add_subcommand("viz", "Render one rollout as an image grid");
  add_common(viz, viz_c, false);
  viz->add_option("--checkpoint", viz_ckpt, "Checkpoint file")->required();
  viz->add_option("--seed", viz_seed, "Episode seed");
  viz->add_option("--mode", viz_mode, "View mode");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    torch::set_num_threads(1);
    if (*collect) return cmd_collect(collect_c, collect_episodes);
    if (*pretrain) return cmd_pretrain(pretrain_c, pretrain_data);
    if (*train) return cmd_train(train_c, train_data, train_init);
    if (*eval) return cmd_eval(eval_c, eval_ckpt, eval_modes, eval_episodes, eval_sel);
    if (*viz) return cmd_viz(viz_c, viz_ckpt, viz_seed, viz_mode);
  } catch (const mvs::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mvs::MissingFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const mvs::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitShape;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
