// Copyright 2026 The msgcn Authors
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

#include "msgcn/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "msgcn/config.hpp"
#include "msgcn/dataio.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/metrics.hpp"
#include "msgcn/svgplot.hpp"
#include "msgcn/training.hpp"

namespace msgcn {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> data_files(const std::string& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".tsv") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .tsv files in directory: " + path);
    return files;
  }
  if (!fs::exists(path)) throw IoError("no such data path: " + path);
  return {path};
}

// Windows are cut per file; scene indices run over the concatenation in
// lexicographic file order.
std::vector<Scene> load_scenes(const std::string& path, const PipelineConfig& config) {
  WindowConfig wc;
  wc.t_obs = config.model.t_obs;
  wc.t_pred = config.model.t_pred;
  wc.stride = config.window_stride;
  wc.scale = config.scale;
  std::vector<Scene> scenes;
  for (const std::string& file : data_files(path)) {
    std::vector<Scene> cut = make_windows(read_canonical_tsv_file(file), wc);
    scenes.insert(scenes.end(), cut.begin(), cut.end());
  }
  if (scenes.empty()) throw ConfigError("no complete windows in data: " + path);
  return scenes;
}

std::string preloaded_config(int argc, const char* const* argv) {
  for (int i = 0; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

struct CommonTrainFlags {
  std::string data;
  std::string out;
  std::string trace;
  std::string resume;
  bool no_separate_embedding = false;
  bool no_class_labels = false;
  bool no_adaptive_mask = false;
};

void add_window_flags(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_option("--t-obs", cfg.model.t_obs, "Observed frames per window");
  cmd->add_option("--t-pred", cfg.model.t_pred, "Predicted frames per window");
  cmd->add_option("--scale", cfg.scale, "Position normalization divisor");
  cmd->add_option("--window-stride", cfg.window_stride, "Window start step (sampled frames)");
}

int cmd_train(const CommonTrainFlags& flags, PipelineConfig cfg, bool epochs_set,
              bool max_steps_set, std::size_t epochs_flag, std::size_t max_steps_flag) {
  if (flags.no_separate_embedding) cfg.model.separate_embedding = false;
  if (flags.no_class_labels) cfg.model.use_class_labels = false;
  if (flags.no_adaptive_mask) cfg.model.adaptive_mask = false;

  Checkpoint ckpt;
  if (!flags.resume.empty()) {
    ckpt = load_checkpoint(flags.resume);
    if (epochs_set) ckpt.config.epochs = epochs_flag;
    if (max_steps_set) ckpt.config.max_steps = max_steps_flag;
  } else {
    ckpt = make_initial_checkpoint(cfg);
  }

  std::vector<Scene> scenes = load_scenes(flags.data, ckpt.config);
  TrainIo io;
  io.checkpoint_path = flags.out;
  io.trace_path = flags.trace;
  const auto records = train(ckpt, scenes, io);

  if (records.empty()) {
    std::cout << "nothing to do (training already complete)\n";
  } else {
    std::printf("trained %zu steps over %zu scenes, loss %.6f -> %.6f\n", records.size(),
                scenes.size(), records.front().loss, records.back().loss);
  }
  std::cout << "checkpoint: " << flags.out << "\n";
  return 0;
}

int cmd_eval(const std::string& data, const std::string& checkpoint, const std::string& out,
             PipelineConfig cfg, bool with_baseline, bool samples_set, std::size_t samples_flag,
             bool seed_set, std::uint64_t seed_flag) {
  MetricReport report;
  if (!checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    std::vector<Scene> scenes = load_scenes(data, ckpt.config);
    const std::size_t k = samples_set ? samples_flag : ckpt.config.num_samples;
    const std::uint64_t seed = seed_set ? seed_flag : ckpt.config.seed;
    report = evaluate_model(ckpt.params, scenes, k, seed);
    std::cout << metric_report_summary(report);
    if (with_baseline) {
      std::cout << "linear baseline: " << metric_report_summary(evaluate_baseline(scenes));
    }
  } else {
    std::vector<Scene> scenes = load_scenes(data, cfg);
    report = evaluate_baseline(scenes);
    std::cout << "linear baseline: " << metric_report_summary(report);
  }
  if (!out.empty()) {
    std::ofstream f(out, std::ios::binary);
    if (!f) throw IoError("cannot write metrics: " + out);
    f << metric_report_tsv(report);
  }
  return 0;
}

int cmd_predict(const std::string& data, const std::string& checkpoint, const std::string& out,
                bool samples_set, std::size_t samples_flag, bool seed_set,
                std::uint64_t seed_flag) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  std::vector<Scene> scenes = load_scenes(data, ckpt.config);
  const std::size_t k = samples_set ? samples_flag : ckpt.config.num_samples;
  const std::uint64_t seed = seed_set ? seed_flag : ckpt.config.seed;

  std::ofstream f(out, std::ios::binary);
  if (!f) throw IoError("cannot write predictions: " + out);
  f << "# scene\tsample\tstep\tagent_id\tx\ty\n";
  for (std::size_t idx = 0; idx < scenes.size(); ++idx) {
    const Scene& scene = scenes[idx];
    Tape tape;
    GaussianField field = model_forward(tape, build_vlg(scene), ckpt.params);
    SampledTrajectories samples =
        sample_field(field, scene, k, seed ^ static_cast<std::uint64_t>(idx));
    for (std::size_t sample = 0; sample < k; ++sample)
      for (std::size_t t = 0; t < scene.t_pred; ++t)
        for (std::size_t i = 0; i < scene.num_agents(); ++i) {
          char line[192];
          std::snprintf(line, sizeof(line), "%zu\t%zu\t%zu\t%lld\t%.17g\t%.17g\n", idx, sample,
                        t + 1, static_cast<long long>(scene.agent_ids[i]),
                        samples.at(sample, t, i, 0), samples.at(sample, t, i, 1));
          f << line;
        }
  }
  if (!f) throw IoError("short write on predictions: " + out);
  std::cout << "predictions: " << out << " (" << scenes.size() << " scenes, K=" << k << ")\n";
  return 0;
}

std::vector<PredictedPath> mean_paths_from_tsv(const std::string& path, std::size_t scene_index,
                                               const Scene& scene) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open predictions: " + path);
  std::map<std::int64_t, std::size_t> agent_index;
  for (std::size_t i = 0; i < scene.num_agents(); ++i) agent_index[scene.agent_ids[i]] = i;

  // (agent, step) -> accumulated x, y, count
  std::map<std::pair<std::size_t, std::size_t>, std::array<double, 3>> acc;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t scene_id, sample, step;
    std::int64_t agent_id;
    double x, y;
    if (!(ls >> scene_id >> sample >> step >> agent_id >> x >> y)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed prediction row");
    }
    if (scene_id != scene_index) continue;
    auto it = agent_index.find(agent_id);
    if (it == agent_index.end()) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": agent " +
                       std::to_string(agent_id) + " not in scene " + std::to_string(scene_index));
    }
    auto& slot = acc[{it->second, step}];
    slot[0] += x;
    slot[1] += y;
    slot[2] += 1.0;
  }

  std::vector<PredictedPath> paths;
  for (std::size_t i = 0; i < scene.num_agents(); ++i) {
    PredictedPath p;
    p.agent_index = i;
    for (const auto& [key, slot] : acc) {
      if (key.first != i) continue;
      p.xy.push_back(slot[0] / slot[2]);
      p.xy.push_back(slot[1] / slot[2]);
    }
    if (!p.xy.empty()) paths.push_back(std::move(p));
  }
  return paths;
}

int cmd_plot(const std::string& data, const std::string& pred, const std::string& out,
             std::size_t scene_index, const std::string& checkpoint, PipelineConfig cfg) {
  if (!checkpoint.empty()) cfg = load_checkpoint(checkpoint).config;
  std::vector<Scene> scenes = load_scenes(data, cfg);
  if (scene_index >= scenes.size()) {
    throw ConfigError("scene index " + std::to_string(scene_index) + " out of range (have " +
                      std::to_string(scenes.size()) + ")");
  }
  const Scene& scene = scenes[scene_index];
  std::vector<PredictedPath> paths;
  if (!pred.empty()) paths = mean_paths_from_tsv(pred, scene_index, scene);
  emit_svg(scene, paths, out);
  std::cout << "svg: " << out << " (scene " << scene_index << ", " << scene.num_agents()
            << " agents, " << paths.size() << " predicted paths)\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multi-class sparse-graph trajectory prediction"};
  app.require_subcommand(1);

  // Config file (when given) provides defaults; explicit flags override.
  PipelineConfig cfg;
  const std::string config_path = preloaded_config(argc, argv);
  if (!config_path.empty()) cfg = load_config_file(config_path);
  std::string config_opt;

  int exit_code = 0;

  // convert ------------------------------------------------------------
  auto* convert = app.add_subcommand("convert", "SDD annotation text -> canonical TSV");
  std::string conv_in, conv_out;
  convert->add_option("input", conv_in, "Raw annotation file")->required();
  convert->add_option("output", conv_out, "Canonical TSV to write")->required();
  convert->add_option("--frame-stride", cfg.frame_stride,
                      "Keep frames where frame %% stride == 0");
  convert->callback([&]() {
    write_canonical_tsv_file(conv_out, convert_sdd_file(conv_in, cfg.frame_stride));
    std::cout << "canonical: " << conv_out << "\n";
  });

  // train ----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Canonical TSV (file or dir) -> checkpoint");
  CommonTrainFlags tf;
  train_cmd->add_option("data", tf.data, "Canonical TSV file or directory")->required();
  train_cmd->add_option("--out", tf.out, "Checkpoint path")->required();
  train_cmd->add_option("--trace", tf.trace, "Loss trace TSV (appended)");
  train_cmd->add_option("--resume", tf.resume, "Continue from this checkpoint");
  train_cmd->add_option("--config", config_opt, "Config file (defaults for all flags)");
  add_window_flags(train_cmd, cfg);
  auto* opt_epochs = train_cmd->add_option("--epochs", cfg.epochs, "Training epochs");
  auto* opt_max_steps = train_cmd->add_option("--max-steps", cfg.max_steps,
                                              "Stop after this many optimizer steps (0 = off)");
  train_cmd->add_option("--batch-size", cfg.batch_size, "Scenes per optimizer step");
  train_cmd->add_option("--lr", cfg.lr, "Adam learning rate");
  train_cmd->add_option("--seed", cfg.seed, "Init/shuffle seed");
  train_cmd->add_option("--embed-dim", cfg.model.embed_dim, "Embedding width D");
  train_cmd->add_option("--tcn-depth", cfg.model.tcn_depth, "Temporal conv cascade depth");
  train_cmd->add_option("--clip-norm", cfg.clip_norm, "Global gradient norm cap (0 = off)");
  train_cmd->add_option("--checkpoint-every", cfg.checkpoint_every,
                        "Checkpoint period in steps (0 = each epoch)");
  train_cmd->add_flag("--no-separate-embedding", tf.no_separate_embedding,
                      "Joint velocity+label embedding matrix");
  train_cmd->add_flag("--no-class-labels", tf.no_class_labels, "Velocity-only embedding");
  train_cmd->add_flag("--no-adaptive-mask", tf.no_adaptive_mask,
                      "Fixed interaction threshold instead of row-mean");
  train_cmd->add_option("--fixed-threshold", cfg.model.fixed_threshold,
                        "Threshold used with --no-adaptive-mask");
  train_cmd->callback([&]() {
    exit_code = cmd_train(tf, cfg, opt_epochs->count() > 0, opt_max_steps->count() > 0,
                          cfg.epochs, cfg.max_steps);
  });

  // eval -----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Metrics for a checkpoint (or linear baseline)");
  std::string eval_data, eval_ckpt, eval_out;
  bool with_baseline = false;
  std::size_t samples_flag = 20;
  std::uint64_t seed_flag = 1;
  eval_cmd->add_option("data", eval_data, "Canonical TSV file or directory")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Trained checkpoint (omit for baseline only)");
  eval_cmd->add_option("--out", eval_out, "Metric report TSV");
  eval_cmd->add_option("--config", config_opt, "Config file (baseline-only windowing)");
  auto* opt_samples = eval_cmd->add_option("--samples,-K", samples_flag, "Samples per agent");
  auto* opt_seed = eval_cmd->add_option("--seed", seed_flag, "Sampling seed");
  eval_cmd->add_flag("--with-baseline", with_baseline, "Also report the linear baseline");
  add_window_flags(eval_cmd, cfg);
  eval_cmd->callback([&]() {
    exit_code = cmd_eval(eval_data, eval_ckpt, eval_out, cfg, with_baseline,
                         opt_samples->count() > 0, samples_flag, opt_seed->count() > 0, seed_flag);
  });

  // predict ----------------------------------------------------------------
  auto* predict_cmd = app.add_subcommand("predict", "Sampled future trajectories -> TSV");
  std::string pred_data, pred_ckpt, pred_out;
  predict_cmd->add_option("data", pred_data, "Canonical TSV file or directory")->required();
  predict_cmd->add_option("--checkpoint", pred_ckpt, "Trained checkpoint")->required();
  predict_cmd->add_option("--out", pred_out, "Predictions TSV")->required();
  auto* popt_samples = predict_cmd->add_option("--samples,-K", samples_flag, "Samples per agent");
  auto* popt_seed = predict_cmd->add_option("--seed", seed_flag, "Sampling seed");
  predict_cmd->callback([&]() {
    exit_code = cmd_predict(pred_data, pred_ckpt, pred_out, popt_samples->count() > 0,
                            samples_flag, popt_seed->count() > 0, seed_flag);
  });

  // plot ---------------------------------------------------------------
  auto* plot_cmd = app.add_subcommand("plot", "Scene (+ optional predictions) -> SVG");
  std::string plot_data, plot_pred, plot_out, plot_ckpt;
  std::size_t plot_scene = 0;
  plot_cmd->add_option("data", plot_data, "Canonical TSV file or directory")->required();
  plot_cmd->add_option("--out", plot_out, "SVG path")->required();
  plot_cmd->add_option("--pred", plot_pred, "Predictions TSV from `predict`");
  plot_cmd->add_option("--scene", plot_scene, "Scene index (see `predict` output)");
  plot_cmd->add_option("--checkpoint", plot_ckpt, "Take windowing config from this checkpoint");
  plot_cmd->add_option("--config", config_opt, "Config file for windowing");
  add_window_flags(plot_cmd, cfg);
  plot_cmd->callback([&]() {
    exit_code = cmd_plot(plot_data, plot_pred, plot_out, plot_scene, plot_ckpt, cfg);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}

}  // namespace msgcn
