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

#include "msgcn/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace msgcn {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad number '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad integer '" + value + "'");
  }
}

std::int64_t to_i64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad integer '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "0") return false;
  if (value == "1") return true;
  throw ConfigError("config key " + key + ": expected 0 or 1, got '" + value + "'");
}

}  // namespace

void PipelineConfig::validate() const {
  model.validate();
  if (scale <= 0.0) throw ConfigError("scale must be positive");
  if (window_stride == 0) throw ConfigError("window_stride must be positive");
  if (frame_stride <= 0) throw ConfigError("frame_stride must be positive");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw ConfigError("adam_eps must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be non-negative");
  if (num_samples == 0) throw ConfigError("num_samples must be at least 1");
}

std::string serialize_config(const PipelineConfig& c) {
  std::ostringstream os;
  os << "format = 1\n";
  os << "embed_dim = " << c.model.embed_dim << "\n";
  os << "num_classes = " << c.model.num_classes << "\n";
  os << "t_obs = " << c.model.t_obs << "\n";
  os << "t_pred = " << c.model.t_pred << "\n";
  os << "tcn_depth = " << c.model.tcn_depth << "\n";
  os << "separate_embedding = " << (c.model.separate_embedding ? 1 : 0) << "\n";
  os << "use_class_labels = " << (c.model.use_class_labels ? 1 : 0) << "\n";
  os << "adaptive_mask = " << (c.model.adaptive_mask ? 1 : 0) << "\n";
  os << "fixed_threshold = " << fmt_double(c.model.fixed_threshold) << "\n";
  os << "scale = " << fmt_double(c.scale) << "\n";
  os << "window_stride = " << c.window_stride << "\n";
  os << "frame_stride = " << c.frame_stride << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "epochs = " << c.epochs << "\n";
  os << "max_steps = " << c.max_steps << "\n";
  os << "seed = " << c.seed << "\n";
  os << "beta1 = " << fmt_double(c.beta1) << "\n";
  os << "beta2 = " << fmt_double(c.beta2) << "\n";
  os << "adam_eps = " << fmt_double(c.adam_eps) << "\n";
  os << "clip_norm = " << fmt_double(c.clip_norm) << "\n";
  os << "checkpoint_every = " << c.checkpoint_every << "\n";
  os << "num_samples = " << c.num_samples << "\n";
  return os.str();
}

std::string serialize_config(const PipelineConfig& c, const TrainProgress& p) {
  std::ostringstream os;
  os << serialize_config(c);
  os << "epoch = " << p.epoch << "\n";
  os << "global_step = " << p.global_step << "\n";
  os << "adam_step = " << p.adam_step << "\n";
  if (!p.rng_state.empty()) os << "rng = " << p.rng_state << "\n";
  return os.str();
}

PipelineConfig parse_config(const std::string& text, TrainProgress* progress) {
  PipelineConfig c;
  TrainProgress local;
  TrainProgress& p = progress ? *progress : local;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t sep = line.find(" = ");
    if (sep == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value': " + line);
    }
    const std::string key = line.substr(0, sep);
    const std::string value = line.substr(sep + 3);
    if (key == "format") {
      if (to_u64(key, value) != 1) throw ConfigError("unsupported config format: " + value);
    } else if (key == "embed_dim") c.model.embed_dim = to_u64(key, value);
    else if (key == "num_classes") c.model.num_classes = to_u64(key, value);
    else if (key == "t_obs") c.model.t_obs = to_u64(key, value);
    else if (key == "t_pred") c.model.t_pred = to_u64(key, value);
    else if (key == "tcn_depth") c.model.tcn_depth = to_u64(key, value);
    else if (key == "separate_embedding") c.model.separate_embedding = to_bool(key, value);
    else if (key == "use_class_labels") c.model.use_class_labels = to_bool(key, value);
    else if (key == "adaptive_mask") c.model.adaptive_mask = to_bool(key, value);
    else if (key == "fixed_threshold") c.model.fixed_threshold = to_double(key, value);
    else if (key == "scale") c.scale = to_double(key, value);
    else if (key == "window_stride") c.window_stride = to_u64(key, value);
    else if (key == "frame_stride") c.frame_stride = to_i64(key, value);
    else if (key == "lr") c.lr = to_double(key, value);
    else if (key == "batch_size") c.batch_size = to_u64(key, value);
    else if (key == "epochs") c.epochs = to_u64(key, value);
    else if (key == "max_steps") c.max_steps = to_u64(key, value);
    else if (key == "seed") c.seed = to_u64(key, value);
    else if (key == "beta1") c.beta1 = to_double(key, value);
    else if (key == "beta2") c.beta2 = to_double(key, value);
    else if (key == "adam_eps") c.adam_eps = to_double(key, value);
    else if (key == "clip_norm") c.clip_norm = to_double(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = to_u64(key, value);
    else if (key == "num_samples") c.num_samples = to_u64(key, value);
    else if (key == "epoch") p.epoch = to_u64(key, value);
    else if (key == "global_step") p.global_step = to_u64(key, value);
    else if (key == "adam_step") p.adam_step = to_u64(key, value);
    else if (key == "rng") p.rng_state = value;
    else throw ConfigError("unknown config key: " + key);
  }
  c.validate();
  return c;
}

PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

}  // namespace msgcn
