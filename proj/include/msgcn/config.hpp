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

#pragma once

#include <cstdint>
#include <string>

#include "msgcn/model.hpp"

namespace msgcn {

/// Everything the pipeline needs to reproduce a run. Serialized as
/// `key = value` text, one key per line, in a fixed order; the same
/// snapshot format is used for config files and inside checkpoints.
struct PipelineConfig {
  ModelConfig model;

  // data
  double scale = 10.0;
  std::size_t window_stride = 1;
  std::int64_t frame_stride = 12;

  // optimization
  double lr = 1e-4;
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // optimizer-step cap; 0 disables
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 0.0;  // global-norm clip; 0 disables
  std::size_t checkpoint_every = 0;  // steps; 0 = at each epoch end

  // evaluation
  std::size_t num_samples = 20;  // K

  void validate() const;
};

/// Training position stored alongside the config in checkpoints.
struct TrainProgress {
  std::size_t epoch = 0;
  std::size_t global_step = 0;
  std::size_t adam_step = 0;
  std::string rng_state;
};

std::string serialize_config(const PipelineConfig& config);
std::string serialize_config(const PipelineConfig& config, const TrainProgress& progress);

/// Strict parser: unknown keys are errors. Progress keys are optional and
/// land in *progress when given.
PipelineConfig parse_config(const std::string& text, TrainProgress* progress = nullptr);

PipelineConfig load_config_file(const std::string& path);

}  // namespace msgcn
