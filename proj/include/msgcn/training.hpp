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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "msgcn/config.hpp"
#include "msgcn/model.hpp"

namespace msgcn {

/// Ground-truth per-step displacements over the prediction horizon,
/// [t_pred x N x 2] in normalized units. The first future displacement is
/// anchored at the last observed position.
Tensor target_displacements(const Scene& scene);

/// Mean over (t, i) of the bivariate Gaussian negative log-likelihood of
/// the target displacements. The loss stays on the tape, so backward()
/// reaches every parameter. Throws NumericError naming (t, i) when a term
/// is non-finite.
Tensor bivariate_nll(Tape& tape, const GaussianField& field, const Tensor& targets);

/// First and second moment estimates, one per named parameter.
struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;

  static AdamState init(const ModelParams& params);
};

/// Scale all parameter gradients so their global L2 norm is at most
/// max_norm. Returns the pre-clip norm. No-op when max_norm <= 0.
double clip_gradients(ModelParams& params, double max_norm);

/// One bias-corrected Adam update from the gradients currently stored on
/// the parameter tensors. step_t is 1-based.
void adam_step(ModelParams& params, AdamState& state, const PipelineConfig& config,
               std::size_t step_t);

/// Forward + NLL + backward for one scene; gradients add into the
/// parameter tensors (no zeroing). Returns the scene loss.
double accumulate_scene_gradients(ModelParams& params, const Scene& scene);

/// Multiply every parameter gradient by factor (used for mean-of-means
/// reduction over a gradient-accumulated batch).
void scale_gradients(ModelParams& params, double factor);

/// Everything needed to resume training bit-identically.
struct Checkpoint {
  PipelineConfig config;
  TrainProgress progress;
  ModelParams params;
  AdamState adam;
};

Checkpoint make_initial_checkpoint(const PipelineConfig& config);

// Binary layout: magic "MSGCN1"; u32 little-endian byte length + UTF-8
// config/progress snapshot; then per tensor: u32 name length, name bytes,
// u32 rank, u64 dims, raw little-endian 64-bit floats, until EOF.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

struct StepRecord {
  std::size_t epoch = 0;        // 0-based epoch the step belongs to
  std::size_t global_step = 0;  // 1-based optimizer step
  double loss = 0.0;
};

struct TrainIo {
  std::string checkpoint_path;  // written at epoch ends (or every
                                // checkpoint_every steps) and at exit
  std::string trace_path;       // TSV `epoch step loss`; empty disables
};

/// Optimize until config.epochs epochs complete, or config.max_steps
/// optimizer steps when set. Scene order is reshuffled every epoch from a
/// seed derived from (config.seed, epoch), so a resumed run replays the
/// exact batches of an uninterrupted one.
std::vector<StepRecord> train(Checkpoint& checkpoint, const std::vector<Scene>& scenes,
                              const TrainIo& io);

}  // namespace msgcn
