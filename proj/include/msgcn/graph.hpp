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

#include <vector>

#include "msgcn/dataio.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

/// Velocity-label graph inputs for one scene, observed frames only.
/// The spatial graph connects all agent pairs within a frame; the temporal
/// graph connects step s to steps t >= s (upper triangular with diagonal).
struct VlgBatch {
  Tensor velocity;       // [t_obs x N x 2], normalized pixels per step
  Tensor labels_onehot;  // [t_obs x N x L]
  Tensor spatial_adj;    // [N x N], all ones
  Tensor temporal_adj;   // [t_obs x t_obs], 1 iff row <= col

  std::size_t t_obs() const { return velocity.dims()[0]; }
  std::size_t num_agents() const { return velocity.dims()[1]; }
};

/// Frame-to-frame displacements: out[t] = pos[t] - pos[t-1], out[0] = 0.
/// positions is [T x N x 2] with T >= 2.
Tensor compute_velocities(const Tensor& positions);

std::vector<double> one_hot(int class_id, int num_classes = kNumClasses);

/// Upper triangular with diagonal: adj[s][t] == 1 iff s <= t.
Tensor temporal_adjacency(std::size_t t_obs);

VlgBatch build_vlg(const Scene& scene);

}  // namespace msgcn
