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

#include "msgcn/graph.hpp"

namespace msgcn {

Tensor compute_velocities(const Tensor& positions) {
  if (positions.rank() != 3 || positions.dims()[2] != 2) {
    throw ShapeError("compute_velocities: expected [T x N x 2], got " + dims_str(positions.dims()));
  }
  const std::size_t t_total = positions.dims()[0], n = positions.dims()[1];
  if (t_total < 2) {
    throw Error("compute_velocities: need at least 2 frames, got " + std::to_string(t_total));
  }
  Tensor out = Tensor::zeros(positions.dims());
  for (std::size_t t = 1; t < t_total; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        const std::size_t idx = (t * n + i) * 2 + k;
        out.mutable_data()[idx] = positions.data()[idx] - positions.data()[idx - n * 2];
      }
  return out;
}

std::vector<double> one_hot(int class_id, int num_classes) {
  if (class_id < 0 || class_id >= num_classes) {
    throw ConfigError("one_hot: class id " + std::to_string(class_id) + " outside [0, " +
                      std::to_string(num_classes) + ")");
  }
  std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
  v[static_cast<std::size_t>(class_id)] = 1.0;
  return v;
}

Tensor temporal_adjacency(std::size_t t_obs) {
  Tensor adj = Tensor::zeros({t_obs, t_obs});
  for (std::size_t s = 0; s < t_obs; ++s)
    for (std::size_t t = s; t < t_obs; ++t) adj.mutable_data()[s * t_obs + t] = 1.0;
  return adj;
}

VlgBatch build_vlg(const Scene& scene) {
  const std::size_t t_obs = scene.t_obs, n = scene.num_agents();
  const std::size_t l = static_cast<std::size_t>(kNumClasses);

  // Observed frames only; the future part of the scene never enters.
  Tensor observed = Tensor::zeros({t_obs, n, 2});
  for (std::size_t t = 0; t < t_obs; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < 2; ++k)
        observed.mutable_data()[(t * n + i) * 2 + k] = scene.pos(t, i, k);

  VlgBatch batch;
  batch.velocity = compute_velocities(observed);
  batch.labels_onehot = Tensor::zeros({t_obs, n, l});
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> onehot = one_hot(scene.class_ids[i]);
    for (std::size_t t = 0; t < t_obs; ++t)
      for (std::size_t c = 0; c < l; ++c)
        batch.labels_onehot.mutable_data()[(t * n + i) * l + c] = onehot[c];
  }
  batch.spatial_adj = Tensor::full({n, n}, 1.0);
  batch.temporal_adj = temporal_adjacency(t_obs);
  return batch;
}

}  // namespace msgcn
