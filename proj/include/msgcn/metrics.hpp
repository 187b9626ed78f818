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
#include <vector>

#include "msgcn/model.hpp"

namespace msgcn {

/// K sampled future trajectories, absolute positions in pixels,
/// [K x t_pred x N x 2]. Positions come from cumulative sums of sampled
/// displacements anchored at each agent's last observed position.
struct SampledTrajectories {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::size_t t_pred = 0;
  std::size_t num_agents = 0;
  std::vector<double> positions;

  double at(std::size_t sample, std::size_t t, std::size_t i, std::size_t c) const {
    return positions[(((sample * t_pred) + t) * num_agents + i) * 2 + c];
  }
  double& at(std::size_t sample, std::size_t t, std::size_t i, std::size_t c) {
    return positions[(((sample * t_pred) + t) * num_agents + i) * 2 + c];
  }
};

/// One displacement draw: mu + L z with L the Cholesky factor
/// [[sx, 0], [rho*sy, sy*sqrt(1-rho^2)]].
inline std::pair<double, double> displacement_from_z(double mu_x, double mu_y, double sigma_x,
                                                     double sigma_y, double rho, double z1,
                                                     double z2) {
  return {mu_x + sigma_x * z1, mu_y + sigma_y * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2)};
}

/// Draw K trajectories from the field: per (t, i) a bivariate normal
/// displacement, cumulative-summed from the agent's last observed
/// normalized position, then denormalized by scene.scale. Deterministic
/// given seed. Throws NumericError if |rho| >= 1 anywhere.
SampledTrajectories sample_field(const GaussianField& field, const Scene& scene, std::size_t k,
                                 std::uint64_t seed);

/// Ground-truth future positions in pixels, [t_pred x N x 2].
Tensor future_truth_pixels(const Scene& scene);

/// ade: mean over (t, i) Euclidean distance. fde: mean over i at the final
/// step. Both inputs are [T x N x 2] in the same units.
std::pair<double, double> ade_fde(const Tensor& pred, const Tensor& truth);

struct MetricReport {
  double made = 0.0;
  double mfde = 0.0;
  double aade = 0.0;
  double afde = 0.0;
  std::size_t k = 0;
  std::size_t scenes = 0;
  std::size_t agents = 0;
};

/// Pools per-agent minima and means over samples across any number of
/// scenes; report() checks made <= aade and mfde <= afde.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::size_t k) : k_(k) {}
  void add_scene(const SampledTrajectories& samples, const Tensor& truth_pixels);
  MetricReport report() const;

 private:
  std::size_t k_;
  std::size_t scenes_ = 0;
  std::size_t agents_ = 0;
  double sum_min_ade_ = 0.0, sum_min_fde_ = 0.0;
  double sum_avg_ade_ = 0.0, sum_avg_fde_ = 0.0;
};

/// Single-scene convenience wrapper around MetricAccumulator.
MetricReport min_and_avg_metrics(const SampledTrajectories& samples, const Tensor& truth_pixels);

/// Constant-velocity extrapolation from the mean observed velocity.
/// Returns predicted future positions in pixels, [t_pred x N x 2].
Tensor linear_baseline(const Scene& scene);

/// Forward + sample + pool over all scenes. Per-scene sampling seed is
/// seed ^ scene index, so results do not depend on evaluation order.
MetricReport evaluate_model(const ModelParams& params, const std::vector<Scene>& scenes,
                            std::size_t k, std::uint64_t seed);

/// Deterministic single-path baseline over the same scenes (K = 1).
MetricReport evaluate_baseline(const std::vector<Scene>& scenes);

std::string metric_report_tsv(const MetricReport& report);
std::string metric_report_summary(const MetricReport& report);

}  // namespace msgcn
