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

#include "msgcn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "msgcn/dataio.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/rng.hpp"

namespace msgcn {

SampledTrajectories sample_field(const GaussianField& field, const Scene& scene, std::size_t k,
                                 std::uint64_t seed) {
  if (k == 0) throw ConfigError("sample_field: K must be at least 1");
  const std::size_t t_pred = field.t_pred(), n = field.num_agents();
  if (scene.t_pred != t_pred || scene.num_agents() != n) {
    throw ShapeError("sample_field: field does not match scene");
  }
  for (std::size_t idx = 0; idx < t_pred * n; ++idx) {
    if (std::fabs(field.rho.data()[idx]) >= 1.0) {
      throw NumericError("sample_field: |rho| >= 1 at flat index " + std::to_string(idx));
    }
    if (field.sigma_x.data()[idx] <= 0.0 || field.sigma_y.data()[idx] <= 0.0) {
      throw NumericError("sample_field: non-positive sigma at flat index " + std::to_string(idx));
    }
  }

  SampledTrajectories out;
  out.k = k;
  out.seed = seed;
  out.t_pred = t_pred;
  out.num_agents = n;
  out.positions.resize(k * t_pred * n * 2);

  Rng rng(seed);
  for (std::size_t sample = 0; sample < k; ++sample) {
    for (std::size_t i = 0; i < n; ++i) {
      double x = scene.pos(scene.t_obs - 1, i, 0);
      double y = scene.pos(scene.t_obs - 1, i, 1);
      for (std::size_t t = 0; t < t_pred; ++t) {
        const auto [z1, z2] = rng.normal_pair();
        const auto [dx, dy] =
            displacement_from_z(field.mu_x.at(t, i), field.mu_y.at(t, i), field.sigma_x.at(t, i),
                                field.sigma_y.at(t, i), field.rho.at(t, i), z1, z2);
        x += dx;
        y += dy;
        out.at(sample, t, i, 0) = x * scene.scale;
        out.at(sample, t, i, 1) = y * scene.scale;
      }
    }
  }
  return out;
}

Tensor future_truth_pixels(const Scene& scene) {
  const std::size_t n = scene.num_agents();
  Tensor out = Tensor::zeros({scene.t_pred, n, 2});
  for (std::size_t t = 0; t < scene.t_pred; ++t)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c)
        out.mutable_data()[(t * n + i) * 2 + c] = scene.pos(scene.t_obs + t, i, c) * scene.scale;
  return out;
}

std::pair<double, double> ade_fde(const Tensor& pred, const Tensor& truth) {
  if (pred.dims() != truth.dims() || pred.rank() != 3 || pred.dims()[2] != 2) {
    throw ShapeError("ade_fde: incompatible dims " + dims_str(pred.dims()) + " vs " +
                     dims_str(truth.dims()));
  }
  const std::size_t t_steps = pred.dims()[0], n = pred.dims()[1];
  double ade = 0.0, fde = 0.0;
  for (std::size_t t = 0; t < t_steps; ++t)
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = pred.at(t, i, 0) - truth.at(t, i, 0);
      const double dy = pred.at(t, i, 1) - truth.at(t, i, 1);
      const double dist = std::hypot(dx, dy);
      ade += dist;
      if (t + 1 == t_steps) fde += dist;
    }
  return {ade / static_cast<double>(t_steps * n), fde / static_cast<double>(n)};
}

void MetricAccumulator::add_scene(const SampledTrajectories& samples, const Tensor& truth_pixels) {
  if (samples.k != k_) throw ConfigError("metric accumulator: sample count mismatch");
  const std::size_t t_pred = samples.t_pred, n = samples.num_agents;
  if (truth_pixels.dims() != Dims{t_pred, n, 2}) {
    throw ShapeError("metric accumulator: truth dims " + dims_str(truth_pixels.dims()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double min_ade = HUGE_VAL, min_fde = HUGE_VAL, sum_ade = 0.0, sum_fde = 0.0;
    for (std::size_t sample = 0; sample < k_; ++sample) {
      double ade = 0.0, fde = 0.0;
      for (std::size_t t = 0; t < t_pred; ++t) {
        const double dx = samples.at(sample, t, i, 0) - truth_pixels.at(t, i, 0);
        const double dy = samples.at(sample, t, i, 1) - truth_pixels.at(t, i, 1);
        const double dist = std::hypot(dx, dy);
        ade += dist;
        if (t + 1 == t_pred) fde = dist;
      }
      ade /= static_cast<double>(t_pred);
      min_ade = std::min(min_ade, ade);
      min_fde = std::min(min_fde, fde);
      sum_ade += ade;
      sum_fde += fde;
    }
    sum_min_ade_ += min_ade;
    sum_min_fde_ += min_fde;
    sum_avg_ade_ += sum_ade / static_cast<double>(k_);
    sum_avg_fde_ += sum_fde / static_cast<double>(k_);
  }
  agents_ += n;
  scenes_ += 1;
}

MetricReport MetricAccumulator::report() const {
  if (agents_ == 0) throw ConfigError("metric accumulator: no scenes added");
  MetricReport r;
  const double a = static_cast<double>(agents_);
  r.made = sum_min_ade_ / a;
  r.mfde = sum_min_fde_ / a;
  r.aade = sum_avg_ade_ / a;
  r.afde = sum_avg_fde_ / a;
  r.k = k_;
  r.scenes = scenes_;
  r.agents = agents_;
  const double slack = 1e-9;
  if (r.made > r.aade + slack || r.mfde > r.afde + slack) {
    throw NumericError("metric report violates min <= mean");
  }
  return r;
}

MetricReport min_and_avg_metrics(const SampledTrajectories& samples, const Tensor& truth_pixels) {
  MetricAccumulator acc(samples.k);
  acc.add_scene(samples, truth_pixels);
  return acc.report();
}

Tensor linear_baseline(const Scene& scene) {
  const std::size_t n = scene.num_agents(), t_obs = scene.t_obs;
  if (t_obs < 2) throw Error("linear_baseline: need at least 2 observed frames");
  Tensor out = Tensor::zeros({scene.t_pred, n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      // Mean observed velocity over the t_obs - 1 real steps.
      const double vbar =
          (scene.pos(t_obs - 1, i, c) - scene.pos(0, i, c)) / static_cast<double>(t_obs - 1);
      const double anchor = scene.pos(t_obs - 1, i, c);
      for (std::size_t t = 0; t < scene.t_pred; ++t) {
        out.mutable_data()[(t * n + i) * 2 + c] =
            (anchor + vbar * static_cast<double>(t + 1)) * scene.scale;
      }
    }
  }
  return out;
}

MetricReport evaluate_model(const ModelParams& params, const std::vector<Scene>& scenes,
                            std::size_t k, std::uint64_t seed) {
  if (scenes.empty()) throw ConfigError("evaluate_model: no scenes");
  MetricAccumulator acc(k);
  for (std::size_t idx = 0; idx < scenes.size(); ++idx) {
    Tape tape;
    GaussianField field = model_forward(tape, build_vlg(scenes[idx]), params);
    SampledTrajectories samples =
        sample_field(field, scenes[idx], k, seed ^ static_cast<std::uint64_t>(idx));
    acc.add_scene(samples, future_truth_pixels(scenes[idx]));
  }
  return acc.report();
}

MetricReport evaluate_baseline(const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw ConfigError("evaluate_baseline: no scenes");
  MetricAccumulator acc(1);
  for (const Scene& scene : scenes) {
    SampledTrajectories single;
    single.k = 1;
    single.seed = 0;
    single.t_pred = scene.t_pred;
    single.num_agents = scene.num_agents();
    single.positions = linear_baseline(scene).data();
    acc.add_scene(single, future_truth_pixels(scene));
  }
  return acc.report();
}

std::string metric_report_tsv(const MetricReport& r) {
  std::ostringstream os;
  char buf[160];
  os << "# mADE\tmFDE\taADE\taFDE\tK\tscenes\tagents\n";
  std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%.6f\t%.6f\t%zu\t%zu\t%zu\n", r.made, r.mfde,
                r.aade, r.afde, r.k, r.scenes, r.agents);
  os << buf;
  return os.str();
}

std::string metric_report_summary(const MetricReport& r) {
  std::ostringstream os;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "mADE %.4f  mFDE %.4f  aADE %.4f  aFDE %.4f  (K=%zu, %zu scenes, %zu agents)\n",
                r.made, r.mfde, r.aade, r.afde, r.k, r.scenes, r.agents);
  os << buf;
  return os.str();
}

}  // namespace msgcn
