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

#include <string>
#include <vector>

#include "msgcn/dataio.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

/// Mean predicted future path for one agent, pixels.
struct PredictedPath {
  std::size_t agent_index = 0;            // index into the scene's agents
  std::vector<double> xy;                 // [t x 2]
};

/// Standalone SVG 1.1: observed positions as filled circles, ground-truth
/// future as hollow circles, predicted mean paths as one polyline per
/// agent colored by class. Coordinates are pixels (scene denormalized).
std::string render_scene_svg(const Scene& scene, const std::vector<PredictedPath>& predictions);

void emit_svg(const Scene& scene, const std::vector<PredictedPath>& predictions,
              const std::string& path);

}  // namespace msgcn
