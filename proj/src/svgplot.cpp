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

#include "msgcn/svgplot.hpp"

#include <cmath>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace msgcn {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 600.0;
constexpr double kMargin = 40.0;

// One stroke color per agent class, indexed by class id.
constexpr const char* kClassColors[kNumClasses] = {
    "#2ca02c",  // Pedestrian
    "#ff7f0e",  // Biker
    "#9467bd",  // Cart
    "#17becf",  // Car
    "#e377c2",  // Skater
    "#8c564b",  // Bus
};

constexpr const char* kObservedFill = "#1f4e9c";
constexpr const char* kTruthStroke = "#d62728";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Bounds {
  double min_x = HUGE_VAL, min_y = HUGE_VAL, max_x = -HUGE_VAL, max_y = -HUGE_VAL;
  void grow(double x, double y) {
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  }
};

}  // namespace

std::string render_scene_svg(const Scene& scene, const std::vector<PredictedPath>& predictions) {
  const std::size_t n = scene.num_agents();
  for (const PredictedPath& p : predictions) {
    if (p.agent_index >= n) throw ShapeError("render_scene_svg: prediction for unknown agent");
    if (p.xy.size() % 2 != 0) throw ShapeError("render_scene_svg: odd coordinate count");
  }

  Bounds b;
  for (std::size_t t = 0; t < scene.t_total(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      b.grow(scene.pos(t, i, 0) * scene.scale, scene.pos(t, i, 1) * scene.scale);
  for (const PredictedPath& p : predictions)
    for (std::size_t t = 0; t + 1 < p.xy.size(); t += 2) b.grow(p.xy[t], p.xy[t + 1]);

  const double span_x = std::max(b.max_x - b.min_x, 1e-6);
  const double span_y = std::max(b.max_y - b.min_y, 1e-6);
  const double s = std::min((kWidth - 2 * kMargin) / span_x, (kHeight - 2 * kMargin) / span_y);
  auto px = [&](double x) { return kMargin + (x - b.min_x) * s; };
  auto py = [&](double y) { return kMargin + (y - b.min_y) * s; };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"#ffffff\"/>\n";

  // Predicted mean paths first so markers draw on top.
  for (const PredictedPath& p : predictions) {
    if (p.xy.empty()) continue;
    svg << "  <polyline fill=\"none\" stroke=\""
        << kClassColors[static_cast<std::size_t>(scene.class_ids[p.agent_index])]
        << "\" stroke-width=\"2\" points=\"";
    // Start the line at the agent's last observed position.
    svg << num(px(scene.pos(scene.t_obs - 1, p.agent_index, 0) * scene.scale)) << ","
        << num(py(scene.pos(scene.t_obs - 1, p.agent_index, 1) * scene.scale));
    for (std::size_t t = 0; t + 1 < p.xy.size(); t += 2)
      svg << " " << num(px(p.xy[t])) << "," << num(py(p.xy[t + 1]));
    svg << "\"/>\n";
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < scene.t_obs; ++t) {
      svg << "  <circle cx=\"" << num(px(scene.pos(t, i, 0) * scene.scale)) << "\" cy=\""
          << num(py(scene.pos(t, i, 1) * scene.scale)) << "\" r=\"3.5\" fill=\"" << kObservedFill
          << "\"/>\n";
    }
    for (std::size_t t = scene.t_obs; t < scene.t_total(); ++t) {
      svg << "  <circle cx=\"" << num(px(scene.pos(t, i, 0) * scene.scale)) << "\" cy=\""
          << num(py(scene.pos(t, i, 1) * scene.scale))
          << "\" r=\"3.5\" fill=\"none\" stroke=\"" << kTruthStroke
          << "\" stroke-width=\"1.5\"/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_svg(const Scene& scene, const std::vector<PredictedPath>& predictions,
              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write SVG: " + path);
  out << render_scene_svg(scene, predictions);
  if (!out) throw IoError("short write on SVG: " + path);
}

}  // namespace msgcn
