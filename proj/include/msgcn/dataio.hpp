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
#include <iosfwd>
#include <string>
#include <vector>

#include "msgcn/errors.hpp"

namespace msgcn {

inline constexpr int kNumClasses = 6;

/// Fixed label table: Pedestrian=0, Biker=1, Cart=2, Car=3, Skater=4, Bus=5.
/// Returns -1 for unknown labels.
int class_id_from_label(const std::string& label);
const char* label_from_class_id(int class_id);

struct CanonicalRow {
  std::int64_t frame = 0;
  std::int64_t agent_id = 0;
  double x = 0.0;  // pixels
  double y = 0.0;  // pixels
  int class_id = 0;

  friend bool operator==(const CanonicalRow&, const CanonicalRow&) = default;
};

/// A fixed-length window of t_obs + t_pred sampled frames. Positions are
/// stored normalized (raw pixels / scale), row-major [t_total x N x 2],
/// and every agent is present in every frame of the window.
struct Scene {
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  double scale = 10.0;
  std::vector<std::int64_t> agent_ids;  // [N]
  std::vector<int> class_ids;           // [N]
  std::vector<double> positions;        // [t_total x N x 2], normalized

  std::size_t num_agents() const { return agent_ids.size(); }
  std::size_t t_total() const { return t_obs + t_pred; }
  double pos(std::size_t t, std::size_t i, std::size_t k) const {
    return positions[(t * num_agents() + i) * 2 + k];
  }
  double& pos(std::size_t t, std::size_t i, std::size_t k) {
    return positions[(t * num_agents() + i) * 2 + k];
  }
};

/// Parse raw SDD annotation text:
///   track_id xmin ymin xmax ymax frame lost occluded generated "Label"
/// Emits one row per kept line (frame % frame_stride == 0 and lost == 0)
/// with the bounding-box center as the position, sorted by (frame, agent).
std::vector<CanonicalRow> convert_sdd(std::istream& text, std::int64_t frame_stride);
std::vector<CanonicalRow> convert_sdd_file(const std::string& path, std::int64_t frame_stride);

// Canonical TSV: tab-separated `frame agent_id x y class_id`, '#' comments,
// LF line endings. Doubles round-trip exactly.
void write_canonical_tsv(std::ostream& out, const std::vector<CanonicalRow>& rows);
void write_canonical_tsv_file(const std::string& path, const std::vector<CanonicalRow>& rows);
std::vector<CanonicalRow> read_canonical_tsv(std::istream& in, const std::string& source_name = "<stream>");
std::vector<CanonicalRow> read_canonical_tsv_file(const std::string& path);

struct WindowConfig {
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  std::size_t stride = 1;  // window-start step, in sampled frames
  double scale = 10.0;
};

/// Cut fixed-length windows over the sorted unique frame values. Only agents
/// observed in all t_obs + t_pred consecutive sampled frames are kept;
/// windows with no such agent are dropped. Rows may arrive in any order.
/// Throws if (frame, agent) pairs repeat or an agent's class changes.
std::vector<Scene> make_windows(std::vector<CanonicalRow> rows, const WindowConfig& config);

/// Multiply normalized positions back to pixels. scale must be positive.
std::vector<double> denormalize(const std::vector<double>& positions, double scale);

}  // namespace msgcn
