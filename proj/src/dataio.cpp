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

#include "msgcn/dataio.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace msgcn {

namespace {

constexpr std::array<const char*, kNumClasses> kLabels = {
    "Pedestrian", "Biker", "Cart", "Car", "Skater", "Bus"};

std::string loc(const std::string& source, std::size_t line_no) {
  return source + ":" + std::to_string(line_no);
}

// %.17g so that parsing the text recovers the exact double.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_row_invariants(const std::vector<CanonicalRow>& rows, const std::string& source) {
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::unordered_map<std::int64_t, int> agent_class;
  for (const CanonicalRow& r : rows) {
    if (!seen.insert({r.frame, r.agent_id}).second) {
      throw ParseError(source + ": duplicate (frame " + std::to_string(r.frame) +
                       ", agent " + std::to_string(r.agent_id) + ")");
    }
    auto [it, inserted] = agent_class.emplace(r.agent_id, r.class_id);
    if (!inserted && it->second != r.class_id) {
      throw ParseError(source + ": agent " + std::to_string(r.agent_id) +
                       " changes class from " + std::to_string(it->second) + " to " +
                       std::to_string(r.class_id));
    }
  }
}

}  // namespace

int class_id_from_label(const std::string& label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i)
    if (label == kLabels[i]) return static_cast<int>(i);
  return -1;
}

const char* label_from_class_id(int class_id) {
  if (class_id < 0 || class_id >= kNumClasses) throw ConfigError("class id out of range: " + std::to_string(class_id));
  return kLabels[static_cast<std::size_t>(class_id)];
}

std::vector<CanonicalRow> convert_sdd(std::istream& text, std::int64_t frame_stride) {
  if (frame_stride <= 0) throw ConfigError("frame_stride must be positive");
  std::vector<CanonicalRow> rows;
  std::unordered_map<std::int64_t, int> agent_class;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(text, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::int64_t track_id, frame;
    double xmin, ymin, xmax, ymax;
    int lost, occluded, generated;
    if (!(ls >> track_id >> xmin >> ymin >> xmax >> ymax >> frame >> lost >> occluded >> generated)) {
      throw ParseError(loc("annotation", line_no) + ": malformed line: " + line);
    }
    const std::size_t q1 = line.find('"');
    const std::size_t q2 = q1 == std::string::npos ? std::string::npos : line.find('"', q1 + 1);
    if (q2 == std::string::npos) {
      throw ParseError(loc("annotation", line_no) + ": missing quoted label: " + line);
    }
    const std::string label = line.substr(q1 + 1, q2 - q1 - 1);
    const int class_id = class_id_from_label(label);
    if (class_id < 0) {
      throw ParseError(loc("annotation", line_no) + ": unknown label \"" + label + "\"");
    }
    auto [it, inserted] = agent_class.emplace(track_id, class_id);
    if (!inserted && it->second != class_id) {
      throw ParseError(loc("annotation", line_no) + ": agent " + std::to_string(track_id) +
                       " changes class");
    }
    if (lost != 0 || frame % frame_stride != 0) continue;
    CanonicalRow row;
    row.frame = frame;
    row.agent_id = track_id;
    row.x = (xmin + xmax) / 2.0;
    row.y = (ymin + ymax) / 2.0;
    row.class_id = class_id;
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const CanonicalRow& a, const CanonicalRow& b) {
    return std::tie(a.frame, a.agent_id) < std::tie(b.frame, b.agent_id);
  });
  check_row_invariants(rows, "annotation");
  return rows;
}

std::vector<CanonicalRow> convert_sdd_file(const std::string& path, std::int64_t frame_stride) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open annotation file: " + path);
  return convert_sdd(in, frame_stride);
}

void write_canonical_tsv(std::ostream& out, const std::vector<CanonicalRow>& rows) {
  out << "# frame\tagent_id\tx\ty\tclass_id\n";
  for (const CanonicalRow& r : rows) {
    out << r.frame << '\t' << r.agent_id << '\t' << format_double(r.x) << '\t'
        << format_double(r.y) << '\t' << r.class_id << '\n';
  }
}

void write_canonical_tsv_file(const std::string& path, const std::vector<CanonicalRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write canonical file: " + path);
  write_canonical_tsv(out, rows);
}

std::vector<CanonicalRow> read_canonical_tsv(std::istream& in, const std::string& source_name) {
  std::vector<CanonicalRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    CanonicalRow r;
    if (!(ls >> r.frame >> r.agent_id >> r.x >> r.y >> r.class_id)) {
      throw ParseError(loc(source_name, line_no) + ": malformed row: " + line);
    }
    std::string extra;
    if (ls >> extra) {
      throw ParseError(loc(source_name, line_no) + ": trailing fields: " + line);
    }
    if (r.class_id < 0 || r.class_id >= kNumClasses) {
      throw ParseError(loc(source_name, line_no) + ": class id out of range: " +
                       std::to_string(r.class_id));
    }
    rows.push_back(r);
  }
  check_row_invariants(rows, source_name);
  return rows;
}

std::vector<CanonicalRow> read_canonical_tsv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open canonical file: " + path);
  return read_canonical_tsv(in, path);
}

std::vector<Scene> make_windows(std::vector<CanonicalRow> rows, const WindowConfig& config) {
  if (config.scale <= 0.0) throw ConfigError("scale must be positive");
  if (config.stride == 0) throw ConfigError("window stride must be positive");
  if (config.t_obs < 2) throw ConfigError("t_obs must be at least 2");
  if (config.t_pred < 1) throw ConfigError("t_pred must be at least 1");
  std::sort(rows.begin(), rows.end(), [](const CanonicalRow& a, const CanonicalRow& b) {
    return std::tie(a.frame, a.agent_id) < std::tie(b.frame, b.agent_id);
  });
  check_row_invariants(rows, "windowing input");

  std::vector<std::int64_t> frames;
  for (const CanonicalRow& r : rows)
    if (frames.empty() || frames.back() != r.frame) frames.push_back(r.frame);

  // (frame index, agent) -> row index.
  std::map<std::pair<std::size_t, std::int64_t>, std::size_t> index;
  {
    std::size_t fi = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      while (frames[fi] != rows[i].frame) ++fi;
      index[{fi, rows[i].agent_id}] = i;
    }
  }

  const std::size_t t_total = config.t_obs + config.t_pred;
  std::vector<Scene> scenes;
  if (frames.size() < t_total) return scenes;
  for (std::size_t start = 0; start + t_total <= frames.size(); start += config.stride) {
    // Agents present in every sampled frame of the window.
    std::vector<std::int64_t> agents;
    for (auto it = index.lower_bound({start, INT64_MIN});
         it != index.end() && it->first.first == start; ++it) {
      const std::int64_t agent = it->first.second;
      bool full = true;
      for (std::size_t t = 1; t < t_total && full; ++t)
        full = index.count({start + t, agent}) > 0;
      if (full) agents.push_back(agent);
    }
    if (agents.empty()) continue;

    Scene scene;
    scene.t_obs = config.t_obs;
    scene.t_pred = config.t_pred;
    scene.scale = config.scale;
    scene.agent_ids = agents;
    scene.class_ids.resize(agents.size());
    scene.positions.resize(t_total * agents.size() * 2);
    for (std::size_t i = 0; i < agents.size(); ++i) {
      scene.class_ids[i] = rows[index[{start, agents[i]}]].class_id;
      for (std::size_t t = 0; t < t_total; ++t) {
        const CanonicalRow& r = rows[index[{start + t, agents[i]}]];
        scene.pos(t, i, 0) = r.x / config.scale;
        scene.pos(t, i, 1) = r.y / config.scale;
      }
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

std::vector<double> denormalize(const std::vector<double>& positions, double scale) {
  if (scale <= 0.0) throw ConfigError("scale must be positive");
  std::vector<double> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) out[i] = positions[i] * scale;
  return out;
}

}  // namespace msgcn
