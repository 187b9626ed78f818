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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msgcn/dataio.hpp"
#include "msgcn/rng.hpp"
#include "msgcn/tensor.hpp"

namespace testutil {

inline msgcn::Tensor rand_tensor(msgcn::Rng& rng, msgcn::Dims dims,
                                 double lo = -2.0, double hi = 2.0,
                                 bool requires_grad = false) {
  msgcn::Tensor t = msgcn::Tensor::zeros(std::move(dims), requires_grad);
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

/// Random values in +-[lo, hi]; keeps finite-difference probes away from
/// the relu/prelu kink at zero.
inline msgcn::Tensor rand_tensor_away_from_zero(msgcn::Rng& rng, msgcn::Dims dims,
                                                double lo = 0.3, double hi = 2.0) {
  msgcn::Tensor t = msgcn::Tensor::zeros(std::move(dims));
  for (double& v : t.mutable_data()) {
    const double mag = rng.uniform(lo, hi);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("msgcn_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(base_);
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  std::filesystem::path path() const { return base_; }
  std::string file(const std::string& name) const { return (base_ / name).string(); }

 private:
  std::filesystem::path base_;
};

/// Constant-velocity scenes with mixed classes, positions already in
/// normalized units (scale 10). Speeds span slow pedestrians to fast bikes.
inline std::vector<msgcn::Scene> const_velocity_scenes(msgcn::Rng& rng, std::size_t count,
                                                       std::size_t t_obs = 8,
                                                       std::size_t t_pred = 12,
                                                       double speed_lo = 0.05,
                                                       double speed_hi = 0.6) {
  std::vector<msgcn::Scene> scenes;
  for (std::size_t s = 0; s < count; ++s) {
    msgcn::Scene scene;
    scene.t_obs = t_obs;
    scene.t_pred = t_pred;
    scene.scale = 10.0;
    const std::size_t n = 2 + rng.index(3);
    std::vector<double> start, vel;
    for (std::size_t i = 0; i < n; ++i) {
      scene.agent_ids.push_back(static_cast<std::int64_t>(100 * s + i));
      scene.class_ids.push_back(static_cast<int>(rng.index(6)));
      const double speed = rng.uniform(speed_lo, speed_hi);
      const double heading = rng.uniform(0.0, 6.283185307179586);
      start.push_back(rng.uniform(0.0, 40.0));
      start.push_back(rng.uniform(0.0, 40.0));
      vel.push_back(speed * std::cos(heading));
      vel.push_back(speed * std::sin(heading));
    }
    scene.positions.resize(scene.t_total() * n * 2);
    for (std::size_t t = 0; t < scene.t_total(); ++t)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k)
          scene.pos(t, i, k) = start[i * 2 + k] + vel[i * 2 + k] * static_cast<double>(t);
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Strict-enough XML well-formedness check: prolog/comments allowed, tags
/// must balance, attributes must be quoted. Used as the SVG oracle.
inline bool xml_well_formed(const std::string& s, std::string* why = nullptr) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  auto fail = [&](const std::string& m) {
    if (why) *why = m + " at byte " + std::to_string(i);
    return false;
  };
  while (i < s.size()) {
    if (s[i] != '<') {
      ++i;
      continue;
    }
    if (s.compare(i, 4, "<!--") == 0) {
      const auto end = s.find("-->", i + 4);
      if (end == std::string::npos) return fail("unterminated comment");
      i = end + 3;
      continue;
    }
    if (s.compare(i, 2, "<?") == 0) {
      const auto end = s.find("?>", i + 2);
      if (end == std::string::npos) return fail("unterminated declaration");
      i = end + 2;
      continue;
    }
    bool closing = false;
    std::size_t j = i + 1;
    if (j < s.size() && s[j] == '/') {
      closing = true;
      ++j;
    }
    const std::size_t name_start = j;
    while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' ||
                            s[j] == ':' || s[j] == '-'))
      ++j;
    if (j == name_start) return fail("empty tag name");
    const std::string name = s.substr(name_start, j - name_start);
    bool self_closing = false;
    while (j < s.size() && s[j] != '>') {
      if (std::isspace(static_cast<unsigned char>(s[j]))) {
        ++j;
        continue;
      }
      if (s[j] == '/') {
        self_closing = true;
        ++j;
        continue;
      }
      if (closing) return fail("attributes in closing tag");
      const std::size_t attr_start = j;
      while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '-' ||
                              s[j] == ':' || s[j] == '_'))
        ++j;
      if (j == attr_start) return fail("bad attribute name");
      if (j >= s.size() || s[j] != '=') return fail("attribute missing '='");
      ++j;
      if (j >= s.size() || (s[j] != '"' && s[j] != '\'')) return fail("unquoted attribute");
      const char quote = s[j];
      ++j;
      while (j < s.size() && s[j] != quote) {
        if (s[j] == '<') return fail("'<' inside attribute value");
        ++j;
      }
      if (j >= s.size()) return fail("unterminated attribute value");
      ++j;
    }
    if (j >= s.size()) return fail("unterminated tag");
    ++j;
    if (closing) {
      if (self_closing) return fail("malformed closing tag");
      if (stack.empty() || stack.back() != name) return fail("mismatched closing tag " + name);
      stack.pop_back();
    } else if (!self_closing) {
      stack.push_back(name);
    }
    i = j;
  }
  if (!stack.empty()) return fail("unclosed element " + stack.front());
  return true;
}

}  // namespace testutil
