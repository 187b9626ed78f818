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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "msgcn/dataio.hpp"
#include "msgcn/rng.hpp"
#include "testutil.hpp"

using msgcn::CanonicalRow;
using msgcn::Scene;
using msgcn::WindowConfig;

namespace {

std::vector<CanonicalRow> track(std::int64_t agent, int class_id, std::int64_t first_frame,
                                std::size_t count, double x0 = 0.0, double y0 = 0.0,
                                double vx = 1.0, double vy = 0.5) {
  std::vector<CanonicalRow> rows(count);
  for (std::size_t t = 0; t < count; ++t) {
    rows[t] = {first_frame + static_cast<std::int64_t>(t), agent,
               x0 + vx * static_cast<double>(t), y0 + vy * static_cast<double>(t), class_id};
  }
  return rows;
}

void append(std::vector<CanonicalRow>& all, const std::vector<CanonicalRow>& more) {
  all.insert(all.end(), more.begin(), more.end());
}

}  // namespace

TEST_CASE("convert_sdd: bounding-box center, stride filter, lost filter") {
  std::istringstream in(
      "7 100 200 140 260 24 0 0 0 \"Car\"\n"
      "7 100 200 140 260 25 0 0 0 \"Car\"\n"     // frame not on stride
      "8 0 0 10 10 24 1 0 0 \"Pedestrian\"\n"    // lost
      "9 0 0 2 2 12 0 1 1 \"Biker\"\n");
  auto rows = msgcn::convert_sdd(in, 12);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].frame == 12);
  CHECK(rows[0].agent_id == 9);
  CHECK(rows[0].class_id == 1);  // Biker
  CHECK(rows[1] == CanonicalRow{24, 7, 120.0, 230.0, 3});
}

TEST_CASE("convert_sdd: unknown label and malformed lines carry line numbers") {
  {
    std::istringstream in("1 0 0 2 2 0 0 0 0 \"Car\"\n2 0 0 2 2 0 0 0 0 \"Dragon\"\n");
    try {
      msgcn::convert_sdd(in, 1);
      FAIL("expected ParseError");
    } catch (const msgcn::ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":2") != std::string::npos);
      CHECK(msg.find("Dragon") != std::string::npos);
    }
  }
  {
    std::istringstream in("1 0 0 oops 2 0 0 0 0 \"Car\"\n");
    CHECK_THROWS_AS(msgcn::convert_sdd(in, 1), msgcn::ParseError);
  }
  {
    std::istringstream in("1 0 0 2 2 0 0 0 0 Car\n");  // unquoted label
    CHECK_THROWS_AS(msgcn::convert_sdd(in, 1), msgcn::ParseError);
  }
}

TEST_CASE("convert_sdd: class change per agent is a hard error") {
  std::istringstream in(
      "1 0 0 2 2 0 0 0 0 \"Car\"\n"
      "1 0 0 2 2 1 0 0 0 \"Bus\"\n");
  CHECK_THROWS_AS(msgcn::convert_sdd(in, 1), msgcn::ParseError);
}

TEST_CASE("convert_sdd is order-insensitive up to output sort") {
  const std::vector<std::string> lines = {
      "5 10 10 20 20 0 0 0 0 \"Skater\"",
      "3 0 0 4 4 0 0 0 0 \"Cart\"",
      "5 12 12 22 22 12 0 0 0 \"Skater\"",
      "3 1 1 5 5 12 0 0 0 \"Cart\"",
  };
  auto parse = [](const std::vector<std::string>& ls) {
    std::string joined;
    for (const auto& l : ls) joined += l + "\n";
    std::istringstream in(joined);
    return msgcn::convert_sdd(in, 12);
  };
  auto shuffled = lines;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(parse(lines) == parse(shuffled));
}

TEST_CASE("canonical TSV round trip is lossless") {
  msgcn::Rng rng(21);
  std::vector<CanonicalRow> rows;
  for (int i = 0; i < 40; ++i) {
    rows.push_back({static_cast<std::int64_t>(rng.next_u64() % 1000),
                    static_cast<std::int64_t>(rng.next_u64() % 50),
                    rng.uniform(-1e6, 1e6) / 3.0, rng.uniform(0, 1) * 1e-7,
                    static_cast<int>(rng.index(6))});
  }
  std::sort(rows.begin(), rows.end(), [](const CanonicalRow& a, const CanonicalRow& b) {
    return std::tie(a.frame, a.agent_id) < std::tie(b.frame, b.agent_id);
  });
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const CanonicalRow& a, const CanonicalRow& b) {
                           return a.frame == b.frame && a.agent_id == b.agent_id;
                         }),
             rows.end());
  // Force one agent to a single class to satisfy the per-agent invariant.
  for (auto& r : rows) r.class_id = static_cast<int>(r.agent_id % 6);

  std::ostringstream out;
  msgcn::write_canonical_tsv(out, rows);
  std::istringstream in(out.str());
  CHECK(msgcn::read_canonical_tsv(in) == rows);
}

TEST_CASE("read_canonical_tsv rejects bad rows with locations") {
  std::istringstream in("# header\n1\t2\t3.0\t4.0\t1\n1\t3\t3.0\tnope\t1\n");
  try {
    msgcn::read_canonical_tsv(in, "data.tsv");
    FAIL("expected ParseError");
  } catch (const msgcn::ParseError& e) {
    CHECK(std::string(e.what()).find("data.tsv:3") != std::string::npos);
  }
}

TEST_CASE("make_windows: single agent spanning exactly one window") {
  WindowConfig cfg;
  cfg.scale = 1.0;
  auto scenes = msgcn::make_windows(track(1, 0, 100, 20), cfg);
  REQUIRE(scenes.size() == 1);
  CHECK(scenes[0].num_agents() == 1);
  CHECK(scenes[0].t_total() == 20);
}

TEST_CASE("make_windows: agent with a gap is excluded from affected windows") {
  WindowConfig cfg;
  std::vector<CanonicalRow> rows = track(1, 0, 0, 20);
  append(rows, track(2, 1, 0, 20, 5.0, 5.0));
  // Agent 2 misses frame 10.
  rows.erase(std::remove_if(rows.begin(), rows.end(),
                            [](const CanonicalRow& r) { return r.agent_id == 2 && r.frame == 10; }),
             rows.end());
  auto scenes = msgcn::make_windows(rows, cfg);
  REQUIRE(scenes.size() == 1);
  CHECK(scenes[0].agent_ids == std::vector<std::int64_t>{1});
}

TEST_CASE("make_windows: window count follows span - t_total + 1") {
  WindowConfig cfg;
  std::vector<CanonicalRow> rows = track(1, 0, 0, 21);
  append(rows, track(2, 3, 0, 21, 9.0, 9.0));
  auto scenes = msgcn::make_windows(rows, cfg);
  REQUIRE(scenes.size() == 2);
  for (const Scene& s : scenes) CHECK(s.num_agents() == 2);
}

TEST_CASE("make_windows: empty output when nothing spans a window") {
  WindowConfig cfg;
  CHECK(msgcn::make_windows(track(1, 0, 0, 19), cfg).empty());
  CHECK(msgcn::make_windows({}, cfg).empty());
}

TEST_CASE("make_windows normalizes by scale") {
  WindowConfig cfg;
  cfg.scale = 10.0;
  auto scenes = msgcn::make_windows(track(1, 2, 0, 20, 120.0, 30.0, 0.0, 0.0), cfg);
  REQUIRE(scenes.size() == 1);
  CHECK(scenes[0].pos(0, 0, 0) == doctest::Approx(12.0));
  CHECK(scenes[0].pos(0, 0, 1) == doctest::Approx(3.0));
}

TEST_CASE("every produced scene satisfies full presence (randomized gaps)") {
  msgcn::Rng rng(22);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<CanonicalRow> rows;
    const std::size_t n_agents = 1 + rng.index(5);
    const std::size_t span = 20 + rng.index(15);
    std::vector<std::vector<bool>> present(n_agents, std::vector<bool>(span, false));
    for (std::size_t a = 0; a < n_agents; ++a) {
      auto t = track(static_cast<std::int64_t>(a), static_cast<int>(rng.index(6)), 0, span,
                     rng.uniform(0, 100), rng.uniform(0, 100));
      for (std::size_t f = 0; f < span; ++f) {
        if (rng.uniform() < 0.15) continue;  // random gap
        present[a][f] = true;
        rows.push_back(t[f]);
      }
    }
    WindowConfig cfg;
    auto scenes = msgcn::make_windows(rows, cfg);
    // Reconstruct the unique-frame list the windower saw.
    std::vector<std::int64_t> frames;
    for (std::size_t f = 0; f < span; ++f) {
      bool any = false;
      for (std::size_t a = 0; a < n_agents; ++a) any = any || present[a][f];
      if (any) frames.push_back(static_cast<std::int64_t>(f));
    }
    std::size_t window_starts = frames.size() >= 20 ? frames.size() - 20 + 1 : 0;
    std::size_t expected = 0;
    for (std::size_t s = 0; s < window_starts; ++s) {
      std::size_t full_agents = 0;
      for (std::size_t a = 0; a < n_agents; ++a) {
        bool full = true;
        for (std::size_t t = 0; t < 20; ++t)
          full = full && present[a][static_cast<std::size_t>(frames[s + t])];
        if (full) ++full_agents;
      }
      if (full_agents > 0) ++expected;
    }
    CHECK(scenes.size() == expected);
    for (const Scene& sc : scenes) {
      for (std::size_t i = 0; i < sc.num_agents(); ++i) {
        const std::size_t a = static_cast<std::size_t>(sc.agent_ids[i]);
        // Positions must match the source rows frame by frame: full presence.
        for (std::size_t t = 0; t < sc.t_total(); ++t) {
          const double x = sc.pos(t, i, 0) * sc.scale;
          bool found = false;
          for (const CanonicalRow& r : rows)
            found = found || (r.agent_id == sc.agent_ids[i] && std::fabs(r.x - x) < 1e-9);
          CHECK(found);
        }
        CHECK(a < n_agents);
      }
    }
  }
}

TEST_CASE("make_windows rejects duplicate (frame, agent) pairs") {
  auto rows = track(1, 0, 0, 20);
  rows.push_back(rows[5]);
  CHECK_THROWS_AS(msgcn::make_windows(rows, WindowConfig{}), msgcn::ParseError);
}

TEST_CASE("denormalize") {
  CHECK(msgcn::denormalize({12.0}, 10.0)[0] == 120.0);
  CHECK(msgcn::denormalize({3.5, -2.0}, 1.0) == std::vector<double>{3.5, -2.0});
  CHECK_THROWS_AS(msgcn::denormalize({1.0}, 0.0), msgcn::ConfigError);
  CHECK_THROWS_AS(msgcn::denormalize({1.0}, -2.0), msgcn::ConfigError);

  msgcn::Rng rng(23);
  std::vector<double> pos(50);
  for (double& p : pos) p = rng.uniform(-500, 500);
  std::vector<double> norm(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) norm[i] = pos[i] / 10.0;
  auto back = msgcn::denormalize(norm, 10.0);
  for (std::size_t i = 0; i < pos.size(); ++i) CHECK(std::fabs(back[i] - pos[i]) < 1e-9);
}

TEST_CASE("label table matches the agent classes") {
  CHECK(msgcn::class_id_from_label("Pedestrian") == 0);
  CHECK(msgcn::class_id_from_label("Biker") == 1);
  CHECK(msgcn::class_id_from_label("Cart") == 2);
  CHECK(msgcn::class_id_from_label("Car") == 3);
  CHECK(msgcn::class_id_from_label("Skater") == 4);
  CHECK(msgcn::class_id_from_label("Bus") == 5);
  CHECK(msgcn::class_id_from_label("pedestrian") == -1);
}
