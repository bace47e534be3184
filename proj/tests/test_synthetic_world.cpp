#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include <json.hpp>

#include "stategate/synthetic_world.hpp"

using namespace stategate;

TEST(GenerateScene, DynamicFractionBoundaries) {
  EXPECT_TRUE(generate_scene(10, 4, 0.0f, 0.1f, 1).dynamic_regions.empty());
  Scene all = generate_scene(10, 4, 1.0f, 0.1f, 1);
  ASSERT_EQ(all.dynamic_regions.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all.dynamic_regions[i], i);
  EXPECT_EQ(generate_scene(10, 4, 0.35f, 0.1f, 1).dynamic_regions.size(), 3u);
}

TEST(GenerateScene, SameSeedSameScene) {
  Scene a = generate_scene(8, 5, 0.5f, 0.2f, 42), b = generate_scene(8, 5, 0.5f, 0.2f, 42);
  EXPECT_EQ(a.region_codes, b.region_codes);
  EXPECT_EQ(a.dynamic_regions, b.dynamic_regions);
  EXPECT_NE(generate_scene(8, 5, 0.5f, 0.2f, 43).region_codes, a.region_codes);
}

TEST(GenerateScene, RejectsBadParameters) {
  EXPECT_THROW(generate_scene(0, 4, 0.0f, 0.0f, 1), ConfigError);
  EXPECT_THROW(generate_scene(4, 4, 1.5f, 0.0f, 1), ConfigError);
  EXPECT_THROW(generate_scene(4, 4, 0.5f, -1.0f, 1), ConfigError);
}

TEST(StepStream, FullScheduleSeesEverything) {
  Scene s = generate_scene(6, 3, 0.0f, 0.0f, 1);
  CoverageSchedule full{CoverageKind::full, 2, 1};
  for (std::size_t t = 1; t <= 5; ++t) {
    StreamStep step = step_stream(s, full, t, 0.1f, 9);
    EXPECT_EQ(step.visible_regions, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  }
}

TEST(StepStream, NoiselessStaticFullObservationEqualsCodes) {
  Scene s = generate_scene(6, 3, 0.0f, 0.0f, 1);
  StreamStep step = step_stream(s, {CoverageKind::full, 1, 1}, 1, 0.0f, 9);
  EXPECT_EQ(step.observation, s.region_codes);
  EXPECT_EQ(step.truth_snapshot, s.region_codes);
}

TEST(StepStream, SlidingWindowCoversAllRegionsInRFrames) {
  const std::size_t r = 16;
  CoverageSchedule sw{CoverageKind::sliding_window, 4, 1};
  for (std::size_t start = 1; start <= 40; start += 7) {
    std::set<std::size_t> seen;
    for (std::size_t t = start; t < start + r; ++t)
      for (auto v : visible_regions(sw, r, t)) seen.insert(v);
    EXPECT_EQ(seen.size(), r);
  }
}

TEST(StepStream, SlidingWindowVisibilityIsPeriodicInClosedForm) {
  const std::size_t r = 16, w = 4;
  CoverageSchedule sw{CoverageKind::sliding_window, w, 1};
  for (std::size_t t = 1; t <= 64; ++t) {
    auto vis = visible_regions(sw, r, t);
    for (std::size_t i = 0; i < r; ++i) {
      const bool expected = (i + r - (t - 1) % r) % r < w;
      EXPECT_EQ(std::count(vis.begin(), vis.end(), i) == 1, expected) << "t=" << t << " region " << i;
    }
  }
}

TEST(StepStream, RevisitGivesFullCoverageEveryPeriod) {
  CoverageSchedule rv{CoverageKind::revisit, 2, 5};
  for (std::size_t t = 1; t <= 20; ++t) {
    const auto n = visible_regions(rv, 10, t).size();
    EXPECT_EQ(n, (t - 1) % 5 == 0 ? 10u : 2u) << t;
  }
}

TEST(StepStream, StaticRegionsStayConstantUnderDrift) {
  Scene s = generate_scene(10, 4, 0.5f, 0.3f, 3);
  const Matrix initial = s.region_codes;
  std::set<std::size_t> dynamic(s.dynamic_regions.begin(), s.dynamic_regions.end());
  CoverageSchedule sw{CoverageKind::sliding_window, 3, 1};
  StreamStep last;
  for (std::size_t t = 1; t <= 30; ++t) last = step_stream(s, sw, t, 0.1f, 5);
  for (std::size_t i = 0; i < 10; ++i) {
    const bool same = std::equal(last.truth_snapshot.row(i).begin(), last.truth_snapshot.row(i).end(), initial.row(i).begin());
    EXPECT_EQ(same, dynamic.count(i) == 0) << i;
  }
}

TEST(StepStream, InvisibleRowsAreZeroAndFlaggedAbsent) {
  Scene s = generate_scene(8, 3, 0.0f, 0.0f, 1);
  StreamStep step = step_stream(s, {CoverageKind::sliding_window, 3, 1}, 7, 0.05f, 2);
  std::set<std::size_t> vis(step.visible_regions.begin(), step.visible_regions.end());
  EXPECT_EQ(vis, (std::set<std::size_t>{6, 7, 0}));
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(step.present[i] != 0, vis.count(i) == 1);
    if (!vis.count(i)) {
      for (float x : step.observation.row(i)) EXPECT_EQ(x, 0.0f);
    }
  }
}

TEST(ObservationStream, SameSeedsSameStream) {
  auto make = [] {
    return ObservationStream(generate_scene(8, 3, 0.25f, 0.1f, 4), {CoverageKind::sliding_window, 2, 1}, 0.1f, 6);
  };
  ObservationStream a = make(), b = make();
  for (int t = 0; t < 20; ++t) {
    StreamStep x = a.next(), y = b.next();
    EXPECT_EQ(x.observation, y.observation);
    EXPECT_EQ(x.truth_snapshot, y.truth_snapshot);
  }
}

TEST(Trace, OneJsonObjectPerStep) {
  Scene s = generate_scene(4, 2, 0.0f, 0.0f, 1);
  std::ostringstream os;
  for (std::size_t t = 1; t <= 3; ++t) write_trace_line(os, step_stream(s, {CoverageKind::sliding_window, 2, 1}, t, 0.0f, 1));
  std::istringstream is(os.str());
  std::string line;
  std::size_t t = 0;
  while (std::getline(is, line)) {
    ++t;
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["t"].get<std::size_t>(), t);
    EXPECT_EQ(j["visible"].size(), 2u);
    EXPECT_EQ(j["observation"].size(), 2u);
    EXPECT_EQ(j["truth"].size(), 4u);
    const auto v0 = j["visible"][0].get<std::size_t>();
    EXPECT_NEAR(j["observation"][0][1].get<double>(), s.region_codes(v0, 1), 1e-7);
  }
  EXPECT_EQ(t, 3u);
}

TEST(FormatReal, NineSignificantDigitsFixed) {
  EXPECT_EQ(format_real(0.0), "0.00000000");
  EXPECT_EQ(format_real(1.0), "1.00000000");
  EXPECT_EQ(format_real(-2.5), "-2.50000000");
  EXPECT_EQ(format_real(123.456), "123.456000");
  EXPECT_EQ(format_real(0.000123456789), "0.000123456789");
  EXPECT_EQ(format_real(1234567890.0), "1234567890");
}
