// Copyright 2026 The dlcz-repeater Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "dlcz/optimize.hpp"

namespace dlcz {
namespace {

SystemParams params(double l, Detector det) {
  SystemParams p;
  p.distance_km = l;
  p.detector = det;
  return p;
}

TEST(GoldenSection, FindsParabolaPeak) {
  const auto r = golden_section_max([](double x) { return -(x - 0.3) * (x - 0.3); }, -1.0, 2.0, 1e-9);
  EXPECT_NEAR(r.x, 0.3, 1e-8);
  EXPECT_GT(r.evaluations, 10);
  EXPECT_THROW(golden_section_max([](double) { return 0.0; }, 1.0, 1.0, 1e-3), std::invalid_argument);
  EXPECT_THROW(golden_section_max([](double) { return 0.0; }, 0.0, 1.0, 0.0), std::invalid_argument);
}

TEST(Bisect, FindsRootAndRejectsBadBracket) {
  EXPECT_NEAR(bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0, 1e-12), std::sqrt(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(bisect([](double x) { return x; }, 0.0, 1.0, 1e-6), 0.0);
  EXPECT_THROW(bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0, 1e-6), std::invalid_argument);
}

TEST(OptimizeRate, SmoothPeak) {
  const auto r = optimize_rate([](double p) { return p * std::exp(-p / 0.02); });
  ASSERT_TRUE(r.found);
  EXPECT_FALSE(r.multimodal_fallback);
  EXPECT_NEAR(r.p_c, 0.02, 1e-3 * 0.02);
  EXPECT_EQ(static_cast<int>(r.trace.size()), r.evaluations);
}

TEST(OptimizeRate, TwoNearlyEqualPeaksUseGridRefinement) {
  auto bump = [](double p, double c) { return std::exp(-std::pow(std::log(p / c), 2)); };
  const auto r = optimize_rate([&](double p) { return bump(p, 0.001) + 0.98 * bump(p, 0.05); });
  ASSERT_TRUE(r.found);
  EXPECT_TRUE(r.multimodal_fallback);
  EXPECT_NEAR(r.p_c, 0.001, 0.01 * 0.001);
}

TEST(OptimizeRate, AllZeroIsReported) {
  const auto r = optimize_rate([](double) { return 0.0; });
  EXPECT_FALSE(r.found);
  OptimizerSettings bad;
  bad.pc_min = 0.3;
  EXPECT_THROW(optimize_rate([](double) { return 1.0; }, bad), std::invalid_argument);
}

TEST(OptimizePc, LongDistanceOptima) {
  struct Case {
    Detector det;
    Scenario sc;
    double expect;
  };
  for (const Case& c : {Case{Detector::PNRD, Scenario::Direct, 0.0243}, Case{Detector::NRPD, Scenario::Direct, 0.0194},
                        Case{Detector::PNRD, Scenario::OneRepeater, 0.0060},
                        Case{Detector::NRPD, Scenario::OneRepeater, 0.0049}}) {
    const auto r = optimize_pc(params(500.0, c.det), c.sc);
    ASSERT_TRUE(r.found);
    EXPECT_NEAR(r.p_c, c.expect, 0.15 * c.expect) << to_string(c.det) << " " << to_string(c.sc);
  }
}

TEST(OptimizePc, RoughlyDistanceIndependent) {
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    for (auto sc : {Scenario::Direct, Scenario::OneRepeater}) {
      double lo = 1.0, hi = 0.0;
      for (double l = 150.0; l <= 600.0; l += 150.0) {
        const double pc = optimize_pc(params(l, det), sc).p_c;
        lo = std::min(lo, pc);
        hi = std::max(hi, pc);
      }
      EXPECT_LT((hi - lo) / hi, 0.2) << to_string(det) << " " << to_string(sc);
    }
  }
}

TEST(OptimizePc, StableUnderGridRefinement) {
  for (auto sc : {Scenario::Direct, Scenario::OneRepeater}) {
    OptimizerSettings fine;
    fine.grid_points = 96;
    const auto a = optimize_pc(params(300.0, Detector::PNRD), sc);
    const auto b = optimize_pc(params(300.0, Detector::PNRD), sc, fine);
    EXPECT_LT(std::abs(a.p_c - b.p_c) / a.p_c, 1e-3);
  }
}

TEST(OptimizePc, OptimumDominatesBracket) {
  const auto base = params(250.0, Detector::NRPD);
  const auto r = optimize_pc(base, Scenario::Direct);
  for (double f : {0.97, 1.03}) {
    SystemParams p = base;
    p.p_c = r.p_c * f;
    EXPECT_GE(r.rate, scenario_rate(p, Scenario::Direct));
  }
  double best_grid = 0.0;
  for (std::size_t i = 0; i < 48; ++i) best_grid = std::max(best_grid, r.trace[i].second);
  EXPECT_GE(r.rate, best_grid);
}

}  // namespace
}  // namespace dlcz
