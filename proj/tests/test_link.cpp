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

#include <random>

#include "dlcz/fock.hpp"
#include "dlcz/link.hpp"

namespace dlcz {
namespace {

using MF = MeasurementFactor;

// eta_d = 0.5 over a zero-length segment gives eta_s = 0.5.
SystemParams half_efficiency(double pc, Detector det) {
  SystemParams p;
  p.p_c = pc;
  p.eta_d = 0.5;
  p.detector = det;
  return p;
}

TEST(Params, DerivedQuantities) {
  SystemParams p;
  p.eta_d = 1.0;
  const auto d0 = derived_params(p, 0.0);
  EXPECT_DOUBLE_EQ(d0.eta, 1.0);
  EXPECT_DOUBLE_EQ(d0.eta_s, 1.0);
  EXPECT_DOUBLE_EQ(d0.alpha, 1.0);
  EXPECT_NEAR(derived_params(p, 50.0).eta, std::exp(-1.0), 1e-15);
  EXPECT_NEAR(derived_params(half_efficiency(0.01, Detector::PNRD), 0.0).alpha, 1.0 / 0.995, 1e-15);
  EXPECT_NEAR(p.eta_m(), 0.7, 1e-15);
  p.eta_m_override = 0.9;
  EXPECT_DOUBLE_EQ(p.eta_m(), 0.9);
}

TEST(Params, Validation) {
  SystemParams p;
  p.p_c = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.p_c = 0.01;
  p.eta_d = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p.eta_d = 0.5;
  p.distance_km = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  EXPECT_THROW(parse_detector("spad"), std::invalid_argument);
  EXPECT_EQ(parse_scenario("repeater"), Scenario::OneRepeater);
}

TEST(LinkClosedForm, ReferenceValues) {
  const auto pn = half_efficiency(0.01, Detector::PNRD);
  const auto nr = half_efficiency(0.01, Detector::NRPD);
  EXPECT_NEAR(link_fidelity(pn, 0.0), 0.985074875, 1e-9);
  EXPECT_NEAR(link_fidelity(nr, 0.0), 0.980124750, 1e-9);
  EXPECT_NEAR(herald_probability(pn, 0.0), 0.009801 / 0.985074875, 1e-12);
  EXPECT_NEAR(herald_probability(nr, 0.0), 0.0099 / 0.990025, 1e-12);
  EXPECT_NEAR(herald_probability(pn, 0.0), 0.0099495, 1e-7);
  EXPECT_NEAR(herald_probability(nr, 0.0), 0.0099997, 1e-7);
  EXPECT_DOUBLE_EQ(herald_probability(half_efficiency(0.0, Detector::PNRD), 0.0), 0.0);
  EXPECT_NEAR(link_fidelity(half_efficiency(1e-9, Detector::NRPD), 0.0), 1.0, 1e-8);
}

TEST(LinkState, NormalizedAndIdealLimit) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.6);
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    for (int j = 1; j <= 2; ++j) {
      const auto cf = post_herald_charfun(half_efficiency(0.02, det), 30.0, j);
      EXPECT_NEAR(std::abs(evaluate(cf, CVector::Zero(2)) - 1.0), 0.0, 1e-15);
      const auto ideal = post_herald_charfun(half_efficiency(0.0, det), 30.0, j);
      for (int k = 0; k < 10; ++k) {
        CVector z(2);
        z << cplx(g(rng), g(rng)), cplx(g(rng), g(rng));
        const double s = parity_sign(j);
        const double expect = std::exp(-z.squaredNorm()) * (1.0 - 0.5 * std::norm(z(0) + s * z(1)));
        EXPECT_NEAR(std::abs(evaluate(ideal, z) - expect), 0.0, 1e-15);
      }
    }
  }
}

TEST(LinkState, NrpdFormsAgreePointwise) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.6);
  const auto p = half_efficiency(0.05, Detector::NRPD);
  for (int j = 1; j <= 2; ++j) {
    const auto a = post_herald_charfun(p, 40.0, j);
    const auto b = post_herald_charfun(p, 40.0, j, "A", "B", NrpdForm::Closed);
    for (int k = 0; k < 20; ++k) {
      CVector z(2);
      z << cplx(g(rng), g(rng)), cplx(g(rng), g(rng));
      EXPECT_NEAR(std::abs(evaluate(a, z) - evaluate(b, z)), 0.0, 1e-12);
    }
  }
}

TEST(LinkState, FidelityFromBellMomentMatchesClosedForm) {
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    for (double pc : {0.001, 0.01, 0.1}) {
      SystemParams p;
      p.p_c = pc;
      p.detector = det;
      EXPECT_NEAR(link_fidelity_engine(p, 120.0), link_fidelity(p, 120.0), 1e-12);
    }
  }
}

// Heralding from the two-mode squeezed sources, loss and the beam splitter
// reproduces the closed forms and the post-herald states.
TEST(EnginePath, HeraldProbabilityAndStateFromSources) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.6);
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    for (double pc : {0.005, 0.05}) {
      SystemParams p;
      p.p_c = pc;
      p.detector = det;
      for (double seg : {10.0, 150.0}) {
        const double ref = herald_probability(p, seg);
        EXPECT_NEAR(herald_probability_engine(p, seg), ref, 1e-10 * ref);
        for (int j = 1; j <= 2; ++j) {
          const auto derived = post_herald_engine(p, seg, j);
          const auto printed = post_herald_charfun(p, seg, j);
          for (int k = 0; k < 10; ++k) {
            CVector z(2);
            z << cplx(g(rng), g(rng)), cplx(g(rng), g(rng));
            EXPECT_NEAR(std::abs(evaluate(derived, z) - evaluate(printed, z)), 0.0, 1e-10);
          }
        }
      }
    }
  }
}

TEST(EnginePath, RejectsZeroExcitation) {
  SystemParams p;
  p.p_c = 0.0;
  EXPECT_THROW(pre_herald_state(p, 10.0), std::invalid_argument);
}

TEST(LinkState, MatrixElementsAgainstFockOracle) {
  // segment 0 with eta_d = 0.5 gives eta_s = 0.5
  const auto p = half_efficiency(0.01, Detector::PNRD);
  const auto oracle = fock::oracle_link_metrics(p, 0.0, 6);
  for (int j = 1; j <= 2; ++j) {
    const auto cf = post_herald_charfun(p, 0.0, j);
    const auto& rho = oracle.states[static_cast<std::size_t>(j - 1)];
    const int d = rho.dims[0];
    const double vac = probability(cf, {MF::unit("A"), MF::unit("B")});
    EXPECT_NEAR(vac, rho.mat(0, 0).real(), 1e-6);
    // Re <01|rho|10> from the two Bell projections
    const double coherence =
        0.5 * (probability(cf, {MF::bell("A", "B", 1)}) - probability(cf, {MF::bell("A", "B", -1)}));
    EXPECT_NEAR(coherence, rho.mat(0 * d + 1, 1 * d + 0).real(), 1e-6);
  }
}

TEST(Werner, SwapFormula) {
  EXPECT_DOUBLE_EQ(werner_swap_fidelity(1.0), 1.0);
  EXPECT_DOUBLE_EQ(werner_swap_fidelity(0.25), 0.25);
  EXPECT_NEAR(werner_swap_fidelity(0.85), 0.73, 1e-15);
  EXPECT_THROW(werner_swap_fidelity(0.1), std::invalid_argument);
}

}  // namespace
}  // namespace dlcz
