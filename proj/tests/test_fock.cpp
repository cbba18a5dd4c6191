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
#include "dlcz/qkd.hpp"

namespace dlcz::fock {
namespace {

CVector basis(int d, int n) {
  CVector v = CVector::Zero(d);
  v(n) = 1.0;
  return v;
}

CVector two_mode(int d, int a, int b) {
  CVector v = CVector::Zero(d * d);
  v(a * d + b) = 1.0;
  return v;
}

FockOperator random_state(std::mt19937_64& rng, std::vector<int> dims) {
  int n = 1;
  for (int d : dims) n *= d;
  std::normal_distribution<double> g;
  CMatrix x(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x(i, j) = {g(rng), g(rng)};
  CMatrix rho = x * x.adjoint();
  rho /= rho.trace();
  return {rho, std::move(dims)};
}

double mean_photons(const FockOperator& rho, int mode) {
  double m = 0.0;
  for (int i = 0; i < rho.size(); ++i) m += detail::digits(i, rho.dims)[static_cast<std::size_t>(mode)] * rho.mat(i, i).real();
  return m;
}

SystemParams params(double pc, double l, Detector det) {
  SystemParams p;
  p.p_c = pc;
  p.distance_km = l;
  p.detector = det;
  return p;
}

TEST(Source, VacuumAndNorm) {
  const auto v = source_pair_state(0.0, 3);
  EXPECT_DOUBLE_EQ(std::abs(v(0)), 1.0);
  EXPECT_NEAR(v.norm(), 1.0, 1e-15);
  const double p = 0.3;
  const int n = 4;
  double raw = 0.0;
  for (int k = 0; k <= n; ++k) raw += (1.0 - p) * std::pow(p, k);
  EXPECT_NEAR(raw, 1.0 - std::pow(p, n + 1), 1e-15);
  const auto c = source_amplitudes(p, n);
  EXPECT_NEAR(c[1] / c[0], std::sqrt(p), 1e-15);
  EXPECT_THROW(source_amplitudes(1.0, 3), std::invalid_argument);
  for (double pc : {0.001, 0.01, 0.2}) {
    const int k = cutoff_for(pc);
    EXPECT_LT(std::pow(pc, k + 1), 1e-12);
    EXPECT_GE(std::pow(pc, k), 1e-12 * (1.0 - 1e-9));
  }
  EXPECT_EQ(cutoff_for(0.0), 0);
}

TEST(Loss, IdentityVacuumAndMeanScaling) {
  std::mt19937_64 rng(1);
  const auto rho = random_state(rng, {4, 3});
  EXPECT_NEAR((apply_loss(rho, 0, 1.0).mat - rho.mat).norm(), 0.0, 1e-14);
  const auto one = density(basis(3, 1), {3});
  const auto lost = apply_loss(one, 0, 0.0);
  EXPECT_NEAR(std::abs(lost.mat(0, 0) - 1.0), 0.0, 1e-15);
  const double eta = 0.37;
  const auto out = apply_loss(rho, 0, eta);
  EXPECT_NEAR(std::abs(out.trace() - 1.0), 0.0, 1e-14);
  EXPECT_NEAR(mean_photons(out, 0), eta * mean_photons(rho, 0), 1e-13);
  EXPECT_NEAR(mean_photons(out, 1), mean_photons(rho, 1), 1e-13);
}

TEST(BeamSplitter, SinglePhotonAndHongOuMandel) {
  const int d = 3;
  const auto one = beam_splitter_50_50(density(two_mode(d, 1, 0), {d, d}), 0, 1);
  const int dout = one.dims[0];
  EXPECT_EQ(dout, 2 * d - 1);
  EXPECT_NEAR(one.mat(1 * dout + 0, 1 * dout + 0).real(), 0.5, 1e-15);
  EXPECT_NEAR(one.mat(0 * dout + 1, 0 * dout + 1).real(), 0.5, 1e-15);
  EXPECT_NEAR(std::abs(one.mat(1 * dout + 0, 0 * dout + 1)), 0.5, 1e-15);

  const auto hom = beam_splitter_50_50(density(two_mode(d, 1, 1), {d, d}), 0, 1);
  EXPECT_NEAR(std::abs(hom.mat(1 * dout + 1, 1 * dout + 1)), 0.0, 1e-15);
  EXPECT_NEAR(hom.mat(2 * dout + 0, 2 * dout + 0).real(), 0.5, 1e-15);
  EXPECT_NEAR(hom.mat(0 * dout + 2, 0 * dout + 2).real(), 0.5, 1e-15);
  EXPECT_THROW(beam_splitter_50_50(hom, 0, 0), std::invalid_argument);
}

TEST(BeamSplitter, CommutesWithEqualLoss) {
  std::mt19937_64 rng(2);
  const auto rho = random_state(rng, {3, 3});
  const double eta = 0.6;
  const auto a = beam_splitter_50_50(apply_loss(apply_loss(rho, 0, eta), 1, eta), 0, 1);
  const auto b = apply_loss(apply_loss(beam_splitter_50_50(rho, 0, 1), 0, eta), 1, eta);
  EXPECT_NEAR((a.mat - b.mat).norm(), 0.0, 1e-12);
}

TEST(Povm, ResolvesIdentity) {
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    const CMatrix dark = click_povm(det, false, 6, 0.4);
    const CMatrix click = click_povm(det, true, 6, 0.4);
    if (det == Detector::NRPD) {
      EXPECT_NEAR((dark + click - CMatrix::Identity(6, 6)).norm(), 0.0, 1e-15);
    } else {
      // exactly-one and none do not exhaust the outcomes
      EXPECT_NEAR(dark(2, 2).real() + click(2, 2).real(), 0.36 + 2 * 0.4 * 0.6, 1e-15);
    }
  }
}

TEST(Povm, UnitEfficiencyIsExact) {
  const CMatrix one = click_povm(Detector::PNRD, true, 4, 1.0);
  EXPECT_EQ(one.diagonal().real(), Eigen::Vector4d(0.0, 1.0, 0.0, 0.0));
  const CMatrix none = click_povm(Detector::NRPD, false, 4, 1.0);
  EXPECT_EQ(none.diagonal().real(), Eigen::Vector4d(1.0, 0.0, 0.0, 0.0));
}

TEST(Povm, CoherentStateClickStatistics) {
  // photon statistics of a coherent state behind a detector of efficiency eta
  const int d = 30;
  const double mu = 0.8, eta = 0.6;
  CVector psi(d);
  double fact = 1.0;
  for (int n = 0; n < d; ++n) {
    if (n > 0) fact *= n;
    psi(n) = std::exp(-mu / 2.0) * std::pow(std::sqrt(mu), n) / std::sqrt(fact);
  }
  const auto rho = density(psi, {d});
  const double m = eta * mu;
  EXPECT_NEAR((click_povm(Detector::NRPD, false, d, eta) * rho.mat).trace().real(), std::exp(-m), 1e-12);
  EXPECT_NEAR((click_povm(Detector::PNRD, true, d, eta) * rho.mat).trace().real(), m * std::exp(-m), 1e-12);
}

TEST(Povm, PullbackMatchesExplicitBeamSplitter) {
  std::mt19937_64 rng(3);
  const auto rho = random_state(rng, {3, 3});
  const auto out = beam_splitter_50_50(rho, 0, 1);
  const int dout = out.dims[0];
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    const CMatrix pulled = pulled_back_povm(det, true, false, 3, 3, 0.7);
    CMatrix direct = CMatrix::Zero(dout * dout, dout * dout);
    const CMatrix px = click_povm(det, true, dout, 0.7), py = click_povm(det, false, dout, 0.7);
    for (int a = 0; a < dout; ++a)
      for (int b = 0; b < dout; ++b) direct(a * dout + b, a * dout + b) = px(a, a) * py(b, b);
    EXPECT_NEAR(std::abs((pulled * rho.mat).trace() - (direct * out.mat).trace()), 0.0, 1e-13);
  }
}

TEST(OracleLink, ReferenceValues) {
  SystemParams p;
  p.p_c = 0.01;
  p.eta_d = 0.5;  // zero-length segment: eta_s = 0.5
  const auto o = oracle_link_metrics(p, 0.0);
  EXPECT_NEAR(o.herald_prob, 0.0099495, 1e-6);
  EXPECT_NEAR(o.fidelity, 0.985075, 1e-6);
  EXPECT_NEAR(o.branch_prob[0], o.branch_prob[1], 1e-15);
  p.p_c = 1e-4;
  EXPECT_NEAR(oracle_link_metrics(p, 0.0).fidelity, 1.0, 1e-3);
}

TEST(OracleLink, StatesAreValid) {
  const auto o = oracle_link_metrics(params(0.05, 100.0, Detector::NRPD), 100.0);
  for (const auto& rho : o.states) {
    EXPECT_NEAR(std::abs(rho.trace() - 1.0), 0.0, 1e-12);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(rho.mat));
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
  }
}

TEST(OracleSwap, SymmetricAndCapped) {
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    const auto o = oracle_swap_metrics(params(0.02, 200.0, det));
    ASSERT_EQ(o.outcome_prob.size(), 8u);
    for (double x : o.outcome_prob) EXPECT_NEAR(x, o.outcome_prob[0], 1e-10);
    for (double x : o.outcome_fidelity) EXPECT_NEAR(x, o.outcome_fidelity[0], 1e-10);
  }
  auto p = params(1e-6, 100.0, Detector::PNRD);
  EXPECT_NEAR(oracle_swap_metrics(p).fidelity, 1.0 / (2.0 - 0.35), 1e-4);
}

TEST(OracleQkd, IdealBellInputHasNoErrors) {
  const FockOperator bell{bell_vector(2, -1) * bell_vector(2, -1).adjoint(), {2, 2}};
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    const auto t = qkd_patterns(bell, bell, det, 1.0);
    const auto [click, err] = sifted_probabilities(t, det);
    EXPECT_NEAR(err, 0.0, 1e-15);
    EXPECT_NEAR(click, 0.5, 1e-14);
  }
  // pairs of opposite phase anticorrelate every sifted bit
  const FockOperator other{bell_vector(2, 1) * bell_vector(2, 1).adjoint(), {2, 2}};
  const auto [click, err] = sifted_probabilities(qkd_patterns(bell, other, Detector::PNRD, 1.0), Detector::PNRD);
  EXPECT_NEAR(err, click, 1e-14);
}

TEST(OracleQkd, ThresholdPatternsSumToOne) {
  const auto link = oracle_link_metrics(params(0.03, 80.0, Detector::NRPD), 80.0);
  const auto t = qkd_patterns(link.states[0], link.states[0], Detector::NRPD, 0.35);
  double sum = 0.0;
  for (double x : t) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(OracleQkd, AgreesWithEngine) {
  for (auto det : {Detector::PNRD, Detector::NRPD}) {
    const auto p = params(0.01, 150.0, det);
    for (auto sc : {Scenario::Direct, Scenario::OneRepeater}) {
      const auto o = oracle_qkd_metrics(p, sc);
      const auto e = qkd_report(p, sc);
      EXPECT_NEAR(o.qber, e.qber, 1e-6 * e.qber);
      EXPECT_NEAR(o.p_click, e.p_click, 1e-6 * e.p_click);
      EXPECT_NEAR(o.rate, e.rate, 1e-6 * e.rate);
    }
  }
}

}  // namespace
}  // namespace dlcz::fock
