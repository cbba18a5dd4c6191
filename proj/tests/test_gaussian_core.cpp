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

#include "dlcz/gaussian_core.hpp"
#include "dlcz/link.hpp"

namespace dlcz {
namespace {

using MF = MeasurementFactor;

CharFun vacuum(const std::string& m, double q = 1.0) {
  CharFun cf({m});
  cf.add_term({1.0, CMatrix::Constant(1, 1, q), {}, {}});
  return cf;
}

// exp(-(|a|^2+|b|^2)) (1 - |a + s b|^2 / 2): single excitation shared by two modes.
CharFun bell_state(int s) {
  CharFun cf({"A", "B"});
  CVector v(2);
  v << 1.0, static_cast<double>(s);
  cf.add_term({1.0, CMatrix::Identity(2, 2), {}, {}});
  cf.add_term({-0.5, CMatrix::Identity(2, 2), {{v * v.adjoint()}}, {}});
  return cf;
}

double bell_scalar(cplx a, cplx b, int s) {
  return std::exp(-(std::norm(a) + std::norm(b))) * (1.0 - 0.5 * std::norm(a + static_cast<double>(s) * b));
}

CVector random_point(std::mt19937_64& rng, int n, double scale = 0.7) {
  std::normal_distribution<double> g(0.0, scale);
  CVector z(n);
  for (int i = 0; i < n; ++i) z(i) = {g(rng), g(rng)};
  return z;
}

TEST(CharFun, RejectsDuplicateLabelsAndBadTerms) {
  EXPECT_THROW(CharFun({"A", "A"}), std::invalid_argument);
  CharFun cf({"A"});
  EXPECT_THROW(cf.add_term({1.0, CMatrix::Identity(2, 2), {}, {}}), std::invalid_argument);
  CMatrix nh(1, 1);
  nh(0, 0) = cplx(1.0, 0.5);
  EXPECT_THROW(cf.add_term({1.0, nh, {}, {}}), std::invalid_argument);
  EXPECT_THROW(cf.mode_index("Z"), std::invalid_argument);
}

TEST(CharFun, PointwiseAgainstScalarFormula) {
  std::mt19937_64 rng(1);
  for (int s : {-1, 1}) {
    const auto cf = bell_state(s);
    for (int k = 0; k < 20; ++k) {
      const auto z = random_point(rng, 2);
      EXPECT_NEAR(std::abs(evaluate(cf, z) - bell_scalar(z(0), z(1), s)), 0.0, 1e-14);
    }
    // the Bell factor vanishes where a + s b = 0
    CVector z(2);
    z << cplx(0.3, 0.2), -static_cast<double>(s) * cplx(0.3, 0.2);
    EXPECT_NEAR(std::abs(evaluate(cf, z) - std::exp(-z.squaredNorm())), 0.0, 1e-15);
  }
}

TEST(Tensor, NormalizationAndTermCount) {
  const auto two = bell_state(1);
  CharFun three({"C"});
  for (double q : {1.0, 2.0, 3.0}) three.add_term({1.0 / 3.0, CMatrix::Constant(1, 1, q), {}, {}});
  const auto t = tensor(two, three);
  EXPECT_EQ(t.terms().size(), 6u);
  EXPECT_NEAR(std::abs(evaluate(t, CVector::Zero(3)) - 1.0), 0.0, 1e-15);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) {
    const auto z = random_point(rng, 3);
    const cplx prod = evaluate(two, z.head(2)) * evaluate(three, z.tail(1));
    EXPECT_NEAR(std::abs(evaluate(t, z) - prod), 0.0, 1e-12);
  }
  EXPECT_THROW(tensor(two, two), std::invalid_argument);
}

TEST(Substitute, IdentityAndScaling) {
  const auto cf = bell_state(-1);
  const auto same = substitute_linear(cf, CMatrix::Identity(2, 2), {"A", "B"});
  std::mt19937_64 rng(3);
  const auto z = random_point(rng, 2);
  EXPECT_NEAR(std::abs(evaluate(same, z) - evaluate(cf, z)), 0.0, 1e-15);

  const double eta = 0.7;
  CMatrix map = CMatrix::Identity(1, 1) * std::sqrt(eta);
  const auto scaled = substitute_linear(vacuum("A", 1.3), map, {"A"});
  EXPECT_NEAR(std::abs(scaled.terms()[0].exponent(0, 0) - 1.3 * eta), 0.0, 1e-15);
  EXPECT_THROW(substitute_linear(cf, CMatrix::Identity(3, 3), {"A", "B", "C"}), std::invalid_argument);
}

TEST(GaussianFactor, ZeroIsNeutralAndNonPsdRejected) {
  const auto cf = bell_state(1);
  const auto same = multiply_gaussian_factor(cf, CMatrix::Zero(2, 2));
  std::mt19937_64 rng(4);
  const auto z = random_point(rng, 2);
  EXPECT_NEAR(std::abs(evaluate(same, z) - evaluate(cf, z)), 0.0, 1e-15);
  EXPECT_THROW(multiply_gaussian_factor(cf, -CMatrix::Identity(2, 2)), std::invalid_argument);
}

TEST(BsmChannel, LosslessIsPureMixing) {
  const auto cf = bell_state(1);
  const auto out = apply_bsm_channel(cf, "A", "B", 1.0, 1.0, "X", "Y");
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto z = random_point(rng, 2);
    const double h = std::sqrt(0.5);
    EXPECT_NEAR(std::abs(evaluate(out, z) - bell_scalar(h * (z(1) - z(0)), h * (z(1) + z(0)), 1)), 0.0, 1e-12);
  }
}

TEST(BsmChannel, LossyAgainstHandSubstitution) {
  const double ed = 0.5, ec = 0.7;
  const auto cf = bell_state(-1);
  const auto out = apply_bsm_channel(cf, "A", "B", ec, ed, "X", "Y");
  EXPECT_NEAR(std::abs(evaluate(out, CVector::Zero(2)) - 1.0), 0.0, 1e-15);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const auto z = random_point(rng, 2);
    const cplx zm = std::sqrt(ed / 2.0) * (z(1) - z(0));
    const cplx zp = std::sqrt(ed / 2.0) * (z(1) + z(0));
    const double b = std::exp(-(1.0 - ed) * z.squaredNorm()) * std::exp(-(1.0 - ec) * (std::norm(zm) + std::norm(zp)));
    const double expect = bell_scalar(std::sqrt(ec) * zm, std::sqrt(ec) * zp, -1) * b;
    EXPECT_NEAR(std::abs(evaluate(out, z) - expect), 0.0, 1e-12);
  }
}

TEST(MomentIntegral, ElementaryKernels) {
  EXPECT_NEAR(probability(vacuum("A"), {MF::delta("A")}), 1.0, 1e-15);
  EXPECT_NEAR(probability(vacuum("A"), {MF::unit("A")}), 1.0, 1e-15);
  EXPECT_NEAR(probability(vacuum("A", 2.0), {MF::one_minus_abs_sq("A")}), 0.25, 1e-15);
  // thermal state with <n> = 1: P(0) = 1/2 and P(1) = 1/4
  EXPECT_NEAR(probability(vacuum("A", 2.0), {MF::unit("A")}), 0.5, 1e-15);
  EXPECT_NEAR(probability(vacuum("A", 2.0), {MF::delta_minus_one("A")}), 0.5, 1e-15);
}

TEST(MomentIntegral, BellStateProjections) {
  const auto cf = bell_state(1);
  EXPECT_NEAR(probability(cf, {MF::bell("A", "B", 1)}), 1.0, 1e-14);
  EXPECT_NEAR(probability(cf, {MF::bell("A", "B", -1)}), 0.0, 1e-14);
  EXPECT_NEAR(probability(cf, {MF::unit("A"), MF::unit("B")}), 0.0, 1e-14);  // no vacuum component
  EXPECT_NEAR(probability(cf, {MF::one_minus_abs_sq("A"), MF::delta("B")}), 0.5, 1e-14);
  EXPECT_NEAR(probability(cf, trace_kernels(cf)), 1.0, 1e-15);
}

TEST(MomentIntegral, CoverageIsChecked) {
  const auto cf = bell_state(1);
  EXPECT_THROW(probability(cf, {MF::delta("A")}), std::invalid_argument);
  EXPECT_THROW(probability(cf, {MF::delta("A"), MF::delta("A"), MF::delta("B")}), std::invalid_argument);
  EXPECT_THROW(probability(cf, {MF::delta("A"), MF::delta("B"), MF::delta("Q")}), std::invalid_argument);
}

TEST(PartialCondition, ProductStateReturnsMarginal) {
  const auto a = bell_state(1);
  const auto b = vacuum("C", 2.0);
  const auto cond = partial_condition(tensor(a, b), {MF::unit("C")});
  EXPECT_NEAR(cond.weight, 0.5, 1e-15);
  const auto marginal = cond.normalized();
  std::mt19937_64 rng(7);
  for (int k = 0; k < 10; ++k) {
    const auto z = random_point(rng, 2);
    EXPECT_NEAR(std::abs(evaluate(marginal, z) - evaluate(a, z)), 0.0, 1e-14);
  }
}

TEST(PartialCondition, WeightMatchesMomentIntegral) {
  SystemParams p;
  p.p_c = 0.03;
  const auto cf = pre_herald_state(p, 80.0);
  const auto kernels = herald_kernels(p.detector, 1);
  const auto cond = partial_condition(cf, kernels);
  auto full = kernels;
  full.push_back(MF::delta("A"));
  full.push_back(MF::delta("B"));
  EXPECT_NEAR(cond.weight, probability(cf, full), 1e-12 * cond.weight);
  EXPECT_NEAR(std::abs(evaluate(cond.normalized(), CVector::Zero(2)) - 1.0), 0.0, 1e-12);
}

TEST(Simplify, PreservesValues) {
  CharFun cf({"A"});
  cf.add_term({0.25, CMatrix::Constant(1, 1, 1.5), {}, {}});
  cf.add_term({0.75, CMatrix::Constant(1, 1, 1.5), {}, {}});
  const auto s = simplify(cf);
  EXPECT_LE(s.terms().size(), 1u);
  CVector z(1);
  z << cplx(0.4, -0.3);
  EXPECT_NEAR(std::abs(evaluate(s, z) - evaluate(cf, z)), 0.0, 1e-15);
}

}  // namespace
}  // namespace dlcz
