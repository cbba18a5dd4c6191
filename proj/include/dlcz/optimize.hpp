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

// One-dimensional search used by the parameter studies: golden-section
// maximisation, bisection, and the excitation-probability optimiser.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dlcz/params.hpp"
#include "dlcz/qkd.hpp"

namespace dlcz {

struct GoldenResult {
  double x = 0.0;
  double fx = 0.0;
  int evaluations = 0;
};

/// Maximises a unimodal f on [a, b]; stops when b - a <= abs_tol.
inline GoldenResult golden_section_max(const std::function<double(double)>& f, double a, double b, double abs_tol) {
  if (!(a < b)) throw std::invalid_argument("golden section needs a < b");
  if (!(abs_tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  int evals = 2;
  while (b - a > abs_tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
    ++evals;
  }
  return fc >= fd ? GoldenResult{c, fc, evals} : GoldenResult{d, fd, evals};
}

/// Root of f on [a, b] with f(a), f(b) of opposite sign, to |b - a| <= abs_tol.
inline double bisect(const std::function<double(double)>& f, double a, double b, double abs_tol) {
  double fa = f(a);
  const double fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0)) throw std::invalid_argument("bisection bracket has no sign change");
  while (b - a > abs_tol) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (fm == 0.0) return m;
    if ((fm > 0.0) == (fa > 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

struct OptimizerSettings {
  double pc_min = 1e-4;
  double pc_max = 0.2;
  int grid_points = 48;
  double rel_tol = 1e-3;
};

struct OptimumPc {
  bool found = false;  // false: every rate on the grid is zero
  double p_c = 0.0;
  double rate = 0.0;
  bool multimodal_fallback = false;
  int evaluations = 0;
  std::vector<std::pair<double, double>> trace;  // (p_c, rate) in evaluation order
};

/// Maximises rate(p_c) on a log grid and refines with golden section in
/// log p_c. If two grid maxima within 5% of each other are found, the
/// refinement is done by repeated local grid refinement around the best one.
inline OptimumPc optimize_rate(const std::function<double(double)>& rate, const OptimizerSettings& s = {}) {
  if (!(s.pc_min > 0.0 && s.pc_min < s.pc_max && s.pc_max < 1.0)) throw std::invalid_argument("bad p_c search range");
  if (s.grid_points < 3) throw std::invalid_argument("optimizer grid needs at least 3 points");
  OptimumPc out;
  auto eval = [&](double x) {
    const double p = std::exp(x);
    const double r = rate(p);
    out.trace.emplace_back(p, r);
    ++out.evaluations;
    return r;
  };

  const double lo = std::log(s.pc_min), hi = std::log(s.pc_max);
  const int n = s.grid_points;
  std::vector<double> xs(static_cast<std::size_t>(n)), rs(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    rs[static_cast<std::size_t>(i)] = eval(xs[static_cast<std::size_t>(i)]);
  }
  const auto best_it = std::max_element(rs.begin(), rs.end());
  if (!(*best_it > 0.0)) return out;
  std::size_t best = static_cast<std::size_t>(best_it - rs.begin());

  std::vector<std::size_t> local_max;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const bool left = i == 0 || rs[i] > rs[i - 1];
    const bool right = i + 1 == rs.size() || rs[i] >= rs[i + 1];
    if (left && right && rs[i] > 0.0) local_max.push_back(i);
  }
  for (std::size_t i : local_max) {
    if (i != best && rs[i] >= 0.95 * rs[best]) out.multimodal_fallback = true;
  }

  const double x_tol = 0.25 * std::log1p(s.rel_tol);
  double a = xs[best == 0 ? 0 : best - 1];
  double b = xs[std::min(best + 1, xs.size() - 1)];
  double bx = xs[best], br = rs[best];
  if (!out.multimodal_fallback) {
    const auto g = golden_section_max(eval, a, b, x_tol);
    if (g.fx > br) {
      bx = g.x;
      br = g.fx;
    }
  } else {
    while (b - a > x_tol) {
      const int m = 8;
      double nbx = bx, nbr = br;
      for (int i = 0; i <= m; ++i) {
        const double x = a + (b - a) * i / m;
        const double r = eval(x);
        if (r > nbr) {
          nbr = r;
          nbx = x;
        }
      }
      const double step = (b - a) / m;
      bx = nbx;
      br = nbr;
      a = std::max(a, bx - step);
      b = std::min(b, bx + step);
    }
  }
  out.found = true;
  out.p_c = std::exp(bx);
  out.rate = br;
  return out;
}

inline double scenario_rate(const SystemParams& p, Scenario scenario, const QkdOptions& opt = {}) {
  return scenario == Scenario::Direct ? rate_no_repeater(p, opt) : rate_one_repeater(p, opt);
}

/// Optimal excitation probability for the QKD rate of `scenario`.
inline OptimumPc optimize_pc(const SystemParams& base, Scenario scenario, const OptimizerSettings& s = {},
                             const QkdOptions& opt = {}) {
  return optimize_rate(
      [&](double pc) {
        SystemParams p = base;
        p.p_c = pc;
        return scenario_rate(p, scenario, opt);
      },
      s);
}

}  // namespace dlcz
