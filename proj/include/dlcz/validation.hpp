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

// Self-checks behind the `validate` command: closed forms against the
// engine, the engine against the Fock oracle, and structural identities.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dlcz/appendix.hpp"
#include "dlcz/fock.hpp"
#include "dlcz/qkd.hpp"
#include "dlcz/repeater.hpp"
#include "dlcz/wick.hpp"

namespace dlcz::validation {

struct Check {
  std::string name;
  bool passed = false;
  double worst = 0.0;     // largest deviation seen (meaning depends on the check)
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

inline const std::vector<double> kCalibrationPc = {0.005, 0.01, 0.02};
inline const std::vector<double> kCalibrationL = {50.0, 100.0, 200.0};
inline const std::vector<Detector> kDetectors = {Detector::PNRD, Detector::NRPD};

namespace detail {

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Runs `body`, which returns the worst deviation and may append to `detail`;
/// records the time and compares with the tolerance. Exceptions fail the check.
inline Check timed(const std::string& name, double tol, const std::function<double(std::string&)>& body) {
  Check c;
  c.name = name;
  c.tolerance = tol;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    c.worst = body(c.detail);
    c.passed = c.worst <= tol;
  } catch (const std::exception& e) {
    c.passed = false;
    c.detail += std::string(c.detail.empty() ? "" : "; ") + "exception: " + e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return c;
}

inline SystemParams make(double pc, double distance, Detector det) {
  SystemParams p;
  p.p_c = pc;
  p.distance_km = distance;
  p.detector = det;
  return p;
}

inline std::string fmt(double x) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << x;
  return s.str();
}

/// Average Bell fidelity of the engine-derived post-herald states.
inline double engine_link_fidelity(const SystemParams& p, double segment) {
  double f = 0.0;
  for (int j = 1; j <= 2; ++j) {
    f += 0.5 * probability(post_herald_engine(p, segment, j), {MeasurementFactor::bell("A", "B", parity_sign(j))},
                           "engine link fidelity");
  }
  return f;
}

}  // namespace detail

/// Printed link fidelity and heralding probability against the engine over
/// the 3x3x2 calibration grid. `perturb` scales the closed forms (self-test).
inline Check check_closed_forms(double perturb = 1.0, double tol = 1e-9) {
  return detail::timed("closed-form link metrics", tol, [&](std::string& d) {
    double worst = 0.0;
    for (auto det : kDetectors) {
      for (double pc : kCalibrationPc) {
        for (double l : kCalibrationL) {
          const auto p = detail::make(pc, l, det);
          const double f_closed = link_fidelity(p, l) * perturb;
          const double h_closed = herald_probability(p, l) * perturb;
          worst = std::max({worst, detail::rel(detail::engine_link_fidelity(p, l), f_closed),
                            detail::rel(link_fidelity_engine(p, l), f_closed),
                            detail::rel(herald_probability_engine(p, l), h_closed)});
        }
      }
    }
    d = "max relative deviation " + detail::fmt(worst);
    return worst;
  });
}

/// Engine against the Fock oracle at the calibration points. Links, swap and
/// direct QKD to 1e-6 relative, one-repeater QKD to 1e-5.
inline std::vector<Check> check_oracle_equivalence() {
  struct Acc {
    double worst = 0.0;
  } link, swap, direct, repeater;
  std::string err;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    for (auto det : kDetectors) {
      for (double pc : kCalibrationPc) {
        for (double l : kCalibrationL) {
          const auto p = detail::make(pc, l, det);
          const auto ol = fock::oracle_link_metrics(p, l);
          link.worst = std::max({link.worst, detail::rel(ol.herald_prob, herald_probability(p, l)),
                                 detail::rel(ol.fidelity, link_fidelity(p, l))});
          const auto os = fock::oracle_swap_metrics(p);
          const auto es = swap_metrics(p);
          swap.worst = std::max({swap.worst, detail::rel(os.p_m, es.p_m), detail::rel(os.fidelity, es.fidelity),
                                 detail::rel(os.vacuum_weight, es.vacuum_weight),
                                 detail::rel(os.fidelity_purified, es.fidelity_purified),
                                 detail::rel(os.p_m_purified, es.p_m_purified)});
          const auto od = fock::oracle_qkd_metrics(p, Scenario::Direct);
          const auto ed = qkd_report(p, Scenario::Direct);
          direct.worst = std::max({direct.worst, detail::rel(od.qber, ed.qber), detail::rel(od.p_click, ed.p_click),
                                   detail::rel(od.rate, ed.rate)});
          const auto orr = fock::oracle_qkd_metrics(p, Scenario::OneRepeater);
          const auto er = qkd_report(p, Scenario::OneRepeater);
          repeater.worst = std::max({repeater.worst, detail::rel(orr.qber, er.qber),
                                     detail::rel(orr.p_click, er.p_click), detail::rel(orr.rate, er.rate)});
        }
      }
    }
  } catch (const std::exception& e) {
    err = e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto make = [&](const char* name, double worst, double tol) {
    Check c;
    c.name = name;
    c.worst = worst;
    c.tolerance = tol;
    c.passed = err.empty() && worst <= tol;
    c.detail = err.empty() ? "max relative deviation " + detail::fmt(worst) : "exception: " + err;
    c.seconds = secs / 4.0;
    return c;
  };
  return {make("oracle: link", link.worst, 1e-6), make("oracle: swap", swap.worst, 1e-6),
          make("oracle: direct QKD", direct.worst, 1e-6), make("oracle: repeater QKD", repeater.worst, 1e-5)};
}

/// Raising the oracle cutoff by one changes nothing beyond 1e-8.
inline Check check_oracle_cutoff_stability() {
  return detail::timed("oracle cutoff stability", 1e-8, [](std::string& d) {
    double worst = 0.0;
    for (auto det : kDetectors) {
      const auto p = detail::make(0.02, 100.0, det);
      const int n = fock::cutoff_for(p.p_c);
      const auto a = fock::oracle_swap_metrics(p, n);
      const auto b = fock::oracle_swap_metrics(p, n + 1);
      const auto qa = fock::oracle_qkd_metrics(p, Scenario::Direct, n);
      const auto qb = fock::oracle_qkd_metrics(p, Scenario::Direct, n + 1);
      worst = std::max({worst, std::abs(a.p_m - b.p_m), std::abs(a.fidelity - b.fidelity), std::abs(qa.qber - qb.qber),
                        std::abs(qa.p_click - qb.p_click)});
    }
    d = "max absolute change " + detail::fmt(worst);
    return worst;
  });
}

/// Oracle conditional states: unit trace and positive semidefinite to 1e-10.
inline Check check_oracle_states() {
  return detail::timed("oracle state validity", 1e-10, [](std::string& d) {
    double worst = 0.0;
    auto inspect = [&](const fock::FockOperator& rho) {
      worst = std::max(worst, std::abs(rho.trace() - 1.0));
      const Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitize(rho.mat));
      worst = std::max(worst, std::max(0.0, -es.eigenvalues().minCoeff()));
    };
    for (auto det : kDetectors) {
      for (double pc : kCalibrationPc) {
        const auto p = detail::make(pc, 100.0, det);
        const auto link = fock::oracle_link_metrics(p, 100.0);
        inspect(link.states[0]);
        inspect(link.states[1]);
        inspect(fock::oracle_swap_metrics(p).state_111);
      }
    }
    d = "max trace/negativity defect " + detail::fmt(worst);
    return worst;
  });
}

namespace detail {

inline cplx permanent(const CMatrix& m) {
  const auto n = static_cast<int>(m.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  cplx total{0.0, 0.0};
  do {
    cplx prod{1.0, 0.0};
    for (int k = 0; k < n; ++k) prod *= m(k, perm[static_cast<std::size_t>(k)]);
    total += prod;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return total;
}

/// E[prod_k z^H A_k z] by expanding into monomials z*_i1 z_j1 ... and using
/// E[prod z_j prod z*_i] = perm(C[j_k, i_l]) for E[z z^H] = C.
inline cplx wick_by_monomials(const CMatrix& cov, const std::vector<CMatrix>& forms) {
  const auto n = static_cast<int>(cov.rows());
  const auto m = static_cast<int>(forms.size());
  std::vector<int> idx(static_cast<std::size_t>(2 * m), 0);
  cplx total{0.0, 0.0};
  while (true) {
    cplx coeff{1.0, 0.0};
    for (int k = 0; k < m; ++k) coeff *= forms[static_cast<std::size_t>(k)](idx[2 * k], idx[2 * k + 1]);
    if (coeff != cplx{}) {
      CMatrix c(m, m);
      for (int k = 0; k < m; ++k) {
        for (int l = 0; l < m; ++l) c(k, l) = cov(idx[2 * k + 1], idx[2 * l]);
      }
      total += coeff * permanent(c);
    }
    int pos = 0;
    while (pos < 2 * m && ++idx[static_cast<std::size_t>(pos)] == n) idx[static_cast<std::size_t>(pos++)] = 0;
    if (pos == 2 * m) break;
  }
  return total;
}

}  // namespace detail

/// Wick evaluator against the monomial expansion for up to four forms.
inline Check check_wick_identities() {
  return detail::timed("Wick identities", 1e-9, [](std::string& d) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst = 0.0;
    for (int n : {2, 3}) {
      for (int m = 1; m <= 4; ++m) {
        CMatrix g(n, n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) g(i, j) = {u(rng), u(rng)};
        const CMatrix cov = g * g.adjoint() + CMatrix::Identity(n, n);
        std::vector<CMatrix> forms;
        for (int k = 0; k < m; ++k) {
          CMatrix a(n, n);
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = {u(rng), u(rng)};
          forms.push_back(a);
        }
        const cplx w = wick_expectation(cov, forms);
        const cplx b = detail::wick_by_monomials(cov, forms);
        worst = std::max(worst, std::abs(w - b) / std::max(1.0, std::abs(b)));
      }
    }
    d = "max relative deviation " + detail::fmt(worst);
    return worst;
  });
}

/// chi(0) = 1 and unit trace for every state the pipelines produce.
inline Check check_normalization() {
  return detail::timed("normalization", 1e-10, [](std::string& d) {
    double worst = 0.0;
    // Closed-form threshold-detector states carry large cancelling
    // amplitudes, so defects are measured relative to their sum.
    auto inspect = [&](const CharFun& cf) {
      double amplitude = 0.0;
      for (const auto& t : cf.terms()) amplitude += std::abs(t.coeff);
      const double scale = std::max(1.0, amplitude);
      const auto zero = CVector::Zero(static_cast<Eigen::Index>(cf.mode_count()));
      worst = std::max(worst, std::abs(evaluate(cf, zero) - 1.0) / scale);
      worst = std::max(worst, std::abs(probability(cf, trace_kernels(cf), "trace") - 1.0) / scale);
    };
    for (auto det : kDetectors) {
      for (double pc : {0.005, 0.02}) {
        const auto p = detail::make(pc, 150.0, det);
        for (int j = 1; j <= 2; ++j) {
          inspect(post_herald_charfun(p, 150.0, j));
          inspect(post_herald_charfun(p, 150.0, j, "A", "B", NrpdForm::Closed));
          inspect(post_herald_engine(p, 150.0, j));
        }
        inspect(swapped_charfun_engine(p, 1, 1, 1));
        inspect(qkd_state(p, Scenario::Direct));
        inspect(apply_qkd_measurement_channel(qkd_state(p, Scenario::Direct), p));
      }
    }
    d = "max |chi(0) - 1| per unit amplitude " + detail::fmt(worst);
    return worst;
  });
}

/// The sixteen threshold-detector click patterns sum to one.
inline Check check_pattern_completeness() {
  return detail::timed("NRPD pattern completeness", 1e-10, [](std::string& d) {
    double worst = 0.0;
    for (double pc : {0.005, 0.02}) {
      for (double l : {100.0, 300.0}) {
        const auto p = detail::make(pc, l, Detector::NRPD);
        const auto direct = nrpd_pattern_table(apply_qkd_measurement_channel(qkd_state(p, Scenario::Direct), p));
        worst = std::max(worst, std::abs(std::accumulate(direct.begin(), direct.end(), 0.0) - 1.0));
        const auto cf = joint_repeater_state(p);
        const auto bsm = joint_bsm_kernels(p.detector);
        auto norm_f = bsm;
        for (const auto& m : kQkdModes) norm_f.push_back(MeasurementFactor::delta(m));
        const double norm = probability(cf, norm_f, "joint BSM probability");
        const auto rep = nrpd_pattern_table(cf, bsm, norm);
        worst = std::max(worst, std::abs(std::accumulate(rep.begin(), rep.end(), 0.0) - 1.0));
      }
    }
    d = "max |sum - 1| " + detail::fmt(worst);
    return worst;
  });
}

/// BSM probability, fidelity and vacuum weight agree over the eight outcomes.
inline Check check_bsm_symmetry() {
  return detail::timed("BSM index independence", 1e-10, [](std::string& d) {
    using MF = MeasurementFactor;
    double worst = 0.0;
    for (auto det : kDetectors) {
      for (double pc : {0.005, 0.05}) {
        const auto p = detail::make(pc, 200.0, det);
        std::vector<double> prob;
        for (int j = 1; j <= 2; ++j)
          for (int k = 1; k <= 2; ++k) {
            const auto cf = post_bsm_state(p, j, k);
            for (int i = 1; i <= 2; ++i) {
              auto f = bsm_kernels(det, i);
              f.push_back(MF::delta("A"));
              f.push_back(MF::delta("B"));
              prob.push_back(probability(cf, f, "BSM probability"));
            }
          }
        const auto [lo, hi] = std::minmax_element(prob.begin(), prob.end());
        worst = std::max(worst, *hi - *lo);
        swap_metrics(p);  // asserts fidelity and vacuum symmetry internally
      }
    }
    d = "max spread " + detail::fmt(worst);
    return worst;
  });
}

/// Perfect Bell pairs measured with unit efficiency give no errors.
inline Check check_ideal_bell_qber() {
  return detail::timed("ideal Bell input QBER", 1e-10, [](std::string& d) {
    double worst = 0.0;
    for (auto det : kDetectors) {
      SystemParams p = detail::make(0.0, 100.0, det);
      p.eta_m_override = 1.0;
      // p_c = 0 reduces the link state to the Bell state with alpha = 1
      const auto bell = tensor(post_herald_charfun(p, 100.0, 1, "A", "B"), post_herald_charfun(p, 100.0, 1, "C", "D"));
      const auto q = qber_and_click_from_state(apply_qkd_measurement_channel(bell, p), det);
      worst = std::max(worst, std::abs(q.qber));
      // the oracle with a single-excitation cutoff holds the same Bell pair
      fock::FockOperator rho{fock::bell_vector(2, -1) * fock::bell_vector(2, -1).adjoint(), {2, 2}};
      const auto t = fock::qkd_patterns(rho, rho, det, 1.0);
      const auto [click, err] = fock::sifted_probabilities(t, det);
      worst = std::max(worst, err / click);
    }
    d = "max QBER " + detail::fmt(worst);
    return worst;
  });
}

/// Swapped fidelity stays below 1/(2 - eta_m) (PNRD), 1/(2 - eta_m/2) (NRPD),
/// and approaches the cap as p_c -> 0.
inline Check check_fidelity_caps() {
  return detail::timed("fidelity caps", 0.0, [](std::string& d) {
    double excess = 0.0, limit_gap = 0.0;
    for (auto det : kDetectors) {
      for (double em : {0.2, 0.35, 0.6, 0.9}) {
        const double cap = det == Detector::PNRD ? 1.0 / (2.0 - em) : 1.0 / (2.0 - em / 2.0);
        for (double pc : {1e-4, 1e-3, 0.005, 0.01, 0.02, 0.05, 0.1}) {
          for (double l : {20.0, 100.0, 300.0, 600.0}) {
            SystemParams p = detail::make(pc, l, det);
            p.eta_m_override = em;
            excess = std::max(excess, swap_metrics(p).fidelity - cap);
          }
        }
        SystemParams p = detail::make(1e-5, 100.0, det);
        p.eta_m_override = em;
        limit_gap = std::max(limit_gap, std::abs(swap_metrics(p).fidelity - cap));
      }
    }
    d = "max excess over cap " + detail::fmt(excess) + ", max |F(p_c=1e-5) - cap| " + detail::fmt(limit_gap);
    // pass needs no excess and the limit within 1e-3
    return std::max(excess, limit_gap > 1e-3 ? limit_gap : 0.0);
  });
}

/// Post-selection on a non-vacuum outcome never lowers the fidelity and never
/// raises the success probability.
inline Check check_purified_ordering() {
  return detail::timed("purified vs unpurified", 0.0, [](std::string& d) {
    double worst = 0.0;
    for (auto det : kDetectors) {
      for (double pc : {1e-3, 0.01, 0.05}) {
        for (double l : {50.0, 200.0, 600.0}) {
          const auto m = swap_metrics(detail::make(pc, l, det));
          worst = std::max({worst, m.fidelity - m.fidelity_purified, m.p_m_purified - m.p_m});
        }
      }
    }
    d = "max violation " + detail::fmt(worst);
    return std::max(worst, 0.0);
  });
}

/// Purified swapped fidelity at eta_d = 0.5, eta_c = 0.7, p_c = 0.01 over
/// 100-600 km; passes when the minimum is at least 0.93.
inline Check check_purified_fidelity_level() {
  Check c = detail::timed("purified fidelity level", 0.0, [](std::string& d) {
    double lowest = 1.0;
    for (auto det : kDetectors) {
      for (double l = 100.0; l <= 600.0; l += 50.0) {
        lowest = std::min(lowest, swap_metrics(detail::make(0.01, l, det)).fidelity_purified);
      }
    }
    d = "minimum purified fidelity " + std::to_string(lowest);
    return std::max(0.0, 0.93 - lowest);
  });
  return c;
}

/// Printed closed forms of the swapped state against the engine.
inline Check check_appendix(AppendixComparison* out = nullptr) {
  return detail::timed("closed-form swapped state", 1e-9, [&](std::string& d) {
    SystemParams p = detail::make(0.05, 50.0, Detector::PNRD);
    const auto cmp = compare_appendix(p);
    if (out) *out = cmp;
    int matches = 0, resolved = 0, localized = 0, mismatches = 0;
    for (const auto& c : cmp.coefficients) {
      const auto s = c.status();
      matches += s == "match";
      resolved += s == "typo-resolved";
      localized += s == "localized";
      mismatches += s == "mismatch";
    }
    d = "PNRD pointwise " + detail::fmt(cmp.pnrd_pointwise) + "; NRPD coefficients: " + std::to_string(matches) +
        " match, " + std::to_string(resolved) + " typo-resolved, " + std::to_string(localized) + " localized, " +
        std::to_string(mismatches) + " unexplained";
    return mismatches > 0 ? 1.0 : cmp.pnrd_pointwise;
  });
}

/// The closed-form check must detect a 1e-7 relative change of the printed
/// formulas.
inline Check check_perturbation_sensitivity() {
  return detail::timed("perturbation self-test", 0.0, [](std::string& d) {
    const auto perturbed = check_closed_forms(1.0 + 1e-7);
    d = perturbed.passed ? "perturbed closed forms went undetected" : "perturbed closed forms detected";
    return perturbed.passed ? 1.0 : 0.0;
  });
}

struct ValidationReport {
  std::vector<Check> checks;
  AppendixComparison appendix;
  double seconds = 0.0;

  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

inline ValidationReport run_all() {
  ValidationReport r;
  const auto t0 = std::chrono::steady_clock::now();
  r.checks.push_back(check_closed_forms());
  r.checks.push_back(check_perturbation_sensitivity());
  for (auto& c : check_oracle_equivalence()) r.checks.push_back(std::move(c));
  r.checks.push_back(check_oracle_cutoff_stability());
  r.checks.push_back(check_oracle_states());
  r.checks.push_back(check_wick_identities());
  r.checks.push_back(check_normalization());
  r.checks.push_back(check_pattern_completeness());
  r.checks.push_back(check_bsm_symmetry());
  r.checks.push_back(check_ideal_bell_qber());
  r.checks.push_back(check_fidelity_caps());
  r.checks.push_back(check_purified_ordering());
  r.checks.push_back(check_purified_fidelity_level());
  r.checks.push_back(check_appendix(&r.appendix));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace dlcz::validation
