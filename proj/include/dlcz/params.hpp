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

#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dlcz {

enum class Detector { PNRD, NRPD };

inline std::string_view to_string(Detector d) { return d == Detector::PNRD ? "pnrd" : "nrpd"; }

inline Detector parse_detector(std::string_view s) {
  if (s == "pnrd" || s == "PNRD") return Detector::PNRD;
  if (s == "nrpd" || s == "NRPD") return Detector::NRPD;
  throw std::invalid_argument("unknown detector '" + std::string(s) + "'");
}

enum class Scenario { Direct, OneRepeater };

inline std::string_view to_string(Scenario s) { return s == Scenario::Direct ? "direct" : "repeater"; }

inline Scenario parse_scenario(std::string_view s) {
  if (s == "direct") return Scenario::Direct;
  if (s == "repeater" || s == "one_repeater") return Scenario::OneRepeater;
  throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

/// Physical scenario. Distances in km, speed in m/s.
struct SystemParams {
  double p_c = 0.01;        // excitation probability
  double eta_d = 0.5;       // detector efficiency
  double eta_c = 0.7;       // retrieval efficiency
  double distance_km = 100.0;
  double l_att_km = 25.0;
  double c_mps = 2e8;
  Detector detector = Detector::PNRD;
  // Total efficiency of the swap / QKD measurement modules. When unset it is
  // eta_c * eta_d; the entanglement-distribution links always use eta_d.
  std::optional<double> eta_m_override;

  double eta_m() const { return eta_m_override ? *eta_m_override : eta_c * eta_d; }

  // Measurement modules depend on (eta_c, eta_d) only through eta_m.
  double meas_eta_c() const { return eta_m_override ? *eta_m_override : eta_c; }
  double meas_eta_d() const { return eta_m_override ? 1.0 : eta_d; }

  void validate() const {
    if (!(p_c >= 0.0 && p_c < 1.0)) throw std::invalid_argument("p_c must lie in [0, 1)");
    if (!(eta_d > 0.0 && eta_d <= 1.0)) throw std::invalid_argument("eta_d must lie in (0, 1]");
    if (!(eta_c > 0.0 && eta_c <= 1.0)) throw std::invalid_argument("eta_c must lie in (0, 1]");
    if (eta_m_override && !(*eta_m_override > 0.0 && *eta_m_override <= 1.0)) {
      throw std::invalid_argument("eta_m must lie in (0, 1]");
    }
    if (!(distance_km > 0.0)) throw std::invalid_argument("distance must be positive");
    if (!(l_att_km > 0.0)) throw std::invalid_argument("attenuation length must be positive");
    if (!(c_mps > 0.0)) throw std::invalid_argument("channel speed must be positive");
  }
};

struct DerivedParams {
  double eta;    // channel transmissivity to the midpoint station
  double eta_s;  // eta_d * eta
  double eta_m;  // measurement efficiency
  double alpha;  // 1 / (eta_s p_c + 1 - p_c)
};

/// A link of length `segment_km` sends each photon half way.
inline DerivedParams derived_params(const SystemParams& p, double segment_km) {
  if (!(segment_km >= 0.0)) throw std::invalid_argument("segment length must be non-negative");
  DerivedParams d{};
  d.eta = std::exp(-(segment_km / 2.0) / p.l_att_km);
  d.eta_s = p.eta_d * d.eta;
  d.eta_m = p.eta_m();
  d.alpha = 1.0 / (d.eta_s * p.p_c + 1.0 - p.p_c);
  return d;
}

}  // namespace dlcz
