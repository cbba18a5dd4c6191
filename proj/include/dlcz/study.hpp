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

// Parameter studies: sweeps, crossover searches and the figure datasets.
//
// Grid points may be evaluated on several threads, but every result lands
// in a slot fixed by its index, so the output never depends on scheduling.
// Units: km, bits/s per logical memory, probabilities dimensionless.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dlcz/optimize.hpp"
#include "dlcz/qkd.hpp"
#include "dlcz/repeater.hpp"
#include "dlcz/validation.hpp"

namespace dlcz::study {

using Json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Tables

using Cell = std::variant<std::monostate, double, std::string>;

/// Decimal text with 12 significant digits; negative zero prints as 0.
inline std::string format_number(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  if (x == 0.0) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw std::logic_error("row width does not match the header");
    rows.push_back(std::move(row));
  }

  std::string csv() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
    out += '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out += ',';
        if (const auto* d = std::get_if<double>(&r[i])) out += format_number(*d);
        if (const auto* s = std::get_if<std::string>(&r[i])) out += *s;
      }
      out += '\n';
    }
    return out;
  }

  /// Array of row objects. Numbers go through the same 12-digit text as the
  /// CSV so both formats carry identical values.
  Json json() const {
    Json arr = Json::array();
    for (const auto& r : rows) {
      Json o = Json::object();
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (const auto* d = std::get_if<double>(&r[i])) {
          o[columns[i]] = std::isfinite(*d) ? Json(std::stod(format_number(*d))) : Json(nullptr);
        } else if (const auto* s = std::get_if<std::string>(&r[i])) {
          o[columns[i]] = *s;
        } else {
          o[columns[i]] = nullptr;
        }
      }
      arr.push_back(std::move(o));
    }
    return arr;
  }

  std::string render(const std::string& format) const {
    if (format == "csv") return csv();
    if (format == "json") return json().dump(2) + "\n";
    throw std::invalid_argument("unknown format '" + format + "'");
  }
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// Concurrency

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// out[i] = f(i) for i < n, on up to `threads` workers. The first exception
/// (lowest index) is rethrown after all workers finish.
template <class T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& f, unsigned threads) {
  std::vector<std::optional<T>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned k = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

inline const std::vector<std::string> kAxisNames = {"p_c", "eta_d", "eta_c", "eta_m", "distance_km", "l_att_km", "c_mps"};

inline void set_parameter(SystemParams& p, const std::string& name, double v) {
  if (name == "p_c") p.p_c = v;
  else if (name == "eta_d") p.eta_d = v;
  else if (name == "eta_c") p.eta_c = v;
  else if (name == "eta_m") p.eta_m_override = v;
  else if (name == "distance_km") p.distance_km = v;
  else if (name == "l_att_km") p.l_att_km = v;
  else if (name == "c_mps") p.c_mps = v;
  else throw std::invalid_argument("unknown parameter '" + name + "'");
}

struct Axis {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  int points = 2;
  bool log = false;

  void validate() const {
    if (std::find(kAxisNames.begin(), kAxisNames.end(), name) == kAxisNames.end()) {
      throw std::invalid_argument("axis references unknown parameter '" + name + "'");
    }
    if (points < 2) throw std::invalid_argument("axis '" + name + "' needs at least 2 points");
    if (!(min < max)) throw std::invalid_argument("axis '" + name + "' needs min < max");
    if (log && !(min > 0.0)) throw std::invalid_argument("log axis '" + name + "' needs min > 0");
  }

  std::vector<double> values() const {
    validate();
    std::vector<double> v(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
      const double t = static_cast<double>(i) / (points - 1);
      v[static_cast<std::size_t>(i)] =
          log ? std::exp(std::log(min) + t * (std::log(max) - std::log(min))) : min + t * (max - min);
    }
    v.front() = min;
    v.back() = max;
    return v;
  }
};

struct CrossoverSettings {
  double min_km = 50.0;
  double max_km = 1000.0;
  double step_km = 50.0;
  double tol_km = 1.0;
};

/// Knobs of the figure datasets.
struct FigureSettings {
  double fidelity_pc = 0.01;          // fidelity and heralding panels
  double rate_vs_pc_distance = 350.0; // rate against p_c
  int rate_vs_pc_points = 61;
  double qber_pc = 0.0055;            // QBER against distance at fixed p_c
  Axis fixed_distance{"distance_km", 10.0, 1000.0, 100, false};
  Axis optimum_distance{"distance_km", 50.0, 1000.0, 20, false};
  std::vector<double> crossover_eta_m = {0.2, 0.25, 0.3, 0.35, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

struct StudyConfig {
  SystemParams base;
  std::vector<Detector> detectors = {Detector::PNRD, Detector::NRPD};
  std::vector<Scenario> scenarios = {Scenario::Direct, Scenario::OneRepeater};
  std::vector<Axis> axes;
  bool optimize = false;  // replace p_c by its rate optimum at each point
  OptimizerSettings optimizer;
  QkdOptions qkd;
  CrossoverSettings crossover;
  FigureSettings figures;
  unsigned threads = default_threads();
  std::string format = "csv";

  void validate() const {
    base.validate();
    if (detectors.empty() || scenarios.empty()) throw std::invalid_argument("need at least one detector and scenario");
    for (const auto& a : axes) a.validate();
    for (std::size_t i = 0; i < axes.size(); ++i)
      for (std::size_t j = i + 1; j < axes.size(); ++j)
        if (axes[i].name == axes[j].name) throw std::invalid_argument("axis '" + axes[i].name + "' given twice");
    if (optimize && std::any_of(axes.begin(), axes.end(), [](const Axis& a) { return a.name == "p_c"; })) {
      throw std::invalid_argument("cannot sweep p_c while optimizing it");
    }
    if (format != "csv" && format != "json") throw std::invalid_argument("format must be csv or json");
    if (!(crossover.min_km < crossover.max_km && crossover.step_km > 0.0 && crossover.tol_km > 0.0)) {
      throw std::invalid_argument("bad crossover grid");
    }
  }
};

inline Json axis_to_json(const Axis& a) {
  return Json{{"name", a.name}, {"min", a.min}, {"max", a.max}, {"points", a.points}, {"log", a.log}};
}

inline Axis axis_from_json(const Json& j) {
  for (const auto& [k, v] : j.items()) {
    if (k != "name" && k != "min" && k != "max" && k != "points" && k != "log") {
      throw std::invalid_argument("unknown axis key '" + k + "'");
    }
  }
  Axis a;
  a.name = j.at("name").get<std::string>();
  a.min = j.at("min").get<double>();
  a.max = j.at("max").get<double>();
  a.points = j.at("points").get<int>();
  a.log = j.value("log", false);
  a.validate();
  return a;
}

/// Every setting, defaults included.
inline Json to_json(const StudyConfig& c) {
  Json j;
  j["pc"] = c.base.p_c;
  j["eta_d"] = c.base.eta_d;
  j["eta_c"] = c.base.eta_c;
  j["eta_m"] = c.base.eta_m_override ? Json(*c.base.eta_m_override) : Json(nullptr);
  j["distance_km"] = c.base.distance_km;
  j["l_att_km"] = c.base.l_att_km;
  j["c_mps"] = c.base.c_mps;
  j["detectors"] = Json::array();
  for (auto d : c.detectors) j["detectors"].push_back(std::string(to_string(d)));
  j["scenarios"] = Json::array();
  for (auto s : c.scenarios) j["scenarios"].push_back(std::string(to_string(s)));
  j["exact_click"] = c.qkd.exact_click;
  j["optimize"] = c.optimize;
  j["optimizer"] = {{"pc_min", c.optimizer.pc_min},
                    {"pc_max", c.optimizer.pc_max},
                    {"grid_points", c.optimizer.grid_points},
                    {"rel_tol", c.optimizer.rel_tol}};
  j["crossover"] = {{"min_km", c.crossover.min_km},
                    {"max_km", c.crossover.max_km},
                    {"step_km", c.crossover.step_km},
                    {"tol_km", c.crossover.tol_km}};
  const auto& f = c.figures;
  j["figures"] = {{"fidelity_pc", f.fidelity_pc},
                  {"rate_vs_pc_distance", f.rate_vs_pc_distance},
                  {"rate_vs_pc_points", f.rate_vs_pc_points},
                  {"qber_pc", f.qber_pc},
                  {"fixed_distance", axis_to_json(f.fixed_distance)},
                  {"optimum_distance", axis_to_json(f.optimum_distance)},
                  {"crossover_eta_m", f.crossover_eta_m}};
  j["axes"] = Json::array();
  for (const auto& a : c.axes) j["axes"].push_back(axis_to_json(a));
  j["format"] = c.format;
  return j;
}

namespace detail {

inline void reject_unknown(const Json& j, const std::vector<std::string>& known, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::invalid_argument("unknown key '" + k + "' in " + where);
    }
  }
}

}  // namespace detail

/// Reads the flat key-value document written by to_json; absent keys keep
/// their defaults. "detector"/"scenario" accept a single name as shorthand.
inline StudyConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  detail::reject_unknown(j,
                         {"pc", "eta_d", "eta_c", "eta_m", "distance_km", "l_att_km", "c_mps", "detector", "detectors",
                          "scenario", "scenarios", "exact_click", "optimize", "optimizer", "crossover", "figures",
                          "axes", "format", "threads"},
                         "config");
  StudyConfig c;
  try {
    c.base.p_c = j.value("pc", c.base.p_c);
    c.base.eta_d = j.value("eta_d", c.base.eta_d);
    c.base.eta_c = j.value("eta_c", c.base.eta_c);
    if (j.contains("eta_m") && !j["eta_m"].is_null()) c.base.eta_m_override = j["eta_m"].get<double>();
    c.base.distance_km = j.value("distance_km", c.base.distance_km);
    c.base.l_att_km = j.value("l_att_km", c.base.l_att_km);
    c.base.c_mps = j.value("c_mps", c.base.c_mps);
    if (j.contains("detector")) c.detectors = {parse_detector(j["detector"].get<std::string>())};
    if (j.contains("detectors")) {
      c.detectors.clear();
      for (const auto& d : j["detectors"]) c.detectors.push_back(parse_detector(d.get<std::string>()));
    }
    if (j.contains("scenario")) c.scenarios = {parse_scenario(j["scenario"].get<std::string>())};
    if (j.contains("scenarios")) {
      c.scenarios.clear();
      for (const auto& s : j["scenarios"]) c.scenarios.push_back(parse_scenario(s.get<std::string>()));
    }
    c.qkd.exact_click = j.value("exact_click", false);
    c.optimize = j.value("optimize", false);
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      detail::reject_unknown(o, {"pc_min", "pc_max", "grid_points", "rel_tol"}, "optimizer");
      c.optimizer.pc_min = o.value("pc_min", c.optimizer.pc_min);
      c.optimizer.pc_max = o.value("pc_max", c.optimizer.pc_max);
      c.optimizer.grid_points = o.value("grid_points", c.optimizer.grid_points);
      c.optimizer.rel_tol = o.value("rel_tol", c.optimizer.rel_tol);
    }
    if (j.contains("crossover")) {
      const auto& o = j["crossover"];
      detail::reject_unknown(o, {"min_km", "max_km", "step_km", "tol_km"}, "crossover");
      c.crossover.min_km = o.value("min_km", c.crossover.min_km);
      c.crossover.max_km = o.value("max_km", c.crossover.max_km);
      c.crossover.step_km = o.value("step_km", c.crossover.step_km);
      c.crossover.tol_km = o.value("tol_km", c.crossover.tol_km);
    }
    if (j.contains("figures")) {
      const auto& o = j["figures"];
      detail::reject_unknown(o,
                             {"fidelity_pc", "rate_vs_pc_distance", "rate_vs_pc_points", "qber_pc", "fixed_distance",
                              "optimum_distance", "crossover_eta_m"},
                             "figures");
      auto& f = c.figures;
      f.fidelity_pc = o.value("fidelity_pc", f.fidelity_pc);
      f.rate_vs_pc_distance = o.value("rate_vs_pc_distance", f.rate_vs_pc_distance);
      f.rate_vs_pc_points = o.value("rate_vs_pc_points", f.rate_vs_pc_points);
      f.qber_pc = o.value("qber_pc", f.qber_pc);
      if (o.contains("fixed_distance")) f.fixed_distance = axis_from_json(o["fixed_distance"]);
      if (o.contains("optimum_distance")) f.optimum_distance = axis_from_json(o["optimum_distance"]);
      if (o.contains("crossover_eta_m")) f.crossover_eta_m = o["crossover_eta_m"].get<std::vector<double>>();
    }
    if (j.contains("axes")) {
      for (const auto& a : j["axes"]) c.axes.push_back(axis_from_json(a));
    }
    c.format = j.value("format", c.format);
    if (j.contains("threads")) c.threads = std::max(1u, j["threads"].get<unsigned>());
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Crossovers

enum class CrossoverStatus { Found, BelowRange, BeyondRange };

inline std::string to_string(CrossoverStatus s) {
  switch (s) {
    case CrossoverStatus::Found: return "found";
    case CrossoverStatus::BelowRange: return "below range";
    case CrossoverStatus::BeyondRange: return "beyond range";
  }
  return "";
}

struct Crossover {
  CrossoverStatus status = CrossoverStatus::BeyondRange;
  double distance_km = std::numeric_limits<double>::quiet_NaN();
  double bracket_lo = std::numeric_limits<double>::quiet_NaN();
  double bracket_hi = std::numeric_limits<double>::quiet_NaN();
  int evaluations = 0;
};

/// First distance where `advantage` (repeater minus direct) turns positive.
/// The grid is scanned upward and stops at the first sign change, which is
/// then bisected to tol_km.
inline Crossover find_crossover(const std::function<double(double)>& advantage, const CrossoverSettings& s) {
  Crossover out;
  auto f = [&](double l) {
    ++out.evaluations;
    return advantage(l);
  };
  double prev_l = s.min_km;
  if (f(prev_l) > 0.0) {
    out.status = CrossoverStatus::BelowRange;
    return out;
  }
  const int steps = static_cast<int>(std::floor((s.max_km - s.min_km) / s.step_km + 1e-9));
  for (int i = 1; i <= steps; ++i) {
    const double l = s.min_km + i * s.step_km;
    if (f(l) > 0.0) {
      out.status = CrossoverStatus::Found;
      out.bracket_lo = prev_l;
      out.bracket_hi = l;
      out.distance_km = bisect(f, prev_l, l, s.tol_km);
      return out;
    }
    prev_l = l;
  }
  return out;
}

inline SystemParams at_distance(SystemParams p, double l) {
  p.distance_km = l;
  return p;
}

/// Distance beyond which the repeater key rate, with p_c optimized
/// separately for each setup, exceeds the direct one.
inline Crossover qkd_crossover(const SystemParams& base, const CrossoverSettings& s = {},
                               const OptimizerSettings& opt = {}, const QkdOptions& qkd = {}) {
  return find_crossover(
      [&](double l) {
        const auto p = at_distance(base, l);
        return optimize_pc(p, Scenario::OneRepeater, opt, qkd).rate - optimize_pc(p, Scenario::Direct, opt, qkd).rate;
      },
      s);
}

/// Distance beyond which P_S(L/2) P_M exceeds P_S(L) at fixed p_c.
/// `purified` selects the success probability restricted to non-vacuum
/// outcomes.
inline Crossover heralding_crossover(const SystemParams& base, bool purified, const CrossoverSettings& s = {}) {
  return find_crossover(
      [&](double l) {
        const auto p = at_distance(base, l);
        const auto m = swap_metrics(p);
        return herald_probability(p, l / 2.0) * (purified ? m.p_m_purified : m.p_m) - herald_probability(p, l);
      },
      s);
}

// ---------------------------------------------------------------------------
// Sweeps

struct PointMetrics {
  double p_c = 0.0;
  bool optimum_found = true;
  double herald_prob = 0.0;  // per link: L for direct, L/2 for repeater
  double link_fidelity = 0.0;
  double p_m = std::numeric_limits<double>::quiet_NaN();
  double p_m_purified = std::numeric_limits<double>::quiet_NaN();
  double fidelity = 0.0;  // end-to-end (swapped for the repeater)
  double fidelity_purified = std::numeric_limits<double>::quiet_NaN();
  double qber = 0.0;
  double p_click = 0.0;
  double secret_fraction = 0.0;
  double rate = 0.0;
};

inline PointMetrics evaluate_point(SystemParams p, Scenario scenario, const StudyConfig& cfg) {
  PointMetrics m;
  if (cfg.optimize) {
    const auto o = optimize_pc(p, scenario, cfg.optimizer, cfg.qkd);
    m.optimum_found = o.found;
    if (!o.found) return m;
    p.p_c = o.p_c;
  }
  m.p_c = p.p_c;
  const double link_l = scenario == Scenario::Direct ? p.distance_km : p.distance_km / 2.0;
  m.herald_prob = herald_probability(p, link_l);
  m.link_fidelity = link_fidelity(p, link_l);
  m.fidelity = m.link_fidelity;
  if (scenario == Scenario::OneRepeater) {
    const auto s = swap_metrics(p);
    m.p_m = s.p_m;
    m.p_m_purified = s.p_m_purified;
    m.fidelity = s.fidelity;
    m.fidelity_purified = s.fidelity_purified;
  }
  const auto q = qkd_report(p, scenario, cfg.qkd);
  m.qber = q.qber;
  m.p_click = q.p_click;
  m.secret_fraction = q.secret_fraction;
  m.rate = q.rate;
  return m;
}

/// Cartesian product of the axes (first axis outermost), then detector,
/// then scenario. Without axes the base point alone is evaluated.
inline Table sweep(const StudyConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<double>> values;
  for (const auto& a : cfg.axes) values.push_back(a.values());
  std::size_t grid = 1;
  for (const auto& v : values) grid *= v.size();

  struct Job {
    std::vector<double> x;
    Detector det;
    Scenario sc;
  };
  std::vector<Job> jobs;
  for (std::size_t g = 0; g < grid; ++g) {
    std::vector<double> x(values.size());
    std::size_t rem = g;
    for (std::size_t k = values.size(); k-- > 0;) {
      x[k] = values[k][rem % values[k].size()];
      rem /= values[k].size();
    }
    for (auto det : cfg.detectors)
      for (auto sc : cfg.scenarios) jobs.push_back({x, det, sc});
  }

  const auto results = parallel_map<PointMetrics>(
      jobs.size(),
      [&](std::size_t i) {
        SystemParams p = cfg.base;
        p.detector = jobs[i].det;
        for (std::size_t k = 0; k < cfg.axes.size(); ++k) set_parameter(p, cfg.axes[k].name, jobs[i].x[k]);
        p.validate();
        return evaluate_point(p, jobs[i].sc, cfg);
      },
      cfg.threads);

  Table t;
  for (const auto& a : cfg.axes) t.columns.push_back(a.name);
  for (const char* c : {"detector", "scenario", "p_c", "status", "herald_prob", "link_fidelity", "p_m", "p_m_purified",
                        "fidelity", "fidelity_purified", "qber", "p_click", "secret_fraction", "rate"}) {
    t.columns.emplace_back(c);
  }
  auto num = [](double v) { return std::isnan(v) ? Cell{} : Cell{v}; };
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    std::vector<Cell> row;
    for (double v : jobs[i].x) row.emplace_back(v);
    row.emplace_back(std::string(to_string(jobs[i].det)));
    row.emplace_back(std::string(to_string(jobs[i].sc)));
    const auto& m = results[i];
    if (!m.optimum_found) {
      row.emplace_back(Cell{});
      row.emplace_back(std::string("no positive rate"));
      for (int k = 0; k < 10; ++k) row.emplace_back(Cell{});
    } else {
      row.emplace_back(m.p_c);
      row.emplace_back(std::string("ok"));
      for (double v : {m.herald_prob, m.link_fidelity, m.p_m, m.p_m_purified, m.fidelity, m.fidelity_purified, m.qber,
                       m.p_click, m.secret_fraction, m.rate}) {
        row.push_back(num(v));
      }
    }
    t.add(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Figure datasets

struct FigureSet {
  std::vector<std::pair<std::string, Table>> tables;  // file stem -> table, in output order
  std::map<std::string, double> seconds;              // per table, wall clock
};

namespace detail {

inline SystemParams with_pc(SystemParams p, double pc) {
  p.p_c = pc;
  return p;
}

inline SystemParams with_det(SystemParams p, Detector d) {
  p.detector = d;
  return p;
}

struct Optimum {
  OptimumPc direct;
  OptimumPc repeater;
  double qber_direct = std::numeric_limits<double>::quiet_NaN();
  double qber_repeater = std::numeric_limits<double>::quiet_NaN();
};

inline Cell opt_cell(const OptimumPc& o, double v) { return o.found ? Cell{v} : Cell{}; }

}  // namespace detail

/// Computes every panel dataset. Fixed-p_c panels use figures.fixed_distance,
/// optimum panels figures.optimum_distance.
inline FigureSet compute_figures(const StudyConfig& cfg) {
  cfg.validate();
  using detail::with_det;
  using detail::with_pc;
  const auto& fs = cfg.figures;
  FigureSet out;
  auto clock = [] { return std::chrono::steady_clock::now(); };
  auto since = [](auto t0) { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  const auto& dets = cfg.detectors;
  const auto fixed_l = fs.fixed_distance.values();
  const auto opt_l = fs.optimum_distance.values();

  // Fidelity and heralding probability against distance.
  {
    auto t0 = clock();
    struct Row {
      double f_norep, f_rep, f_pur, f_werner, p_norep, p_rep, p_pur;
    };
    const std::size_t n = fixed_l.size() * dets.size();
    const auto rows = parallel_map<Row>(
        n,
        [&](std::size_t i) {
          const double l = fixed_l[i / dets.size()];
          const auto p = at_distance(with_pc(with_det(cfg.base, dets[i % dets.size()]), fs.fidelity_pc), l);
          const auto s = swap_metrics(p);
          const double ps_half = herald_probability(p, l / 2.0);
          return Row{link_fidelity(p, l), s.fidelity, s.fidelity_purified,
                     werner_swap_fidelity(link_fidelity(p, l / 2.0)), herald_probability(p, l), ps_half * s.p_m,
                     ps_half * s.p_m_purified};
        },
        cfg.threads);
    Table fa{{"L_km", "detector", "F_norep", "F_rep", "F_rep_purified", "F_werner"}, {}};
    Table fb{{"L_km", "detector", "P_norep", "P_rep", "P_rep_purified"}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      const double l = fixed_l[i / dets.size()];
      const std::string d(to_string(dets[i % dets.size()]));
      const auto& r = rows[i];
      fa.add({l, d, r.f_norep, r.f_rep, r.f_pur, r.f_werner});
      fb.add({l, d, r.p_norep, r.p_rep, r.p_pur});
    }
    const double secs = since(t0);
    out.tables.emplace_back("fig3a_fidelity", std::move(fa));
    out.tables.emplace_back("fig3b_heralding", std::move(fb));
    out.seconds["fig3a_fidelity"] = out.seconds["fig3b_heralding"] = secs / 2.0;

    t0 = clock();
    Table cx{{"detector", "definition", "L_cross_km", "status"}, {}};
    for (auto det : dets) {
      for (bool purified : {false, true}) {
        const auto c = heralding_crossover(with_pc(with_det(cfg.base, det), fs.fidelity_pc), purified, cfg.crossover);
        cx.add({std::string(to_string(det)), std::string(purified ? "purified" : "unpurified"),
                c.status == CrossoverStatus::Found ? Cell{c.distance_km} : Cell{}, to_string(c.status)});
      }
    }
    out.seconds["fig3b_crossover"] = since(t0);
    out.tables.emplace_back("fig3b_crossover", std::move(cx));
  }

  // Rate against p_c at one distance.
  {
    const auto t0 = clock();
    const Axis pc_axis{"p_c", cfg.optimizer.pc_min, cfg.optimizer.pc_max, fs.rate_vs_pc_points, true};
    const auto pcs = pc_axis.values();
    const std::size_t n = pcs.size() * dets.size();
    const auto rows = parallel_map<std::pair<double, double>>(
        n,
        [&](std::size_t i) {
          const auto p = at_distance(with_pc(with_det(cfg.base, dets[i % dets.size()]), pcs[i / dets.size()]),
                                     fs.rate_vs_pc_distance);
          return std::make_pair(rate_no_repeater(p, cfg.qkd), rate_one_repeater(p, cfg.qkd));
        },
        cfg.threads);
    Table t{{"p_c", "detector", "R_norep", "R_rep"}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      t.add({pcs[i / dets.size()], std::string(to_string(dets[i % dets.size()])), rows[i].first, rows[i].second});
    }
    out.seconds["fig4a_rate_vs_pc"] = since(t0);
    out.tables.emplace_back("fig4a_rate_vs_pc", std::move(t));
  }

  // Optimum p_c, QBER at the optimum and optimal rates against distance.
  {
    const auto t0 = clock();
    const std::size_t n = opt_l.size() * dets.size();
    const auto opt = parallel_map<detail::Optimum>(
        n,
        [&](std::size_t i) {
          const auto p = at_distance(with_det(cfg.base, dets[i % dets.size()]), opt_l[i / dets.size()]);
          detail::Optimum o;
          o.direct = optimize_pc(p, Scenario::Direct, cfg.optimizer, cfg.qkd);
          o.repeater = optimize_pc(p, Scenario::OneRepeater, cfg.optimizer, cfg.qkd);
          o.direct.trace.clear();
          o.repeater.trace.clear();
          if (o.direct.found) o.qber_direct = qkd_report(with_pc(p, o.direct.p_c), Scenario::Direct, cfg.qkd).qber;
          if (o.repeater.found) {
            o.qber_repeater = qkd_report(with_pc(p, o.repeater.p_c), Scenario::OneRepeater, cfg.qkd).qber;
          }
          return o;
        },
        cfg.threads);
    Table t4{{"L_km", "detector", "pc_opt_norep", "pc_opt_rep", "QBER_norep_at_opt", "QBER_rep_at_opt"}, {}};
    Table t5{{"L_km", "detector", "QBER_norep", "QBER_rep"}, {}};
    Table t6{{"L_km", "detector", "R_norep", "R_rep", "pc_opt_norep", "pc_opt_rep"}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      const double l = opt_l[i / dets.size()];
      const std::string d(to_string(dets[i % dets.size()]));
      const auto& o = opt[i];
      using detail::opt_cell;
      t4.add({l, d, opt_cell(o.direct, o.direct.p_c), opt_cell(o.repeater, o.repeater.p_c),
              opt_cell(o.direct, o.qber_direct), opt_cell(o.repeater, o.qber_repeater)});
      t5.add({l, d, opt_cell(o.direct, o.qber_direct), opt_cell(o.repeater, o.qber_repeater)});
      t6.add({l, d, o.direct.rate, o.repeater.rate, opt_cell(o.direct, o.direct.p_c),
              opt_cell(o.repeater, o.repeater.p_c)});
    }
    const double secs = since(t0);
    out.tables.emplace_back("fig4b_pc_opt", std::move(t4));
    out.tables.emplace_back("fig5b_qber_at_opt", std::move(t5));
    out.tables.emplace_back("fig6a_rate_at_opt", std::move(t6));
    out.seconds["fig4b_pc_opt"] = out.seconds["fig5b_qber_at_opt"] = out.seconds["fig6a_rate_at_opt"] = secs / 3.0;
  }

  // QBER against distance at fixed p_c.
  {
    const auto t0 = clock();
    const std::size_t n = fixed_l.size() * dets.size();
    const auto rows = parallel_map<std::pair<double, double>>(
        n,
        [&](std::size_t i) {
          const auto p = at_distance(with_pc(with_det(cfg.base, dets[i % dets.size()]), fs.qber_pc), fixed_l[i / dets.size()]);
          return std::make_pair(qkd_report(p, Scenario::Direct, cfg.qkd).qber,
                                qkd_report(p, Scenario::OneRepeater, cfg.qkd).qber);
        },
        cfg.threads);
    Table t{{"L_km", "detector", "QBER_norep", "QBER_rep"}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      t.add({fixed_l[i / dets.size()], std::string(to_string(dets[i % dets.size()])), rows[i].first, rows[i].second});
    }
    out.seconds["fig5a_qber_fixed_pc"] = since(t0);
    out.tables.emplace_back("fig5a_qber_fixed_pc", std::move(t));
  }

  // Crossover distances: at the base parameters and against eta_m.
  {
    auto t0 = clock();
    const auto base_cross = parallel_map<Crossover>(
        dets.size(),
        [&](std::size_t i) { return qkd_crossover(with_det(cfg.base, dets[i]), cfg.crossover, cfg.optimizer, cfg.qkd); },
        cfg.threads);
    Table t{{"detector", "eta_m", "L_cross_km", "status"}, {}};
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto& c = base_cross[i];
      t.add({std::string(to_string(dets[i])), cfg.base.eta_m(),
             c.status == CrossoverStatus::Found ? Cell{c.distance_km} : Cell{}, to_string(c.status)});
    }
    out.seconds["fig6a_crossover"] = since(t0);
    out.tables.emplace_back("fig6a_crossover", std::move(t));

    t0 = clock();
    const auto& ems = fs.crossover_eta_m;
    const std::size_t n = ems.size() * dets.size();
    const auto cross = parallel_map<Crossover>(
        n,
        [&](std::size_t i) {
          SystemParams p = with_det(cfg.base, dets[i % dets.size()]);
          p.eta_m_override = ems[i / dets.size()];
          return qkd_crossover(p, cfg.crossover, cfg.optimizer, cfg.qkd);
        },
        cfg.threads);
    Table tb{{"eta_m", "detector", "L_cross_km", "status"}, {}};
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = cross[i];
      tb.add({ems[i / dets.size()], std::string(to_string(dets[i % dets.size()])),
              c.status == CrossoverStatus::Found ? Cell{c.distance_km} : Cell{}, to_string(c.status)});
    }
    out.seconds["fig6b_crossover_vs_eta_m"] = since(t0);
    out.tables.emplace_back("fig6b_crossover_vs_eta_m", std::move(tb));
  }
  return out;
}

inline std::string compiler_id() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

/// Manifest of a figure run: versions, every parameter and the emitted files.
/// Timings live in a separate file so the manifest is byte-stable.
inline Json figure_manifest(const StudyConfig& cfg, const FigureSet& figs) {
  Json m;
  m["generator"] = "dlcz";
  m["version"] = kVersion;
  m["compiler"] = compiler_id();
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  m["units"] = {{"distance", "km"}, {"rate", "bits/s per logical memory"}, {"probability", "dimensionless"}};
  auto c = to_json(cfg);
  c.erase("axes");
  c.erase("format");
  m["config"] = c;
  m["files"] = Json::array();
  for (const auto& [stem, t] : figs.tables) {
    m["files"].push_back({{"name", stem + "." + cfg.format}, {"rows", t.rows.size()}, {"columns", t.columns}});
  }
  return m;
}

/// Writes every panel plus manifest.json and timings.json into `dir`.
inline FigureSet emit_figures(const StudyConfig& cfg, const std::filesystem::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  auto figs = compute_figures(cfg);
  for (const auto& [stem, t] : figs.tables) write_file(dir / (stem + "." + cfg.format), t.render(cfg.format));
  write_file(dir / "manifest.json", figure_manifest(cfg, figs).dump(2) + "\n");
  Json timings;
  for (const auto& [k, v] : figs.seconds) timings[k] = v;
  timings["total"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(dir / "timings.json", timings.dump(2) + "\n");
  return figs;
}

// ---------------------------------------------------------------------------
// Validation report

inline Json to_json(const validation::ValidationReport& r) {
  Json j;
  j["passed"] = r.ok();
  j["seconds"] = r.seconds;
  j["checks"] = Json::array();
  for (const auto& c : r.checks) {
    j["checks"].push_back({{"name", c.name},
                           {"passed", c.passed},
                           {"worst", c.worst},
                           {"tolerance", c.tolerance},
                           {"detail", c.detail},
                           {"seconds", c.seconds}});
  }
  const auto& a = r.appendix;
  Json typo;
  typo["pnrd_pointwise"] = a.pnrd_pointwise;
  typo["nrpd_pointwise_printed"] = a.nrpd_pointwise;
  typo["nrpd_pointwise_best_reading"] = a.nrpd_best_pointwise;
  typo["nrpd_pointwise_repaired"] = a.nrpd_repaired_pointwise;
  typo["nrpd_pointwise_tolerance"] = a.nrpd_pointwise_tolerance;
  typo["nrpd_noise_floor"] = a.nrpd_noise_floor;
  typo["coefficients"] = Json::array();
  for (const auto& c : a.coefficients) {
    typo["coefficients"].push_back({{"detector", c.detector},
                                    {"name", c.name},
                                    {"printed", c.printed},
                                    {"engine", c.engine},
                                    {"relative_deviation", c.deviation},
                                    {"alternative", c.alternative},
                                    {"alternative_value", c.alternative_value},
                                    {"alternative_deviation", c.alternative_deviation},
                                    {"substituted_pointwise", c.substituted_pointwise},
                                    {"status", c.status()}});
  }
  j["closed_form_typo_report"] = typo;
  return j;
}

inline std::string to_text(const validation::ValidationReport& r) {
  std::string s;
  char buf[512];
  for (const auto& c : r.checks) {
    std::snprintf(buf, sizeof buf, "[%s] %-28s %s (%.2f s)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                  c.detail.c_str(), c.seconds);
    s += buf;
  }
  s += "closed-form swapped state coefficients (detector / name / printed / engine / status):\n";
  for (const auto& c : r.appendix.coefficients) {
    std::snprintf(buf, sizeof buf, "  %s %-3s %.12g  %.12g  rel.dev %.2e  %s", c.detector.c_str(), c.name.c_str(),
                  c.printed, c.engine, c.deviation, c.status().c_str());
    s += buf;
    if (!c.alternative.empty()) {
      std::snprintf(buf, sizeof buf, "  [alternative \"%s\": rel.dev %.2e]", c.alternative.c_str(),
                    c.alternative_deviation);
      s += buf;
    }
    if (c.status() == "localized") {
      std::snprintf(buf, sizeof buf, "  [pointwise with engine value %.2e]", c.substituted_pointwise);
      s += buf;
    }
    s += '\n';
  }
  std::snprintf(buf, sizeof buf, "%s in %.1f s\n", r.ok() ? "all checks passed" : "VALIDATION FAILED", r.seconds);
  s += buf;
  return s;
}

}  // namespace dlcz::study
