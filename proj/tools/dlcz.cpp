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

// Command-line front end. Exit codes: 0 success, 1 usage error,
// 2 numerical failure, 3 validation failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dlcz/study.hpp"

namespace {

using namespace dlcz;
using study::Cell;
using study::Table;

constexpr int kUsage = 1;
constexpr int kNumerical = 2;
constexpr int kValidation = 3;

struct Flags {
  std::optional<double> pc, eta_d, eta_c, eta_m, distance_km, l_att_km, c_mps;
  std::optional<std::string> detector, scenario, config, out;
  std::optional<unsigned> threads;
  bool exact_click = false;
  std::string format = "csv";
};

study::StudyConfig resolve(const Flags& f) {
  study::StudyConfig c = f.config ? study::load_config(*f.config) : study::StudyConfig{};
  if (f.pc) c.base.p_c = *f.pc;
  if (f.eta_d) c.base.eta_d = *f.eta_d;
  if (f.eta_c) c.base.eta_c = *f.eta_c;
  if (f.eta_m) c.base.eta_m_override = *f.eta_m;
  if (f.distance_km) c.base.distance_km = *f.distance_km;
  if (f.l_att_km) c.base.l_att_km = *f.l_att_km;
  if (f.c_mps) c.base.c_mps = *f.c_mps;
  if (f.detector) c.detectors = {parse_detector(*f.detector)};
  if (f.scenario) c.scenarios = {parse_scenario(*f.scenario)};
  if (f.threads) c.threads = std::max(1u, *f.threads);
  if (f.exact_click) c.qkd.exact_click = true;
  c.format = f.format;
  c.validate();
  return c;
}

SystemParams for_detector(SystemParams p, Detector d) {
  p.detector = d;
  return p;
}

std::string det_name(Detector d) { return std::string(to_string(d)); }

void emit(const Table& t, const study::StudyConfig& c, const Flags& f, const std::string& stem) {
  const std::string text = t.render(c.format);
  if (f.out) {
    study::write_file(std::filesystem::path(*f.out) / (stem + "." + c.format), text);
  } else {
    std::cout << text;
  }
}

Table link_metrics_table(const study::StudyConfig& c) {
  Table t{{"detector", "L_km", "p_c", "eta_s", "alpha", "herald_prob", "fidelity"}, {}};
  for (auto d : c.detectors) {
    const auto p = for_detector(c.base, d);
    const auto m = link_metrics(p, p.distance_km);
    t.add({det_name(d), p.distance_km, p.p_c, m.eta_s, m.alpha, m.herald_prob, m.fidelity});
  }
  return t;
}

Table repeater_metrics_table(const study::StudyConfig& c) {
  Table t{{"detector", "L_km", "p_c", "eta_m", "herald_prob_link", "p_m", "p_m_purified", "fidelity",
           "fidelity_purified", "vacuum_weight", "F_werner"},
          {}};
  for (auto d : c.detectors) {
    const auto p = for_detector(c.base, d);
    const double half = p.distance_km / 2.0;
    const auto s = swap_metrics(p);
    t.add({det_name(d), p.distance_km, p.p_c, p.eta_m(), herald_probability(p, half), s.p_m, s.p_m_purified,
           s.fidelity, s.fidelity_purified, s.vacuum_weight, werner_swap_fidelity(link_fidelity(p, half))});
  }
  return t;
}

Table qkd_rate_table(const study::StudyConfig& c) {
  Table t{{"detector", "scenario", "L_km", "p_c", "qber", "p_click", "secret_fraction", "rate"}, {}};
  for (auto d : c.detectors) {
    for (auto s : c.scenarios) {
      const auto p = for_detector(c.base, d);
      const auto r = qkd_report(p, s, c.qkd);
      t.add({det_name(d), std::string(to_string(s)), p.distance_km, p.p_c, r.qber, r.p_click, r.secret_fraction,
             r.rate});
    }
  }
  return t;
}

Table optimal_pc_table(const study::StudyConfig& c) {
  Table t{{"detector", "scenario", "L_km", "status", "p_c_opt", "rate_opt", "evaluations", "multimodal_fallback"}, {}};
  for (auto d : c.detectors) {
    for (auto s : c.scenarios) {
      const auto p = for_detector(c.base, d);
      const auto o = optimize_pc(p, s, c.optimizer, c.qkd);
      t.add({det_name(d), std::string(to_string(s)), p.distance_km,
             std::string(o.found ? "ok" : "no positive rate"), o.found ? Cell{o.p_c} : Cell{}, o.rate,
             static_cast<double>(o.evaluations), std::string(o.multimodal_fallback ? "true" : "false")});
    }
  }
  return t;
}

Table crossover_table(const study::StudyConfig& c) {
  Table t{{"detector", "quantity", "eta_m", "p_c", "L_cross_km", "status"}, {}};
  auto row = [&](Detector d, const std::string& what, double pc, const study::Crossover& x) {
    t.add({det_name(d), what, c.base.eta_m(), pc > 0.0 ? Cell{pc} : Cell{},
           x.status == study::CrossoverStatus::Found ? Cell{x.distance_km} : Cell{}, study::to_string(x.status)});
  };
  for (auto d : c.detectors) {
    const auto p = for_detector(c.base, d);
    row(d, "qkd_rate", 0.0, study::qkd_crossover(p, c.crossover, c.optimizer, c.qkd));
    row(d, "heralding_purified", p.p_c, study::heralding_crossover(p, true, c.crossover));
    row(d, "heralding_unpurified", p.p_c, study::heralding_crossover(p, false, c.crossover));
  }
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heralded-entanglement repeater and QKD rate calculator"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--pc", f.pc, "Excitation probability p_c");
  app.add_option("--eta-d", f.eta_d, "Detector efficiency");
  app.add_option("--eta-c", f.eta_c, "Retrieval efficiency");
  app.add_option("--eta-m", f.eta_m, "Measurement-module efficiency (default eta_c * eta_d)");
  app.add_option("--distance-km", f.distance_km, "End-to-end distance L in km");
  app.add_option("--l-att-km", f.l_att_km, "Fibre attenuation length in km (default 25)");
  app.add_option("--c-mps", f.c_mps, "Signal speed in m/s (default 2e8)");
  app.add_option("--detector", f.detector, "pnrd or nrpd (default: both)")
      ->check(CLI::IsMember({"pnrd", "nrpd", "PNRD", "NRPD"}));
  app.add_option("--scenario", f.scenario, "direct or repeater (default: both)")
      ->check(CLI::IsMember({"direct", "repeater", "one_repeater"}));
  app.add_flag("--exact-click", f.exact_click, "Exclude same-side double clicks from the sifted-click probability");
  app.add_option("--config", f.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--out", f.out, "Output directory (default: stdout; figures default to ./figures)");
  app.add_option("--format", f.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", f.threads, "Worker threads");

  auto* link = app.add_subcommand("link-metrics", "Herald probability and fidelity of one link of length L");
  auto* rep = app.add_subcommand("repeater-metrics", "Swap metrics of the one-repeater chain over L");
  auto* qkd = app.add_subcommand("qkd-rate", "QBER, sifted clicks and secret key rate");
  auto* opt = app.add_subcommand("optimal-pc", "Rate-optimal excitation probability");
  auto* cross = app.add_subcommand("crossover", "Distance beyond which the repeater wins");
  auto* sweep = app.add_subcommand("sweep", "Grid sweep over the config axes");
  auto* figs = app.add_subcommand("figures", "Regenerate every figure dataset");
  auto* val = app.add_subcommand("validate", "Run the self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const auto cfg = resolve(f);
    if (link->parsed()) emit(link_metrics_table(cfg), cfg, f, "link_metrics");
    if (rep->parsed()) emit(repeater_metrics_table(cfg), cfg, f, "repeater_metrics");
    if (qkd->parsed()) emit(qkd_rate_table(cfg), cfg, f, "qkd_rate");
    if (opt->parsed()) emit(optimal_pc_table(cfg), cfg, f, "optimal_pc");
    if (cross->parsed()) emit(crossover_table(cfg), cfg, f, "crossover");
    if (sweep->parsed()) emit(study::sweep(cfg), cfg, f, "sweep");
    if (figs->parsed()) {
      const std::filesystem::path dir = f.out ? *f.out : "figures";
      const auto set = study::emit_figures(cfg, dir);
      std::cout << "wrote " << set.tables.size() << " datasets, manifest.json and timings.json to " << dir.string()
                << "\n";
    }
    if (val->parsed()) {
      const auto report = validation::run_all();
      const auto json = study::to_json(report).dump(2) + "\n";
      const auto text = study::to_text(report);
      std::cout << (cfg.format == "json" ? json : text);
      if (f.out) {
        study::write_file(std::filesystem::path(*f.out) / "validation.json", json);
        study::write_file(std::filesystem::path(*f.out) / "validation.txt", text);
      }
      if (!report.ok()) return kValidation;
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return 0;
}
