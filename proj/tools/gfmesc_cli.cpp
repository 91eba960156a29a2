// gfmesc: droop sweeps, ESC runs and fixed-droop comparisons on a YAML study.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gfmesc/config.hpp"
#include "gfmesc/csv.hpp"
#include "gfmesc/gfmesc.hpp"

namespace fs = std::filesystem;
using namespace gfmesc;

namespace {

struct Common {
  std::string config;
  std::string model;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  int workers = -1;
};

StudyConfig load(const Common& c) {
  std::optional<fs::path> model;
  if (!c.model.empty()) model = fs::path(c.model);
  StudyConfig cfg = load_study(c.config, model);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers >= 0) cfg.settings.workers = c.workers;
  return cfg;
}

void write_failures(const fs::path& dir, const std::vector<csv::Failure>& failures) {
  csv::write_file(dir / "failures.csv", [&](std::ostream& os) { csv::write_failures(os, failures); });
}

void append_metrics(const fs::path& path, double droop, const Evaluation& ev) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  if (fresh) os << csv::metrics_header() << '\n';
  csv::write_metrics_row(os, droop, ev.metrics, ev.cost);
}

void print_metrics(const char* label, const Evaluation& ev) {
  std::printf("%s droop=%.6g J=%.6g E_avg=%.6g R_mean=%.6g R_max=%.6g F_final=%.6g\n", label,
              ev.droop, ev.cost, ev.metrics.e_avg, ev.metrics.r_mean, ev.metrics.r_max,
              ev.metrics.f_final);
}

int cmd_simulate(const Common& c, const std::string& scenario_name, std::optional<double> droop) {
  const StudyConfig cfg = load(c);
  ReferenceCache cache;
  const StudySettings st = resolved_settings(cfg, cache);
  const ScenarioSpec sc = cfg.scenario(scenario_name);
  const double x = droop.value_or(cfg.x0);
  const fs::path dir = c.out;
  std::vector<csv::Failure> failures;
  int rc = 0;
  try {
    const Evaluation ev = evaluate_droop(sc, x, st);
    csv::write_file(dir / "trajectory.csv",
                    [&](std::ostream& os) { csv::write_trajectory(os, ev.trajectory); });
    append_metrics(dir / "metrics.csv", x, ev);
    print_metrics(sc.name.c_str(), ev);
  } catch (const std::exception& e) {
    failures.push_back({"trajectory", csv::num(x), e.what()});
    std::fprintf(stderr, "simulate failed: %s\n", e.what());
    rc = 1;
  }
  write_failures(dir, failures);
  return rc;
}

int cmd_sweep(const Common& c, const std::string& scenario_name, std::optional<int> points) {
  StudyConfig cfg = load(c);
  if (points) cfg.sweep_points = *points;
  ReferenceCache cache;
  const StudySettings st = resolved_settings(cfg, cache);
  const ScenarioSpec sc = cfg.scenario(scenario_name);
  const std::vector<SweepPoint> sweep = sweep_droop(sc, cfg.grid(), st);
  const fs::path dir = c.out;
  csv::write_file(dir / "metrics.csv", [&](std::ostream& os) { csv::write_sweep(os, sweep); });
  std::vector<csv::Failure> failures;
  for (const SweepPoint& p : sweep) {
    if (!p.ok()) failures.push_back({"metrics", csv::num(p.droop), p.failure});
  }
  write_failures(dir, failures);
  const auto best = sweep_argmin(sweep);
  std::printf("%s: %zu points, %zu failed", sc.name.c_str(), sweep.size(), failures.size());
  if (best) std::printf(", argmin droop=%.6g", *best);
  std::printf("\n");
  return 0;
}

int cmd_esc(const Common& c, const std::string& scenario_name, std::optional<int> iterations,
            std::optional<double> x0) {
  const StudyConfig cfg = load(c);
  ReferenceCache cache;
  const StudySettings st = resolved_settings(cfg, cache);
  const ScenarioSpec sc = cfg.scenario(scenario_name);
  const EscTrace trace = esc_run(
      [&](int it, double droop) { return evaluate_droop(sc, droop, st, it).cost; }, st.esc,
      x0.value_or(cfg.x0), iterations.value_or(cfg.iterations));
  const fs::path dir = c.out;
  csv::write_file(dir / "trace.csv", [&](std::ostream& os) { csv::write_trace(os, trace); });
  std::vector<csv::Failure> failures;
  if (trace.failure) failures.push_back({"trace", std::to_string(trace.rows.size()), *trace.failure});
  write_failures(dir, failures);
  std::printf("%s: %zu iterations, final droop=%.6g\n", sc.name.c_str(), trace.rows.size(),
              trace.final_state.droop);
  return trace.failure ? 1 : 0;
}

int cmd_case(const Common& c, const std::string& case_name, bool reference) {
  const StudyConfig cfg = load(c);
  ReferenceCache cache;
  const StudySettings st = resolved_settings(cfg, cache);
  const CaseSpec spec = cfg.case_spec(case_name);
  const CaseResult result = run_case(spec, st, reference ? cfg.grid() : std::vector<double>{});
  const fs::path dir = c.out;
  csv::write_file(dir / "trace.csv", [&](std::ostream& os) { csv::write_case_trace(os, result); });
  std::vector<csv::Failure> failures;
  if (result.trace.failure)
    failures.push_back({"trace", std::to_string(result.trace.rows.size()), *result.trace.failure});
  for (std::size_t s = 0; s < result.segment_sweeps.size(); ++s) {
    for (const SweepPoint& p : result.segment_sweeps[s]) {
      if (!p.ok()) failures.push_back({"segment" + std::to_string(s), csv::num(p.droop), p.failure});
    }
  }
  write_failures(dir, failures);
  std::printf("%s: %zu iterations, final droop=%.6g\n", spec.name.c_str(), result.trace.rows.size(),
              result.trace.final_state.droop);
  for (std::size_t s = 0; s < result.segment_argmin.size(); ++s) {
    if (result.segment_argmin[s])
      std::printf("  segment %zu (%s) sweep argmin=%.6g\n", s, spec.segments[s].scenario.name.c_str(),
                  *result.segment_argmin[s]);
  }
  return result.trace.failure ? 1 : 0;
}

int cmd_compare(const Common& c, std::optional<double> a, std::optional<double> b) {
  const StudyConfig cfg = load(c);
  ReferenceCache cache;
  const StudySettings st = resolved_settings(cfg, cache);
  const ScenarioSpec sc = cfg.scenario(cfg.compare_scenario);
  const Comparison cmp = compare_fixed(sc, a.value_or(cfg.compare_a), b.value_or(cfg.compare_b), st);
  const fs::path dir = c.out;
  std::vector<csv::Failure> failures;
  csv::write_file(dir / "metrics.csv", [&](std::ostream& os) {
    os << csv::metrics_header() << '\n';
    for (const RunOutcome* r : {&cmp.a, &cmp.b}) {
      if (r->evaluation) csv::write_metrics_row(os, r->droop, r->evaluation->metrics, r->evaluation->cost);
    }
  });
  for (const auto& [tag, r] : {std::pair{"a", &cmp.a}, std::pair{"b", &cmp.b}}) {
    if (r->evaluation) {
      csv::write_file(dir / ("trajectory_" + std::string(tag) + ".csv"),
                      [&](std::ostream& os) { csv::write_trajectory(os, r->evaluation->trajectory); });
      print_metrics(tag, *r->evaluation);
    } else {
      failures.push_back({"metrics", csv::num(r->droop), r->failure});
    }
  }
  write_failures(dir, failures);
  return failures.empty() ? 0 : 1;
}

int cmd_sensitivity(const Common& c, const std::string& scenario_name, double perturbation) {
  const StudyConfig cfg = load(c);
  ReferenceCache cache;
  const StudySettings st = resolved_settings(cfg, cache);
  const ScenarioSpec sc = cfg.scenario(scenario_name);
  const std::vector<double> grid = cfg.grid();
  const std::vector<SweepPoint> sweep = sweep_droop(sc, grid, st);
  std::size_t i = 0;
  const WeightSensitivity s = weight_sensitivity(
      [&](double) {
        const SweepPoint& p = sweep[i++];
        if (!p.ok()) throw SimulationError("grid point failed: " + p.failure, 0.0);
        return *p.metrics;
      },
      grid, st.weights, st.metric, perturbation);
  std::printf("optimum=%.6g sensitivity=[%.4g, %.4g, %.4g, %.4g]\n", s.nominal_optimum, s.value[0],
              s.value[1], s.value[2], s.value[3]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Droop tuning by relay extremum seeking on a grid-transient simulator"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "Study config (YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--model", common.model, "Network model (YAML); overrides the config's model")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "Disturbance randomization seed");
    sub->add_option("--workers", common.workers, "Sweep worker threads (0: all cores)");
  };

  std::string scenario = "baseline";
  std::optional<double> droop, droop_a, droop_b, x0;
  std::optional<int> points, iterations;
  std::string case_name;
  bool reference = false;
  double perturbation = 0.5;

  CLI::App* sim = app.add_subcommand("simulate", "One disturbance run at a fixed droop");
  add_common(sim);
  sim->add_option("--scenario", scenario)->capture_default_str();
  sim->add_option("--droop", droop, "P-f droop (default: esc.x0)");

  CLI::App* sweep = app.add_subcommand("sweep", "Cost over a uniform droop grid");
  add_common(sweep);
  sweep->add_option("--scenario", scenario)->capture_default_str();
  sweep->add_option("--points", points, "Grid points (default: sweep.points)");

  CLI::App* esc = app.add_subcommand("esc", "Relay extremum seeking on one scenario");
  add_common(esc);
  esc->add_option("--scenario", scenario)->capture_default_str();
  esc->add_option("--iterations", iterations);
  esc->add_option("--x0", x0);

  CLI::App* cas = app.add_subcommand("case", "Extremum seeking across topology segments");
  add_common(cas);
  cas->add_option("--case", case_name, "Case name from the config")->required();
  cas->add_flag("--reference", reference, "Also sweep each segment for its argmin");

  CLI::App* cmp = app.add_subcommand("compare", "Two fixed droops on the compare scenario");
  add_common(cmp);
  cmp->add_option("--droop-a", droop_a);
  cmp->add_option("--droop-b", droop_b);

  CLI::App* sens = app.add_subcommand("sensitivity", "Optimum shift under cost weight perturbation");
  add_common(sens);
  sens->add_option("--scenario", scenario)->capture_default_str();
  sens->add_option("--perturbation", perturbation)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(common, scenario, droop);
    if (sweep->parsed()) return cmd_sweep(common, scenario, points);
    if (esc->parsed()) return cmd_esc(common, scenario, iterations, x0);
    if (cas->parsed()) return cmd_case(common, case_name, reference);
    if (cmp->parsed()) return cmd_compare(common, droop_a, droop_b);
    if (sens->parsed()) return cmd_sensitivity(common, scenario, perturbation);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
