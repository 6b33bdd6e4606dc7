// Command-line front end: run a config, run a named suite, or rebuild a summary.
#include "sagopt/harness/suites.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#ifndef SAGOPT_DATA_DIR
#define SAGOPT_DATA_DIR "data"
#endif

namespace {

using namespace sagopt;
using namespace sagopt::harness;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
};

void apply(ExperimentConfig& c, const Overrides& o) {
  if (o.seed) c.seeds = {*o.seed};
  if (o.out) c.output = *o.out;
  if (o.format) c.format = *o.format;
}

void print_summary(const std::vector<SummaryRow>& rows) {
  std::printf("%-16s %6s %12s %14s %s\n", "optimizer", "seed", "stabilized", "final_error", "status");
  for (const auto& r : rows) {
    std::printf("%-16s %6llu %12s %14.6g %s\n", r.optimizer.c_str(),
                static_cast<unsigned long long>(r.seed),
                r.stabilization ? std::to_string(*r.stabilization).c_str() : "never", r.final_error,
                to_string(r.status).c_str());
  }
}

// 0 unless every run diverged.
int run_config(ExperimentConfig c, const Overrides& o, bool quiet = false) {
  apply(c, o);
  std::fprintf(stderr, "%s: %zu methods x %zu seeds, config %s -> %s\n", c.name.c_str(),
               c.methods.size(), c.seeds.size(), config_hash(c).c_str(), c.output.c_str());
  const auto records = run_experiment(c);
  const auto rows = emit_outputs(records, c, c.output, c.format);
  if (!quiet) print_summary(rows);
  if (all_diverged(records)) {
    std::fprintf(stderr, "every run diverged\n");
    return 3;
  }
  return 0;
}

int run_suite(const std::string& name, const Overrides& o, const std::string& data_dir) {
  const std::string base = o.out.value_or("out/" + name);
  if (name == "rosenbrock" || name == "rastrigin") {
    Overrides sub = o;
    sub.out = base;
    return run_config(parse_config(name == "rosenbrock" ? rosenbrock_preset() : rastrigin_preset()), sub);
  }
  if (name == "sklearn-toys") {
    int worst = 0;
    for (const auto& j : sklearn_toy_presets(data_dir)) {
      auto c = parse_config(j);
      Overrides sub = o;
      sub.out = base + "/" + c.name;
      worst = std::max(worst, run_config(std::move(c), sub));
    }
    return worst;
  }
  if (name == "theorem1") {
    Theorem1Report rep = run_theorem1();
    ExperimentConfig& c = rep.config;
    apply(c, Overrides{std::nullopt, base, o.format});
    emit_outputs(rep.records, c, c.output, c.format);
    const json j = theorem1_to_json(rep);
    write_atomically(fs::path(c.output) / "theorem1.json", j.dump(2) + "\n");
    std::printf("mu=%.6g L=%.6g alpha=%.6g log-rate bound=%.6g\n", rep.mu, rep.L, rep.alpha,
                rep.log_rate);
    for (const auto& r : rep.rates) {
      std::printf("rate  %-14s mean slope %.6g <= %.6g : %s\n", r.label.c_str(), r.mean_slope,
                  r.bound, r.pass ? "ok" : "VIOLATED");
    }
    for (const auto& b : rep.bounds) {
      std::printf("bound %-8s k=%-5llu gap %.6g <= %.6g : %s\n", sag::to_string(b.init).c_str(),
                  static_cast<unsigned long long>(b.k), b.mean_gap, b.bound,
                  b.pass ? "ok" : "VIOLATED");
    }
    return all_diverged(rep.records) ? 3 : 0;
  }
  throw ConfigError("unknown suite '" + name + "' (theorem1, rosenbrock, rastrigin, sklearn-toys)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite-sum optimizer experiments"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;
  std::string format;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "run only this seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--format", format, "csv, json or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
  };

  std::string config_path;
  auto* run = app.add_subcommand("run", "run the grid described by a JSON config");
  run->add_option("config", config_path, "config file")->required();
  add_overrides(run);

  std::string suite_name;
  std::string data_dir = SAGOPT_DATA_DIR;
  auto* suite = app.add_subcommand("suite", "run a named preset");
  suite->add_option("name", suite_name, "theorem1 | rosenbrock | rastrigin | sklearn-toys")
      ->required()
      ->check(CLI::IsMember({"theorem1", "rosenbrock", "rastrigin", "sklearn-toys"}));
  suite->add_option("--data", data_dir, "directory with the bundled CSV datasets");
  add_overrides(suite);

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "rebuild summary.csv from trajectory files");
  rep->add_option("dir", report_dir, "output directory of an earlier run")->required();

  CLI11_PARSE(app, argc, argv);

  Overrides o;
  for (auto* sub : {run, suite}) {
    if (sub->parsed()) {
      if (sub->count("--seed") != 0) o.seed = seed;
      if (sub->count("--out") != 0) o.out = out;
      if (sub->count("--format") != 0) o.format = format;
    }
  }

  try {
    if (run->parsed()) return run_config(load_config_file(config_path), o);
    if (suite->parsed()) return run_suite(suite_name, o, data_dir);
    if (rep->parsed()) {
      print_summary(report(report_dir));
      return 0;
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 2;
  } catch (const ml::CsvError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
