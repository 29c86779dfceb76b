#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "wavepax/errors.hpp"
#include "wavepax/harness.hpp"
#include "wavepax/resonance.hpp"

namespace fs = std::filesystem;
using namespace wavepax;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << text;
}

int analyze(const fs::path& config, int probe, std::uint64_t seed, const fs::path& out) {
  const RunConfig cfg = RunConfig::load(config);
  const auto model = cfg.make_dispersion();
  ResonanceOptions opts;
  opts.orders = cfg.resonance_orders();
  const auto report = classify(cfg.spectrum(), model, opts);
  nlohmann::json j = report.to_json();
  if (probe > 0) j["genericity_probe"] = genericity_probe(cfg.spectrum(), model, opts, probe, 0.1, seed);
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    fs::create_directories(out);
    write_text(out / "resonance.json", text);
  }
  return 0;
}

int simulate_cmd(const fs::path& config, const fs::path& out) {
  const RunConfig cfg = RunConfig::load(config);
  const auto sim = simulate(cfg);
  fs::create_directories(out / "snapshots");
  std::string csv;
  for (std::size_t i = 0; i < sim.columns.size(); ++i) csv += (i ? "," : "") + sim.columns[i];
  csv += "\n";
  for (const auto& row : sim.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) csv += (i ? "," : "") + fmt::format("{:.17g}", row[i]);
    csv += "\n";
  }
  write_text(out / "metrics.csv", csv);
  const auto& traj = sim.trajectory;
  const nlohmann::json meta = {{"config_hash", cfg.hash()}, {"rho", traj.rho}};
  write_snapshot(out / "snapshots" / "initial.wpx", traj.slow.front(), false, meta);
  write_snapshot(out / "snapshots" / "final.wpx", traj.final_slow(), false, meta);
  const nlohmann::json result = {{"experiment", "simulate"},
                                 {"samples", traj.size()},
                                 {"iterations", traj.total_iterations()},
                                 {"h_tau", traj.h_tau},
                                 {"final_l1", traj.final_slow().l1_norm()},
                                 {"provenance", {{"config_hash", cfg.hash()}, {"version", WAVEPAX_VERSION}}}};
  write_text(out / "result.json", result.dump(2) + "\n");
  return 0;
}

int experiment_cmd(const std::string& name, const fs::path& config, const fs::path& out, ExperimentOptions opt) {
  const RunConfig cfg = RunConfig::load(config);
  const auto res = run_experiment(name, cfg, opt);
  res.write(out);
  for (const auto& c : res.checks)
    spdlog::info("{} {} = {:.6g} in [{:.3g}, {:.3g}]", c.pass ? "ok  " : "FAIL", c.name, c.value, c.lower, c.upper);
  for (const auto& h : res.hypotheses)
    if (!h.ok) spdlog::warn("hypothesis {} not satisfied: {}", h.name, h.detail);
  return res.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("wavepax"));
  CLI::App app{"Multi-wavepacket evolution and experiment harness"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error")->capture_default_str();

  fs::path config, out;
  int probe = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 1;
  bool force = false;
  std::string name;

  auto* res = app.add_subcommand("resonance", "Resonance analysis");
  res->require_subcommand(1);
  auto* an = res->add_subcommand("analyze", "Classify the spectrum of a config");
  an->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  an->add_option("--probe", probe, "Genericity probe trials");
  an->add_option("--seed", seed, "Probe seed");
  an->add_option("--out", out, "Output directory (default: stdout)");

  auto* sim = app.add_subcommand("simulate", "Solve the full equation for a config");
  sim->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "Output directory")->required();

  auto* ex = app.add_subcommand("experiment", "Run an experiment");
  ex->add_option("name", name, "Experiment")
      ->required()
      ->check(CLI::IsMember({"preservation", "superposition", "positions", "soliton", "averaging"}));
  ex->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", out, "Output directory")->required();
  auto* seed_opt = ex->add_option("--seed", seed, "Seed override");
  ex->add_option("--workers", workers, "Parallel sweep runs")->check(CLI::PositiveNumber);
  ex->add_flag("--force", force, "Run even when hypotheses fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }
  spdlog::set_level(spdlog::level::from_str(level));
  seed_set = seed_opt->count() > 0;

  try {
    if (an->parsed()) return analyze(config, probe, seed, out);
    if (sim->parsed()) return simulate_cmd(config, out);
    ExperimentOptions opt;
    opt.force = force;
    opt.workers = workers;
    if (seed_set) opt.seed = seed;
    return experiment_cmd(name, config, out, opt);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.code() == ErrorCode::HypothesisViolated ? 2 : 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 3;
  }
}
