#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/evolution.hpp"
#include "wavepax/grid.hpp"
#include "wavepax/wavepacket.hpp"

namespace wavepax {

struct PacketConfig {
  WavepacketSpec spec;
  // Rescaled position y = rho r; r* = y / rho is set per run.
  std::optional<KVec> y_star;
};

struct RunConfig {
  std::string experiment;
  nlohmann::json model = {{"preset", "nls1d"}};
  nlohmann::json nonlinearity;
  Grid grid{1, 2048, 4.0};
  std::vector<PacketConfig> packets;
  double rho = 0.01;
  double tau_star = 0.5;
  double c1 = 1.0;
  SolverConfig solver;
  // Resonance orders; empty takes the orders of the nonlinearity.
  std::vector<int> orders;
  // C in the cutoff radius C beta^{1-eps}.
  double cutoff_factor = 1.0;
  std::vector<double> sweep_beta;
  std::vector<double> sweep_rho;
  // Sweep lists pair up elementwise instead of forming a product.
  bool paired = false;
  nlohmann::json thresholds = nlohmann::json::object();
  // Experiment-specific parameters.
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::filesystem::path base_dir;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& file);
  nlohmann::json to_json() const;
  // FNV-1a of the canonical JSON form, as 16 hex digits.
  std::string hash() const;

  DispersionModel make_dispersion() const;
  std::vector<Susceptibility> make_nonlinearity() const;
  std::vector<int> resonance_orders() const;
  // Distinct (n, k*) of the packets.
  NkSpectrum spectrum() const;
  // Packet specs at the given (beta, rho); beta <= 0 keeps the per-packet values.
  std::vector<WavepacketSpec> packet_specs(double beta, double rho) const;
  double threshold(const std::string& name, double fallback) const;
};

// One point of a (beta, rho) sweep; products are ordered beta-major.
struct SweepPoint {
  std::size_t index = 0;
  double beta = 0.0;
  double rho = 0.0;
};

std::vector<SweepPoint> sweep_points(const RunConfig& cfg);

struct RunRecord {
  std::size_t index = 0;
  double beta = 0.0;
  double rho = 0.0;
  std::vector<std::pair<std::string, double>> metrics;
  std::string error;

  double metric(const std::string& name) const;
};

struct FitResult {
  std::string name;
  double slope = 0.0;
  double intercept = 0.0;
  // Root mean square of the log residuals.
  double residual = 0.0;
  std::size_t points = 0;
};

// Least squares of log y against log x over the positive finite pairs.
FitResult loglog_fit(const std::string& name, const std::vector<double>& x, const std::vector<double>& y);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool pass = false;
};

struct HypothesisResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

struct ExperimentResult {
  std::string experiment;
  std::vector<std::string> columns;
  std::vector<RunRecord> runs;
  std::vector<FitResult> fits;
  std::vector<CheckResult> checks;
  std::vector<HypothesisResult> hypotheses;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::vector<std::string> series_columns;
  std::vector<std::vector<double>> series;
  std::vector<std::pair<std::string, ModalField>> snapshots;
  bool forced = false;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;

  bool hypotheses_ok() const;
  bool run_errors() const;
  bool passed() const;
  // 0 pass, 1 threshold fail, 2 hypothesis violation, 3 runtime error.
  int exit_code() const;
  void check(const std::string& name, double value, double lower, double upper);

  nlohmann::json to_json() const;
  std::string metrics_csv() const;
  std::string series_csv() const;
  // result.json, metrics.csv, series.csv when present, snapshots/<name>.wpx.
  void write(const std::filesystem::path& dir) const;
};

struct ExperimentOptions {
  bool force = false;
  int workers = 1;
  std::optional<std::uint64_t> seed;
};

ExperimentResult preservation_experiment(const RunConfig& cfg, const ExperimentOptions& opt = {});
ExperimentResult superposition_experiment(const RunConfig& cfg, const ExperimentOptions& opt = {});
ExperimentResult position_tracking_experiment(const RunConfig& cfg, const ExperimentOptions& opt = {});
ExperimentResult soliton_experiment(const RunConfig& cfg, const ExperimentOptions& opt = {});
ExperimentResult averaging_experiment(const RunConfig& cfg, const ExperimentOptions& opt = {});

// Dispatch on name: preservation, superposition, positions, soliton, averaging.
ExperimentResult run_experiment(const std::string& name, const RunConfig& cfg, const ExperimentOptions& opt = {});

// Runs fn on every sweep point with up to `workers` threads; rows come back in point order and a throwing
// point is recorded as an error.
using RunFn = std::function<std::vector<std::pair<std::string, double>>(const SweepPoint&)>;
std::vector<RunRecord> sweep(const std::vector<SweepPoint>& points, const RunFn& fn, int workers);

struct SimulationOutput {
  Trajectory trajectory;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// solve_integrated on the config's packets; rows hold tau, the slow L1 norm and each packet's mass.
SimulationOutput simulate(const RunConfig& cfg);

// Stationary NLS soliton sqrt(2) b / cosh(b (x - x0) / c) on the r-grid.
CVec soliton_profile(const Grid& grid, double b, double c, double x0);

}  // namespace wavepax
