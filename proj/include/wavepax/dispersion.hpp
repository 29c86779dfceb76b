#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "wavepax/grid.hpp"
#include "wavepax/spectrum.hpp"
#include "wavepax/vec.hpp"

namespace wavepax {

enum class SymbolKind { ScalarBand, MatrixSymbol };

// Closed-form band omega_n(k). Missing derivatives fall back to finite differences.
struct ScalarBand {
  std::function<double(const KVec&)> omega;
  std::function<KVec(const KVec&)> gradient;
  // Hessian entries (xx, xy, yy).
  std::function<std::array<double, 3>(const KVec&)> hessian;
};

using SymbolFn = std::function<Eigen::MatrixXcd(const KVec&)>;

struct DispersionTolerances {
  double gap = 1e-8;
  double sym = 1e-9;
  double proj = 1e-9;
  double h_fd = 1e-5;
};

// Eigen-decomposition of L(k) in band order. Column/entry comp(n, zeta) holds band (n, zeta).
struct NodeDecomposition {
  Eigen::VectorXd omega;
  Eigen::MatrixXcd vectors;
  // Smallest of the ordered gaps and |omega_{1,+-}|; negative when the ordering is violated.
  double gap = 0.0;
  bool ok = false;
};

struct BandCrossingScan {
  std::vector<std::size_t> nodes;
  // Crossing locations refined between nodes, plus flagged nodes themselves.
  std::vector<KVec> points;
};

struct BandNeighborhoodBounds {
  double pi0 = 0.0;
  double c_omega1 = 0.0;
  double c_omega2 = 0.0;
};

class DispersionModel {
 public:
  static DispersionModel scalar(int d, std::vector<ScalarBand> bands, std::string name);
  static DispersionModel matrix(int d, int J, SymbolFn symbol, std::string name);

  int d() const { return d_; }
  int J() const { return J_; }
  int ncomp() const { return 2 * J_; }
  SymbolKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  const nlohmann::json& params() const { return params_; }
  void set_params(nlohmann::json p) { params_ = std::move(p); }

  const DispersionTolerances& tol() const { return tol_; }
  void set_tolerances(const DispersionTolerances& t) { tol_ = t; }
  // Copy with tol.gap = 1e-8 (1 + max|omega| on the grid) and h_fd = dk / 100.
  DispersionModel calibrated(const Grid& grid) const;

  static int comp(int n, int zeta) { return 2 * (n - 1) + (zeta > 0 ? 0 : 1); }

  Eigen::MatrixXcd symbol(const KVec& k) const;
  NodeDecomposition decompose(const KVec& k) const;
  double gap(const KVec& k) const { return decompose(k).gap; }
  bool is_crossing(const KVec& k) const;

  // Throws BandCrossing when the gap at k is below tol.gap.
  double omega(int n, int zeta, const KVec& k) const;
  double band(int n, const KVec& k) const { return omega(n, +1, k); }
  // No gap check; still requires a successful symbol evaluation.
  double omega_unchecked(int n, int zeta, const KVec& k) const;

  KVec group_velocity(int n, int zeta, const KVec& k) const;
  KVec fd_group_velocity(int n, int zeta, const KVec& k, double h) const;
  std::array<double, 3> hessian(int n, int zeta, const KVec& k) const;
  Eigen::MatrixXcd projector(int n, int zeta, const KVec& k) const;

 private:
  void check_band(int n, int zeta) const;
  void require_gap(const NodeDecomposition& dec, const KVec& k) const;

  int d_ = 1;
  int J_ = 1;
  SymbolKind kind_ = SymbolKind::ScalarBand;
  std::string name_;
  nlohmann::json params_ = nlohmann::json::object();
  std::vector<ScalarBand> bands_;
  SymbolFn symbol_;
  DispersionTolerances tol_;
};

BandCrossingScan detect_band_crossings(const DispersionModel& model, const Grid& grid);

// Throws SpectrumOnSingularSet if some +-k_l is itself a crossing point.
BandNeighborhoodBounds neighborhood_bounds(const DispersionModel& model, const NkSpectrum& spectrum,
                                           const Grid& grid);

// Spectral norm of a symmetric 2x2 (or 1x1 when d = 1) Hessian.
double hessian_norm(const std::array<double, 3>& h, int d);

// Presets: "nls1d", "power", "twoband", "matrix:<file>". Relative files resolve against base_dir.
DispersionModel make_model(const nlohmann::json& spec, const std::filesystem::path& base_dir = {});

}  // namespace wavepax
