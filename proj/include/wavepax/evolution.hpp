#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/dispersion.hpp"
#include "wavepax/field.hpp"

namespace wavepax {

// One term chi[out](in_1, ..., in_m) = coeff of a constant m-linear tensor over components.
struct TensorEntry {
  int out = 0;
  std::vector<int> in;
  cplx coeff;
};

// chi(k, k_1..k_m) entry for the callback form; k_m is the derived last argument.
using SusceptibilityFn =
    std::function<cplx(int out, const std::vector<int>& in, const KVec& k, const std::vector<KVec>& ks)>;

class Susceptibility {
 public:
  Susceptibility() = default;
  static Susceptibility constant(int order, int ncomp, std::vector<TensorEntry> entries);
  static Susceptibility callback(int order, int ncomp, std::vector<TensorEntry> pattern, SusceptibilityFn fn,
                                 double c_chi);

  // F_+ = -i q U_- U_+^2, F_- = i q U_+ U_-^2 on a single band pair.
  static Susceptibility nls(double q);
  // F_zeta = zeta i alpha (sum of all components)^m on ncomp components.
  static Susceptibility real_power(int order, int ncomp, double alpha);

  int order() const { return order_; }
  int ncomp() const { return ncomp_; }
  bool is_callback() const { return static_cast<bool>(fn_); }
  const std::vector<TensorEntry>& entries() const { return entries_; }
  const SusceptibilityFn& fn() const { return fn_; }
  // max_out sum_in |chi[out](in)|.
  double c_chi() const { return c_chi_; }

  // F_out = out_coeff[out] (sum_c in_weight[c] U_c)^m, when the tensor has that form.
  struct PowerForm {
    std::vector<cplx> out_coeff;
    std::vector<cplx> in_weight;
  };
  const std::optional<PowerForm>& power_form() const { return power_; }

  nlohmann::json to_json() const;

 private:
  int order_ = 0;
  int ncomp_ = 0;
  std::vector<TensorEntry> entries_;
  SusceptibilityFn fn_;
  double c_chi_ = 0.0;
  std::optional<PowerForm> power_;
};

// Build the nonlinearity list from {"preset": "nls"|"real_power", ...}.
std::vector<Susceptibility> make_nonlinearity(const nlohmann::json& spec, int ncomp);

enum class ConvolutionMode { Fft, Direct };

// sum over the susceptibility's entries of chi * U_{in_1} * ... * U_{in_m} (discrete convolution with
// measure (dk / 2 pi)^{(m-1) d}). All argument slots read the same field. pad = 0 zero-pads by
// ceil((m + 1) / 2), the smallest factor that keeps the discrete convolution exact.
ModalField apply_nonlinearity(const ModalField& u, const Susceptibility& chi,
                              ConvolutionMode mode = ConvolutionMode::Fft, int pad = 0);
// Separate field per argument slot; slot j supplies component in_j of every entry.
ModalField apply_nonlinearity(const std::vector<const ModalField*>& slots, const Susceptibility& chi,
                              ConvolutionMode mode = ConvolutionMode::Fft, int pad = 0);

// One decorated product: slots[j] picks the pool field feeding argument j; the result adds to target.
struct ConvTerm {
  int target = 0;
  std::vector<int> slots;
};

// Sum of chi over the given terms, one output field per target. With target_comp, target t keeps only the
// entries whose output component is (*target_comp)[t] (negative keeps all).
std::vector<ModalField> convolve_terms(const std::vector<const ModalField*>& pool, const Susceptibility& chi,
                                       const std::vector<ConvTerm>& terms, int ntargets,
                                       ConvolutionMode mode = ConvolutionMode::Fft, int pad = 0,
                                       const std::vector<int>* target_comp = nullptr);

struct BandSign {
  int n = 1;
  int zeta = 1;
};

// omega_{n,zeta}(k) - sum_j omega_{n_j,zeta_j}(k_j), with k_m = k - sum_{j<m} k_j.
// ks holds m - 1 wavevectors.
double interaction_phase(const DispersionModel& model, int n, int zeta, const std::vector<BandSign>& args,
                         const KVec& k, const std::vector<KVec>& ks);

// Per-node eigen-decomposition of L(k), cached for repeated propagator applications.
class Propagator {
 public:
  Propagator(const DispersionModel& model, const Grid& grid);

  // exp(sign * i * t * L(k)) applied to every node of f.
  void apply(ModalField& f, double t, int sign) const;
  int ncomp() const { return ncomp_; }
  double max_abs_omega() const { return max_abs_omega_; }
  bool diagonal() const { return diagonal_; }
  // Diagonal symbols only: e^{-i t lambda_c(k)}, components-major like ModalField storage.
  CVec phases(double t) const;

 private:
  Grid grid_;
  int ncomp_ = 0;
  bool diagonal_ = true;
  std::vector<double> lambda_;            // node-major, ncomp per node
  std::vector<Eigen::MatrixXcd> vectors_;  // empty when diagonal
  double max_abs_omega_ = 0.0;
};

enum class Direction { SlowToFast, FastToSlow };

// U = e^{-i tau L / rho} u and its inverse.
ModalField fast_slow_transform(const ModalField& field, const DispersionModel& model, double rho, double tau,
                               Direction dir);

struct EvolutionProblem {
  DispersionModel model;
  std::vector<Susceptibility> nonlinearity;
  double rho = 0.01;
  double tau_star = 1.0;
  ModalField initial;
  // Optional beta for the beta^2 / rho <= c1 warning.
  double beta = 0.0;
  double c1 = 1.0;
};

struct SolverConfig {
  // Relative to max(1, ||h||_{L1}).
  double picard_tol = 1e-12;
  int picard_max_iter = 60;
  double substeps_per_rho = 10.0;
  int dealias_factor = 0;  // 0 selects ceil((m_F + 1) / 2)
  ConvolutionMode convolution = ConvolutionMode::Fft;
  int record_stride = 1;
  // Picard windows covering [0, tau*]; each window is iterated to convergence in turn.
  int windows = 0;  // 0 chooses from the contraction heuristic

  nlohmann::json to_json() const;
  static SolverConfig from_json(const nlohmann::json& j);
};

struct PicardWindow {
  double t0 = 0.0;
  double t1 = 0.0;
  std::vector<double> distances;
};

class Trajectory {
 public:
  std::vector<double> times;
  std::vector<ModalField> slow;
  std::vector<PicardWindow> history;
  double rho = 0.0;
  double h_tau = 0.0;

  std::size_t size() const { return times.size(); }
  // Fast field at sample i.
  ModalField fast(std::size_t i, const DispersionModel& model) const;
  const ModalField& final_slow() const { return slow.back(); }
  int total_iterations() const;
};

using Observer = std::function<void(double tau, const ModalField& slow)>;

// Right-hand side on the slow frame: e^{i tau L / rho} F(e^{-i tau L / rho} u).
class SlowRhs {
 public:
  SlowRhs(const EvolutionProblem& problem, const SolverConfig& config);
  ModalField operator()(double tau, const ModalField& u) const;
  // Nonlinearity on a fast-frame field.
  ModalField nonlinearity(const ModalField& fast) const;
  const Propagator& propagator() const { return prop_; }

 private:
  const EvolutionProblem& problem_;
  ConvolutionMode mode_;
  int pad_;
  Propagator prop_;
};

// Contraction constant estimate c_chi m^2 (4 R)^{m-1} summed over orders, R = ||h||_{L1} / (2 pi)^d.
double contraction_constant(const EvolutionProblem& problem);

// Slow-frame right-hand side for the Picard core. prepare receives the mesh times of each window before
// eval(j, tau_j, u_j) is called on them.
struct SlowOperator {
  std::function<void(const std::vector<double>& taus)> prepare;
  std::function<ModalField(std::size_t j, double tau, const ModalField& u)> eval;
};

// Windowed Picard iteration of u = u0 + int_0^tau G(t, u(t)) dt; an empty eval leaves u constant.
Trajectory solve_picard(const ModalField& initial, const SlowOperator& op, double rho, double tau_star,
                        double contraction, const SolverConfig& config, const Observer& observer = {});

// e^{-/+ i tau L / rho} on fields made of `blocks` stacked copies of the model's components, with the
// diagonal phases cached per window.
class FrameCache {
 public:
  FrameCache(const Propagator& prop, double rho, int blocks = 1);
  void prepare(const std::vector<double>& taus);
  ModalField to_fast(std::size_t j, double tau, const ModalField& u) const;
  ModalField to_slow(std::size_t j, double tau, const ModalField& f) const;

 private:
  ModalField shift(std::size_t j, double tau, const ModalField& u, int sign) const;
  const Propagator& prop_;
  double rho_;
  int blocks_;
  std::vector<CVec> phase_;
};

// Solve u = h + int_0^tau e^{i t L/rho} F(e^{-i t L/rho} u(t)) dt by Picard iteration with the
// composite trapezoid rule on the mesh h_tau = min(tau*/16, rho / substeps_per_rho).
Trajectory solve_integrated(const EvolutionProblem& problem, const SolverConfig& config,
                            const Observer& observer = {});

// Pi_{n,zeta}(k) u(k); band-crossing nodes are zeroed and counted in *zeroed.
ModalField modal_project(const ModalField& field, const DispersionModel& model, int n, int zeta,
                         std::size_t* zeroed = nullptr);

}  // namespace wavepax
