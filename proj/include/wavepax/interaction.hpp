#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/evolution.hpp"
#include "wavepax/resonance.hpp"

namespace wavepax {

// Resonant term lists per target (l, theta), stored at target index 2 l + (theta > 0 ? 0 : 1).
struct InteractionIndexSets {
  struct NearResonance {
    int target = 0;
    DecoratedIndex index;
    double omega = 0.0;
  };

  NkSpectrum spectrum;
  std::vector<int> orders;
  double tol_res = 0.0;
  double tol_k = 0.0;
  // Pair indices of each part; singletons unless a partition was given.
  std::vector<std::vector<int>> partition;
  std::vector<std::vector<DecoratedIndex>> resonant;
  std::vector<std::vector<DecoratedIndex>> diag;
  std::vector<std::vector<DecoratedIndex>> coup;
  std::vector<std::vector<DecoratedIndex>> reduced;
  std::vector<NearResonance> near;

  int npairs() const { return static_cast<int>(spectrum.size()); }
  int targets() const { return 2 * npairs(); }
  static int target(int l, int theta) { return 2 * l + (theta > 0 ? 0 : 1); }
  static int target_pair(int t) { return t / 2; }
  static int target_sign(int t) { return t % 2 == 0 ? +1 : -1; }
  // |Lambda^m| = (2N)^m.
  std::size_t full_count(int m) const;
  // Every resonant index of target (l, theta) has a slot with l_j = l.
  bool self_component() const;
  nlohmann::json to_json() const;
};

// tol_res <= 0 selects the resonance module default; tol_near <= 0 selects 10 tol_res.
InteractionIndexSets build_index_sets(const NkSpectrum& spectrum, const DispersionModel& model,
                                      const std::vector<int>& orders, double tol_res = 0.0,
                                      const std::vector<std::vector<int>>& partition = {}, double tol_near = 0.0);

enum class AveragingMode { Full, Diagonal, Reduced };

const char* to_string(AveragingMode m);
AveragingMode averaging_mode_from_string(const std::string& s);

// Stacked state: block t = target(l, theta) occupies components [t ncomp, (t + 1) ncomp).
class InteractionSystem {
 public:
  // radius is the cutoff radius beta^{1-eps}; Psi_{l,theta} is supported in the ball of that radius.
  InteractionSystem(DispersionModel model, std::vector<Susceptibility> nonlinearity, NkSpectrum spectrum,
                    const Grid& grid, double radius, SolverConfig config = {});

  int targets() const { return 2 * static_cast<int>(spectrum_.size()); }
  int ncomp() const { return model_.ncomp(); }
  const Grid& grid() const { return grid_; }
  const DispersionModel& model() const { return model_; }
  const NkSpectrum& spectrum() const { return spectrum_; }
  const std::vector<Susceptibility>& nonlinearity() const { return nonlinearity_; }
  double radius() const { return radius_; }
  const SolverConfig& config() const { return config_; }
  const std::vector<double>& cutoff(int t) const { return cutoffs_[static_cast<std::size_t>(t)]; }
  const Propagator& propagator() const { return prop_; }
  // Contraction heuristic of the nonlinearity at the size of the stacked state.
  double contraction(const ModalField& stacked) const;
  // sum_t ||w_t||_{L1}.
  double norm(const ModalField& stacked) const;

  // (Psi_t Pi_t h)_t.
  ModalField decompose(const ModalField& h) const;
  ModalField block(const ModalField& stacked, int t) const;
  void set_block(ModalField& stacked, int t, const ModalField& f) const;
  ModalField sum(const ModalField& stacked) const;
  // Psi_t Pi_t f.
  ModalField project(int t, const ModalField& f) const;

  // Fast-frame right-hand sides, stacked: (Psi_t Pi_t F(sum w))_t and the restriction to the given terms.
  ModalField full_rhs(const ModalField& fast) const;
  ModalField term_rhs(const ModalField& fast, const std::vector<std::vector<DecoratedIndex>>& terms) const;

 private:
  DispersionModel model_;
  std::vector<Susceptibility> nonlinearity_;
  NkSpectrum spectrum_;
  Grid grid_;
  double radius_;
  SolverConfig config_;
  std::vector<std::vector<double>> cutoffs_;
  // Matrix models: projector at each node inside the cutoff support, per target.
  std::vector<std::vector<std::pair<std::size_t, Eigen::MatrixXcd>>> projectors_;
  std::vector<int> target_comp_;
  Propagator prop_;
};

struct InteractionProblem {
  double rho = 0.01;
  double tau_star = 1.0;
  ModalField initial;
};

// Picard solution of w = Psi Pi F(sum w) + Psi Pi h on the stacked state.
Trajectory solve_interaction_system(const InteractionSystem& sys, const InteractionProblem& problem,
                                    const Observer& observer = {});

// The same with the nonlinearity restricted to the resonant, diagonal or reduced terms. Reduced mode
// throws HypothesisViolated unless the partition passes partial_gvm_check or force is set.
Trajectory solve_averaged_system(const InteractionSystem& sys, const InteractionProblem& problem,
                                 const InteractionIndexSets& sets, AveragingMode mode, bool force = false,
                                 const Observer& observer = {});

// sup over recorded times of || int_0^tau e^{i t L/rho} F_coup(e^{-i t L/rho} v) dt ||_{L1}, trapezoid rule on
// the recorded samples; F_coup is the resonant minus the reduced part.
double coupling_norm(const InteractionSystem& sys, const Trajectory& traj, const InteractionIndexSets& sets);

// sup over recorded times of sum_t ||(a - b)_t||_{L1}; both trajectories must share their sample times.
double stacked_distance(const InteractionSystem& sys, const Trajectory& a, const Trajectory& b);

// Random stacked state: block t holds amplitude * Psi_t Pi_t (complex Gaussian noise).
ModalField random_state(const InteractionSystem& sys, double amplitude, std::uint64_t seed);

// Max over targets of ||F_av(P_phi v)_t - e^{i theta phi_l} F_av(v)_t|| / ||F_av(v)_t||, where P_phi
// multiplies block (l, zeta) by e^{i zeta phi_l}; the averaged nonlinearity is evaluated at tau = 0.
double homogeneity_check(const InteractionSystem& sys, const InteractionIndexSets& sets,
                         const std::vector<double>& phases, const ModalField& state);

}  // namespace wavepax
