#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/dispersion.hpp"
#include "wavepax/spectrum.hpp"

namespace wavepax {

// One argument slot of a nonlinear term: sign zeta^(j) and pair index l_j (0-based).
struct Slot {
  int zeta = 1;
  int l = 0;
  bool operator==(const Slot& o) const { return zeta == o.zeta && l == o.l; }
  auto operator<=>(const Slot& o) const = default;
};

struct DecoratedIndex {
  std::vector<Slot> slots;

  int m() const { return static_cast<int>(slots.size()); }
  DecoratedIndex negated() const;
  // Multiplicities delta_l = sum_{j: l_j = l} zeta^(j).
  std::vector<int> delta(int npairs) const;
  // Cardinalities c_l = #{j: l_j = l}.
  std::vector<int> cardinality(int npairs) const;
  bool operator==(const DecoratedIndex& o) const { return slots == o.slots; }
  auto operator<=>(const DecoratedIndex& o) const = default;
  std::string str() const;
  nlohmann::json to_json() const;
};

enum class SolutionClass { Universal, Internal, External };
enum class Invariance { UniversallyInvariant, ConditionallyInvariant, Invariant, NotInvariant };

const char* to_string(SolutionClass c);
const char* to_string(Invariance c);

struct ResonanceSolution {
  int m = 0;
  int zeta = 1;
  int n = 1;
  DecoratedIndex index;
  std::vector<int> delta;
  KVec kappa;
  double omega_residual = 0.0;
  SolutionClass cls = SolutionClass::External;
  // Pair index I(lambda) of the output for internal solutions, else -1.
  int internal_pair = -1;

  nlohmann::json to_json() const;
};

struct ResonanceOptions {
  std::vector<int> orders{3};
  // Non-positive values select the relative defaults.
  double tol_res = 0.0;
  double tol_k = 0.0;
  int max_pairs = 8;
  int max_order = 4;
  int max_iter = 16;
};

struct EnumerationResult {
  std::vector<ResonanceSolution> solutions;
  // Output wavevectors zeta*kappa that hit the band-crossing set and were skipped.
  std::vector<KVec> skipped_outputs;
  double tol_res = 0.0;
  double tol_k = 0.0;
};

struct ClosureResult {
  NkSpectrum spectrum;
  bool converged = false;
  int iterations = 0;
};

struct ResonanceReport {
  NkSpectrum spectrum;
  std::vector<ResonanceSolution> solutions;
  std::vector<std::size_t> internal;
  std::vector<std::size_t> universal;
  std::vector<KVec> out_k;
  NkSpectrum out_res;
  NkSpectrum selected;
  Invariance classification = Invariance::NotInvariant;
  // Rows b with sum_l b_l omega_{n_l}(k_l) = 0, one per sign class, sorted.
  std::vector<std::vector<int>> conditions;
  int equivalence_classes = 0;
  int closure_iterations = 0;
  bool closure_converged = false;
  std::vector<KVec> skipped_outputs;
  double tol_res = 0.0;
  double tol_k = 0.0;

  bool invariant() const { return classification != Invariance::NotInvariant; }
  nlohmann::json to_json() const;
};

double default_tol_res(const NkSpectrum& s, const DispersionModel& model);
double default_tol_k(const NkSpectrum& s);

KVec kappa(const DecoratedIndex& index, const NkSpectrum& spectrum);
double omega_combination(const DecoratedIndex& index, const NkSpectrum& spectrum,
                         const DispersionModel& model);

// Every decorated index of order m over npairs pairs, in lexicographic slot order.
std::vector<DecoratedIndex> all_indices(int m, int npairs);

EnumerationResult enumerate_solutions(const NkSpectrum& spectrum, const DispersionModel& model,
                                      const ResonanceOptions& opts);
std::vector<KVec> output_spectrum(const NkSpectrum& spectrum, const std::vector<int>& orders, double tol_k);
NkSpectrum resonance_select(const NkSpectrum& spectrum, const DispersionModel& model,
                            const ResonanceOptions& opts);
ClosureResult closure(const NkSpectrum& spectrum, const DispersionModel& model, const ResonanceOptions& opts);
ResonanceReport classify(const NkSpectrum& spectrum, const DispersionModel& model,
                         const ResonanceOptions& opts);

struct GvmReport {
  std::vector<bool> gvm;
  std::vector<int> gvm_pairs;
};

// resonant_sets[l]: resonant decorated indices whose output is pair l (either sign).
GvmReport gvm_check(const NkSpectrum& spectrum, const DispersionModel& model,
                    const std::vector<std::vector<DecoratedIndex>>& resonant_sets, double tol_gv = 1e-8);

struct PartialGvmReport {
  bool ok = false;
  std::vector<bool> part_invariant;
  std::vector<ResonanceSolution> violations;
};

// parts: pair indices (0-based) of each part; together they must cover the spectrum exactly once.
PartialGvmReport partial_gvm_check(const NkSpectrum& spectrum, const std::vector<std::vector<int>>& parts,
                                   const DispersionModel& model, const ResonanceOptions& opts,
                                   double tol_gv = 1e-8);

double genericity_probe(const NkSpectrum& templ, const DispersionModel& model, const ResonanceOptions& opts,
                        int trials, double radius, std::uint64_t seed);

}  // namespace wavepax
