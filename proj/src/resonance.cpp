#include "wavepax/resonance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "wavepax/errors.hpp"

namespace wavepax {

DecoratedIndex DecoratedIndex::negated() const {
  DecoratedIndex out = *this;
  for (auto& s : out.slots) s.zeta = -s.zeta;
  return out;
}

std::vector<int> DecoratedIndex::delta(int npairs) const {
  std::vector<int> d(static_cast<std::size_t>(npairs), 0);
  for (const auto& s : slots) d[static_cast<std::size_t>(s.l)] += s.zeta;
  return d;
}

std::vector<int> DecoratedIndex::cardinality(int npairs) const {
  std::vector<int> c(static_cast<std::size_t>(npairs), 0);
  for (const auto& s : slots) ++c[static_cast<std::size_t>(s.l)];
  return c;
}

std::string DecoratedIndex::str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t j = 0; j < slots.size(); ++j) {
    if (j) os << ",";
    os << "(" << (slots[j].zeta > 0 ? "+" : "-") << "," << slots[j].l + 1 << ")";
  }
  os << ")";
  return os.str();
}

nlohmann::json DecoratedIndex::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : slots) out.push_back({s.zeta, s.l + 1});
  return out;
}

const char* to_string(SolutionClass c) {
  switch (c) {
    case SolutionClass::Universal: return "universal";
    case SolutionClass::Internal: return "internal";
    case SolutionClass::External: return "external";
  }
  return "?";
}

const char* to_string(Invariance c) {
  switch (c) {
    case Invariance::UniversallyInvariant: return "universally_invariant";
    case Invariance::ConditionallyInvariant: return "conditionally_invariant";
    case Invariance::Invariant: return "invariant";
    case Invariance::NotInvariant: return "not_invariant";
  }
  return "?";
}

namespace {

nlohmann::json kvec_json(const KVec& k, int d) {
  if (d == 1) return k[0];
  return nlohmann::json::array({k[0], k[1]});
}

void check_spectrum(const NkSpectrum& s, const DispersionModel& model) {
  if (s.d != model.d()) throw Error(ErrorCode::InvalidArgument, "spectrum and model dimensions differ");
  for (const auto& p : s.pairs)
    if (p.n < 1 || p.n > model.J()) throw Error(ErrorCode::InvalidArgument, "spectrum band out of range");
}

ResonanceOptions resolved(const NkSpectrum& s, const DispersionModel& model, ResonanceOptions opts) {
  if (!(opts.tol_res > 0.0)) opts.tol_res = default_tol_res(s, model);
  if (!(opts.tol_k > 0.0)) opts.tol_k = default_tol_k(s);
  return opts;
}

// Merge `add` into `base`, keeping base order and appending unseen pairs.
NkSpectrum merged(const NkSpectrum& base, const NkSpectrum& add, double tol_k) {
  NkSpectrum out = base;
  for (const auto& p : add.pairs)
    if (!out.contains(p.n, p.k, tol_k)) out.pairs.push_back(p);
  return out;
}

NkSpectrum resonant_output(const std::vector<ResonanceSolution>& sols, int d, double tol_k) {
  NkSpectrum out;
  out.d = d;
  for (const auto& s : sols) {
    KVec k = s.zeta * s.kappa;
    if (!out.contains(s.n, k, tol_k)) out.pairs.push_back({s.n, k});
  }
  return out;
}

// Sign-canonical form: first nonzero entry positive.
std::vector<int> canonical_sign(std::vector<int> b) {
  for (int v : b) {
    if (v == 0) continue;
    if (v < 0)
      for (int& x : b) x = -x;
    break;
  }
  return b;
}

}  // namespace

double default_tol_res(const NkSpectrum& s, const DispersionModel& model) {
  double wmax = 0.0;
  for (const auto& p : s.pairs) wmax = std::max(wmax, std::abs(model.omega(p.n, +1, p.k)));
  return 1e-9 * (1.0 + wmax);
}

double default_tol_k(const NkSpectrum& s) { return 1e-9 * (1.0 + s.max_abs_k()); }

KVec kappa(const DecoratedIndex& index, const NkSpectrum& spectrum) {
  KVec k(0.0, 0.0);
  for (const auto& s : index.slots) k += static_cast<double>(s.zeta) * spectrum.pairs[static_cast<std::size_t>(s.l)].k;
  return k;
}

double omega_combination(const DecoratedIndex& index, const NkSpectrum& spectrum,
                         const DispersionModel& model) {
  double w = 0.0;
  for (const auto& s : index.slots) {
    const auto& p = spectrum.pairs[static_cast<std::size_t>(s.l)];
    w += s.zeta * model.omega(p.n, +1, p.k);
  }
  return w;
}

std::vector<DecoratedIndex> all_indices(int m, int npairs) {
  std::vector<DecoratedIndex> out;
  if (m < 1 || npairs < 1) return out;
  const int base = 2 * npairs;
  std::size_t total = 1;
  for (int j = 0; j < m; ++j) total *= static_cast<std::size_t>(base);
  out.reserve(total);
  // Slot digit t in [0, 2N): zeta = + for t < N, pair t mod N.
  std::vector<int> digit(static_cast<std::size_t>(m), 0);
  for (std::size_t c = 0; c < total; ++c) {
    DecoratedIndex idx;
    idx.slots.resize(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      int t = digit[static_cast<std::size_t>(j)];
      idx.slots[static_cast<std::size_t>(j)] = {t < npairs ? +1 : -1, t % npairs};
    }
    out.push_back(std::move(idx));
    for (int j = m - 1; j >= 0; --j) {
      if (++digit[static_cast<std::size_t>(j)] < base) break;
      digit[static_cast<std::size_t>(j)] = 0;
    }
  }
  return out;
}

EnumerationResult enumerate_solutions(const NkSpectrum& spectrum, const DispersionModel& model,
                                      const ResonanceOptions& options) {
  check_spectrum(spectrum, model);
  const int N = static_cast<int>(spectrum.size());
  if (N > options.max_pairs)
    throw Error(ErrorCode::EnumerationCapExceeded,
                std::to_string(N) + " pairs exceed the cap of " + std::to_string(options.max_pairs));
  for (int m : options.orders)
    if (m < 1 || m > options.max_order)
      throw Error(ErrorCode::EnumerationCapExceeded,
                  "order " + std::to_string(m) + " outside [1, " + std::to_string(options.max_order) + "]");
  ResonanceOptions opts = resolved(spectrum, model, options);

  EnumerationResult res;
  res.tol_res = opts.tol_res;
  res.tol_k = opts.tol_k;
  if (N == 0) return res;

  std::vector<double> w(static_cast<std::size_t>(N));
  for (int l = 0; l < N; ++l) {
    const auto& p = spectrum.pairs[static_cast<std::size_t>(l)];
    w[static_cast<std::size_t>(l)] = model.omega(p.n, +1, p.k);
  }

  std::vector<int> orders = opts.orders;
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());

  for (int m : orders) {
    const auto indices = all_indices(m, N);
    for (int zeta : {+1, -1}) {
      for (int n = 1; n <= model.J(); ++n) {
        for (const auto& idx : indices) {
          KVec kap = kappa(idx, spectrum);
          KVec out_k = zeta * kap;
          if (model.is_crossing(out_k)) {
            bool seen = false;
            for (const auto& k : res.skipped_outputs) seen = seen || dist(k, out_k) <= opts.tol_k;
            if (!seen) res.skipped_outputs.push_back(out_k);
            continue;
          }
          double big = 0.0;
          for (const auto& s : idx.slots) big += s.zeta * w[static_cast<std::size_t>(s.l)];
          const double residual = -model.omega(n, zeta, kap) + big;
          if (std::abs(residual) > opts.tol_res) continue;

          ResonanceSolution sol;
          sol.m = m;
          sol.zeta = zeta;
          sol.n = n;
          sol.index = idx;
          sol.delta = idx.delta(N);
          sol.kappa = kap;
          sol.omega_residual = std::abs(residual);
          sol.internal_pair = spectrum.find(n, out_k, opts.tol_k);
          sol.cls = sol.internal_pair >= 0 ? SolutionClass::Internal : SolutionClass::External;
          if (sol.internal_pair >= 0) {
            const int I0 = sol.internal_pair;
            int nonzero = 0;
            for (int v : sol.delta) nonzero += v != 0;
            const int dI = sol.delta[static_cast<std::size_t>(I0)];
            if (nonzero == 1 && std::abs(dI) == 1 && zeta == dI &&
                n == spectrum.pairs[static_cast<std::size_t>(I0)].n)
              sol.cls = SolutionClass::Universal;
          }
          res.solutions.push_back(std::move(sol));
        }
      }
    }
  }
  return res;
}

std::vector<KVec> output_spectrum(const NkSpectrum& spectrum, const std::vector<int>& orders, double tol_k) {
  std::vector<KVec> out;
  const int N = static_cast<int>(spectrum.size());
  for (int m : orders) {
    for (const auto& idx : all_indices(m, N)) {
      KVec k = kappa(idx, spectrum);
      bool seen = false;
      for (const auto& q : out) seen = seen || dist(q, k) <= tol_k;
      if (!seen) out.push_back(k);
    }
  }
  return out;
}

NkSpectrum resonance_select(const NkSpectrum& spectrum, const DispersionModel& model,
                            const ResonanceOptions& options) {
  EnumerationResult e = enumerate_solutions(spectrum, model, options);
  return merged(spectrum, resonant_output(e.solutions, spectrum.d, e.tol_k), e.tol_k);
}

ClosureResult closure(const NkSpectrum& spectrum, const DispersionModel& model, const ResonanceOptions& options) {
  if (options.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "closure needs max_iter >= 1");
  ClosureResult out;
  out.spectrum = spectrum;
  const double tol_k = options.tol_k > 0.0 ? options.tol_k : default_tol_k(spectrum);
  for (int it = 1; it <= options.max_iter; ++it) {
    ResonanceOptions o = options;
    o.tol_k = tol_k;
    EnumerationResult e = enumerate_solutions(out.spectrum, model, o);
    if (!e.skipped_outputs.empty())
      throw Error(ErrorCode::BandCrossingAtOutput, "output wavevector on the band-crossing set");
    NkSpectrum next = merged(out.spectrum, resonant_output(e.solutions, spectrum.d, tol_k), tol_k);
    out.iterations = it;
    if (next.same_set(out.spectrum, tol_k)) {
      out.converged = true;
      return out;
    }
    out.spectrum = std::move(next);
  }
  return out;
}

ResonanceReport classify(const NkSpectrum& spectrum, const DispersionModel& model, const ResonanceOptions& options) {
  EnumerationResult e = enumerate_solutions(spectrum, model, options);
  const int N = static_cast<int>(spectrum.size());
  ResonanceReport r;
  r.spectrum = spectrum;
  r.tol_res = e.tol_res;
  r.tol_k = e.tol_k;
  r.skipped_outputs = e.skipped_outputs;
  r.solutions = std::move(e.solutions);
  for (std::size_t i = 0; i < r.solutions.size(); ++i) {
    if (r.solutions[i].cls != SolutionClass::External) r.internal.push_back(i);
    if (r.solutions[i].cls == SolutionClass::Universal) r.universal.push_back(i);
  }
  r.out_k = output_spectrum(spectrum, options.orders, r.tol_k);
  r.out_res = resonant_output(r.solutions, spectrum.d, r.tol_k);
  r.selected = merged(spectrum, r.out_res, r.tol_k);

  std::set<std::pair<std::vector<int>, std::vector<int>>> classes;
  std::set<std::vector<int>> rows;
  for (std::size_t i : r.internal) {
    const auto& s = r.solutions[i];
    if (s.cls == SolutionClass::Universal) continue;
    std::vector<int> b = s.delta;
    b[static_cast<std::size_t>(s.internal_pair)] -= s.zeta;
    classes.insert({b, s.index.cardinality(N)});
    rows.insert(canonical_sign(b));
  }
  r.equivalence_classes = static_cast<int>(classes.size());
  r.conditions.assign(rows.begin(), rows.end());

  if (r.internal.size() != r.solutions.size()) {
    r.classification = Invariance::NotInvariant;
  } else if (r.universal.size() == r.internal.size()) {
    r.classification = Invariance::UniversallyInvariant;
  } else {
    r.classification = r.conditions.empty() ? Invariance::Invariant : Invariance::ConditionallyInvariant;
  }

  try {
    ClosureResult c = closure(spectrum, model, options);
    r.closure_iterations = c.iterations;
    r.closure_converged = c.converged;
  } catch (const Error& err) {
    if (err.code() != ErrorCode::BandCrossingAtOutput && err.code() != ErrorCode::EnumerationCapExceeded) throw;
    r.closure_iterations = -1;
    r.closure_converged = false;
  }
  return r;
}

nlohmann::json ResonanceSolution::to_json() const {
  nlohmann::json j;
  j["m"] = m;
  j["zeta"] = zeta;
  j["n"] = n;
  j["lambda"] = index.to_json();
  j["delta"] = delta;
  j["kappa"] = nlohmann::json::array({kappa[0], kappa[1]});
  j["residual"] = omega_residual;
  j["class"] = to_string(cls);
  j["internal_pair"] = internal_pair >= 0 ? nlohmann::json(internal_pair + 1) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json ResonanceReport::to_json() const {
  nlohmann::json j;
  const int d = spectrum.d;
  j["spectrum"] = spectrum.to_json();
  j["classification"] = to_string(classification);
  j["counts"] = {{"solutions", solutions.size()}, {"internal", internal.size()}, {"universal", universal.size()}};
  j["solutions"] = nlohmann::json::array();
  for (const auto& s : solutions) {
    auto sj = s.to_json();
    if (d == 1) sj["kappa"] = s.kappa[0];
    j["solutions"].push_back(sj);
  }
  j["out_k"] = nlohmann::json::array();
  for (const auto& k : out_k) j["out_k"].push_back(kvec_json(k, d));
  j["out_res"] = out_res.to_json();
  j["selected"] = selected.to_json();
  j["conditions"] = conditions;
  j["equivalence_classes"] = equivalence_classes;
  j["closure_iterations"] = closure_iterations;
  j["closure_converged"] = closure_converged;
  j["skipped_outputs"] = nlohmann::json::array();
  for (const auto& k : skipped_outputs) j["skipped_outputs"].push_back(kvec_json(k, d));
  j["tol_res"] = tol_res;
  j["tol_k"] = tol_k;
  return j;
}

GvmReport gvm_check(const NkSpectrum& spectrum, const DispersionModel& model,
                    const std::vector<std::vector<DecoratedIndex>>& resonant_sets, double tol_gv) {
  GvmReport out;
  const std::size_t N = spectrum.size();
  std::vector<KVec> grad(N);
  for (std::size_t l = 0; l < N; ++l)
    grad[l] = model.group_velocity(spectrum.pairs[l].n, +1, spectrum.pairs[l].k);
  out.gvm.assign(N, true);
  for (std::size_t l = 0; l < N && l < resonant_sets.size(); ++l) {
    for (const auto& idx : resonant_sets[l]) {
      bool matched = false;
      for (const auto& s : idx.slots)
        matched = matched || dist(grad[l], grad[static_cast<std::size_t>(s.l)]) <= tol_gv;
      if (!matched) {
        out.gvm[l] = false;
        break;
      }
    }
  }
  for (std::size_t l = 0; l < N; ++l)
    if (out.gvm[l]) out.gvm_pairs.push_back(static_cast<int>(l));
  return out;
}

PartialGvmReport partial_gvm_check(const NkSpectrum& spectrum, const std::vector<std::vector<int>>& parts,
                                   const DispersionModel& model, const ResonanceOptions& opts, double tol_gv) {
  const int N = static_cast<int>(spectrum.size());
  std::vector<int> part_of(static_cast<std::size_t>(N), -1);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (int l : parts[p]) {
      if (l < 0 || l >= N || part_of[static_cast<std::size_t>(l)] >= 0)
        throw Error(ErrorCode::InvalidArgument, "partition must cover every pair exactly once");
      part_of[static_cast<std::size_t>(l)] = static_cast<int>(p);
    }
  }
  for (int v : part_of)
    if (v < 0) throw Error(ErrorCode::InvalidArgument, "partition must cover every pair exactly once");

  PartialGvmReport out;
  out.ok = true;
  for (const auto& part : parts) {
    NkSpectrum sub;
    sub.d = spectrum.d;
    for (int l : part) sub.pairs.push_back(spectrum.pairs[static_cast<std::size_t>(l)]);
    bool inv = classify(sub, model, opts).invariant();
    out.part_invariant.push_back(inv);
    out.ok = out.ok && inv;
  }

  ResonanceReport full = classify(spectrum, model, opts);
  std::vector<std::vector<DecoratedIndex>> sets(static_cast<std::size_t>(N));
  for (const auto& s : full.solutions)
    if (s.internal_pair >= 0) sets[static_cast<std::size_t>(s.internal_pair)].push_back(s.index);
  GvmReport gvm = gvm_check(spectrum, model, sets, tol_gv);
  std::vector<KVec> grad(static_cast<std::size_t>(N));
  for (int l = 0; l < N; ++l) {
    const auto& p = spectrum.pairs[static_cast<std::size_t>(l)];
    grad[static_cast<std::size_t>(l)] = model.group_velocity(p.n, +1, p.k);
  }

  for (const auto& s : full.solutions) {
    std::set<int> touched;
    for (const auto& slot : s.index.slots) touched.insert(part_of[static_cast<std::size_t>(slot.l)]);
    if (s.internal_pair >= 0) touched.insert(part_of[static_cast<std::size_t>(s.internal_pair)]);
    if (touched.size() < 2) continue;
    // Cross-interacting: needs two GVM pairs from different parts with distinct group velocities.
    std::vector<int> ls;
    for (const auto& slot : s.index.slots) ls.push_back(slot.l);
    if (s.internal_pair >= 0) ls.push_back(s.internal_pair);
    bool separated = false;
    for (int a : ls) {
      for (int b : ls) {
        if (part_of[static_cast<std::size_t>(a)] == part_of[static_cast<std::size_t>(b)]) continue;
        if (!gvm.gvm[static_cast<std::size_t>(a)] || !gvm.gvm[static_cast<std::size_t>(b)]) continue;
        if (dist(grad[static_cast<std::size_t>(a)], grad[static_cast<std::size_t>(b)]) > tol_gv) separated = true;
      }
    }
    if (!separated) {
      out.violations.push_back(s);
      out.ok = false;
    }
  }
  return out;
}

double genericity_probe(const NkSpectrum& templ, const DispersionModel& model, const ResonanceOptions& opts,
                        int trials, double radius, std::uint64_t seed) {
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    NkSpectrum s = templ;
    for (auto& p : s.pairs) {
      KVec e(0.0, 0.0);
      if (s.d == 1) {
        e[0] = u(rng);
      } else {
        do {
          e = KVec(u(rng), u(rng));
        } while (e.norm() > 1.0);
      }
      p.k += radius * e;
    }
    if (classify(s, model, opts).classification == Invariance::UniversallyInvariant) ++hits;
  }
  return static_cast<double>(hits) / trials;
}

}  // namespace wavepax
