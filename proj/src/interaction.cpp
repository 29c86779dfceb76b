#include "wavepax/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <spdlog/spdlog.h>

#include "wavepax/errors.hpp"
#include "wavepax/wavepacket.hpp"

namespace wavepax {

std::size_t InteractionIndexSets::full_count(int m) const {
  std::size_t c = 1;
  for (int j = 0; j < m; ++j) c *= static_cast<std::size_t>(targets());
  return c;
}

bool InteractionIndexSets::self_component() const {
  for (int t = 0; t < targets(); ++t) {
    const int l = target_pair(t);
    for (const auto& idx : resonant[static_cast<std::size_t>(t)])
      if (std::none_of(idx.slots.begin(), idx.slots.end(), [l](const Slot& s) { return s.l == l; })) return false;
  }
  return true;
}

nlohmann::json InteractionIndexSets::to_json() const {
  auto lists = [](const std::vector<DecoratedIndex>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& idx : v) a.push_back(idx.to_json());
    return a;
  };
  nlohmann::json t = nlohmann::json::array();
  for (int i = 0; i < targets(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    t.push_back({{"l", target_pair(i) + 1},
                 {"theta", target_sign(i)},
                 {"resonant", lists(resonant[u])},
                 {"diag", lists(diag[u])},
                 {"coup", lists(coup[u])},
                 {"reduced", lists(reduced[u])}});
  }
  nlohmann::json nr = nlohmann::json::array();
  for (const auto& n : near)
    nr.push_back({{"l", target_pair(n.target) + 1}, {"theta", target_sign(n.target)}, {"index", n.index.to_json()},
                  {"omega", n.omega}});
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : partition) {
    nlohmann::json q = nlohmann::json::array();
    for (int l : p) q.push_back(l + 1);
    parts.push_back(q);
  }
  return {{"spectrum", spectrum.to_json()}, {"orders", orders},  {"tol_res", tol_res}, {"tol_k", tol_k},
          {"partition", parts},             {"targets", t},      {"near_resonant", nr}};
}

InteractionIndexSets build_index_sets(const NkSpectrum& spectrum, const DispersionModel& model,
                                      const std::vector<int>& orders, double tol_res,
                                      const std::vector<std::vector<int>>& partition, double tol_near) {
  ResonanceOptions opts;
  opts.orders = orders;
  opts.tol_res = tol_res;
  const EnumerationResult er = enumerate_solutions(spectrum, model, opts);

  InteractionIndexSets sets;
  sets.spectrum = spectrum;
  sets.orders = orders;
  sets.tol_res = er.tol_res;
  sets.tol_k = er.tol_k;
  const int N = static_cast<int>(spectrum.size());
  const auto T = static_cast<std::size_t>(2 * N);
  sets.resonant.resize(T);
  sets.diag.resize(T);
  sets.coup.resize(T);
  sets.reduced.resize(T);

  std::vector<int> part_of(static_cast<std::size_t>(N), -1);
  if (partition.empty()) {
    for (int l = 0; l < N; ++l) sets.partition.push_back({l});
  } else {
    sets.partition = partition;
  }
  for (std::size_t p = 0; p < sets.partition.size(); ++p) {
    for (int l : sets.partition[p]) {
      if (l < 0 || l >= N) throw Error(ErrorCode::InvalidArgument, "partition names a pair outside the spectrum");
      if (part_of[static_cast<std::size_t>(l)] >= 0)
        throw Error(ErrorCode::InvalidArgument, "partition lists a pair twice");
      part_of[static_cast<std::size_t>(l)] = static_cast<int>(p);
    }
  }
  if (std::find(part_of.begin(), part_of.end(), -1) != part_of.end())
    throw Error(ErrorCode::InvalidArgument, "partition does not cover the spectrum");

  for (const auto& sol : er.solutions) {
    if (sol.internal_pair < 0) continue;
    const int t = InteractionIndexSets::target(sol.internal_pair, sol.zeta);
    const auto u = static_cast<std::size_t>(t);
    sets.resonant[u].push_back(sol.index);
    const int l = sol.internal_pair;
    const bool diag =
        std::all_of(sol.index.slots.begin(), sol.index.slots.end(), [l](const Slot& s) { return s.l == l; });
    const int p0 = part_of[static_cast<std::size_t>(sol.index.slots[0].l)];
    const bool mixed = std::any_of(sol.index.slots.begin(), sol.index.slots.end(),
                                   [&](const Slot& s) { return part_of[static_cast<std::size_t>(s.l)] != p0; });
    if (diag) sets.diag[u].push_back(sol.index);
    if (mixed) {
      sets.coup[u].push_back(sol.index);
    } else {
      sets.reduced[u].push_back(sol.index);
    }
  }

  const double near = tol_near > 0.0 ? tol_near : 10.0 * sets.tol_res;
  for (int m : orders) {
    for (const auto& idx : all_indices(m, N)) {
      const KVec kap = kappa(idx, spectrum);
      const double big = omega_combination(idx, spectrum, model);
      for (int t = 0; t < static_cast<int>(T); ++t) {
        const int l = InteractionIndexSets::target_pair(t);
        const int theta = InteractionIndexSets::target_sign(t);
        const auto& pr = spectrum.pairs[static_cast<std::size_t>(l)];
        if (dist(kap, theta * pr.k) > sets.tol_k) continue;
        const double omega = std::abs(-model.omega_unchecked(pr.n, theta, kap) + big);
        if (omega > sets.tol_res && omega <= near) {
          sets.near.push_back({t, idx, omega});
          spdlog::warn("near-resonant term {} for (l={}, theta={:+d}): |Omega| = {:.3g}", idx.str(), l + 1, theta,
                       omega);
        }
      }
    }
  }
  return sets;
}

const char* to_string(AveragingMode m) {
  switch (m) {
    case AveragingMode::Full:
      return "full";
    case AveragingMode::Diagonal:
      return "diagonal";
    case AveragingMode::Reduced:
      return "reduced";
  }
  return "full";
}

AveragingMode averaging_mode_from_string(const std::string& s) {
  if (s == "full") return AveragingMode::Full;
  if (s == "diagonal") return AveragingMode::Diagonal;
  if (s == "reduced") return AveragingMode::Reduced;
  throw Error(ErrorCode::InvalidArgument, "unknown averaging mode '" + s + "'");
}

InteractionSystem::InteractionSystem(DispersionModel model, std::vector<Susceptibility> nonlinearity,
                                     NkSpectrum spectrum, const Grid& grid, double radius, SolverConfig config)
    : model_(std::move(model)),
      nonlinearity_(std::move(nonlinearity)),
      spectrum_(std::move(spectrum)),
      grid_(grid),
      radius_(radius),
      config_(config),
      prop_(model_, grid_) {
  if (model_.d() != grid_.d()) throw Error(ErrorCode::GridMismatch, "model and grid dimensions differ");
  if (spectrum_.empty()) throw Error(ErrorCode::InvalidArgument, "interaction system needs at least one pair");
  if (!(radius_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "cutoff radius must be positive");
  for (const auto& chi : nonlinearity_)
    if (chi.ncomp() != model_.ncomp()) throw Error(ErrorCode::GridMismatch, "nonlinearity component count differs");
  for (int t = 0; t < targets(); ++t) {
    const auto& pr = spectrum_.pairs[static_cast<std::size_t>(InteractionIndexSets::target_pair(t))];
    const int theta = InteractionIndexSets::target_sign(t);
    if (pr.n < 1 || pr.n > model_.J()) throw Error(ErrorCode::InvalidArgument, "band index out of range");
    cutoffs_.push_back(build_cutoff(grid_, theta * pr.k, radius_));
    std::vector<std::pair<std::size_t, Eigen::MatrixXcd>> proj;
    if (model_.kind() == SymbolKind::ScalarBand) {
      target_comp_.push_back(DispersionModel::comp(pr.n, theta));
    } else {
      target_comp_.push_back(-1);
      const auto& psi = cutoffs_.back();
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        if (psi[i] == 0.0) continue;
        const KVec k = grid_.k(i);
        if (model_.is_crossing(k)) continue;
        proj.emplace_back(i, model_.projector(pr.n, theta, k));
      }
    }
    projectors_.push_back(std::move(proj));
  }
}

double InteractionSystem::contraction(const ModalField& stacked) const {
  const double R = norm(stacked) / std::pow(2.0 * std::numbers::pi, grid_.d());
  double c = 0.0;
  for (const auto& chi : nonlinearity_) {
    const int m = chi.order();
    c += chi.c_chi() * m * m * std::pow(4.0 * R, m - 1);
  }
  return c;
}

double InteractionSystem::norm(const ModalField& stacked) const {
  double s = 0.0;
  for (int t = 0; t < targets(); ++t) s += block(stacked, t).l1_norm();
  return s;
}

ModalField InteractionSystem::block(const ModalField& stacked, int t) const {
  const int nc = ncomp();
  if (stacked.ncomp() != nc * targets()) throw Error(ErrorCode::GridMismatch, "state is not stacked for this system");
  ModalField f(grid_, nc, stacked.frame());
  std::copy(stacked.comp(t * nc), stacked.comp(t * nc) + static_cast<std::ptrdiff_t>(nc * grid_.size()),
            f.data().begin());
  return f;
}

void InteractionSystem::set_block(ModalField& stacked, int t, const ModalField& f) const {
  const int nc = ncomp();
  std::copy(f.data().begin(), f.data().end(), stacked.comp(t * nc));
}

ModalField InteractionSystem::sum(const ModalField& stacked) const {
  ModalField out(grid_, ncomp(), stacked.frame());
  for (int t = 0; t < targets(); ++t) out += block(stacked, t);
  return out;
}

ModalField InteractionSystem::project(int t, const ModalField& f) const {
  const auto u = static_cast<std::size_t>(t);
  const auto& psi = cutoffs_[u];
  ModalField out(grid_, ncomp(), f.frame());
  if (target_comp_[u] >= 0) {
    const int c = target_comp_[u];
    const cplx* src = f.comp(c);
    cplx* dst = out.comp(c);
    for (std::size_t i = 0; i < grid_.size(); ++i) dst[i] = psi[i] * src[i];
    return out;
  }
  Eigen::VectorXcd v(ncomp());
  for (const auto& [i, P] : projectors_[u]) {
    for (int c = 0; c < ncomp(); ++c) v[c] = f.at(c, i);
    const Eigen::VectorXcd w = psi[i] * (P * v);
    for (int c = 0; c < ncomp(); ++c) out.at(c, i) = w[c];
  }
  return out;
}

ModalField InteractionSystem::decompose(const ModalField& h) const {
  if (h.ncomp() != ncomp() || h.grid().n() != grid_.n() || h.grid().d() != grid_.d())
    throw Error(ErrorCode::GridMismatch, "initial field does not match the interaction system");
  ModalField out(grid_, ncomp() * targets(), h.frame());
  for (int t = 0; t < targets(); ++t) set_block(out, t, project(t, h));
  return out;
}

ModalField InteractionSystem::full_rhs(const ModalField& fast) const {
  const ModalField u = sum(fast);
  ModalField F(grid_, ncomp(), Frame::Fast);
  for (const auto& chi : nonlinearity_) F += apply_nonlinearity(u, chi, config_.convolution, config_.dealias_factor);
  ModalField out(grid_, ncomp() * targets(), Frame::Fast);
  for (int t = 0; t < targets(); ++t) set_block(out, t, project(t, F));
  return out;
}

ModalField InteractionSystem::term_rhs(const ModalField& fast,
                                       const std::vector<std::vector<DecoratedIndex>>& terms) const {
  ModalField out(grid_, ncomp() * targets(), Frame::Fast);
  std::vector<ModalField> blocks;
  std::vector<const ModalField*> pool;
  blocks.reserve(static_cast<std::size_t>(targets()));
  for (int t = 0; t < targets(); ++t) blocks.push_back(block(fast, t));
  for (const auto& b : blocks) pool.push_back(&b);

  std::vector<ModalField> acc(static_cast<std::size_t>(targets()), ModalField(grid_, ncomp(), Frame::Fast));
  for (const auto& chi : nonlinearity_) {
    std::vector<ConvTerm> conv;
    for (int t = 0; t < targets(); ++t) {
      for (const auto& idx : terms[static_cast<std::size_t>(t)]) {
        if (idx.m() != chi.order()) continue;
        ConvTerm ct{t, {}};
        for (const auto& s : idx.slots) ct.slots.push_back(InteractionIndexSets::target(s.l, s.zeta));
        conv.push_back(std::move(ct));
      }
    }
    if (conv.empty()) continue;
    const bool scalar = model_.kind() == SymbolKind::ScalarBand;
    auto parts = convolve_terms(pool, chi, conv, targets(), config_.convolution, config_.dealias_factor,
                                scalar ? &target_comp_ : nullptr);
    for (int t = 0; t < targets(); ++t) acc[static_cast<std::size_t>(t)] += parts[static_cast<std::size_t>(t)];
  }
  for (int t = 0; t < targets(); ++t) set_block(out, t, project(t, acc[static_cast<std::size_t>(t)]));
  return out;
}

namespace {

void check_problem(const InteractionSystem& sys, const InteractionProblem& problem) {
  if (problem.initial.ncomp() != sys.ncomp() || problem.initial.grid().n() != sys.grid().n())
    throw Error(ErrorCode::GridMismatch, "initial field does not match the interaction system");
  if (sys.config().convolution == ConvolutionMode::Direct && sys.grid().n() > 64)
    throw Error(ErrorCode::InvalidArgument, "direct convolution is limited to 64 nodes per axis");
}

bool any_terms(const std::vector<std::vector<DecoratedIndex>>& terms) {
  return std::any_of(terms.begin(), terms.end(), [](const auto& v) { return !v.empty(); });
}

}  // namespace

Trajectory solve_interaction_system(const InteractionSystem& sys, const InteractionProblem& problem,
                                    const Observer& observer) {
  check_problem(sys, problem);
  const ModalField init = sys.decompose(problem.initial);
  FrameCache frames(sys.propagator(), problem.rho, sys.targets());
  SlowOperator op;
  if (!sys.nonlinearity().empty()) {
    op.prepare = [&](const std::vector<double>& taus) { frames.prepare(taus); };
    op.eval = [&](std::size_t j, double tau, const ModalField& u) {
      return frames.to_slow(j, tau, sys.full_rhs(frames.to_fast(j, tau, u)));
    };
  }
  return solve_picard(init, op, problem.rho, problem.tau_star, sys.contraction(init), sys.config(), observer);
}

Trajectory solve_averaged_system(const InteractionSystem& sys, const InteractionProblem& problem,
                                 const InteractionIndexSets& sets, AveragingMode mode, bool force,
                                 const Observer& observer) {
  check_problem(sys, problem);
  if (sets.targets() != sys.targets()) throw Error(ErrorCode::InvalidArgument, "index sets do not match the system");
  if (mode == AveragingMode::Reduced && !force) {
    ResonanceOptions opts;
    opts.orders = sets.orders;
    opts.tol_res = sets.tol_res;
    opts.tol_k = sets.tol_k;
    const auto rep = partial_gvm_check(sets.spectrum, sets.partition, sys.model(), opts);
    if (!rep.ok)
      throw Error(ErrorCode::HypothesisViolated,
                  "partition is not partially GVM (" + std::to_string(rep.violations.size()) + " violations)");
  }
  const auto& terms = mode == AveragingMode::Full       ? sets.resonant
                      : mode == AveragingMode::Diagonal ? sets.diag
                                                        : sets.reduced;
  const ModalField init = sys.decompose(problem.initial);
  FrameCache frames(sys.propagator(), problem.rho, sys.targets());
  SlowOperator op;
  if (!sys.nonlinearity().empty() && any_terms(terms)) {
    op.prepare = [&](const std::vector<double>& taus) { frames.prepare(taus); };
    op.eval = [&](std::size_t j, double tau, const ModalField& u) {
      return frames.to_slow(j, tau, sys.term_rhs(frames.to_fast(j, tau, u), terms));
    };
  }
  return solve_picard(init, op, problem.rho, problem.tau_star, sys.contraction(init), sys.config(), observer);
}

double coupling_norm(const InteractionSystem& sys, const Trajectory& traj, const InteractionIndexSets& sets) {
  if (traj.size() < 2 || !any_terms(sets.coup) || sys.nonlinearity().empty()) return 0.0;
  FrameCache frames(sys.propagator(), traj.rho, sys.targets());
  auto eval = [&](std::size_t i) {
    const double tau = traj.times[i];
    return frames.to_slow(0, tau, sys.term_rhs(frames.to_fast(0, tau, traj.slow[i]), sets.coup));
  };
  ModalField prev = eval(0);
  ModalField acc(sys.grid(), sys.ncomp() * sys.targets(), Frame::Slow);
  double sup = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    ModalField cur = eval(i);
    ModalField inc = prev + cur;
    inc *= 0.5 * (traj.times[i] - traj.times[i - 1]);
    acc += inc;
    sup = std::max(sup, sys.norm(acc));
    prev = std::move(cur);
  }
  return sup;
}

double stacked_distance(const InteractionSystem& sys, const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::InvalidArgument, "trajectories have different sample counts");
  double sup = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.times[i] - b.times[i]) > 1e-12 * std::max(1.0, a.times[i]))
      throw Error(ErrorCode::InvalidArgument, "trajectories have different sample times");
    sup = std::max(sup, sys.norm(a.slow[i] - b.slow[i]));
  }
  return sup;
}

ModalField random_state(const InteractionSystem& sys, double amplitude, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ModalField out(sys.grid(), sys.ncomp() * sys.targets(), Frame::Fast);
  for (int t = 0; t < sys.targets(); ++t) {
    ModalField noise(sys.grid(), sys.ncomp(), Frame::Fast);
    for (auto& v : noise.data()) v = amplitude * cplx(normal(rng), normal(rng));
    sys.set_block(out, t, sys.project(t, noise));
  }
  return out;
}

double homogeneity_check(const InteractionSystem& sys, const InteractionIndexSets& sets,
                         const std::vector<double>& phases, const ModalField& state) {
  if (static_cast<int>(phases.size()) != sys.targets() / 2)
    throw Error(ErrorCode::InvalidArgument, "one phase per nk-pair is required");
  ModalField shifted = state;
  for (int t = 0; t < sys.targets(); ++t) {
    const double phi = phases[static_cast<std::size_t>(InteractionIndexSets::target_pair(t))];
    ModalField b = sys.block(state, t);
    b *= std::polar(1.0, InteractionIndexSets::target_sign(t) * phi);
    sys.set_block(shifted, t, b);
  }
  const ModalField base = sys.term_rhs(state, sets.resonant);
  const ModalField lhs = sys.term_rhs(shifted, sets.resonant);
  double worst = 0.0;
  for (int t = 0; t < sys.targets(); ++t) {
    const double phi = phases[static_cast<std::size_t>(InteractionIndexSets::target_pair(t))];
    ModalField rhs = sys.block(base, t);
    const double scale = rhs.l1_norm();
    rhs *= std::polar(1.0, InteractionIndexSets::target_sign(t) * phi);
    const double diff = (sys.block(lhs, t) - rhs).l1_norm();
    if (scale > 0.0) {
      worst = std::max(worst, diff / scale);
    } else if (diff > 0.0) {
      worst = std::numeric_limits<double>::infinity();
    }
  }
  return worst;
}

}  // namespace wavepax
