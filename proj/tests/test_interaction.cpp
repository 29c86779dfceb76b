#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "wavepax/errors.hpp"
#include "wavepax/interaction.hpp"
#include "wavepax/wavepacket.hpp"

using namespace wavepax;

namespace {

DispersionModel quad(double a0) { return make_model({{"preset", "nls1d"}, {"a2", 1.0}, {"a0", a0}}); }

NkSpectrum spec1(std::initializer_list<double> ks) {
  NkSpectrum s;
  for (double k : ks) s.pairs.push_back({1, KVec(k)});
  return s;
}

DecoratedIndex idx(std::initializer_list<std::pair<int, int>> slots) {
  DecoratedIndex d;
  for (auto [z, l] : slots) d.slots.push_back({z, l - 1});
  return d;
}

std::set<DecoratedIndex> as_set(const std::vector<DecoratedIndex>& v) { return {v.begin(), v.end()}; }

std::set<DecoratedIndex> permutations(DecoratedIndex base) {
  std::set<DecoratedIndex> out;
  std::sort(base.slots.begin(), base.slots.end());
  do {
    out.insert(base);
  } while (std::next_permutation(base.slots.begin(), base.slots.end()));
  return out;
}

WavepacketSpec packet(double k_star, double r_star, double beta, double eps, double width, double amp) {
  WavepacketSpec s;
  s.n = 1;
  s.k_star = KVec(k_star);
  s.r_star = KVec(r_star);
  s.beta = beta;
  s.epsilon = eps;
  s.envelope.family = EnvelopeFamily::Gaussian;
  s.envelope.width = width;
  s.envelope.amplitude = amp;
  return s;
}

}  // namespace

TEST_CASE("counterpropagating index sets") {
  auto m = quad(0.0);
  auto sets = build_index_sets(spec1({1.0, -1.0}), m, {3});
  REQUIRE(sets.targets() == 4);
  CHECK(sets.full_count(3) == 64);

  std::set<DecoratedIndex> plus;
  for (int l = 0; l < 2; ++l) {
    auto s = as_set(sets.resonant[static_cast<std::size_t>(InteractionIndexSets::target(l, +1))]);
    plus.insert(s.begin(), s.end());
  }
  std::set<DecoratedIndex> expected;
  for (auto base : {idx({{+1, 1}, {-1, 1}, {+1, 1}}), idx({{+1, 1}, {-1, 1}, {+1, 2}}),
                    idx({{+1, 2}, {-1, 2}, {+1, 1}}), idx({{+1, 2}, {-1, 2}, {+1, 2}})}) {
    auto p = permutations(base);
    expected.insert(p.begin(), p.end());
  }
  CHECK(plus == expected);

  // Output at k_1: delta = (1, 0).
  auto first = as_set(sets.resonant[0]);
  auto self = permutations(idx({{+1, 1}, {-1, 1}, {+1, 1}}));
  auto cross = permutations(idx({{+1, 2}, {-1, 2}, {+1, 1}}));
  std::set<DecoratedIndex> want = self;
  want.insert(cross.begin(), cross.end());
  CHECK(first == want);
  CHECK(as_set(sets.diag[0]) == self);
  CHECK(as_set(sets.coup[0]) == cross);
  CHECK(as_set(sets.reduced[0]) == self);

  for (int t = 0; t < 4; ++t) {
    const auto u = static_cast<std::size_t>(t);
    for (const auto& d : sets.diag[u]) CHECK(std::find(sets.resonant[u].begin(), sets.resonant[u].end(), d) != sets.resonant[u].end());
    for (const auto& d : sets.diag[u]) CHECK(std::find(sets.coup[u].begin(), sets.coup[u].end(), d) == sets.coup[u].end());
    CHECK(sets.coup[u].size() + sets.reduced[u].size() == sets.resonant[u].size());
  }
  // The minus targets hold the negated lists.
  std::set<DecoratedIndex> neg;
  for (const auto& d : sets.resonant[0]) neg.insert(d.negated());
  CHECK(as_set(sets.resonant[1]) == neg);
  CHECK(sets.self_component());
  CHECK(sets.near.empty());

  auto whole = build_index_sets(spec1({1.0, -1.0}), m, {3}, 0.0, {{0, 1}});
  CHECK(whole.coup[0].empty());
  CHECK(whole.reduced[0].size() == whole.resonant[0].size());
  CHECK_THROWS_AS(build_index_sets(spec1({1.0, -1.0}), m, {3}, 0.0, {{0}}), Error);
  CHECK_THROWS_AS(build_index_sets(spec1({1.0, -1.0}), m, {3}, 0.0, {{0, 1}, {1}}), Error);
}

TEST_CASE("quadratic index sets") {
  auto none = build_index_sets(spec1({1.0}), quad(1.0), {2});
  for (const auto& v : none.resonant) CHECK(v.empty());

  // omega = k^2 + 2 on {1, 2}: the second harmonic terms only.
  auto shg = build_index_sets(spec1({1.0, 2.0}), quad(2.0), {2});
  CHECK(as_set(shg.resonant[static_cast<std::size_t>(InteractionIndexSets::target(1, +1))]) ==
        std::set<DecoratedIndex>{idx({{+1, 1}, {+1, 1}})});
  CHECK(as_set(shg.resonant[static_cast<std::size_t>(InteractionIndexSets::target(0, +1))]) ==
        permutations(idx({{+1, 2}, {-1, 1}})));
  CHECK(as_set(shg.resonant[static_cast<std::size_t>(InteractionIndexSets::target(1, -1))]) ==
        std::set<DecoratedIndex>{idx({{-1, 1}, {-1, 1}})});
  std::size_t total = 0;
  for (const auto& v : shg.resonant) total += v.size();
  CHECK(total == 6);
  // The driving term of the second harmonic has no slot on pair 2.
  CHECK_FALSE(shg.self_component());
}

TEST_CASE("near-resonant terms are reported") {
  // Shifting a0 by 1e-6 detunes every second harmonic term by exactly that amount.
  auto m = quad(2.0);
  auto sets = build_index_sets(spec1({1.0, 2.0}), m, {2}, 1e-12, {}, 1e-12);
  CHECK(sets.near.empty());
  auto off = make_model({{"preset", "nls1d"}, {"a2", 1.0}, {"a0", 2.0 + 1e-6}});
  auto sets2 = build_index_sets(spec1({1.0, 2.0}), off, {2}, 1e-9, {}, 1e-5);
  for (const auto& v : sets2.resonant) CHECK(v.empty());
  REQUIRE(sets2.near.size() == 6);
  for (const auto& n : sets2.near) CHECK(n.omega == doctest::Approx(1e-6).epsilon(1e-3).scale(0.0));
}

TEST_CASE("decomposition and supports") {
  auto m = quad(1.0);
  Grid g(1, 1024, 4.0);
  const double R = 0.3;
  InteractionSystem sys(m, {Susceptibility::nls(-1.0)}, spec1({1.0, -1.5}), g, R);
  auto h = build_multi_wavepacket({packet(1.0, 0.0, 0.1, 0.5, 2.0, 1.0), packet(-1.5, 0.0, 0.1, 0.5, 2.0, 1.0)}, m, g);
  auto w = sys.decompose(h);
  REQUIRE(w.ncomp() == 2 * 4);
  for (int t = 0; t < sys.targets(); ++t) {
    const auto& pr = sys.spectrum().pairs[static_cast<std::size_t>(InteractionIndexSets::target_pair(t))];
    const int theta = InteractionIndexSets::target_sign(t);
    auto b = sys.block(w, t);
    const int c = DispersionModel::comp(1, theta);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double q = std::abs(g.k(i)[0] - theta * pr.k[0]);
      if (q >= R) CHECK(b.at(0, i) == cplx(0.0));
      if (q >= R) CHECK(b.at(1, i) == cplx(0.0));
      CHECK(b.at(1 - c, i) == cplx(0.0));
      CHECK(b.at(c, i) == sys.cutoff(t)[i] * h.at(c, i));
    }
  }
  // The cutoffs are exactly one on the packet core.
  auto sum = sys.sum(w);
  CHECK((sum - h).l1_norm() <= 1e-3 * h.l1_norm());

  auto r = random_state(sys, 0.1, 5);
  auto rhs = sys.full_rhs(r);
  for (int t = 0; t < sys.targets(); ++t) {
    auto b = sys.block(rhs, t);
    auto again = sys.project(t, b);
    // Psi is not idempotent; only the support is checked.
    for (std::size_t i = 0; i < g.size(); ++i)
      if (sys.cutoff(t)[i] == 0.0) CHECK(std::abs(b.at(0, i)) + std::abs(b.at(1, i)) == 0.0);
    CHECK(again.l1_norm() <= b.l1_norm());
  }
}

TEST_CASE("zero nonlinearity keeps the decomposition") {
  auto m = quad(1.0);
  Grid g(1, 512, 4.0);
  InteractionSystem sys(m, {}, spec1({1.0}), g, 0.4);
  InteractionProblem p;
  p.rho = 0.1;
  p.tau_star = 0.5;
  p.initial = build_wavepacket(packet(1.0, 0.0, 0.2, 0.5, 2.0, 1.0), m, g);
  auto w0 = sys.decompose(p.initial);
  auto tr = solve_interaction_system(sys, p);
  for (const auto& s : tr.slow) CHECK(s.data() == w0.data());
  auto sets = build_index_sets(spec1({1.0}), m, {3});
  auto av = solve_averaged_system(sys, p, sets, AveragingMode::Full);
  CHECK(av.final_slow().data() == w0.data());
}

TEST_CASE("no second harmonic keeps the averaged state") {
  auto m = quad(1.0);
  Grid g(1, 512, 4.0);
  auto chi = Susceptibility::real_power(2, 2, 1.0);
  InteractionSystem sys(m, {chi}, spec1({1.0}), g, 0.4);
  auto sets = build_index_sets(spec1({1.0}), m, {2});
  InteractionProblem p;
  p.rho = 0.1;
  p.tau_star = 0.5;
  p.initial = build_wavepacket(packet(1.0, 0.0, 0.2, 0.5, 2.0, 1.0), m, g);
  auto av = solve_averaged_system(sys, p, sets, AveragingMode::Full);
  auto w0 = sys.decompose(p.initial);
  for (const auto& s : av.slow) CHECK(s.data() == w0.data());
}

TEST_CASE("second harmonic averaged terms") {
  // Independent evaluation of the two SHG monomials on a random state.
  auto m = quad(2.0);
  Grid g(1, 256, 4.0);
  auto chi = Susceptibility::real_power(2, 2, 1.0);
  auto S = spec1({1.0, 2.0});
  InteractionSystem sys(m, {chi}, S, g, 0.3);
  auto sets = build_index_sets(S, m, {2});
  auto v = random_state(sys, 1.0, 11);
  auto F = sys.term_rhs(v, sets.resonant);

  auto u1 = sys.block(v, InteractionIndexSets::target(0, +1));
  auto u1m = sys.block(v, InteractionIndexSets::target(0, -1));
  auto u2 = sys.block(v, InteractionIndexSets::target(1, +1));
  // real_power: F_+ = i (sum U)^2, so the + output takes i U1^2 at k = 2 and 2 i U2 U1* at k = 1.
  auto sq = apply_nonlinearity(std::vector<const ModalField*>{&u1, &u1}, chi);
  auto mix = apply_nonlinearity(std::vector<const ModalField*>{&u2, &u1m}, chi);
  mix *= 2.0;
  auto want2 = sys.project(InteractionIndexSets::target(1, +1), sq);
  auto want1 = sys.project(InteractionIndexSets::target(0, +1), mix);
  auto got2 = sys.block(F, InteractionIndexSets::target(1, +1));
  auto got1 = sys.block(F, InteractionIndexSets::target(0, +1));
  CHECK((got2 - want2).l1_norm() <= 1e-12 * want2.l1_norm());
  CHECK((got1 - want1).l1_norm() <= 1e-12 * want1.l1_norm());
  CHECK(want1.l1_norm() > 0.0);
  CHECK(want2.l1_norm() > 0.0);
}

TEST_CASE("full averaged nonlinearity splits into reduced and coupling parts") {
  auto m = quad(0.0);
  Grid g(1, 512, 4.0);
  auto S = spec1({1.0, -1.0});
  InteractionSystem sys(m, {Susceptibility::real_power(3, 2, 1.0)}, S, g, 0.3);
  auto sets = build_index_sets(S, m, {3});
  auto v = random_state(sys, 1.0, 3);
  auto full = sys.term_rhs(v, sets.resonant);
  auto split = sys.term_rhs(v, sets.reduced) + sys.term_rhs(v, sets.coup);
  CHECK((full - split).l1_norm() <= 1e-12 * full.l1_norm());
  CHECK(sys.term_rhs(v, sets.diag).data() == sys.term_rhs(v, sets.reduced).data());
}

TEST_CASE("homogeneity of averaged nonlinearities") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ph(-3.14159, 3.14159);
  Grid g(1, 256, 4.0);

  auto cp = quad(0.0);
  auto S = spec1({1.0, -1.0});
  InteractionSystem sys(cp, {Susceptibility::real_power(3, 2, 1.0)}, S, g, 0.3);
  auto sets = build_index_sets(S, cp, {3});
  auto v = random_state(sys, 1.0, 8);
  CHECK(homogeneity_check(sys, sets, {0.0, 0.0}, v) == 0.0);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) worst = std::max(worst, homogeneity_check(sys, sets, {ph(rng), ph(rng)}, v));
  CHECK(worst <= 1e-10);

  auto shg = quad(2.0);
  auto S2 = spec1({1.0, 2.0});
  InteractionSystem sys2(shg, {Susceptibility::real_power(2, 2, 1.0)}, S2, g, 0.3);
  auto sets2 = build_index_sets(S2, shg, {2});
  auto v2 = random_state(sys2, 1.0, 9);
  double conditional = 0.0;
  double generic = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const double p1 = ph(rng);
    conditional = std::max(conditional, homogeneity_check(sys2, sets2, {p1, 2.0 * p1}, v2));
    generic = std::min(generic, homogeneity_check(sys2, sets2, {p1, 2.0 * p1 + 0.5 + std::abs(ph(rng))}, v2));
  }
  CHECK(conditional <= 1e-10);
  CHECK(generic >= 1e-2);
}

TEST_CASE("reduced mode requires a partially GVM partition") {
  auto m = quad(2.0);
  Grid g(1, 512, 4.0);
  auto S = spec1({1.0, 2.0});
  InteractionSystem sys(m, {Susceptibility::real_power(2, 2, 0.1)}, S, g, 0.3);
  auto sets = build_index_sets(S, m, {2}, 0.0, {{0}, {1}});
  InteractionProblem p;
  p.rho = 0.1;
  p.tau_star = 0.2;
  p.initial = build_multi_wavepacket({packet(1.0, 0.0, 0.2, 0.5, 1.0, 0.5), packet(2.0, 0.0, 0.2, 0.5, 1.0, 0.5)}, m, g);
  try {
    solve_averaged_system(sys, p, sets, AveragingMode::Reduced);
    FAIL("expected HypothesisViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HypothesisViolated);
  }
  auto forced = solve_averaged_system(sys, p, sets, AveragingMode::Reduced, true);
  CHECK(forced.size() > 1);
  CHECK(averaging_mode_from_string("diagonal") == AveragingMode::Diagonal);
  CHECK_THROWS_AS(averaging_mode_from_string("bogus"), Error);
}

TEST_CASE("diagonal mode separates into single-packet systems") {
  auto m = quad(0.0);
  Grid g(1, 1024, 4.0);
  auto chi = Susceptibility::real_power(3, 2, 1.0);
  const double beta = 0.1;
  const double eps = 0.5;
  const double R = std::pow(beta, 1.0 - eps);
  auto pa = packet(1.0, -10.0, beta, eps, 2.0, 1.0);
  auto pb = packet(-1.0, 10.0, beta, eps, 2.0, 1.0);
  auto S = spec1({1.0, -1.0});
  InteractionSystem sys(m, {chi}, S, g, R);
  auto sets = build_index_sets(S, m, {3});
  InteractionProblem p;
  p.rho = 0.05;
  p.tau_star = 0.5;
  p.initial = build_multi_wavepacket({pa, pb}, m, g);
  auto joint = solve_averaged_system(sys, p, sets, AveragingMode::Diagonal);

  for (int l = 0; l < 2; ++l) {
    auto Sl = spec1({l == 0 ? 1.0 : -1.0});
    InteractionSystem one(m, {chi}, Sl, g, R);
    auto setsl = build_index_sets(Sl, m, {3});
    InteractionProblem pl = p;
    pl.initial = build_wavepacket(l == 0 ? pa : pb, m, g);
    auto single = solve_averaged_system(one, pl, setsl, AveragingMode::Full);
    REQUIRE(single.size() == joint.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      for (int theta : {+1, -1}) {
        auto a = sys.block(joint.slow[i], InteractionIndexSets::target(l, theta));
        auto b = one.block(single.slow[i], InteractionIndexSets::target(0, theta));
        worst = std::max(worst, (a - b).l1_norm() / b.l1_norm());
      }
    }
    CHECK(worst <= 1e-9);
    // A single pair has no coupling terms.
    CHECK(coupling_norm(one, single, setsl) == 0.0);
  }
  CHECK(coupling_norm(sys, joint, sets) > 0.0);
}

TEST_CASE("interaction and averaged systems approach the integrated solution at rate rho") {
  // The cutoff plateau holds the cubed envelope to four standard deviations, so the
  // non-resonant harmonics dominate the differences between the three systems.
  auto m = quad(1.0);
  Grid g(1, 2048, 4.0);
  const double beta = 0.05;
  const double eps = 0.5;
  const double R = std::pow(beta, 1.0 - eps);
  auto chi = Susceptibility::real_power(3, 2, 1.0);
  // Counterpropagating packets: delta = (2, 1) lands on k_1 without being resonant.
  auto S = spec1({1.0, -1.0});
  InteractionSystem sys(m, {chi}, S, g, R);
  auto sets = build_index_sets(S, m, {3});
  auto h = build_multi_wavepacket({packet(1.0, -5.0, beta, eps, 3.0, 0.2), packet(-1.0, 5.0, beta, eps, 3.0, 0.2)},
                                  m, g);

  std::vector<double> d_int;
  std::vector<double> d_av;
  std::vector<double> pn_ratio;
  for (double rho : {0.02, 0.01}) {
    InteractionProblem p;
    p.rho = rho;
    p.tau_star = 0.5;
    p.initial = h;
    auto w = solve_interaction_system(sys, p);
    auto v = solve_averaged_system(sys, p, sets, AveragingMode::Full);

    EvolutionProblem ep;
    ep.model = m;
    ep.nonlinearity = {chi};
    ep.rho = rho;
    ep.tau_star = 0.5;
    ep.initial = sys.sum(sys.decompose(h));
    auto u = solve_integrated(ep, SolverConfig{});
    REQUIRE(u.size() == w.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) d = std::max(d, (sys.sum(w.slow[i]) - u.slow[i]).l1_norm());
    d_int.push_back(d);
    d_av.push_back(stacked_distance(sys, w, v));

    auto pair = [&](const ModalField& st, int l) {
      return sys.block(st, InteractionIndexSets::target(l, +1)) + sys.block(st, InteractionIndexSets::target(l, -1));
    };
    std::vector<ModalField> parts0{pair(v.slow.front(), 0), pair(v.slow.front(), 1)};
    std::vector<ModalField> parts1{pair(v.final_slow(), 0), pair(v.final_slow(), 1)};
    std::vector<KVec> pos{KVec(-5.0), KVec(5.0)};
    pn_ratio.push_back(particle_norm(parts1, pos, beta, eps) / particle_norm(parts0, pos, beta, eps));
  }
  MESSAGE("interaction vs integrated: " << d_int[0] << " -> " << d_int[1]);
  MESSAGE("averaged vs interaction: " << d_av[0] << " -> " << d_av[1]);
  CHECK(d_int[1] < 1e-2 * h.l1_norm());
  CHECK(d_int[0] / d_int[1] >= 1.6);
  CHECK(d_int[0] / d_int[1] <= 2.4);
  CHECK(d_av[0] / d_av[1] >= 1.6);
  CHECK(d_av[0] / d_av[1] <= 2.4);
  for (double r : pn_ratio) CHECK(r <= 2.0);
}
