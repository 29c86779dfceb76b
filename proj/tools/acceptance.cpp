#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "wavepax/errors.hpp"
#include "wavepax/evolution.hpp"
#include "wavepax/harness.hpp"
#include "wavepax/interaction.hpp"
#include "wavepax/resonance.hpp"
#include "wavepax/wavepacket.hpp"

namespace fs = std::filesystem;
using namespace wavepax;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

DispersionModel quad(double a0) { return make_model({{"preset", "nls1d"}, {"a2", 1.0}, {"a0", a0}}); }

NkSpectrum spec1(std::initializer_list<double> ks) {
  NkSpectrum s;
  s.d = 1;
  for (double k : ks) s.pairs.push_back({1, KVec(k)});
  return s;
}

ResonanceOptions order(int m) {
  ResonanceOptions o;
  o.orders = {m};
  return o;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmtd(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------------------------------------

Outcome golden_resonance() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string why;
  auto need = [&](bool c, const std::string& what) {
    if (!c && ok) why = what;
    ok = ok && c;
  };

  auto s1 = spec1({1.0});
  auto r_i = classify(s1, quad(1.0), order(2));
  need(r_i.selected.same_set(s1, 1e-12) && r_i.invariant(), "quad (i) R(S1) != S1");

  auto shg = quad(2.0);
  auto s2 = spec1({1.0, 2.0});
  need(resonance_select(s1, shg, order(2)).same_set(s2, 1e-12), "quad (ii) R(S1)");
  auto rr = resonance_select(resonance_select(s1, shg, order(2)), shg, order(2));
  need(rr.same_set(s2, 1e-12), "quad (ii) R(R(S1)) != S2");
  auto r_ii = classify(s2, shg, order(2));
  need(r_ii.invariant() && r_ii.universal.size() != r_ii.internal.size(), "quad (ii) S2 invariance classes");

  auto quart = make_model({{"preset", "power"}, {"p", 4.0}, {"a0", 39.0}});
  auto s4 = spec1({3.0, 1.0, -1.0, -3.0});
  auto r_c = classify(s4, quart, order(3));
  need(r_c.invariant() && r_c.selected.same_set(s4, 1e-12), "cube S4 not invariant");

  auto cp = spec1({1.0, -1.0});
  auto r_cp = classify(cp, quad(0.0), order(3));
  need(r_cp.classification == Invariance::UniversallyInvariant && r_cp.universal.size() == r_cp.internal.size(),
       "counterprop not universally invariant");
  std::set<DecoratedIndex> expected;
  auto idx = [](std::initializer_list<std::pair<int, int>> slots) {
    DecoratedIndex d;
    for (auto [z, l] : slots) d.slots.push_back({z, l - 1});
    std::sort(d.slots.begin(), d.slots.end());
    return d;
  };
  for (auto base : {idx({{+1, 1}, {-1, 1}, {+1, 1}}), idx({{+1, 1}, {-1, 1}, {+1, 2}}),
                    idx({{+1, 2}, {-1, 2}, {+1, 1}}), idx({{+1, 2}, {-1, 2}, {+1, 2}})}) {
    do {
      expected.insert(base);
    } while (std::next_permutation(base.slots.begin(), base.slots.end()));
  }
  std::set<DecoratedIndex> found;
  for (const auto& sol : r_cp.solutions)
    if (sol.zeta == +1) found.insert(sol.index);
  need(expected.size() == 18 && found == expected, "counterprop Lambda_+ membership");

  const double t = seconds_since(t0);
  need(t < 1.0, "runtime " + fmtd(t) + " s");
  return {ok, ok ? "4 golden spectra in " + fmtd(t) + " s" : why};
}

// ---------------------------------------------------------------------------------------------------------

double max_rel(const ModalField& a, const ModalField& b) {
  double scale = std::max(a.max_abs(), b.max_abs());
  double err = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) err = std::max(err, std::abs(a.data()[i] - b.data()[i]));
  return err / scale;
}

Outcome convolution_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Grid g(1, 16, 2.0);
  double worst = 0.0;
  for (int m : {2, 3})
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<ModalField> fs;
      for (int j = 0; j < m; ++j) {
        ModalField f(g, 2);
        for (auto& v : f.data()) v = cplx(nd(rng), nd(rng));
        fs.push_back(f);
      }
      std::vector<const ModalField*> slots;
      for (auto& f : fs) slots.push_back(&f);
      auto chi = Susceptibility::real_power(m, 2, 0.9);
      worst = std::max(worst, max_rel(apply_nonlinearity(slots, chi, ConvolutionMode::Fft),
                                      apply_nonlinearity(slots, chi, ConvolutionMode::Direct)));
      worst = std::max(worst, max_rel(apply_nonlinearity(fs[0], chi, ConvolutionMode::Fft),
                                      apply_nonlinearity(fs[0], chi, ConvolutionMode::Direct)));
    }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && t < 1.0, "max relative error " + fmtd(worst) + " in " + fmtd(t) + " s"};
}

// ---------------------------------------------------------------------------------------------------------

// Cubic NLS term through a zero-padded r-space product, independent of the convolution module.
struct NlsOracle {
  Grid g;
  double q;

  CVec padded_r(const cplx* a) const {
    const std::size_t n = g.n();
    CVec buf(2 * n, cplx(0.0, 0.0));
    for (std::size_t j = 0; j < n; ++j) buf[j] = a[j];
    fft_inplace(1, 2 * n, -1, buf.data());
    return buf;
  }

  ModalField operator()(const ModalField& u) const {
    const std::size_t n = g.n();
    const std::size_t P = 2 * n;
    CVec p = padded_r(u.comp(0));
    CVec m = padded_r(u.comp(1));
    CVec fp(P), fm(P);
    const cplx i(0.0, 1.0);
    for (std::size_t j = 0; j < P; ++j) {
      fp[j] = -i * q * m[j] * p[j] * p[j];
      fm[j] = i * q * p[j] * m[j] * m[j];
    }
    fft_inplace(1, P, +1, fp.data());
    fft_inplace(1, P, +1, fm.data());
    const double c = std::pow(g.dk() / (2.0 * kPi), 2) / static_cast<double>(P);
    ModalField out(g, 2);
    for (std::size_t o = 0; o < n; ++o) {
      out.at(0, o) = c * fp[(o + n) % P];
      out.at(1, o) = c * fm[(o + n) % P];
    }
    return out;
  }
};

// Implicit midpoint on the slow frame, the exponential midpoint rule of the fast equation.
ModalField exp_midpoint(const DispersionModel& model, const NlsOracle& nl, const ModalField& h0, double rho,
                        double t0, double tau, std::size_t steps) {
  const Grid& g = h0.grid();
  const double dt = tau / static_cast<double>(steps);
  std::vector<double> w(2 * g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    w[i] = model.omega_unchecked(1, +1, g.k(i));
    w[g.size() + i] = model.omega_unchecked(1, -1, g.k(i));
  }
  auto rhs = [&](double t, const ModalField& u) {
    ModalField f = u;
    for (std::size_t q = 0; q < w.size(); ++q) f.data()[q] *= std::polar(1.0, -t * w[q] / rho);
    ModalField r = nl(f);
    for (std::size_t q = 0; q < w.size(); ++q) r.data()[q] *= std::polar(1.0, t * w[q] / rho);
    return r;
  };
  ModalField u = h0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double tm = t0 + (static_cast<double>(s) + 0.5) * dt;
    ModalField next = u;
    for (int it = 0; it < 100; ++it) {
      ModalField mid = u + next;
      mid *= 0.5;
      ModalField upd = rhs(tm, mid);
      upd *= dt;
      upd += u;
      const double d = l1_distance(upd, next);
      next = upd;
      if (d < 1e-15) break;
    }
    u = next;
  }
  return u;
}

WavepacketSpec packet(double k_star, double beta, double width, double amp) {
  WavepacketSpec s;
  s.k_star = KVec(k_star);
  s.r_star = KVec(0.0);
  s.beta = beta;
  s.envelope.width = width;
  s.envelope.amplitude = amp;
  return s;
}

Outcome solver_correctness() {
  auto model = quad(1.0);
  Grid g(1, 256, 2.0);
  auto h = build_wavepacket(packet(0.5, 0.25, 2.0, 1.5), model, g);

  EvolutionProblem free{model, {}, 0.05, 0.5, h};
  double zero_dev = 0.0;
  for (const auto& u : solve_integrated(free, SolverConfig{}).slow) zero_dev = std::max(zero_dev, l1_distance(u, h));

  EvolutionProblem p{model, {Susceptibility::nls(-1.0)}, 0.05, 0.2, h};
  SolverConfig cfg;
  cfg.substeps_per_rho = 100.0;
  auto traj = solve_integrated(p, cfg);
  NlsOracle oracle{g, -1.0};
  ModalField cur = h;
  double t = 0.0, sup = 0.0;
  for (int s = 0; s < 8; ++s) {
    cur = exp_midpoint(model, oracle, cur, p.rho, t, p.tau_star / 8.0, 200);
    t += p.tau_star / 8.0;
    for (std::size_t j = 0; j < traj.size(); ++j)
      if (std::abs(traj.times[j] - t) < 1e-12) sup = std::max(sup, l1_distance(cur, traj.slow[j]));
  }

  std::vector<ModalField> finals;
  for (double s : {10.0, 20.0, 40.0}) {
    SolverConfig c;
    c.substeps_per_rho = s;
    finals.push_back(solve_integrated(p, c).final_slow());
  }
  const double ratio = l1_distance(finals[0], finals[1]) / l1_distance(finals[1], finals[2]);
  const bool ok = zero_dev == 0.0 && sup <= 1e-6 && ratio >= 3.0;
  return {ok, "F=0 deviation " + fmtd(zero_dev) + ", oracle distance " + fmtd(sup) + ", halving ratio " +
                  fmtd(ratio)};
}

// ---------------------------------------------------------------------------------------------------------

std::string describe(const ExperimentResult& r) {
  std::string out;
  for (const auto& c : r.checks) out += (out.empty() ? "" : ", ") + c.name + " " + fmtd(c.value);
  for (const auto& h : r.hypotheses)
    if (!h.ok) out += (out.empty() ? "" : ", ") + std::string("hypothesis ") + h.name + " fails";
  for (const auto& run : r.runs)
    if (!run.error.empty()) out += (out.empty() ? "" : ", ") + run.error;
  return out;
}

const CheckResult* find_check(const ExperimentResult& r, const std::string& prefix) {
  for (const auto& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

Outcome experiment(const std::string& name, const fs::path& config, const fs::path& out,
                   const std::vector<std::string>& required) {
  const RunConfig cfg = RunConfig::load(config);
  ExperimentResult r = run_experiment(name, cfg);
  r.write(out);
  bool ok = r.exit_code() == 0;
  for (const auto& req : required) ok = ok && find_check(r, req) != nullptr;
  return {ok, describe(r)};
}

Outcome homogeneity() {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ph(-kPi, kPi);
  Grid g(1, 256, 4.0);

  auto cp = quad(0.0);
  auto S = spec1({1.0, -1.0});
  InteractionSystem sys(cp, {Susceptibility::real_power(3, 2, 1.0)}, S, g, 0.3);
  auto sets = build_index_sets(S, cp, {3});
  auto v = random_state(sys, 1.0, 8);
  double universal = 0.0;
  for (int trial = 0; trial < 20; ++trial)
    universal = std::max(universal, homogeneity_check(sys, sets, {ph(rng), ph(rng)}, v));

  auto shg = quad(2.0);
  auto S2 = spec1({1.0, 2.0});
  InteractionSystem sys2(shg, {Susceptibility::real_power(2, 2, 1.0)}, S2, g, 0.3);
  auto sets2 = build_index_sets(S2, shg, {2});
  auto v2 = random_state(sys2, 1.0, 9);
  double on = 0.0, off = 1e300;
  for (int trial = 0; trial < 20; ++trial) {
    const double p1 = ph(rng);
    on = std::max(on, homogeneity_check(sys2, sets2, {p1, 2.0 * p1}, v2));
    off = std::min(off, homogeneity_check(sys2, sets2, {p1, 2.0 * p1 + 0.5 + std::abs(ph(rng))}, v2));
  }
  return {universal <= 1e-10 && on <= 1e-10 && off >= 1e-2,
          "universal " + fmtd(universal) + ", on constraint " + fmtd(on) + ", off constraint " + fmtd(off)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Byte comparison of every file under two output directories.
bool same_tree(const fs::path& a, const fs::path& b, std::size_t* files) {
  std::set<fs::path> names;
  for (const auto& root : {a, b})
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) names.insert(fs::relative(e.path(), root));
  *files = names.size();
  for (const auto& n : names) {
    if (!fs::exists(a / n) || !fs::exists(b / n)) return false;
    if (slurp(a / n) != slurp(b / n)) return false;
  }
  return true;
}

Outcome determinism(const fs::path& configs, const fs::path& out, const fs::path& first) {
  // Rerun with two workers against the single-worker output of criterion 5.
  const RunConfig cfg = RunConfig::load(configs / "preservation.json");
  ExperimentOptions opt;
  opt.workers = 2;
  run_experiment("preservation", cfg, opt).write(out / "preservation_rerun");
  std::size_t files = 0;
  const bool pres = same_tree(first, out / "preservation_rerun", &files);

  const RunConfig sol = RunConfig::load(configs / "soliton.json");
  run_experiment("soliton", sol).write(out / "soliton_a");
  run_experiment("soliton", sol).write(out / "soliton_b");
  std::size_t files2 = 0;
  const bool solb = same_tree(out / "soliton_a", out / "soliton_b", &files2);
  return {pres && solb, std::to_string(files + files2) + " files compared"};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  const fs::path configs = argc > 1 ? fs::path(argv[1]) : fs::path(WAVEPAX_CONFIG_DIR);
  const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "wavepax_acceptance";
  fs::remove_all(out);
  fs::create_directories(out);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "resonance golden set", golden_resonance},
      {2, "convolution oracle equivalence", convolution_oracle},
      {3, "solver correctness", solver_correctness},
      {4, "soliton",
       [&] {
         return experiment("soliton", configs / "soliton.json", out / "soliton",
                           {"stationary_residual", "modulus_drift"});
       }},
      {5, "wavepacket preservation",
       [&] {
         return experiment("preservation", configs / "preservation.json", out / "preservation",
                           {"outside_mass_ratio", "control_ratio"});
       }},
      {6, "superposition scaling",
       [&] {
         return experiment("superposition", configs / "superposition.json", out / "superposition",
                           {"defect_vs_rho.slope", "defect_vs_rho.residual"});
       }},
      {7, "averaged-system fidelity",
       [&] {
         return experiment("averaging", configs / "averaging.json", out / "averaging",
                           {"distance_halving_ratio", "coupling_vs_rho.slope"});
       }},
      {8, "position transport",
       [&] {
         return experiment("positions", configs / "positions.json", out / "positions",
                           {"y_deviation", "diameter", "single_component", "disjoint_after_crossing"});
       }},
      {9, "homogeneity identity", homogeneity},
      {10, "determinism", [&] { return determinism(configs, out, out / "preservation"); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << o.detail << " ["
              << fmtd(seconds_since(t0)) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
