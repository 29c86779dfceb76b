#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "wavepax/errors.hpp"
#include "wavepax/evolution.hpp"
#include "wavepax/wavepacket.hpp"

using namespace wavepax;

namespace {

constexpr double kPi = std::numbers::pi;

DispersionModel quad(double a0) { return make_model({{"preset", "nls1d"}, {"a2", 1.0}, {"a0", a0}}); }

ModalField random_field(const Grid& g, int ncomp, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  ModalField f(g, ncomp);
  for (auto& v : f.data()) v = cplx(nd(rng), nd(rng));
  return f;
}

double max_rel(const ModalField& a, const ModalField& b) {
  double scale = std::max(a.max_abs(), b.max_abs());
  double err = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) err = std::max(err, std::abs(a.data()[i] - b.data()[i]));
  return err / scale;
}

template <class F>
void expect_code(F&& f, std::initializer_list<ErrorCode> codes) {
  try {
    f();
    FAIL("expected an error");
  } catch (const Error& e) {
    bool hit = false;
    for (auto c : codes) hit = hit || e.code() == c;
    CHECK(hit);
  }
}

WavepacketSpec packet(double k_star, double r_star, double beta, double width, double amp = 1.0) {
  WavepacketSpec s;
  s.k_star = KVec(k_star);
  s.r_star = KVec(r_star);
  s.beta = beta;
  s.envelope.width = width;
  s.envelope.amplitude = amp;
  return s;
}

// Cubic NLS term -i q U_- U_+^2 (and its partner) through a zero-padded r-space product.
struct NlsOracle {
  Grid g;
  double q;

  CVec to_padded_r(const cplx* a) const {
    const std::size_t n = g.n();
    CVec buf(2 * n, cplx(0.0, 0.0));
    for (std::size_t j = 0; j < n; ++j) buf[j] = a[j];
    fft_inplace(1, 2 * n, -1, buf.data());
    return buf;
  }

  ModalField operator()(const ModalField& u) const {
    const std::size_t n = g.n();
    const std::size_t P = 2 * n;
    CVec p = to_padded_r(u.comp(0));
    CVec m = to_padded_r(u.comp(1));
    CVec fp(P);
    CVec fm(P);
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

// Implicit midpoint on the slow frame, i.e. the exponential midpoint rule for the fast equation.
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
      double d = l1_distance(upd, next);
      next = upd;
      if (d < 1e-15) break;
    }
    u = next;
  }
  return u;
}

}  // namespace

TEST_CASE("convolution of two deltas") {
  Grid g(1, 16, 2.0);
  ModalField a(g, 1);
  ModalField b(g, 1);
  a.at(0, 9) = cplx(2.0, 1.0);
  b.at(0, 10) = cplx(-0.5, 3.0);
  auto chi = Susceptibility::constant(2, 1, {{0, {0, 0}, 1.0}});
  for (auto mode : {ConvolutionMode::Fft, ConvolutionMode::Direct}) {
    ModalField out = apply_nonlinearity({&a, &b}, chi, mode);
    const std::size_t target = g.nearest_node(KVec(g.k_axis(9) + g.k_axis(10)));
    for (std::size_t i = 0; i < g.size(); ++i) {
      cplx expect = i == target ? a.at(0, 9) * b.at(0, 10) * g.dk() / (2.0 * kPi) : cplx(0.0, 0.0);
      CHECK(std::abs(out.at(0, i) - expect) < 1e-15);
    }
  }
}

TEST_CASE("fft and direct convolution agree") {
  std::mt19937_64 rng(7);
  Grid g(1, 16, 2.0);
  for (int m : {2, 3}) {
    ModalField u = random_field(g, 2, rng);
    for (auto chi : {Susceptibility::real_power(m, 2, 0.7), Susceptibility::nls(-1.0)}) {
      if (chi.order() != m) continue;
      CHECK(max_rel(apply_nonlinearity(u, chi, ConvolutionMode::Fft),
                    apply_nonlinearity(u, chi, ConvolutionMode::Direct)) <= 1e-12);
    }
    std::vector<ModalField> fs;
    for (int j = 0; j < m; ++j) fs.push_back(random_field(g, 2, rng));
    std::vector<const ModalField*> slots;
    for (auto& f : fs) slots.push_back(&f);
    auto chi = Susceptibility::real_power(m, 2, -1.3);
    CHECK(max_rel(apply_nonlinearity(slots, chi, ConvolutionMode::Fft),
                  apply_nonlinearity(slots, chi, ConvolutionMode::Direct)) <= 1e-12);
  }
  Grid g2(2, 8, 2.0);
  ModalField u2 = random_field(g2, 2, rng);
  auto chi3 = Susceptibility::real_power(3, 2, 0.4);
  CHECK(max_rel(apply_nonlinearity(u2, chi3, ConvolutionMode::Fft),
                apply_nonlinearity(u2, chi3, ConvolutionMode::Direct)) <= 1e-12);
  auto chi2 = Susceptibility::constant(2, 2, {{0, {0, 1}, 1.0}, {1, {1, 1}, cplx(0.0, 2.0)}});
  CHECK(max_rel(apply_nonlinearity(u2, chi2, ConvolutionMode::Fft, 3),
                apply_nonlinearity(u2, chi2, ConvolutionMode::Direct)) <= 1e-12);
}

TEST_CASE("callback susceptibility") {
  std::mt19937_64 rng(3);
  Grid g(1, 16, 2.0);
  ModalField u = random_field(g, 2, rng);
  auto flat = Susceptibility::nls(-1.0);
  auto cb = Susceptibility::callback(
      3, 2, flat.entries(),
      [&](int out, const std::vector<int>&, const KVec&, const std::vector<KVec>&) {
        return out == 0 ? cplx(0.0, 1.0) : cplx(0.0, -1.0);
      },
      1.0);
  CHECK(max_rel(apply_nonlinearity(u, cb, ConvolutionMode::Direct),
                apply_nonlinearity(u, flat, ConvolutionMode::Direct)) <= 1e-14);
  expect_code([&] { apply_nonlinearity(u, cb, ConvolutionMode::Fft); }, {ErrorCode::InvalidArgument});

  // k-dependent weight equals a product of per-argument weights, so it factors through the fields.
  auto weighted = Susceptibility::callback(
      2, 2, {{0, {0, 1}, 1.0}},
      [](int, const std::vector<int>&, const KVec&, const std::vector<KVec>& ks) {
        return cplx(std::exp(-ks[0][0] * ks[0][0]) * ks[1][0], 0.0);
      },
      1.0);
  ModalField a = u;
  ModalField b = u;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double k = g.k_axis(i);
    a.at(0, i) *= std::exp(-k * k);
    b.at(1, i) *= k;
  }
  auto plain = Susceptibility::constant(2, 2, {{0, {0, 1}, 1.0}});
  CHECK(max_rel(apply_nonlinearity({&u, &u}, weighted, ConvolutionMode::Direct),
                apply_nonlinearity({&a, &b}, plain, ConvolutionMode::Direct)) <= 1e-13);
}

TEST_CASE("cubic nls term matches the r-space product") {
  auto model = quad(1.0);
  Grid g(1, 512, 2.0);
  auto h = build_wavepacket(packet(0.4, 10.0, 0.2, 2.0), model, g);
  NlsOracle oracle{g, -1.0};
  CHECK(max_rel(apply_nonlinearity(h, Susceptibility::nls(-1.0)), oracle(h)) <= 1e-12);

  // Unpadded pointwise product of the r-space fields agrees while supports stay clear of aliasing.
  CVec up = to_r_space(g, h.comp(0));
  CVec um = to_r_space(g, h.comp(1));
  CVec prod(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) prod[j] = cplx(0.0, 1.0) * um[j] * up[j] * up[j];
  CVec fk = to_k_space(g, prod.data());
  ModalField direct(g, 2);
  std::copy(fk.begin(), fk.end(), direct.comp(0));
  ModalField fast = apply_nonlinearity(h, Susceptibility::nls(-1.0));
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(fast.at(0, i) - direct.at(0, i)));
  CHECK(err <= 1e-10 * fast.max_abs());
}

TEST_CASE("susceptibility construction") {
  auto nls = Susceptibility::nls(-2.0);
  CHECK(nls.order() == 3);
  CHECK(nls.c_chi() == doctest::Approx(2.0));
  auto rp = Susceptibility::real_power(2, 2, 0.5);
  CHECK(rp.entries().size() == 8);
  CHECK(rp.c_chi() == doctest::Approx(2.0));
  CHECK(rp.power_form().has_value());
  expect_code([] { Susceptibility::constant(3, 2, {{0, {0, 1}, 1.0}}); }, {ErrorCode::InvalidArgument});
  expect_code([] { Susceptibility::constant(1, 2, {}); }, {ErrorCode::InvalidArgument});
  auto list = make_nonlinearity(nlohmann::json::array({{{"preset", "nls"}, {"q", -1.0}},
                                                       {{"preset", "real_power"}, {"order", 2}, {"alpha", 1.0}}}),
                                2);
  CHECK(list.size() == 2);
  CHECK(make_nonlinearity({{"preset", "none"}}, 2).empty());
  expect_code([] { make_nonlinearity({{"preset", "nls"}}, 4); }, {ErrorCode::InvalidArgument});
  auto t = make_nonlinearity({{"preset", "tensor"}, {"order", 2}, {"entries", {{{"out", 0}, {"in", {0, 1}}, {"re", 1.0}}}}}, 2);
  CHECK(t.at(0).entries().size() == 1);
  CHECK(nls.to_json()["entries"].size() == 2);
}

TEST_CASE("interaction phase") {
  auto sq = quad(0.0);
  CHECK(interaction_phase(sq, 1, +1, {{1, +1}, {1, +1}}, KVec(2.0), {KVec(1.0)}) == doctest::Approx(2.0));
  auto shg = quad(2.0);
  CHECK(std::abs(interaction_phase(shg, 1, +1, {{1, +1}, {1, +1}}, KVec(2.0), {KVec(1.0)})) < 1e-14);
  CHECK(std::abs(interaction_phase(shg, 1, +1, {{1, +1}, {1, -1}}, KVec(1.0), {KVec(2.0)})) < 1e-14);
  // Counterpropagating pair k* = +-1: (+, k1) (+, k2) (-, k2) lands on k1.
  CHECK(std::abs(interaction_phase(sq, 1, +1, {{1, +1}, {1, +1}, {1, -1}}, KVec(1.0), {KVec(1.0), KVec(-1.0)})) <
        1e-14);
  auto gen = quad(1.0);
  CHECK(std::abs(interaction_phase(gen, 1, +1, {{1, +1}, {1, +1}}, KVec(2.0), {KVec(1.0)})) > 0.5);
  expect_code([&] { interaction_phase(sq, 1, +1, {{1, +1}}, KVec(1.0), {KVec(1.0)}); }, {ErrorCode::InvalidArgument});
}

TEST_CASE("fast slow transform") {
  std::mt19937_64 rng(11);
  Grid g(1, 64, 3.0);
  auto model = quad(1.0);
  ModalField u = random_field(g, 2, rng);
  ModalField same = fast_slow_transform(u, model, 0.1, 0.0, Direction::SlowToFast);
  CHECK(l1_distance(same, u) == 0.0);
  ModalField f = fast_slow_transform(u, model, 0.05, 0.37, Direction::SlowToFast);
  CHECK(f.frame() == Frame::Fast);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double w = g.k_axis(i) * g.k_axis(i) + 1.0;
    CHECK(std::abs(f.at(0, i) - std::polar(1.0, -0.37 * w / 0.05) * u.at(0, i)) < 1e-12);
    CHECK(std::abs(f.at(1, i) - std::polar(1.0, 0.37 * w / 0.05) * u.at(1, i)) < 1e-12);
  }
  ModalField back = fast_slow_transform(f, model, 0.05, 0.37, Direction::FastToSlow);
  CHECK(max_rel(back, u) < 1e-12);
  expect_code([&] { fast_slow_transform(u, model, 0.05, 0.3, Direction::FastToSlow); }, {ErrorCode::InvalidArgument});

  auto two = make_model({{"preset", "twoband"}});
  ModalField v = random_field(g, two.ncomp(), rng);
  ModalField fv = fast_slow_transform(v, two, 0.1, 1.3, Direction::SlowToFast);
  CHECK(std::abs(fv.l1_norm() - v.l1_norm()) < 1e-12 * v.l1_norm());
  CHECK(max_rel(fast_slow_transform(fv, two, 0.1, 1.3, Direction::FastToSlow), v) < 1e-12);
}

TEST_CASE("zero nonlinearity keeps the slow field") {
  auto model = quad(1.0);
  Grid g(1, 256, 2.0);
  EvolutionProblem p;
  p.model = model;
  p.rho = 0.05;
  p.tau_star = 0.5;
  p.initial = build_wavepacket(packet(0.5, 0.0, 0.2, 2.0), model, g);
  SolverConfig cfg;
  cfg.record_stride = 7;
  auto traj = solve_integrated(p, cfg);
  CHECK(traj.times.front() == 0.0);
  CHECK(traj.times.back() == doctest::Approx(0.5));
  for (std::size_t s = 1; s < traj.size(); ++s) CHECK(traj.times[s] > traj.times[s - 1]);
  for (const auto& u : traj.slow) CHECK(l1_distance(u, p.initial) == 0.0);
  const std::size_t last = traj.size() - 1;
  ModalField U = traj.fast(last, model);
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double w = g.k_axis(i) * g.k_axis(i) + 1.0;
    err = std::max(err, std::abs(U.at(0, i) - std::polar(1.0, -traj.times[last] * w / p.rho) * p.initial.at(0, i)));
  }
  CHECK(err < 1e-12);
}

TEST_CASE("single mode cubic matches the phase rotation") {
  auto model = make_model({{"preset", "nls1d"}, {"a2", 0.0}, {"a0", 1.5}});
  Grid g(1, 16, 1.0);
  const std::size_t k0 = g.nearest_node(KVec(0.0));
  REQUIRE(g.k_axis(k0) == 0.0);
  const double c = std::pow(g.dk() / (2.0 * kPi), 2);
  const cplx a(3.0, 4.0);
  ModalField h(g, 2);
  h.at(0, k0) = a;
  h.at(1, k0) = std::conj(a);
  const double q = -1.0;
  // |a|^2 c q tau* of order one.
  const double tau = 1.0 / (std::norm(a) * c);
  EvolutionProblem p;
  p.model = model;
  p.nonlinearity = {Susceptibility::nls(q)};
  p.rho = 1.0;
  p.tau_star = tau;
  p.initial = h;
  SolverConfig cfg;
  cfg.substeps_per_rho = 2000.0 / tau;
  auto traj = solve_integrated(p, cfg);
  double err = 0.0;
  for (std::size_t s = 0; s < traj.size(); ++s) {
    cplx expect = a * std::polar(1.0, -q * c * std::norm(a) * traj.times[s]);
    err = std::max(err, std::abs(traj.slow[s].at(0, k0) - expect));
  }
  CHECK(err < 1e-6 * std::abs(a));
}

TEST_CASE("nls evolution matches an exponential midpoint oracle") {
  auto model = quad(1.0);
  Grid g(1, 256, 2.0);
  const double rho = 0.05;
  const double tau = 0.2;
  auto h = build_wavepacket(packet(0.5, 0.0, 0.25, 2.0, 1.5), model, g);
  EvolutionProblem p;
  p.model = model;
  p.nonlinearity = {Susceptibility::nls(-1.0)};
  p.rho = rho;
  p.tau_star = tau;
  p.initial = h;
  SolverConfig cfg;
  cfg.substeps_per_rho = 100.0;
  auto traj = solve_integrated(p, cfg);
  NlsOracle oracle{g, -1.0};
  const std::size_t steps = 1600;
  std::vector<ModalField> ref;
  ModalField cur = h;
  double t = 0.0;
  double sup = 0.0;
  const std::size_t stride = steps / 8;
  for (std::size_t s = 0; s < 8; ++s) {
    cur = exp_midpoint(model, oracle, cur, rho, t, tau / 8.0, stride);
    t += tau / 8.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < traj.size(); ++j)
      if (std::abs(traj.times[j] - t) < 1e-12) idx = j;
    REQUIRE(idx > 0);
    sup = std::max(sup, l1_distance(cur, traj.slow[idx]));
  }
  CHECK(l1_distance(traj.final_slow(), h) > 1e-3);
  CHECK(sup <= 1e-6);
}

TEST_CASE("time mesh halving converges at second order") {
  auto model = quad(1.0);
  Grid g(1, 256, 2.0);
  auto h = build_wavepacket(packet(0.5, 0.0, 0.25, 2.0, 1.5), model, g);
  EvolutionProblem p;
  p.model = model;
  p.nonlinearity = {Susceptibility::nls(-1.0)};
  p.rho = 0.05;
  p.tau_star = 0.2;
  p.initial = h;
  std::vector<ModalField> finals;
  for (double s : {10.0, 20.0, 40.0}) {
    SolverConfig cfg;
    cfg.substeps_per_rho = s;
    finals.push_back(solve_integrated(p, cfg).final_slow());
  }
  const double d1 = l1_distance(finals[0], finals[1]);
  const double d2 = l1_distance(finals[1], finals[2]);
  CHECK(d1 / d2 >= 3.0);
}

TEST_CASE("picard contraction and solution bounds") {
  auto model = quad(1.0);
  Grid g(1, 256, 2.0);
  auto h = build_wavepacket(packet(0.5, 0.0, 0.25, 2.0, 0.05), model, g);
  EvolutionProblem p;
  p.model = model;
  p.nonlinearity = {Susceptibility::nls(-1.0)};
  p.rho = 0.05;
  p.tau_star = 0.2;
  p.initial = h;
  REQUIRE(contraction_constant(p) * p.tau_star <= 0.5);
  SolverConfig cfg;
  cfg.windows = 1;
  auto traj = solve_integrated(p, cfg);
  REQUIRE(traj.history.size() == 1);
  const auto& d = traj.history[0].distances;
  REQUIRE(d.size() >= 4);
  for (std::size_t i = 2; i + 1 < d.size(); ++i)
    if (d[i] > 1e-13) CHECK(d[i + 1] <= 0.6 * d[i]);
  const double h1 = h.l1_norm();
  for (std::size_t s = 0; s < traj.size(); ++s) {
    CHECK(traj.slow[s].l1_norm() <= 2.0 * h1);
    ModalField U = traj.fast(s, model);
    double linf = 0.0;
    for (int c = 0; c < 2; ++c) {
      CVec r = to_r_space(g, U.comp(c));
      for (const auto& v : r) linf = std::max(linf, std::abs(v));
    }
    CHECK(linf <= U.l1_norm() / (2.0 * kPi) * (1.0 + 1e-12));
  }
}

TEST_CASE("observer and recording stride") {
  auto model = quad(1.0);
  Grid g(1, 64, 2.0);
  EvolutionProblem p;
  p.model = model;
  p.nonlinearity = {Susceptibility::nls(-1.0)};
  p.rho = 0.1;
  p.tau_star = 0.3;
  p.initial = build_wavepacket(packet(0.5, 0.0, 0.5, 1.0), model, g);
  SolverConfig cfg;
  cfg.record_stride = 4;
  std::vector<double> seen;
  auto traj = solve_integrated(p, cfg, [&](double t, const ModalField&) { seen.push_back(t); });
  CHECK(seen == traj.times);
  CHECK(traj.times.back() == doctest::Approx(0.3));
  SolverConfig direct = cfg;
  direct.convolution = ConvolutionMode::Direct;
  auto traj2 = solve_integrated(p, direct);
  CHECK(l1_distance(traj2.final_slow(), traj.final_slow()) <= 1e-12 * traj.final_slow().l1_norm());
  auto round = SolverConfig::from_json(direct.to_json());
  CHECK(round.convolution == ConvolutionMode::Direct);
  CHECK(round.record_stride == 4);
  expect_code([] { SolverConfig::from_json({{"record_stride", 0}}); }, {ErrorCode::InvalidArgument});
}

TEST_CASE("strong nonlinearity fails the picard iteration") {
  auto model = quad(1.0);
  Grid g(1, 64, 2.0);
  EvolutionProblem p;
  p.model = model;
  p.nonlinearity = {Susceptibility::nls(-1.0)};
  p.rho = 0.5;
  p.tau_star = 1.0;
  p.initial = build_wavepacket(packet(0.5, 0.0, 0.5, 1.0, 400.0), model, g);
  SolverConfig cfg;
  cfg.windows = 1;
  cfg.picard_max_iter = 30;
  expect_code([&] { solve_integrated(p, cfg); }, {ErrorCode::PicardDiverged, ErrorCode::PicardMaxIter});
  p.rho = 1.5;
  expect_code([&] { solve_integrated(p, cfg); }, {ErrorCode::InvalidArgument});
}

TEST_CASE("modal projection") {
  std::mt19937_64 rng(5);
  Grid g(1, 64, 3.0);
  auto model = quad(1.0);
  ModalField u = random_field(g, 2, rng);
  ModalField sum = modal_project(u, model, 1, +1) + modal_project(u, model, 1, -1);
  CHECK(l1_distance(sum, u) == 0.0);
  CHECK(modal_project(u, model, 1, -1).comp(0)[5] == 0.0);

  auto two = make_model({{"preset", "twoband"}});
  ModalField v = random_field(g, two.ncomp(), rng);
  ModalField total(g, two.ncomp());
  std::size_t zeroed = 0;
  for (int n = 1; n <= two.J(); ++n)
    for (int z : {+1, -1}) {
      std::size_t cnt = 0;
      ModalField pr = modal_project(v, two, n, z, &cnt);
      zeroed += cnt;
      CHECK(max_rel(modal_project(pr, two, n, z), pr) < 1e-12);
      total += pr;
    }
  CHECK(zeroed == 0);
  CHECK(max_rel(total, v) < 1e-12);
}
