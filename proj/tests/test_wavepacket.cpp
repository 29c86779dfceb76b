#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include "wavepax/errors.hpp"
#include "wavepax/wavepacket.hpp"

using namespace wavepax;

namespace {

constexpr double kPi = std::numbers::pi;

DispersionModel nls() { return make_model({{"preset", "nls1d"}, {"a2", 1.0}, {"a0", 1.0}}); }

WavepacketSpec gaussian_packet(double beta, double r_star, double width = 8.0) {
  WavepacketSpec s;
  s.n = 1;
  s.k_star = KVec(1.0);
  s.r_star = KVec(r_star);
  s.beta = beta;
  s.epsilon = 0.1;
  s.envelope.family = EnvelopeFamily::Gaussian;
  s.envelope.width = width;
  s.envelope.amplitude = 1.0;
  return s;
}

double ref_cutoff(double eta) {
  double a = std::abs(eta);
  if (a <= 0.5) return 1.0;
  if (a >= 1.0) return 0.0;
  double x = 2.0 * (1.0 - a);
  double f = std::exp(-1.0 / x);
  double g = std::exp(-1.0 / (1.0 - x));
  return f / (f + g);
}

template <class F>
void expect_code(F&& f, ErrorCode code) {
  try {
    f();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_CASE("cutoff profile") {
  CHECK(cutoff_profile(0.0) == 1.0);
  CHECK(cutoff_profile(0.5) == 1.0);
  CHECK(cutoff_profile(-0.3) == 1.0);
  CHECK(cutoff_profile(1.0) == 0.0);
  CHECK(cutoff_profile(1.7) == 0.0);
  CHECK(cutoff_profile(0.75) == doctest::Approx(0.5).epsilon(1e-14));
  double prev = 1.0;
  for (double e = 0.5; e <= 1.0; e += 0.01) {
    double v = cutoff_profile(e);
    CHECK(v == doctest::Approx(ref_cutoff(e)).epsilon(1e-14));
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
  Grid coarse(1, 64, 4.0);
  expect_code([&] { build_cutoff(coarse, KVec(1.0), 0.2); }, ErrorCode::RadiusUnresolvable);
}

TEST_CASE("wide cutoff is identity on the narrow support") {
  Grid g(1, 4096, 4.0);
  const double R = 0.3;
  auto narrow = build_cutoff(g, KVec(1.0), R);
  auto wide = build_wide_cutoff(g, KVec(1.0), R);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(wide[i] * narrow[i] == narrow[i]);
}

TEST_CASE("envelope transforms") {
  Envelope e;
  e.width = 2.0;
  e.amplitude = 1.5;
  CHECK(e.hat(KVec(0.0), 1) == doctest::Approx(1.5 * std::sqrt(2.0 * kPi) * 2.0));
  CHECK(e.hat(KVec(0.0, 0.0), 2) == doctest::Approx(1.5 * 2.0 * kPi * 4.0));
  CHECK(e.value(KVec(2.0), 1) == doctest::Approx(1.5 * std::exp(-0.5)));
  e.family = EnvelopeFamily::Sech;
  // Direct quadrature of the Fourier integral at eta = 0.4.
  double acc = 0.0;
  const double h = 1e-3;
  for (double r = -80.0; r <= 80.0; r += h) acc += e.value(KVec(r), 1) * std::cos(0.4 * r) * h;
  CHECK(e.hat(KVec(0.4), 1) == doctest::Approx(acc).epsilon(1e-8));
  e.family = EnvelopeFamily::Bump;
  CHECK(e.hat(KVec(0.0), 1) == doctest::Approx(1.5));
  CHECK(e.hat(KVec(1.5), 1) == 0.0);
  expect_code([&] { e.value(KVec(0.0), 1); }, ErrorCode::InvalidArgument);
  auto round = Envelope::from_json(e.to_json());
  CHECK(round.family == EnvelopeFamily::Bump);
  CHECK(round.width == 2.0);
  expect_code([] { Envelope::from_json({{"family", "lorentz"}}); }, ErrorCode::InvalidArgument);
}

TEST_CASE("packet L1 mass is uniform in beta") {
  auto model = nls();
  Grid g(1, 8192, 4.0);
  for (double beta : {0.2, 0.1, 0.05}) {
    auto s = gaussian_packet(beta, 0.0);
    s.minus = false;
    auto f = build_wavepacket(s, model, g);
    CHECK(f.l1_norm() == doctest::Approx(2.0 * kPi).epsilon(1e-2));
  }
}

TEST_CASE("packet in r-space is the modulated envelope") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  const double beta = 0.1;
  const double r0 = 150.0;
  auto s = gaussian_packet(beta, r0);
  s.minus = false;
  auto f = build_wavepacket(s, model, g);
  CVec u = to_r_space(g, f.comp(0));
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double x = g.r_axis(i) - r0;
    double expect = std::exp(-0.5 * beta * beta * x * x / 64.0);
    worst = std::max(worst, std::abs(std::abs(u[i]) - expect));
  }
  CHECK(worst < 1e-6);

  auto s0 = gaussian_packet(beta, 0.0);
  s0.minus = false;
  auto f0 = build_wavepacket(s0, model, g);
  double shift_err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double k = g.k_axis(i);
    shift_err = std::max(shift_err, std::abs(f.at(0, i) - std::polar(1.0, -k * r0) * f0.at(0, i)));
  }
  CHECK(shift_err < 1e-12);
}

TEST_CASE("doublet is real in r-space") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  auto f = build_wavepacket(gaussian_packet(0.1, -40.0), model, g);
  CVec up = to_r_space(g, f.comp(0));
  CVec um = to_r_space(g, f.comp(1));
  double mx = 0.0;
  double im = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    mx = std::max(mx, std::abs(up[i] + um[i]));
    im = std::max(im, std::abs((up[i] + um[i]).imag()));
  }
  CHECK(mx > 1.0);
  CHECK(im <= 1e-10 * mx);
  CHECK(conj_partner(model, 0) == 1);
  CHECK(conj_partner(model, 1) == 0);
}

TEST_CASE("built packets have zero regularity defect") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  auto s = gaussian_packet(0.1, 25.0, 2.0);
  auto f = build_wavepacket(s, model, g);
  CHECK(regularity_defect(f, s, model) <= 1e-14 * f.l1_norm());

  auto two = make_model({{"preset", "twoband"}});
  auto s2 = gaussian_packet(0.1, 0.0, 4.0);
  s2.k_star = KVec(0.7);
  auto f2 = build_wavepacket(s2, two, g);
  CHECK(f2.l1_norm() > 1.0);
  CHECK(regularity_defect(f2, s2, two) <= 1e-9 * f2.l1_norm());
}

TEST_CASE("uncut gaussian defect is bracketed by its tails") {
  auto model = nls();
  Grid g(1, 8192, 4.0);
  const double beta = 0.1;
  const double w = 2.0;
  auto s = gaussian_packet(beta, 0.0, w);
  s.minus = false;
  ModalField f(g, model.ncomp());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double q = (g.k_axis(i) - 1.0) / beta;
    f.at(0, i) = std::sqrt(2.0 * kPi) * w * std::exp(-0.5 * w * w * q * q) / beta;
  }
  const double c = std::pow(beta, -s.epsilon);
  const double upper = 2.0 * kPi * std::erfc(w * c / std::sqrt(2.0));
  const double lower = 2.0 * kPi * std::erfc(2.0 * w * c / std::sqrt(2.0));
  double defect = regularity_defect(f, s, model);
  CHECK(defect <= upper * 1.001);
  CHECK(defect >= lower * 0.999);
}

TEST_CASE("position detection") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  const double beta = 0.1;
  const double w = 8.0;
  const double r0 = 60.0;
  auto s = gaussian_packet(beta, r0, w);
  s.minus = false;
  auto f = build_wavepacket(s, model, g);
  const double grad_l1 = 2.0 * std::sqrt(2.0 * kPi) * w;
  double discrete = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double q = (g.k_axis(i) - 1.0) / beta;
    discrete += std::sqrt(2.0 * kPi) * w * w * w * std::abs(q) * std::exp(-0.5 * w * w * q * q) / (beta * beta);
  }
  discrete *= g.dk();
  CHECK(position_detection(f, KVec(r0)) == doctest::Approx(discrete).epsilon(1e-6));
  CHECK(position_detection(f, KVec(r0)) == doctest::Approx(grad_l1 / beta).epsilon(5e-3));

  const double mass = f.l1_norm();
  for (double far : {200.0, -300.0, 900.0}) {
    double a = position_detection(f, KVec(far));
    CHECK(a >= std::abs(far - r0) * mass - grad_l1 / beta);
    CHECK(a <= std::abs(far - r0) * mass + grad_l1 / beta + 1e-9);
  }
  ModalField zero(g, model.ncomp());
  CHECK(position_detection(zero, KVec(3.0)) == 0.0);
}

TEST_CASE("locate position of a single packet") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  const double beta = 0.1;
  const double eps = 0.1;
  const double r0 = 12.0 / 0.01;
  auto s = gaussian_packet(beta, r0);
  s.minus = false;
  auto f = build_wavepacket(s, model, g);
  const double thr = 6.0 * std::pow(beta, -1.0 - eps) * f.l1_norm();
  auto est = locate_position(f, thr, {KVec(1000.0), KVec(500.0)}, 5.0);
  CHECK(std::abs(est.r_hat[0] - r0) <= 2.0 / beta);
  CHECK(est.components == 1);
  CHECK(est.diameter <= 10.0 * std::pow(beta, -1.0 - eps));
  CHECK(est.sublevel_points > 0);
  expect_code([&] { locate_position(f, 1e-3, {KVec(1000.0), KVec(500.0)}, 5.0); }, ErrorCode::EmptySublevelSet);
}

TEST_CASE("symmetric doublet sits at the origin") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  auto s = gaussian_packet(0.1, 0.0);
  auto f = build_wavepacket(s, model, g);
  auto est = locate_position(f, 1e12, {KVec(0.0), KVec(200.0)}, 4.0);
  CHECK(std::abs(est.r_hat[0]) < 1e-3);
}

TEST_CASE("two separated packets are not particle-like") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  const double beta = 0.1;
  const double eps = 0.1;
  auto a = gaussian_packet(beta, -300.0);
  auto b = gaussian_packet(beta, 300.0);
  a.minus = b.minus = false;
  auto f = build_multi_wavepacket({a, b}, model, g);
  const double thr = 6.0 * std::pow(beta, -1.0 - eps) * f.l1_norm();
  bool flagged = false;
  try {
    auto est = locate_position(f, thr, {KVec(0.0), KVec(800.0)}, 5.0);
    flagged = est.components > 1 || est.diameter > 10.0 * std::pow(beta, -1.0 - eps);
  } catch (const Error& e) {
    flagged = e.code() == ErrorCode::EmptySublevelSet;
  }
  CHECK(flagged);
}

TEST_CASE("particle norm") {
  auto model = nls();
  Grid g(1, 4096, 4.0);
  const double beta = 0.1;
  const double eps = 0.1;
  auto s = gaussian_packet(beta, 80.0);
  s.minus = false;
  auto f = build_wavepacket(s, model, g);
  const double wgt = std::pow(beta, 1.0 + eps);
  double n0 = particle_norm({f}, {KVec(80.0)}, beta, eps);
  CHECK(n0 == doctest::Approx(wgt * position_detection(f, KVec(80.0)) + f.l1_norm()));
  CHECK(particle_norm({f}, {KVec(130.0)}, beta, eps) > n0);
  ModalField f2 = f;
  f2 *= 2.0;
  CHECK(particle_norm({f2}, {KVec(80.0)}, beta, eps) == doctest::Approx(2.0 * n0));
  CHECK(particle_norm({f, f}, {KVec(80.0), KVec(80.0)}, beta, eps) == doctest::Approx(2.0 * n0));
  expect_code([&] { particle_norm({f}, {}, beta, eps); }, ErrorCode::InvalidArgument);
}

TEST_CASE("weighted norm of a gaussian packet") {
  auto model = nls();
  Grid g(1, 8192, 4.0);
  const double beta = 0.1;
  const double w = 8.0;
  auto s = gaussian_packet(beta, 0.0, w);
  s.minus = false;
  auto f = build_wavepacket(s, model, g);
  const double sk = beta / w;
  CHECK(f.l1_norm(2.0) == doctest::Approx(2.0 * kPi * (4.0 + sk * sk)).epsilon(1e-3));
}

TEST_CASE("rejects unresolvable specs") {
  auto model = nls();
  Grid coarse(1, 128, 4.0);
  expect_code([&] { build_wavepacket(gaussian_packet(0.1, 0.0), model, coarse); }, ErrorCode::RadiusUnresolvable);
  Grid mid(1, 2048, 4.0);
  expect_code([&] { build_wavepacket(gaussian_packet(0.05, 0.0, 20.0), model, mid); },
              ErrorCode::EnvelopeUnderresolved);
  auto bad = gaussian_packet(1.5, 0.0);
  expect_code([&] { build_wavepacket(bad, model, mid); }, ErrorCode::InvalidArgument);
  auto spec = gaussian_packet(0.1, 3.0);
  auto round = WavepacketSpec::from_json(spec.to_json(1), 1);
  CHECK(round.r_star[0] == 3.0);
  CHECK(round.envelope.width == 8.0);
}

TEST_CASE("fourier round trip and snapshot io") {
  auto model = nls();
  Grid g(1, 1024, 4.0);
  auto f = build_wavepacket(gaussian_packet(0.2, 5.0, 2.0), model, g);
  CVec u = to_r_space(g, f.comp(0));
  CVec back = to_k_space(g, u.data());
  double err = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(back[i] - f.at(0, i)));
  CHECK(err <= 1e-12 * f.max_abs());

  Grid g2(2, 64, 3.0);
  ModalField h(g2, 2);
  for (std::size_t i = 0; i < g2.size(); ++i) h.at(1, i) = std::exp(-g2.k(i).dot(g2.k(i)));
  CVec u2 = to_r_space(g2, h.comp(1));
  CVec b2 = to_k_space(g2, u2.data());
  double err2 = 0.0;
  for (std::size_t i = 0; i < g2.size(); ++i) err2 = std::max(err2, std::abs(b2[i] - h.at(1, i)));
  CHECK(err2 <= 1e-12);

  auto dir = std::filesystem::temp_directory_path() / "wavepax_test_snap";
  std::filesystem::create_directories(dir);
  write_snapshot(dir / "d.wpx", f, false, {{"t", 0.5}});
  nlohmann::json meta;
  auto rd = read_snapshot(dir / "d.wpx", &meta);
  CHECK(meta["t"] == 0.5);
  CHECK(rd.grid() == g);
  CHECK(l1_distance(rd, f) == 0.0);
  write_snapshot(dir / "s.wpx", f, true);
  auto rs = read_snapshot(dir / "s.wpx");
  CHECK(l1_distance(rs, f) <= 1e-6 * f.l1_norm());
  write_csv(dir / "f.csv", f, true);
  std::ifstream in(dir / "f.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == g.size() + 1);
  expect_code([&] { read_snapshot(dir / "f.csv"); }, ErrorCode::IoError);
  std::filesystem::remove_all(dir);
}
