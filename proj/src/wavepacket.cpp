#include "wavepax/wavepacket.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wavepax/errors.hpp"

namespace wavepax {

namespace {

constexpr double kPi = std::numbers::pi;

double smooth_step(double x) {
  auto f = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
  double a = f(x);
  double b = f(1.0 - x);
  return a / (a + b);
}

std::vector<double> cutoff_on_grid(const Grid& grid, const KVec& k0, double scale) {
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = cutoff_profile((grid.k(i) - k0).norm() / scale);
  return out;
}

// Eigenvector of band (n, zeta) at k with its largest entry made real positive.
Eigen::VectorXcd anchored_vector(const DispersionModel& model, int n, int zeta, const KVec& k) {
  NodeDecomposition dec = model.decompose(k);
  Eigen::VectorXcd v = dec.vectors.col(DispersionModel::comp(n, zeta));
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  return v * (std::abs(v[imax]) / v[imax]);
}

}  // namespace

double cutoff_profile(double eta) {
  double a = std::abs(eta);
  if (a <= 0.5) return 1.0;
  if (a >= 1.0) return 0.0;
  return smooth_step(2.0 * (1.0 - a));
}

std::vector<double> build_cutoff(const Grid& grid, const KVec& k0, double radius) {
  if (!(radius > 2.0 * grid.dk()))
    throw Error(ErrorCode::RadiusUnresolvable,
                "cutoff radius " + std::to_string(radius) + " is not above 2 dk = " + std::to_string(2.0 * grid.dk()));
  return cutoff_on_grid(grid, k0, radius);
}

std::vector<double> build_wide_cutoff(const Grid& grid, const KVec& k0, double radius) {
  return build_cutoff(grid, k0, 2.0 * radius);
}

double Envelope::hat(const KVec& eta, int d) const {
  switch (family) {
    case EnvelopeFamily::Gaussian: {
      double e2 = eta.dot(eta);
      double norm = 2.0 * kPi * width * width;
      return amplitude * (d == 1 ? std::sqrt(norm) : norm) * std::exp(-0.5 * width * width * e2);
    }
    case EnvelopeFamily::Sech: {
      double v = amplitude;
      for (int a = 0; a < d; ++a) v *= kPi * width / std::cosh(0.5 * kPi * width * eta[a]);
      return v;
    }
    case EnvelopeFamily::Bump: {
      double t = width * eta.norm() / 3.0;
      if (t >= 1.0) return 0.0;
      return amplitude * std::exp(1.0 - 1.0 / (1.0 - t * t));
    }
  }
  return 0.0;
}

double Envelope::value(const KVec& r, int d) const {
  switch (family) {
    case EnvelopeFamily::Gaussian:
      return amplitude * std::exp(-0.5 * r.dot(r) / (width * width));
    case EnvelopeFamily::Sech: {
      double v = amplitude;
      for (int a = 0; a < d; ++a) v /= std::cosh(r[a] / width);
      return v;
    }
    case EnvelopeFamily::Bump:
      break;
  }
  throw Error(ErrorCode::InvalidArgument, "bump envelope has no closed-form r profile");
}

nlohmann::json Envelope::to_json() const {
  const char* name = family == EnvelopeFamily::Gaussian ? "gaussian" : family == EnvelopeFamily::Sech ? "sech" : "bump";
  return {{"family", name}, {"width", width}, {"amplitude", amplitude}};
}

Envelope Envelope::from_json(const nlohmann::json& j) {
  Envelope e;
  const std::string fam = j.value("family", std::string("gaussian"));
  if (fam == "gaussian") {
    e.family = EnvelopeFamily::Gaussian;
  } else if (fam == "sech") {
    e.family = EnvelopeFamily::Sech;
  } else if (fam == "bump") {
    e.family = EnvelopeFamily::Bump;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown envelope family '" + fam + "'");
  }
  e.width = j.value("width", 1.0);
  e.amplitude = j.value("amplitude", 1.0);
  if (!(e.width > 0.0)) throw Error(ErrorCode::InvalidArgument, "envelope width must be positive");
  return e;
}

double WavepacketSpec::cutoff_radius() const { return std::pow(beta, 1.0 - epsilon); }

namespace {

KVec read_kvec(const nlohmann::json& j, int d) {
  if (j.is_number()) return KVec(j.get<double>());
  KVec k(0.0, 0.0);
  for (int a = 0; a < d; ++a) k[a] = j.at(static_cast<std::size_t>(a)).get<double>();
  return k;
}

nlohmann::json write_kvec(const KVec& k, int d) {
  if (d == 1) return k[0];
  return nlohmann::json::array({k[0], k[1]});
}

}  // namespace

nlohmann::json WavepacketSpec::to_json(int d) const {
  return {{"n", n},
          {"k_star", write_kvec(k_star, d)},
          {"r_star", write_kvec(r_star, d)},
          {"beta", beta},
          {"epsilon", epsilon},
          {"envelope", envelope.to_json()},
          {"plus", plus},
          {"minus", minus},
          {"doublet_reality", doublet_reality}};
}

WavepacketSpec WavepacketSpec::from_json(const nlohmann::json& j, int d) {
  WavepacketSpec s;
  s.n = j.value("n", 1);
  s.k_star = read_kvec(j.at("k_star"), d);
  if (j.contains("r_star")) s.r_star = read_kvec(j.at("r_star"), d);
  s.beta = j.value("beta", 0.1);
  s.epsilon = j.value("epsilon", 0.1);
  if (j.contains("envelope")) s.envelope = Envelope::from_json(j.at("envelope"));
  s.plus = j.value("plus", true);
  s.minus = j.value("minus", true);
  s.doublet_reality = j.value("doublet_reality", true);
  return s;
}

int conj_partner(const DispersionModel& model, int c) {
  if (model.kind() == SymbolKind::ScalarBand) return c ^ 1;
  return (c + model.J()) % model.ncomp();
}

ModalField build_wavepacket(const WavepacketSpec& spec, const DispersionModel& model, const Grid& grid) {
  if (grid.d() != model.d()) throw Error(ErrorCode::GridMismatch, "grid and model dimensions differ");
  if (!(spec.beta > 0.0 && spec.beta < 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must lie in (0, 1)");
  if (!(spec.epsilon > 0.0 && spec.epsilon < 1.0))
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1)");
  if (spec.n < 1 || spec.n > model.J()) throw Error(ErrorCode::InvalidArgument, "band index out of range");
  const double R = spec.cutoff_radius();
  if (R < 4.0 * grid.dk())
    throw Error(ErrorCode::RadiusUnresolvable, "cutoff radius below 4 dk; refine the grid");
  if (spec.beta / spec.envelope.width < 4.0 * grid.dk())
    throw Error(ErrorCode::EnvelopeUnderresolved, "envelope k-width below 4 dk; refine the grid");
  for (int zeta : {+1, -1})
    if (model.is_crossing(zeta * spec.k_star))
      throw Error(ErrorCode::BandCrossing, "principal wavevector is a band-crossing point");

  const int d = grid.d();
  const double scale = std::pow(spec.beta, -d);
  const int n = spec.n;
  const bool scalar_model = model.kind() == SymbolKind::ScalarBand;
  const Eigen::VectorXcd v_plus = anchored_vector(model, n, +1, spec.k_star);
  const Eigen::VectorXcd v_minus = anchored_vector(model, n, -1, -spec.k_star);

  // Scalar profile of the zeta part before projection.
  auto profile = [&](int zeta, const KVec& k) -> cplx {
    KVec q = k - zeta * spec.k_star;
    double psi = cutoff_profile(q.norm() / R);
    if (psi == 0.0) return 0.0;
    double env = spec.envelope.hat((1.0 / spec.beta) * q, d);
    double ph = -k.dot(spec.r_star);
    return psi * scale * env * cplx(std::cos(ph), std::sin(ph));
  };
  auto plus_vector = [&](const KVec& k) -> Eigen::VectorXcd {
    cplx s = profile(+1, k);
    if (s == 0.0) return Eigen::VectorXcd::Zero(model.ncomp());
    if (scalar_model) {
      Eigen::VectorXcd v = Eigen::VectorXcd::Zero(model.ncomp());
      v[DispersionModel::comp(n, +1)] = s;
      return v;
    }
    return s * (model.projector(n, +1, k) * v_plus);
  };

  ModalField out(grid, model.ncomp(), Frame::Slow);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const KVec k = grid.k(i);
    if (spec.plus) {
      Eigen::VectorXcd v = plus_vector(k);
      for (int c = 0; c < model.ncomp(); ++c) out.at(c, i) += v[c];
    }
    if (!spec.minus) continue;
    if (spec.doublet_reality) {
      // h_-(k) = C conj(h_+(-k)), C the component pairing of conj_partner.
      Eigen::VectorXcd w = plus_vector(-k);
      if (w.isZero(0.0)) continue;
      Eigen::VectorXcd v(model.ncomp());
      for (int c = 0; c < model.ncomp(); ++c) v[conj_partner(model, c)] = std::conj(w[c]);
      if (!scalar_model) v = model.projector(n, -1, k) * v;
      for (int c = 0; c < model.ncomp(); ++c) out.at(c, i) += v[c];
    } else {
      cplx s = profile(-1, k);
      if (s == 0.0) continue;
      if (scalar_model) {
        out.at(DispersionModel::comp(n, -1), i) += s;
      } else {
        Eigen::VectorXcd v = s * (model.projector(n, -1, k) * v_minus);
        for (int c = 0; c < model.ncomp(); ++c) out.at(c, i) += v[c];
      }
    }
  }
  return out;
}

ModalField build_multi_wavepacket(const std::vector<WavepacketSpec>& specs, const DispersionModel& model,
                                  const Grid& grid) {
  ModalField out(grid, model.ncomp(), Frame::Slow);
  for (const auto& s : specs) out += build_wavepacket(s, model, grid);
  return out;
}

ModalField packet_component(const ModalField& field, const DispersionModel& model, int n, int zeta,
                            const KVec& k_star, double radius, bool wide) {
  const Grid& grid = field.grid();
  const std::vector<double> psi = wide ? build_wide_cutoff(grid, zeta * k_star, radius)
                                       : build_cutoff(grid, zeta * k_star, radius);
  ModalField out(grid, field.ncomp(), field.frame());
  const int c0 = DispersionModel::comp(n, zeta);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (psi[i] == 0.0) continue;
    if (model.kind() == SymbolKind::ScalarBand) {
      out.at(c0, i) = psi[i] * field.at(c0, i);
      continue;
    }
    const KVec k = grid.k(i);
    if (model.is_crossing(k)) continue;
    Eigen::VectorXcd v(field.ncomp());
    for (int c = 0; c < field.ncomp(); ++c) v[c] = field.at(c, i);
    v = psi[i] * (model.projector(n, zeta, k) * v);
    for (int c = 0; c < field.ncomp(); ++c) out.at(c, i) = v[c];
  }
  return out;
}

double regularity_defect(const ModalField& field, const WavepacketSpec& spec, const DispersionModel& model) {
  ModalField rest = field;
  const double R = spec.cutoff_radius();
  if (spec.plus) rest -= packet_component(field, model, spec.n, +1, spec.k_star, R);
  if (spec.minus) rest -= packet_component(field, model, spec.n, -1, spec.k_star, R);
  return rest.l1_norm();
}

namespace {

// Field in r-space, cached so that each probe costs one forward transform per component and axis.
struct DetectionCache {
  const ModalField* f;
  std::vector<CVec> u;
};

DetectionCache make_cache(const ModalField& f) {
  DetectionCache c{&f, {}};
  for (int comp = 0; comp < f.ncomp(); ++comp) c.u.push_back(to_r_space(f.grid(), f.comp(comp)));
  return c;
}

// grad_k (e^{i r' k} h)(k) is the transform of -i (r - r') U(r); r - r' is wrapped to the periodic cell.
double detection_on(const DetectionCache& cache, const KVec& r) {
  const ModalField& f = *cache.f;
  const Grid& g = f.grid();
  const std::size_t N = g.size();
  const double L = g.r_period();
  std::vector<double> acc(N, 0.0);
  CVec w(N);
  for (int axis = 0; axis < g.d(); ++axis) {
    std::vector<double> y(N);
    for (std::size_t j = 0; j < N; ++j) {
      double v = g.r(j)[axis] - r[axis];
      y[j] = v - L * std::round(v / L);
    }
    for (const auto& u : cache.u) {
      for (std::size_t j = 0; j < N; ++j) w[j] = y[j] * u[j];
      CVec gk = to_k_space(g, w.data());
      for (std::size_t j = 0; j < N; ++j) acc[j] += std::norm(gk[j]);
    }
  }
  double total = 0.0;
  for (double v : acc) total += std::sqrt(v);
  return total * g.weight();
}

}  // namespace

double position_detection(const ModalField& field, const KVec& r_probe) {
  return detection_on(make_cache(field), r_probe);
}

PositionEstimate locate_position(const ModalField& field, double threshold, const SearchBox& box, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "scan step must be positive");
  const int d = field.grid().d();
  const auto cache = make_cache(field);
  auto a_of = [&](const KVec& r) { return detection_on(cache, r); };

  std::array<int, 2> cnt{1, 1};
  for (int ax = 0; ax < d; ++ax) cnt[static_cast<std::size_t>(ax)] = static_cast<int>(std::floor(2.0 * box.half_width[ax] / step)) + 1;
  auto point = [&](int i, int j) {
    KVec p = box.center - box.half_width;
    p[0] += i * step;
    if (d == 2) p[1] += j * step;
    else p[1] = 0.0;
    return p;
  };
  std::vector<double> vals(static_cast<std::size_t>(cnt[0] * cnt[1]));
  std::size_t best = 0;
  for (int i = 0; i < cnt[0]; ++i) {
    for (int j = 0; j < cnt[1]; ++j) {
      std::size_t id = static_cast<std::size_t>(i * cnt[1] + j);
      vals[id] = a_of(point(i, j));
      if (vals[id] < vals[best]) best = id;
    }
  }

  PositionEstimate est;
  est.r_hat = point(static_cast<int>(best) / cnt[1], static_cast<int>(best) % cnt[1]);
  est.a_min = vals[best];
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int sweep = 0; sweep < (d == 2 ? 2 : 1); ++sweep) {
    for (int ax = 0; ax < d; ++ax) {
      double lo = est.r_hat[ax] - step;
      double hi = est.r_hat[ax] + step;
      auto f = [&](double x) {
        KVec p = est.r_hat;
        p[ax] = x;
        return a_of(p);
      };
      double x1 = hi - g * (hi - lo);
      double x2 = lo + g * (hi - lo);
      double f1 = f(x1);
      double f2 = f(x2);
      while (hi - lo > 1e-6 * step) {
        if (f1 <= f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - g * (hi - lo);
          f1 = f(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + g * (hi - lo);
          f2 = f(x2);
        }
      }
      double x = 0.5 * (lo + hi);
      double fx = f(x);
      if (fx < est.a_min) {
        est.a_min = fx;
        est.r_hat[ax] = x;
      }
    }
  }

  std::vector<KVec> below;
  std::vector<int> label(vals.size(), -1);
  for (std::size_t id = 0; id < vals.size(); ++id)
    if (vals[id] <= threshold) below.push_back(point(static_cast<int>(id) / cnt[1], static_cast<int>(id) % cnt[1]));
  if (below.empty() && est.a_min > threshold)
    throw Error(ErrorCode::EmptySublevelSet, "no probe point has a(r) below the threshold");
  est.sublevel_points = below.size();

  // Connected components on the scan lattice (4-neighbour).
  int comps = 0;
  for (std::size_t id = 0; id < vals.size(); ++id) {
    if (vals[id] > threshold || label[id] >= 0) continue;
    std::vector<std::size_t> stack{id};
    label[id] = comps;
    while (!stack.empty()) {
      std::size_t cur = stack.back();
      stack.pop_back();
      int i = static_cast<int>(cur) / cnt[1];
      int j = static_cast<int>(cur) % cnt[1];
      const int nb[4][2] = {{i + 1, j}, {i - 1, j}, {i, j + 1}, {i, j - 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= cnt[0] || q[1] < 0 || q[1] >= cnt[1]) continue;
        std::size_t nid = static_cast<std::size_t>(q[0] * cnt[1] + q[1]);
        if (vals[nid] <= threshold && label[nid] < 0) {
          label[nid] = comps;
          stack.push_back(nid);
        }
      }
    }
    ++comps;
  }
  est.components = std::max(comps, 1);

  double diam = 0.0;
  if (d == 1) {
    double lo = est.r_hat[0];
    double hi = est.r_hat[0];
    for (const auto& p : below) {
      lo = std::min(lo, p[0]);
      hi = std::max(hi, p[0]);
    }
    diam = hi - lo;
  } else {
    for (std::size_t a = 0; a < below.size(); ++a)
      for (std::size_t b = a + 1; b < below.size(); ++b) diam = std::max(diam, dist(below[a], below[b]));
  }
  est.diameter = diam;
  return est;
}

double particle_norm(const std::vector<ModalField>& parts, const std::vector<KVec>& positions, double beta,
                     double epsilon) {
  if (parts.size() != positions.size())
    throw Error(ErrorCode::InvalidArgument, "one position per packet component is required");
  const double w = std::pow(beta, 1.0 + epsilon);
  double total = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i)
    total += w * position_detection(parts[i], positions[i]) + parts[i].l1_norm();
  return total;
}

}  // namespace wavepax
