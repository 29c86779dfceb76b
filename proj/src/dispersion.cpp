#include "wavepax/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "wavepax/errors.hpp"

namespace wavepax {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Signed ordering margins: consecutive band differences on each side, then omega_{1,+} and -omega_{1,-}.
// All are >= 0 exactly when the ordering holds.
std::vector<double> ordering_margins(const Eigen::VectorXd& w, int J) {
  std::vector<double> q;
  q.reserve(static_cast<std::size_t>(2 * J));
  for (int n = 1; n < J; ++n) {
    q.push_back(w[DispersionModel::comp(n + 1, +1)] - w[DispersionModel::comp(n, +1)]);
    q.push_back(w[DispersionModel::comp(n, -1)] - w[DispersionModel::comp(n + 1, -1)]);
  }
  q.push_back(w[DispersionModel::comp(1, +1)]);
  q.push_back(-w[DispersionModel::comp(1, -1)]);
  return q;
}

double min_of(const std::vector<double>& q) {
  double m = kInf;
  for (double v : q) m = std::min(m, v);
  return m;
}

KVec axis_step(int axis, double h) { return axis == 0 ? KVec(h, 0.0) : KVec(0.0, h); }

// Golden-section minimum of f on [a, b].
template <class F>
std::pair<double, double> golden_min(F f, double a, double b, int iters) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a);
  double x2 = a + g * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  for (int it = 0; it < iters; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? std::make_pair(x1, f1) : std::make_pair(x2, f2);
}

}  // namespace

DispersionModel DispersionModel::scalar(int d, std::vector<ScalarBand> bands, std::string name) {
  if (d != 1 && d != 2) throw Error(ErrorCode::InvalidArgument, "dimension must be 1 or 2");
  if (bands.empty()) throw Error(ErrorCode::InvalidArgument, "at least one band is required");
  for (const auto& b : bands)
    if (!b.omega) throw Error(ErrorCode::InvalidArgument, "band without omega");
  DispersionModel m;
  m.d_ = d;
  m.J_ = static_cast<int>(bands.size());
  m.kind_ = SymbolKind::ScalarBand;
  m.name_ = std::move(name);
  m.bands_ = std::move(bands);
  return m;
}

DispersionModel DispersionModel::matrix(int d, int J, SymbolFn symbol, std::string name) {
  if (d != 1 && d != 2) throw Error(ErrorCode::InvalidArgument, "dimension must be 1 or 2");
  if (J < 1 || !symbol) throw Error(ErrorCode::InvalidArgument, "matrix symbol needs J >= 1 and a callback");
  DispersionModel m;
  m.d_ = d;
  m.J_ = J;
  m.kind_ = SymbolKind::MatrixSymbol;
  m.name_ = std::move(name);
  m.symbol_ = std::move(symbol);
  return m;
}

DispersionModel DispersionModel::calibrated(const Grid& grid) const {
  if (grid.d() != d_) throw Error(ErrorCode::GridMismatch, "grid and model dimensions differ");
  double wmax = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    NodeDecomposition dec = decompose(grid.k(i));
    if (!dec.ok) continue;
    wmax = std::max(wmax, dec.omega.cwiseAbs().maxCoeff());
  }
  DispersionModel out = *this;
  out.tol_.gap = 1e-8 * (1.0 + wmax);
  out.tol_.h_fd = grid.dk() * 1e-2;
  return out;
}

Eigen::MatrixXcd DispersionModel::symbol(const KVec& k) const {
  if (kind_ == SymbolKind::MatrixSymbol) return symbol_(k);
  Eigen::MatrixXcd L = Eigen::MatrixXcd::Zero(ncomp(), ncomp());
  for (int n = 1; n <= J_; ++n) {
    const auto& b = bands_[static_cast<std::size_t>(n - 1)];
    L(comp(n, +1), comp(n, +1)) = b.omega(k);
    L(comp(n, -1), comp(n, -1)) = -b.omega(-k);
  }
  return L;
}

NodeDecomposition DispersionModel::decompose(const KVec& k) const {
  NodeDecomposition dec;
  dec.gap = -kInf;
  const int nc = ncomp();
  try {
    if (kind_ == SymbolKind::ScalarBand) {
      dec.omega.resize(nc);
      for (int n = 1; n <= J_; ++n) {
        const auto& b = bands_[static_cast<std::size_t>(n - 1)];
        dec.omega[comp(n, +1)] = b.omega(k);
        dec.omega[comp(n, -1)] = -b.omega(-k);
      }
      dec.vectors = Eigen::MatrixXcd::Identity(nc, nc);
    } else {
      Eigen::MatrixXcd L = symbol_(k);
      if (L.rows() != nc || L.cols() != nc)
        throw Error(ErrorCode::InvalidArgument, "symbol has the wrong shape");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(L);
      if (es.info() != Eigen::Success) return dec;
      // Eigen sorts ascending: omega_{n,+} = ev[J+n-1], omega_{n,-} = ev[J-n].
      const Eigen::VectorXd& ev = es.eigenvalues();
      dec.omega.resize(nc);
      dec.vectors.resize(nc, nc);
      for (int n = 1; n <= J_; ++n) {
        int ip = J_ + n - 1;
        int im = J_ - n;
        dec.omega[comp(n, +1)] = ev[ip];
        dec.omega[comp(n, -1)] = ev[im];
        dec.vectors.col(comp(n, +1)) = es.eigenvectors().col(ip);
        dec.vectors.col(comp(n, -1)) = es.eigenvectors().col(im);
      }
    }
  } catch (const std::exception&) {
    return dec;
  }
  if (!dec.omega.allFinite()) return dec;
  dec.gap = min_of(ordering_margins(dec.omega, J_));
  dec.ok = true;
  return dec;
}

bool DispersionModel::is_crossing(const KVec& k) const {
  NodeDecomposition dec = decompose(k);
  return !dec.ok || dec.gap < tol_.gap;
}

void DispersionModel::check_band(int n, int zeta) const {
  if (n < 1 || n > J_ || (zeta != 1 && zeta != -1))
    throw Error(ErrorCode::InvalidArgument, "invalid band index (" + std::to_string(n) + ", " +
                                                std::to_string(zeta) + ")");
}

void DispersionModel::require_gap(const NodeDecomposition& dec, const KVec& k) const {
  if (!dec.ok || dec.gap < tol_.gap)
    throw Error(ErrorCode::BandCrossing,
                "eigen-gap " + std::to_string(dec.gap) + " at k=(" + std::to_string(k[0]) + ", " +
                    std::to_string(k[1]) + ")");
}

double DispersionModel::omega(int n, int zeta, const KVec& k) const {
  check_band(n, zeta);
  NodeDecomposition dec = decompose(k);
  require_gap(dec, k);
  return dec.omega[comp(n, zeta)];
}

double DispersionModel::omega_unchecked(int n, int zeta, const KVec& k) const {
  check_band(n, zeta);
  if (kind_ == SymbolKind::ScalarBand) {
    const auto& b = bands_[static_cast<std::size_t>(n - 1)];
    return zeta > 0 ? b.omega(k) : -b.omega(-k);
  }
  NodeDecomposition dec = decompose(k);
  if (!dec.ok) throw Error(ErrorCode::BandCrossing, "symbol evaluation failed");
  return dec.omega[comp(n, zeta)];
}

KVec DispersionModel::fd_group_velocity(int n, int zeta, const KVec& k, double h) const {
  KVec g(0.0, 0.0);
  for (int a = 0; a < d_; ++a) {
    KVec e = axis_step(a, h);
    g[a] = (omega_unchecked(n, zeta, k + e) - omega_unchecked(n, zeta, k - e)) / (2.0 * h);
  }
  return g;
}

KVec DispersionModel::group_velocity(int n, int zeta, const KVec& k) const {
  check_band(n, zeta);
  require_gap(decompose(k), k);
  if (kind_ == SymbolKind::ScalarBand) {
    const auto& b = bands_[static_cast<std::size_t>(n - 1)];
    if (b.gradient) return zeta > 0 ? b.gradient(k) : b.gradient(-k);
  }
  return fd_group_velocity(n, zeta, k, tol_.h_fd);
}

std::array<double, 3> DispersionModel::hessian(int n, int zeta, const KVec& k) const {
  check_band(n, zeta);
  require_gap(decompose(k), k);
  if (kind_ == SymbolKind::ScalarBand) {
    const auto& b = bands_[static_cast<std::size_t>(n - 1)];
    if (b.hessian) {
      if (zeta > 0) return b.hessian(k);
      auto h = b.hessian(-k);
      return {-h[0], -h[1], -h[2]};
    }
  }
  const double h = std::max(tol_.h_fd, 1e-4);
  auto f = [&](const KVec& q) { return omega_unchecked(n, zeta, q); };
  const double f0 = f(k);
  KVec ex = axis_step(0, h);
  std::array<double, 3> H{(f(k + ex) - 2.0 * f0 + f(k - ex)) / (h * h), 0.0, 0.0};
  if (d_ == 2) {
    KVec ey = axis_step(1, h);
    H[2] = (f(k + ey) - 2.0 * f0 + f(k - ey)) / (h * h);
    H[1] = (f(k + ex + ey) - f(k + ex - ey) - f(k - ex + ey) + f(k - ex - ey)) / (4.0 * h * h);
  }
  return H;
}

Eigen::MatrixXcd DispersionModel::projector(int n, int zeta, const KVec& k) const {
  check_band(n, zeta);
  NodeDecomposition dec = decompose(k);
  require_gap(dec, k);
  Eigen::VectorXcd v = dec.vectors.col(comp(n, zeta));
  return v * v.adjoint();
}

double hessian_norm(const std::array<double, 3>& h, int d) {
  if (d == 1) return std::abs(h[0]);
  double mean = 0.5 * (h[0] + h[2]);
  double rad = std::hypot(0.5 * (h[0] - h[2]), h[1]);
  return std::abs(mean) + rad;
}

BandCrossingScan detect_band_crossings(const DispersionModel& model, const Grid& grid) {
  if (grid.d() != model.d()) throw Error(ErrorCode::GridMismatch, "grid and model dimensions differ");
  const std::size_t N = grid.size();
  const std::size_t n = grid.n();
  const double tol = model.tol().gap;
  std::vector<std::vector<double>> q(N);
  std::vector<char> ok(N, 0);
  std::vector<char> flag(N, 0);
  std::vector<double> gmag(N, kInf);
  for (std::size_t i = 0; i < N; ++i) {
    NodeDecomposition dec = model.decompose(grid.k(i));
    ok[i] = dec.ok;
    if (!dec.ok) {
      flag[i] = 1;
      continue;
    }
    q[i] = ordering_margins(dec.omega, model.J());
    if (dec.gap < tol) flag[i] = 1;
    for (double v : q[i]) gmag[i] = std::min(gmag[i], std::abs(v));
  }

  BandCrossingScan scan;
  auto margin_at = [&](const KVec& k, std::size_t t) {
    NodeDecomposition dec = model.decompose(k);
    return dec.ok ? ordering_margins(dec.omega, model.J())[t] : std::nan("");
  };
  auto gap_at = [&](const KVec& k) {
    NodeDecomposition dec = model.decompose(k);
    if (!dec.ok) return 0.0;
    double g = kInf;
    for (double v : ordering_margins(dec.omega, model.J())) g = std::min(g, std::abs(v));
    return g;
  };
  auto neighbor = [&](std::size_t i, int axis, int dir, std::size_t& j) {
    std::size_t a = grid.d() == 1 ? i : (axis == 0 ? i / n : i % n);
    if ((dir < 0 && a == 0) || (dir > 0 && a + 1 >= n)) return false;
    std::size_t stride = grid.d() == 1 || axis == 1 ? 1 : n;
    j = dir > 0 ? i + stride : i - stride;
    return true;
  };

  for (std::size_t i = 0; i < N; ++i) {
    if (!ok[i]) continue;
    for (int axis = 0; axis < grid.d(); ++axis) {
      std::size_t j;
      // Sign changes of a margin between adjacent nodes: bisect for the crossing.
      if (neighbor(i, axis, +1, j) && ok[j]) {
        for (std::size_t t = 0; t < q[i].size(); ++t) {
          if (q[i][t] * q[j][t] >= 0.0) continue;
          KVec a = grid.k(i);
          KVec b = grid.k(j);
          double fa = q[i][t];
          for (int it = 0; it < 80; ++it) {
            KVec mid = 0.5 * (a + b);
            double fm = margin_at(mid, t);
            if (!std::isfinite(fm)) break;
            if ((fm < 0.0) == (fa < 0.0)) {
              a = mid;
              fa = fm;
            } else {
              b = mid;
            }
          }
          KVec root = 0.5 * (a + b);
          scan.points.push_back(root);
          flag[dist(root, grid.k(i)) <= dist(root, grid.k(j)) ? i : j] = 1;
        }
      }
      // Touching gaps without a sign change: refine around discrete local minima.
      std::size_t jm, jp;
      if (neighbor(i, axis, -1, jm) && neighbor(i, axis, +1, jp) && ok[jm] && ok[jp] &&
          gmag[i] <= gmag[jm] && gmag[i] <= gmag[jp] && !flag[i]) {
        const KVec c = grid.k(i);
        const KVec e = axis_step(axis, 1.0);
        auto [x, gmin] = golden_min([&](double s) { return gap_at(c + s * e); }, -grid.dk(), grid.dk(), 60);
        if (gmin < tol) {
          scan.points.push_back(c + x * e);
          flag[i] = 1;
        }
      }
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!flag[i]) continue;
    scan.nodes.push_back(i);
    scan.points.push_back(grid.k(i));
  }
  return scan;
}

BandNeighborhoodBounds neighborhood_bounds(const DispersionModel& model, const NkSpectrum& spectrum,
                                           const Grid& grid) {
  BandCrossingScan scan = detect_band_crossings(model, grid);
  const double tol_k = 1e-9 * (1.0 + spectrum.max_abs_k());
  double dmin = 1.0;
  for (const auto& p : spectrum.pairs) {
    for (int zeta : {+1, -1}) {
      KVec c = zeta * p.k;
      if (model.is_crossing(c))
        throw Error(ErrorCode::SpectrumOnSingularSet, "spectrum wavevector is a band-crossing point");
      for (const KVec& f : scan.points) {
        double dd = dist(c, f);
        if (dd <= tol_k)
          throw Error(ErrorCode::SpectrumOnSingularSet, "spectrum wavevector is a band-crossing point");
        dmin = std::min(dmin, dd);
      }
    }
  }
  BandNeighborhoodBounds out;
  out.pi0 = 0.5 * dmin;
  const int samples = model.d() == 1 ? 2001 : 81;
  for (const auto& p : spectrum.pairs) {
    for (int zeta : {+1, -1}) {
      KVec c = zeta * p.k;
      auto visit = [&](const KVec& k) {
        out.c_omega1 = std::max(out.c_omega1, model.group_velocity(p.n, zeta, k).norm());
        out.c_omega2 = std::max(out.c_omega2, hessian_norm(model.hessian(p.n, zeta, k), model.d()));
      };
      for (int i = 0; i < samples; ++i) {
        double s = -out.pi0 + 2.0 * out.pi0 * i / (samples - 1);
        if (model.d() == 1) {
          visit(c + KVec(s));
          continue;
        }
        for (int j = 0; j < samples; ++j) {
          double t = -out.pi0 + 2.0 * out.pi0 * j / (samples - 1);
          if (s * s + t * t <= out.pi0 * out.pi0) visit(c + KVec(s, t));
        }
      }
    }
  }
  return out;
}

namespace {

DispersionModel make_power(int d, double c, double p, double a0, const std::string& name) {
  ScalarBand b;
  b.omega = [=](const KVec& k) { return c * std::pow(k.norm(), p) + a0; };
  b.gradient = [=](const KVec& k) {
    double r = k.norm();
    if (r == 0.0) return KVec(0.0, 0.0);
    return (c * p * std::pow(r, p - 2.0)) * k;
  };
  b.hessian = [=](const KVec& k) -> std::array<double, 3> {
    double r = k.norm();
    if (r == 0.0) {
      double v = p == 2.0 ? 2.0 * c : (p > 2.0 ? 0.0 : kInf);
      return {v, 0.0, v};
    }
    double s = c * p * std::pow(r, p - 2.0);
    double u = (p - 2.0) / (r * r);
    return {s * (1.0 + u * k[0] * k[0]), s * u * k[0] * k[1], s * (1.0 + u * k[1] * k[1])};
  };
  return DispersionModel::scalar(d, {b}, name);
}

std::complex<double> read_entry(const nlohmann::json& v) {
  if (v.is_array()) return {v.at(0).get<double>(), v.at(1).get<double>()};
  return {v.get<double>(), 0.0};
}

DispersionModel make_tabulated(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open symbol table " + file.string());
  nlohmann::json j = nlohmann::json::parse(in);
  const int J = j.value("J", 1);
  const int nc = 2 * J;
  if (j.value("d", 1) != 1) throw Error(ErrorCode::InvalidArgument, "tabulated symbols are 1D only");
  auto ks = j.at("k").get<std::vector<double>>();
  const auto& mats = j.at("matrices");
  if (ks.size() < 2 || mats.size() != ks.size())
    throw Error(ErrorCode::InvalidArgument, "symbol table needs matching k and matrices arrays");
  std::vector<Eigen::MatrixXcd> table;
  for (const auto& mj : mats) {
    Eigen::MatrixXcd M(nc, nc);
    if (static_cast<int>(mj.size()) != nc) throw Error(ErrorCode::InvalidArgument, "bad matrix shape");
    for (int r = 0; r < nc; ++r) {
      if (static_cast<int>(mj[static_cast<std::size_t>(r)].size()) != nc)
        throw Error(ErrorCode::InvalidArgument, "bad matrix shape");
      for (int c = 0; c < nc; ++c)
        M(r, c) = read_entry(mj[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
    }
    if ((M - M.adjoint()).norm() > 1e-12 * (1.0 + M.norm()))
      throw Error(ErrorCode::InvalidArgument, "tabulated symbol is not Hermitian");
    table.push_back(M);
  }
  for (std::size_t i = 1; i < ks.size(); ++i)
    if (!(ks[i] > ks[i - 1])) throw Error(ErrorCode::InvalidArgument, "symbol k-grid must increase");
  SymbolFn fn = [ks, table](const KVec& k) -> Eigen::MatrixXcd {
    double x = k[0];
    if (x < ks.front() || x > ks.back())
      throw Error(ErrorCode::InvalidArgument, "k outside the tabulated range");
    auto it = std::upper_bound(ks.begin(), ks.end(), x);
    std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - ks.begin()), ks.size() - 1);
    std::size_t lo = hi - 1;
    double t = (x - ks[lo]) / (ks[hi] - ks[lo]);
    return (1.0 - t) * table[lo] + t * table[hi];
  };
  return DispersionModel::matrix(1, J, fn, "matrix:" + file.filename().string());
}

}  // namespace

DispersionModel make_model(const nlohmann::json& spec, const std::filesystem::path& base_dir) {
  const std::string preset = spec.value("preset", std::string("nls1d"));
  const int d = spec.value("d", 1);
  DispersionModel model = [&]() {
    if (preset == "nls1d") {
      const double a2 = spec.value("a2", 1.0);
      const double a0 = spec.value("a0", 0.0);
      ScalarBand b;
      b.omega = [=](const KVec& k) { return a2 * k.dot(k) + a0; };
      b.gradient = [=](const KVec& k) { return (2.0 * a2) * k; };
      b.hessian = [=](const KVec&) { return std::array<double, 3>{2.0 * a2, 0.0, 2.0 * a2}; };
      return DispersionModel::scalar(d, {b}, "nls1d");
    }
    if (preset == "power") {
      return make_power(d, spec.value("c", 1.0), spec.value("p", 2.0), spec.value("a0", 0.0), "power");
    }
    if (preset == "twoband") {
      auto a2 = spec.value("a2", std::vector<double>{1.0, 0.5});
      auto a0 = spec.value("a0", std::vector<double>{1.0, 4.0});
      const double g = spec.value("g", 0.5);
      if (a2.size() != 2 || a0.size() != 2)
        throw Error(ErrorCode::InvalidArgument, "twoband needs two a2 and two a0 coefficients");
      auto H = [=](const KVec& k) {
        Eigen::Matrix2cd h;
        double kk = k.dot(k);
        h << a2[0] * kk + a0[0], g, g, a2[1] * kk + a0[1];
        return h;
      };
      SymbolFn fn = [H](const KVec& k) -> Eigen::MatrixXcd {
        Eigen::MatrixXcd L = Eigen::MatrixXcd::Zero(4, 4);
        L.topLeftCorner(2, 2) = H(k);
        L.bottomRightCorner(2, 2) = -H(-k).conjugate();
        return L;
      };
      return DispersionModel::matrix(d, 2, fn, "twoband");
    }
    if (preset.rfind("matrix:", 0) == 0) {
      std::filesystem::path file = preset.substr(7);
      if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
      return make_tabulated(file);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown dispersion preset '" + preset + "'");
  }();
  model.set_params(spec);
  return model;
}

}  // namespace wavepax
