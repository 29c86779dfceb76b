#include "wavepax/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include <Eigen/Eigenvalues>
#include <spdlog/spdlog.h>

#include "wavepax/errors.hpp"

namespace wavepax {

namespace {

constexpr double kPi = std::numbers::pi;

double tensor_bound(int ncomp, const std::vector<TensorEntry>& entries) {
  std::vector<double> row(static_cast<std::size_t>(ncomp), 0.0);
  for (const auto& e : entries) row[static_cast<std::size_t>(e.out)] += std::abs(e.coeff);
  return row.empty() ? 0.0 : *std::max_element(row.begin(), row.end());
}

void validate_entries(int order, int ncomp, const std::vector<TensorEntry>& entries) {
  if (order < 2) throw Error(ErrorCode::InvalidArgument, "nonlinearity order must be at least 2");
  if (ncomp < 1) throw Error(ErrorCode::InvalidArgument, "component count must be positive");
  for (const auto& e : entries) {
    if (e.out < 0 || e.out >= ncomp) throw Error(ErrorCode::InvalidArgument, "tensor output index out of range");
    if (static_cast<int>(e.in.size()) != order)
      throw Error(ErrorCode::InvalidArgument, "tensor entry arity differs from the order");
    for (int c : e.in)
      if (c < 0 || c >= ncomp) throw Error(ErrorCode::InvalidArgument, "tensor input index out of range");
  }
}

}  // namespace

Susceptibility Susceptibility::constant(int order, int ncomp, std::vector<TensorEntry> entries) {
  validate_entries(order, ncomp, entries);
  Susceptibility s;
  s.order_ = order;
  s.ncomp_ = ncomp;
  s.entries_ = std::move(entries);
  s.c_chi_ = tensor_bound(ncomp, s.entries_);
  return s;
}

Susceptibility Susceptibility::callback(int order, int ncomp, std::vector<TensorEntry> pattern, SusceptibilityFn fn,
                                       double c_chi) {
  validate_entries(order, ncomp, pattern);
  if (!fn) throw Error(ErrorCode::InvalidArgument, "callback susceptibility needs a function");
  if (!(c_chi >= 0.0) || !std::isfinite(c_chi)) throw Error(ErrorCode::InvalidArgument, "c_chi must be finite");
  Susceptibility s;
  s.order_ = order;
  s.ncomp_ = ncomp;
  s.entries_ = std::move(pattern);
  s.fn_ = std::move(fn);
  s.c_chi_ = c_chi;
  return s;
}

Susceptibility Susceptibility::nls(double q) {
  const cplx i(0.0, 1.0);
  return constant(3, 2, {{0, {1, 0, 0}, -i * q}, {1, {0, 1, 1}, i * q}});
}

Susceptibility Susceptibility::real_power(int order, int ncomp, double alpha) {
  const cplx i(0.0, 1.0);
  std::vector<TensorEntry> entries;
  std::vector<int> in(static_cast<std::size_t>(order), 0);
  PowerForm pf;
  for (int out = 0; out < ncomp; ++out) {
    const cplx coeff = (out % 2 == 0 ? 1.0 : -1.0) * i * alpha;
    pf.out_coeff.push_back(coeff);
    std::fill(in.begin(), in.end(), 0);
    while (true) {
      entries.push_back({out, in, coeff});
      int pos = order - 1;
      while (pos >= 0 && ++in[static_cast<std::size_t>(pos)] == ncomp) in[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
    }
  }
  pf.in_weight.assign(static_cast<std::size_t>(ncomp), 1.0);
  Susceptibility s = constant(order, ncomp, std::move(entries));
  s.power_ = std::move(pf);
  return s;
}

nlohmann::json Susceptibility::to_json() const {
  nlohmann::json ents = nlohmann::json::array();
  for (const auto& e : entries_)
    ents.push_back({{"out", e.out}, {"in", e.in}, {"re", e.coeff.real()}, {"im", e.coeff.imag()}});
  return {{"order", order_}, {"ncomp", ncomp_}, {"c_chi", c_chi_}, {"callback", is_callback()}, {"entries", ents}};
}

std::vector<Susceptibility> make_nonlinearity(const nlohmann::json& spec, int ncomp) {
  std::vector<Susceptibility> out;
  if (spec.is_null()) return out;
  if (spec.is_array()) {
    for (const auto& s : spec) {
      auto part = make_nonlinearity(s, ncomp);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }
  const std::string preset = spec.value("preset", std::string("none"));
  if (preset == "none") return out;
  if (preset == "nls") {
    if (ncomp != 2) throw Error(ErrorCode::InvalidArgument, "nls nonlinearity needs a single band pair");
    out.push_back(Susceptibility::nls(spec.value("q", -1.0)));
  } else if (preset == "real_power") {
    out.push_back(Susceptibility::real_power(spec.value("order", 3), ncomp, spec.value("alpha", 1.0)));
  } else if (preset == "tensor") {
    std::vector<TensorEntry> entries;
    for (const auto& e : spec.at("entries"))
      entries.push_back({e.at("out").get<int>(), e.at("in").get<std::vector<int>>(),
                         cplx(e.value("re", 0.0), e.value("im", 0.0))});
    out.push_back(Susceptibility::constant(spec.at("order").get<int>(), ncomp, std::move(entries)));
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown nonlinearity preset '" + preset + "'");
  }
  return out;
}

namespace {

void check_slots(const std::vector<const ModalField*>& slots, const Susceptibility& chi) {
  if (static_cast<int>(slots.size()) != chi.order())
    throw Error(ErrorCode::InvalidArgument, "one field per argument slot is required");
  for (const auto* f : slots) {
    if (!f->same_shape(*slots[0])) throw Error(ErrorCode::GridMismatch, "argument fields differ in shape");
    if (f->ncomp() != chi.ncomp()) throw Error(ErrorCode::GridMismatch, "component count differs from chi");
  }
}

// Padded forward transform of one component: node j sits at padded index j on each axis.
CVec padded_forward(const ModalField& f, int c, std::size_t P) {
  const Grid& g = f.grid();
  const std::size_t n = g.n();
  CVec buf(g.d() == 1 ? P : P * P, cplx(0.0, 0.0));
  const cplx* src = f.comp(c);
  if (g.d() == 1) {
    std::copy(src, src + n, buf.begin());
  } else {
    for (std::size_t a = 0; a < n; ++a) std::copy(src + a * n, src + a * n + n, buf.begin() + static_cast<std::ptrdiff_t>(a * P));
  }
  fft_inplace(g.d(), P, -1, buf.data());
  return buf;
}

// Inverse transform and read the central window out[o] = c[(o + offset) mod P].
void extract(CVec& prod, ModalField& out, int c, std::size_t P, int m, double scale) {
  const Grid& g = out.grid();
  const std::size_t n = g.n();
  fft_inplace(g.d(), P, +1, prod.data());
  const std::size_t off = static_cast<std::size_t>(m - 1) * n / 2;
  cplx* dst = out.comp(c);
  if (g.d() == 1) {
    for (std::size_t o = 0; o < n; ++o) dst[o] += scale * prod[(o + off) % P];
  } else {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) dst[a * n + b] += scale * prod[((a + off) % P) * P + (b + off) % P];
  }
}

ModalField convolve_fft(const std::vector<const ModalField*>& slots, const Susceptibility& chi, int pad,
                        bool shared) {
  if (chi.is_callback())
    throw Error(ErrorCode::InvalidArgument, "k-dependent susceptibilities need the direct convolution");
  const ModalField& f0 = *slots[0];
  const Grid& g = f0.grid();
  const int m = chi.order();
  const int factor = pad > 0 ? pad : (m + 2) / 2;
  const std::size_t P = static_cast<std::size_t>(factor) * g.n();
  const std::size_t total = g.d() == 1 ? P : P * P;
  const double meas = std::pow(g.dk() / (2.0 * kPi), (m - 1) * g.d());
  const double scale = meas / static_cast<double>(total);
  ModalField out(g, chi.ncomp(), f0.frame());

  if (shared && chi.power_form()) {
    const auto& pf = *chi.power_form();
    CVec s(total, cplx(0.0, 0.0));
    for (int c = 0; c < chi.ncomp(); ++c) {
      if (pf.in_weight[static_cast<std::size_t>(c)] == 0.0) continue;
      CVec t = padded_forward(f0, c, P);
      for (std::size_t j = 0; j < total; ++j) s[j] += pf.in_weight[static_cast<std::size_t>(c)] * t[j];
    }
    CVec p(total);
    for (std::size_t j = 0; j < total; ++j) {
      cplx v = s[j];
      for (int e = 1; e < m; ++e) v *= s[j];
      p[j] = v;
    }
    for (int c = 0; c < chi.ncomp(); ++c) {
      const cplx a = pf.out_coeff[static_cast<std::size_t>(c)];
      if (a == 0.0) continue;
      CVec q(total);
      for (std::size_t j = 0; j < total; ++j) q[j] = a * p[j];
      extract(q, out, c, P, m, scale);
    }
    return out;
  }

  return convolve_terms(slots, chi, {ConvTerm{0, [&] {
                                              std::vector<int> ids(static_cast<std::size_t>(m));
                                              for (int j = 0; j < m; ++j) ids[static_cast<std::size_t>(j)] = shared ? 0 : j;
                                              return ids;
                                            }()}},
                        1, ConvolutionMode::Fft, pad)[0];
}

}  // namespace

namespace {

std::vector<int> identity_slots(int m) {
  std::vector<int> ids(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) ids[static_cast<std::size_t>(j)] = j;
  return ids;
}

}  // namespace

ModalField apply_nonlinearity(const std::vector<const ModalField*>& slots, const Susceptibility& chi,
                              ConvolutionMode mode, int pad) {
  check_slots(slots, chi);
  return convolve_terms(slots, chi, {ConvTerm{0, identity_slots(chi.order())}}, 1, mode, pad)[0];
}

ModalField apply_nonlinearity(const ModalField& u, const Susceptibility& chi, ConvolutionMode mode, int pad) {
  std::vector<const ModalField*> slots(static_cast<std::size_t>(chi.order()), &u);
  check_slots(slots, chi);
  if (mode == ConvolutionMode::Fft) return convolve_fft(slots, chi, pad, true);
  return convolve_terms({&u}, chi, {ConvTerm{0, std::vector<int>(static_cast<std::size_t>(chi.order()), 0)}}, 1,
                        mode, pad)[0];
}

namespace {

// Nonzero components of each pool field; entries reading a zero component are skipped.
std::vector<std::vector<char>> component_masks(const std::vector<const ModalField*>& pool) {
  std::vector<std::vector<char>> masks;
  for (const auto* f : pool) {
    std::vector<char> m(static_cast<std::size_t>(f->ncomp()), 0);
    for (int c = 0; c < f->ncomp(); ++c) {
      const cplx* p = f->comp(c);
      for (std::size_t i = 0; i < f->nodes() && !m[static_cast<std::size_t>(c)]; ++i) m[static_cast<std::size_t>(c)] = p[i] != 0.0;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

bool entry_live(const TensorEntry& e, const ConvTerm& t, const std::vector<std::vector<char>>& masks,
                const std::vector<int>* target_comp) {
  if (target_comp) {
    int want = (*target_comp)[static_cast<std::size_t>(t.target)];
    if (want >= 0 && e.out != want) return false;
  }
  for (std::size_t j = 0; j < e.in.size(); ++j)
    if (!masks[static_cast<std::size_t>(t.slots[j])][static_cast<std::size_t>(e.in[j])]) return false;
  return true;
}

std::vector<ModalField> terms_fft(const std::vector<const ModalField*>& pool, const Susceptibility& chi,
                                  const std::vector<ConvTerm>& terms, int ntargets, int pad,
                                  const std::vector<int>* target_comp) {
  if (chi.is_callback())
    throw Error(ErrorCode::InvalidArgument, "k-dependent susceptibilities need the direct convolution");
  const ModalField& f0 = *pool[0];
  const Grid& g = f0.grid();
  const int m = chi.order();
  const int factor = pad > 0 ? pad : (m + 2) / 2;
  const std::size_t P = static_cast<std::size_t>(factor) * g.n();
  const std::size_t total = g.d() == 1 ? P : P * P;
  const double scale = std::pow(g.dk() / (2.0 * kPi), (m - 1) * g.d()) / static_cast<double>(total);
  const auto masks = component_masks(pool);

  std::map<std::pair<int, int>, CVec> fwd;
  auto get = [&](int id, int c) -> const CVec& {
    auto key = std::make_pair(id, c);
    auto it = fwd.find(key);
    if (it == fwd.end()) it = fwd.emplace(key, padded_forward(*pool[static_cast<std::size_t>(id)], c, P)).first;
    return it->second;
  };
  // Pointwise products commute, so terms equal up to slot order share one product with summed coefficients.
  std::map<std::tuple<int, int, std::vector<std::pair<int, int>>>, cplx> merged;
  for (const auto& t : terms) {
    for (const auto& e : chi.entries()) {
      if (!entry_live(e, t, masks, target_comp)) continue;
      std::vector<std::pair<int, int>> factors;
      for (int j = 0; j < m; ++j) factors.emplace_back(t.slots[static_cast<std::size_t>(j)], e.in[static_cast<std::size_t>(j)]);
      std::sort(factors.begin(), factors.end());
      merged[std::make_tuple(t.target, e.out, std::move(factors))] += e.coeff;
    }
  }
  std::map<std::pair<int, int>, CVec> acc;
  std::vector<const CVec*> rest;
  for (const auto& [key, coeff] : merged) {
    const auto& [target, out, factors] = key;
    CVec& a = acc[std::make_pair(target, out)];
    if (a.empty()) a.assign(total, cplx(0.0, 0.0));
    if (coeff == 0.0) continue;
    const CVec& first = get(factors[0].first, factors[0].second);
    rest.clear();
    for (int j = 1; j < m; ++j) rest.push_back(&get(factors[static_cast<std::size_t>(j)].first, factors[static_cast<std::size_t>(j)].second));
    for (std::size_t j = 0; j < total; ++j) {
      cplx v = coeff * first[j];
      for (const CVec* r : rest) v *= (*r)[j];
      a[j] += v;
    }
  }
  std::vector<ModalField> out(static_cast<std::size_t>(ntargets), ModalField(g, chi.ncomp(), f0.frame()));
  for (auto& [key, buf] : acc) extract(buf, out[static_cast<std::size_t>(key.first)], key.second, P, m, scale);
  return out;
}

std::vector<ModalField> terms_direct(const std::vector<const ModalField*>& pool, const Susceptibility& chi,
                                     const std::vector<ConvTerm>& terms, int ntargets,
                                     const std::vector<int>* target_comp) {
  const ModalField& f0 = *pool[0];
  const Grid& g = f0.grid();
  const std::size_t n = g.n();
  if (n > 64) throw Error(ErrorCode::InvalidArgument, "direct convolution is limited to 64 nodes per axis");
  const int m = chi.order();
  const int d = g.d();
  const std::size_t N = g.size();
  const double meas = std::pow(g.dk() / (2.0 * kPi), (m - 1) * d);
  const auto masks = component_masks(pool);
  std::vector<ModalField> out(static_cast<std::size_t>(ntargets), ModalField(g, chi.ncomp(), f0.frame()));
  const long off = static_cast<long>(m - 1) * static_cast<long>(n) / 2;

  // Axis indices of the node tuple (j_1..j_{m-1}); j_m follows from the output index.
  std::vector<std::size_t> tuple(static_cast<std::size_t>(m - 1), 0);
  std::vector<KVec> ks(static_cast<std::size_t>(m));
  for (std::size_t o = 0; o < N; ++o) {
    const long oa = d == 1 ? static_cast<long>(o) : static_cast<long>(o / n);
    const long ob = d == 1 ? 0 : static_cast<long>(o % n);
    const KVec k = g.k(o);
    std::fill(tuple.begin(), tuple.end(), 0);
    while (true) {
      long sa = 0;
      long sb = 0;
      for (std::size_t t : tuple) {
        sa += d == 1 ? static_cast<long>(t) : static_cast<long>(t / n);
        sb += d == 1 ? 0 : static_cast<long>(t % n);
      }
      const long la = oa + off - sa;
      const long lb = d == 1 ? 0 : ob + off - sb;
      if (la >= 0 && la < static_cast<long>(n) && lb >= 0 && lb < static_cast<long>(n)) {
        const std::size_t last = d == 1 ? static_cast<std::size_t>(la)
                                         : static_cast<std::size_t>(la) * n + static_cast<std::size_t>(lb);
        if (chi.is_callback()) {
          for (int j = 0; j < m - 1; ++j) ks[static_cast<std::size_t>(j)] = g.k(tuple[static_cast<std::size_t>(j)]);
          ks[static_cast<std::size_t>(m - 1)] = g.k(last);
        }
        for (const auto& t : terms) {
          for (const auto& e : chi.entries()) {
            if (!entry_live(e, t, masks, target_comp)) continue;
            cplx v = chi.is_callback() ? chi.fn()(e.out, e.in, k, ks) : e.coeff;
            for (int j = 0; j < m - 1; ++j)
              v *= pool[static_cast<std::size_t>(t.slots[static_cast<std::size_t>(j)])]->at(
                  e.in[static_cast<std::size_t>(j)], tuple[static_cast<std::size_t>(j)]);
            v *= pool[static_cast<std::size_t>(t.slots[static_cast<std::size_t>(m - 1)])]->at(
                e.in[static_cast<std::size_t>(m - 1)], last);
            out[static_cast<std::size_t>(t.target)].at(e.out, o) += meas * v;
          }
        }
      }
      int pos = m - 2;
      while (pos >= 0 && ++tuple[static_cast<std::size_t>(pos)] == N) tuple[static_cast<std::size_t>(pos--)] = 0;
      if (pos < 0) break;
    }
  }
  return out;
}

}  // namespace

std::vector<ModalField> convolve_terms(const std::vector<const ModalField*>& pool, const Susceptibility& chi,
                                       const std::vector<ConvTerm>& terms, int ntargets, ConvolutionMode mode,
                                       int pad, const std::vector<int>* target_comp) {
  if (pool.empty()) throw Error(ErrorCode::InvalidArgument, "empty field pool");
  for (const auto* f : pool) {
    if (!f->same_shape(*pool[0])) throw Error(ErrorCode::GridMismatch, "pool fields differ in shape");
    if (f->ncomp() != chi.ncomp()) throw Error(ErrorCode::GridMismatch, "component count differs from chi");
  }
  for (const auto& t : terms) {
    if (static_cast<int>(t.slots.size()) != chi.order())
      throw Error(ErrorCode::InvalidArgument, "term arity differs from the order");
    if (t.target < 0 || t.target >= ntargets) throw Error(ErrorCode::InvalidArgument, "term target out of range");
    for (int id : t.slots)
      if (id < 0 || id >= static_cast<int>(pool.size())) throw Error(ErrorCode::InvalidArgument, "slot out of range");
  }
  if (mode == ConvolutionMode::Direct) return terms_direct(pool, chi, terms, ntargets, target_comp);
  return terms_fft(pool, chi, terms, ntargets, pad, target_comp);
}

double interaction_phase(const DispersionModel& model, int n, int zeta, const std::vector<BandSign>& args,
                         const KVec& k, const std::vector<KVec>& ks) {
  if (args.size() != ks.size() + 1)
    throw Error(ErrorCode::InvalidArgument, "m band-signs need m - 1 explicit wavevectors");
  KVec last = k;
  double phi = model.omega(n, zeta, k);
  for (std::size_t j = 0; j < ks.size(); ++j) {
    phi -= model.omega(args[j].n, args[j].zeta, ks[j]);
    last -= ks[j];
  }
  return phi - model.omega(args.back().n, args.back().zeta, last);
}

Propagator::Propagator(const DispersionModel& model, const Grid& grid)
    : grid_(grid), ncomp_(model.ncomp()), diagonal_(model.kind() == SymbolKind::ScalarBand) {
  const std::size_t N = grid.size();
  lambda_.resize(N * static_cast<std::size_t>(ncomp_));
  if (!diagonal_) vectors_.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const KVec k = grid.k(i);
    if (diagonal_) {
      for (int n = 1; n <= model.J(); ++n)
        for (int z : {+1, -1}) {
          int c = DispersionModel::comp(n, z);
          lambda_[i * static_cast<std::size_t>(ncomp_) + static_cast<std::size_t>(c)] = model.omega_unchecked(n, z, k);
        }
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(model.symbol(k));
      vectors_[i] = es.eigenvectors();
      for (int c = 0; c < ncomp_; ++c) lambda_[i * static_cast<std::size_t>(ncomp_) + static_cast<std::size_t>(c)] = es.eigenvalues()[c];
    }
  }
  for (double v : lambda_) max_abs_omega_ = std::max(max_abs_omega_, std::abs(v));
}

CVec Propagator::phases(double t) const {
  if (!diagonal_) throw Error(ErrorCode::InvalidArgument, "phase vectors exist for diagonal symbols only");
  const std::size_t N = grid_.size();
  CVec out(N * static_cast<std::size_t>(ncomp_));
  for (int c = 0; c < ncomp_; ++c)
    for (std::size_t i = 0; i < N; ++i) {
      double a = -t * lambda_[i * static_cast<std::size_t>(ncomp_) + static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(c) * N + i] = cplx(std::cos(a), std::sin(a));
    }
  return out;
}

void Propagator::apply(ModalField& f, double t, int sign) const {
  if (f.grid() != grid_ || f.ncomp() != ncomp_) throw Error(ErrorCode::GridMismatch, "propagator shape differs");
  const std::size_t N = grid_.size();
  if (diagonal_) {
    for (int c = 0; c < ncomp_; ++c) {
      cplx* p = f.comp(c);
      for (std::size_t i = 0; i < N; ++i) {
        double a = sign * t * lambda_[i * static_cast<std::size_t>(ncomp_) + static_cast<std::size_t>(c)];
        p[i] *= cplx(std::cos(a), std::sin(a));
      }
    }
    return;
  }
  Eigen::VectorXcd v(ncomp_);
  Eigen::VectorXcd ph(ncomp_);
  for (std::size_t i = 0; i < N; ++i) {
    bool any = false;
    for (int c = 0; c < ncomp_; ++c) {
      v[c] = f.at(c, i);
      any = any || v[c] != 0.0;
    }
    if (!any) continue;
    for (int c = 0; c < ncomp_; ++c) {
      double a = sign * t * lambda_[i * static_cast<std::size_t>(ncomp_) + static_cast<std::size_t>(c)];
      ph[c] = cplx(std::cos(a), std::sin(a));
    }
    const Eigen::MatrixXcd& V = vectors_[i];
    Eigen::VectorXcd w = V * ph.cwiseProduct(V.adjoint() * v);
    for (int c = 0; c < ncomp_; ++c) f.at(c, i) = w[c];
  }
}

ModalField fast_slow_transform(const ModalField& field, const DispersionModel& model, double rho, double tau,
                               Direction dir) {
  if (!(rho > 0.0)) throw Error(ErrorCode::InvalidArgument, "rho must be positive");
  const Frame expect = dir == Direction::SlowToFast ? Frame::Slow : Frame::Fast;
  if (field.frame() != expect) throw Error(ErrorCode::InvalidArgument, "field frame does not match direction");
  ModalField out = field;
  Propagator(model, field.grid()).apply(out, tau / rho, dir == Direction::SlowToFast ? -1 : +1);
  out.set_frame(dir == Direction::SlowToFast ? Frame::Fast : Frame::Slow);
  return out;
}

nlohmann::json SolverConfig::to_json() const {
  return {{"picard_tol", picard_tol},
          {"picard_max_iter", picard_max_iter},
          {"substeps_per_rho", substeps_per_rho},
          {"dealias_factor", dealias_factor},
          {"convolution", convolution == ConvolutionMode::Fft ? "fft" : "direct"},
          {"record_stride", record_stride},
          {"windows", windows}};
}

SolverConfig SolverConfig::from_json(const nlohmann::json& j) {
  SolverConfig c;
  c.picard_tol = j.value("picard_tol", c.picard_tol);
  c.picard_max_iter = j.value("picard_max_iter", c.picard_max_iter);
  c.substeps_per_rho = j.value("substeps_per_rho", c.substeps_per_rho);
  c.dealias_factor = j.value("dealias_factor", c.dealias_factor);
  const std::string mode = j.value("convolution", std::string("fft"));
  if (mode == "fft") {
    c.convolution = ConvolutionMode::Fft;
  } else if (mode == "direct") {
    c.convolution = ConvolutionMode::Direct;
  } else {
    throw Error(ErrorCode::InvalidArgument, "convolution must be fft or direct");
  }
  c.record_stride = j.value("record_stride", c.record_stride);
  c.windows = j.value("windows", c.windows);
  if (!(c.picard_tol > 0.0) || c.picard_max_iter < 1 || !(c.substeps_per_rho > 0.0) || c.record_stride < 1 ||
      c.windows < 0 || c.dealias_factor < 0)
    throw Error(ErrorCode::InvalidArgument, "solver settings must be positive");
  return c;
}

ModalField Trajectory::fast(std::size_t i, const DispersionModel& model) const {
  return fast_slow_transform(slow.at(i), model, rho, times.at(i), Direction::SlowToFast);
}

int Trajectory::total_iterations() const {
  int n = 0;
  for (const auto& w : history) n += static_cast<int>(w.distances.size());
  return n;
}

SlowRhs::SlowRhs(const EvolutionProblem& problem, const SolverConfig& config)
    : problem_(problem),
      mode_(config.convolution),
      pad_(config.dealias_factor),
      prop_(problem.model, problem.initial.grid()) {}

ModalField SlowRhs::nonlinearity(const ModalField& fast) const {
  ModalField out(fast.grid(), fast.ncomp(), fast.frame());
  for (const auto& chi : problem_.nonlinearity) out += apply_nonlinearity(fast, chi, mode_, pad_);
  return out;
}

ModalField SlowRhs::operator()(double tau, const ModalField& u) const {
  ModalField f = u;
  prop_.apply(f, tau / problem_.rho, -1);
  ModalField g = nonlinearity(f);
  prop_.apply(g, tau / problem_.rho, +1);
  g.set_frame(Frame::Slow);
  return g;
}

double contraction_constant(const EvolutionProblem& problem) {
  const Grid& g = problem.initial.grid();
  const double R = problem.initial.l1_norm() / std::pow(2.0 * kPi, g.d());
  double c = 0.0;
  for (const auto& chi : problem.nonlinearity) {
    const int m = chi.order();
    c += chi.c_chi() * m * m * std::pow(4.0 * R, m - 1);
  }
  return c;
}

namespace {

constexpr std::size_t kMaxWindowPoints = 128;

}  // namespace

Trajectory solve_picard(const ModalField& initial, const SlowOperator& op, double rho, double tau_star,
                        double contraction, const SolverConfig& config, const Observer& observer) {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (0, 1]");
  if (!(tau_star > 0.0)) throw Error(ErrorCode::InvalidArgument, "tau* must be positive");
  if (contraction * tau_star >= 1.0)
    spdlog::warn("contraction heuristic C_F tau* = {:.3g} is not below 1", contraction * tau_star);

  const double h_target = std::min(tau_star / 16.0, rho / config.substeps_per_rho);
  const std::size_t M = static_cast<std::size_t>(std::ceil(tau_star / h_target - 1e-9));
  const double h = tau_star / static_cast<double>(M);
  std::size_t W = config.windows > 0 ? static_cast<std::size_t>(config.windows)
                                     : static_cast<std::size_t>(std::max(1.0, std::ceil(2.0 * contraction * tau_star)));
  W = std::max(W, (M + kMaxWindowPoints - 1) / kMaxWindowPoints);
  W = std::min(W, M);
  const double tol = config.picard_tol * std::max(1.0, initial.l1_norm());

  Trajectory traj;
  traj.rho = rho;
  traj.h_tau = h;
  ModalField start = initial;
  start.set_frame(Frame::Slow);
  auto record = [&](std::size_t i, const ModalField& u) {
    if (i % static_cast<std::size_t>(config.record_stride) != 0 && i != M) return;
    traj.times.push_back(static_cast<double>(i) * h);
    traj.slow.push_back(u);
    if (observer) observer(traj.times.back(), u);
  };
  record(0, start);

  auto tau_of = [&](std::size_t i) { return i == M ? tau_star : static_cast<double>(i) * h; };

  for (std::size_t w = 0; w < W; ++w) {
    const std::size_t i0 = M * w / W;
    const std::size_t i1 = M * (w + 1) / W;
    const std::size_t len = i1 - i0 + 1;
    PicardWindow pw;
    pw.t0 = tau_of(i0);
    pw.t1 = tau_of(i1);

    std::vector<ModalField> u(len, start);
    if (!op.eval) {
      pw.distances.push_back(0.0);
      traj.history.push_back(pw);
      for (std::size_t j = 1; j < len; ++j) record(i0 + j, u[j]);
      continue;
    }
    std::vector<double> taus(len);
    for (std::size_t j = 0; j < len; ++j) taus[j] = tau_of(i0 + j);
    if (op.prepare) op.prepare(taus);

    std::vector<ModalField> G(len);
    for (std::size_t j = 0; j < len; ++j) G[j] = op.eval(j, taus[j], u[j]);
    int growth = 0;
    double prev = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int it = 0; it < config.picard_max_iter; ++it) {
      double dist = 0.0;
      ModalField acc = start;
      for (std::size_t j = 1; j < len; ++j) {
        ModalField inc = G[j - 1] + G[j];
        inc *= 0.5 * h;
        acc += inc;
        dist = std::max(dist, l1_distance(acc, u[j]));
        u[j] = acc;
      }
      pw.distances.push_back(dist);
      if (!std::isfinite(dist)) throw Error(ErrorCode::PicardDiverged, "Picard iterate is not finite");
      if (dist <= tol) {
        converged = true;
        break;
      }
      growth = dist > prev ? growth + 1 : 0;
      if (growth >= 3)
        throw Error(ErrorCode::PicardDiverged, "Picard distance grew for 3 consecutive iterations in window " +
                                                   std::to_string(w));
      prev = dist;
      for (std::size_t j = 1; j < len; ++j) G[j] = op.eval(j, taus[j], u[j]);
    }
    traj.history.push_back(pw);
    if (!converged)
      throw Error(ErrorCode::PicardMaxIter, "Picard iteration did not reach tolerance in window " + std::to_string(w));
    for (std::size_t j = 1; j < len; ++j) record(i0 + j, u[j]);
    start = u.back();
  }
  return traj;
}

FrameCache::FrameCache(const Propagator& prop, double rho, int blocks) : prop_(prop), rho_(rho), blocks_(blocks) {}

void FrameCache::prepare(const std::vector<double>& taus) {
  phase_.clear();
  if (!prop_.diagonal()) return;
  phase_.reserve(taus.size());
  for (double t : taus) phase_.push_back(prop_.phases(t / rho_));
}

ModalField FrameCache::to_fast(std::size_t j, double tau, const ModalField& u) const {
  return shift(j, tau, u, -1);
}

ModalField FrameCache::to_slow(std::size_t j, double tau, const ModalField& f) const {
  return shift(j, tau, f, +1);
}

ModalField FrameCache::shift(std::size_t j, double tau, const ModalField& u, int sign) const {
  ModalField f = u;
  const std::size_t block = u.data().size() / static_cast<std::size_t>(blocks_);
  if (prop_.diagonal() && j < phase_.size()) {
    const CVec& ph = phase_[j];
    for (int b = 0; b < blocks_; ++b) {
      cplx* p = f.data().data() + static_cast<std::size_t>(b) * block;
      if (sign < 0) {
        for (std::size_t q = 0; q < block; ++q) p[q] *= ph[q];
      } else {
        for (std::size_t q = 0; q < block; ++q) p[q] *= std::conj(ph[q]);
      }
    }
  } else if (blocks_ == 1) {
    prop_.apply(f, tau / rho_, sign);
  } else {
    const Grid& g = u.grid();
    const int nc = prop_.ncomp();
    for (int b = 0; b < blocks_; ++b) {
      ModalField part(g, nc, u.frame());
      std::copy(u.data().begin() + static_cast<std::ptrdiff_t>(b * block),
                u.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * block), part.data().begin());
      prop_.apply(part, tau / rho_, sign);
      std::copy(part.data().begin(), part.data().end(), f.data().begin() + static_cast<std::ptrdiff_t>(b * block));
    }
  }
  f.set_frame(sign < 0 ? Frame::Fast : Frame::Slow);
  return f;
}

Trajectory solve_integrated(const EvolutionProblem& problem, const SolverConfig& config, const Observer& observer) {
  const ModalField& h0 = problem.initial;
  if (h0.ncomp() != problem.model.ncomp() || h0.grid().d() != problem.model.d())
    throw Error(ErrorCode::GridMismatch, "initial field does not match the model");
  for (const auto& chi : problem.nonlinearity)
    if (chi.ncomp() != h0.ncomp()) throw Error(ErrorCode::GridMismatch, "nonlinearity component count differs");
  if (config.convolution == ConvolutionMode::Direct && h0.grid().n() > 64)
    throw Error(ErrorCode::InvalidArgument, "direct convolution is limited to 64 nodes per axis");
  if (problem.beta > 0.0 && problem.beta * problem.beta / problem.rho > problem.c1)
    spdlog::warn("beta^2 / rho = {:.3g} exceeds {:.3g}; dispersion is not dominant", problem.beta * problem.beta / problem.rho,
                 problem.c1);

  SlowRhs rhs(problem, config);
  FrameCache frames(rhs.propagator(), problem.rho);
  SlowOperator op;
  if (!problem.nonlinearity.empty()) {
    op.prepare = [&](const std::vector<double>& taus) { frames.prepare(taus); };
    op.eval = [&](std::size_t j, double tau, const ModalField& u) {
      return frames.to_slow(j, tau, rhs.nonlinearity(frames.to_fast(j, tau, u)));
    };
  }
  return solve_picard(h0, op, problem.rho, problem.tau_star, contraction_constant(problem), config, observer);
}

ModalField modal_project(const ModalField& field, const DispersionModel& model, int n, int zeta,
                         std::size_t* zeroed) {
  if (field.ncomp() != model.ncomp()) throw Error(ErrorCode::GridMismatch, "field does not match the model");
  const Grid& g = field.grid();
  ModalField out(g, field.ncomp(), field.frame());
  std::size_t count = 0;
  if (model.kind() == SymbolKind::ScalarBand) {
    const int c = DispersionModel::comp(n, zeta);
    std::copy(field.comp(c), field.comp(c) + g.size(), out.comp(c));
  } else {
    Eigen::VectorXcd v(field.ncomp());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const KVec k = g.k(i);
      if (model.is_crossing(k)) {
        ++count;
        continue;
      }
      for (int c = 0; c < field.ncomp(); ++c) v[c] = field.at(c, i);
      Eigen::VectorXcd w = model.projector(n, zeta, k) * v;
      for (int c = 0; c < field.ncomp(); ++c) out.at(c, i) = w[c];
    }
  }
  if (zeroed) *zeroed = count;
  return out;
}

}  // namespace wavepax
