#include "wavepax/field.hpp"

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "wavepax/errors.hpp"
#include "wavepax/kernels.hpp"

namespace wavepax {

static_assert(std::endian::native == std::endian::little, "snapshot payloads assume a little-endian host");

ModalField::ModalField(const Grid& grid, int ncomp, Frame frame)
    : grid_(grid), ncomp_(ncomp), frame_(frame), data_(grid.size() * static_cast<std::size_t>(ncomp)) {
  if (ncomp < 1) throw Error(ErrorCode::InvalidArgument, "field needs at least one component");
  set_zero();
}

void ModalField::set_zero() { std::fill(data_.begin(), data_.end(), cplx(0.0, 0.0)); }

bool ModalField::all_finite() const {
  for (const auto& v : data_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

bool ModalField::same_shape(const ModalField& o) const { return grid_ == o.grid_ && ncomp_ == o.ncomp_; }

ModalField& ModalField::operator+=(const ModalField& o) {
  if (!same_shape(o)) throw Error(ErrorCode::GridMismatch, "field shapes differ");
  kernels().axpy(data_.data(), 1.0, o.data_.data(), data_.size());
  return *this;
}

ModalField& ModalField::operator-=(const ModalField& o) {
  if (!same_shape(o)) throw Error(ErrorCode::GridMismatch, "field shapes differ");
  kernels().axpy(data_.data(), -1.0, o.data_.data(), data_.size());
  return *this;
}

ModalField& ModalField::operator*=(cplx s) {
  for (auto& v : data_) v *= s;
  return *this;
}

double ModalField::l1_norm(double a) const {
  if (ncomp_ == 0) return 0.0;
  const std::size_t n = nodes();
  if (a == 0.0) {
    std::vector<const cplx*> ptrs;
    for (int c = 0; c < ncomp_; ++c) ptrs.push_back(comp(c));
    return kernels().sum_node_norm(ptrs.data(), ncomp_, n) * grid_.weight();
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int c = 0; c < ncomp_; ++c) s += std::norm(comp(c)[i]);
    total += std::sqrt(s) * std::pow(1.0 + grid_.k(i).norm(), a);
  }
  return total * grid_.weight();
}

double ModalField::max_abs() const {
  double m = 0.0;
  for (std::size_t i = 0; i < nodes(); ++i) {
    double s = 0.0;
    for (int c = 0; c < ncomp_; ++c) s += std::norm(comp(c)[i]);
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

double l1_distance(const ModalField& a, const ModalField& b) { return (a - b).l1_norm(); }

double sup_time_norm(const std::vector<ModalField>& samples, double a) {
  double m = 0.0;
  for (const auto& f : samples) m = std::max(m, f.l1_norm(a));
  return m;
}

namespace {

// (-1)^(sum of axis indices) for a flat node index.
inline double parity(const Grid& g, std::size_t idx) {
  std::size_t s = g.d() == 1 ? idx : idx / g.n() + idx % g.n();
  return (s & 1u) ? -1.0 : 1.0;
}

CVec transform(const Grid& grid, const cplx* in, int sign, double scale) {
  const std::size_t N = grid.size();
  const double half = ((grid.n() / 2) & 1u) && grid.d() == 1 ? -1.0 : 1.0;
  CVec buf(N);
  for (std::size_t i = 0; i < N; ++i) buf[i] = parity(grid, i) * in[i];
  fft_inplace(grid.d(), grid.n(), sign, buf.data());
  for (std::size_t i = 0; i < N; ++i) buf[i] *= scale * half * parity(grid, i);
  return buf;
}

}  // namespace

CVec to_r_space(const Grid& grid, const cplx* khat) {
  const double f = grid.dk() / (2.0 * std::numbers::pi);
  return transform(grid, khat, +1, grid.d() == 1 ? f : f * f);
}

CVec to_k_space(const Grid& grid, const cplx* u) {
  const double f = grid.dr();
  return transform(grid, u, -1, grid.d() == 1 ? f : f * f);
}

void write_snapshot(const std::filesystem::path& path, const ModalField& f, bool single_precision,
                    const nlohmann::json& meta) {
  nlohmann::json header;
  header["grid"] = f.grid().to_json();
  header["ncomp"] = f.ncomp();
  header["frame"] = f.frame() == Frame::Slow ? "slow" : "fast";
  header["precision"] = single_precision ? "complex64" : "complex128";
  header["layout"] = "components-major";
  header["meta"] = meta;
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write("WPXS", 4);
  const std::uint32_t len = static_cast<std::uint32_t>(h.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  if (single_precision) {
    std::vector<std::complex<float>> tmp(f.data().begin(), f.data().end());
    out.write(reinterpret_cast<const char*>(tmp.data()),
              static_cast<std::streamsize>(tmp.size() * sizeof(std::complex<float>)));
  } else {
    out.write(reinterpret_cast<const char*>(f.data().data()),
              static_cast<std::streamsize>(f.data().size() * sizeof(cplx)));
  }
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

ModalField read_snapshot(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "WPXS", 4) != 0) throw Error(ErrorCode::IoError, "not a snapshot file");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string h(len, '\0');
  in.read(h.data(), len);
  if (!in) throw Error(ErrorCode::IoError, "truncated snapshot header");
  nlohmann::json header = nlohmann::json::parse(h);
  ModalField f(Grid::from_json(header.at("grid")), header.at("ncomp").get<int>(),
               header.value("frame", "slow") == "fast" ? Frame::Fast : Frame::Slow);
  if (header.at("precision") == "complex64") {
    std::vector<std::complex<float>> tmp(f.data().size());
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * sizeof(tmp[0])));
    std::copy(tmp.begin(), tmp.end(), f.data().begin());
  } else {
    in.read(reinterpret_cast<char*>(f.data().data()),
            static_cast<std::streamsize>(f.data().size() * sizeof(cplx)));
  }
  if (!in) throw Error(ErrorCode::IoError, "truncated snapshot payload");
  if (meta) *meta = header.value("meta", nlohmann::json::object());
  return f;
}

void write_csv(const std::filesystem::path& path, const ModalField& f, bool r_space) {
  const Grid& g = f.grid();
  if (g.d() != 1) throw Error(ErrorCode::InvalidArgument, "CSV export supports 1D fields only");
  std::vector<CVec> cols;
  for (int c = 0; c < f.ncomp(); ++c) {
    if (r_space) {
      cols.push_back(to_r_space(g, f.comp(c)));
    } else {
      cols.emplace_back(f.comp(c), f.comp(c) + f.nodes());
    }
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.precision(17);
  out << (r_space ? "r" : "k");
  for (int c = 0; c < f.ncomp(); ++c) out << ",re" << c << ",im" << c;
  out << "\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << (r_space ? g.r_axis(i) : g.k_axis(i));
    for (const auto& col : cols) out << "," << col[i].real() << "," << col[i].imag();
    out << "\n";
  }
}

}  // namespace wavepax
