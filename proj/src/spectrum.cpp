#include "wavepax/spectrum.hpp"

#include <cmath>
#include <sstream>

#include "wavepax/errors.hpp"

namespace wavepax {

int NkSpectrum::find(int n, const KVec& k, double tol_k) const {
  for (std::size_t l = 0; l < pairs.size(); ++l) {
    if (pairs[l].n == n && dist(pairs[l].k, k) <= tol_k) return static_cast<int>(l);
  }
  return -1;
}

double NkSpectrum::max_abs_k() const {
  double m = 0.0;
  for (const auto& p : pairs) m = std::max(m, p.k.norm());
  return m;
}

bool NkSpectrum::same_set(const NkSpectrum& other, double tol_k) const {
  for (const auto& p : pairs)
    if (!other.contains(p.n, p.k, tol_k)) return false;
  for (const auto& p : other.pairs)
    if (!contains(p.n, p.k, tol_k)) return false;
  return true;
}

nlohmann::json NkSpectrum::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json row = nlohmann::json::array({p.n});
    for (int i = 0; i < d; ++i) row.push_back(p.k[i]);
    out.push_back(row);
  }
  return out;
}

NkSpectrum NkSpectrum::from_json(const nlohmann::json& j, int d) {
  NkSpectrum s;
  s.d = d;
  for (const auto& row : j) {
    if (!row.is_array() || static_cast<int>(row.size()) != d + 1)
      throw Error(ErrorCode::InvalidArgument, "spectrum rows must be [n, k...] with d components");
    NkPair p;
    p.n = row[0].get<int>();
    for (int i = 0; i < d; ++i) p.k[i] = row[static_cast<std::size_t>(i + 1)].get<double>();
    s.pairs.push_back(p);
  }
  return s;
}

std::string NkSpectrum::str() const {
  std::ostringstream os;
  os << "{";
  for (std::size_t l = 0; l < pairs.size(); ++l) {
    if (l) os << ", ";
    os << "(" << pairs[l].n << ", ";
    if (d == 1) {
      os << pairs[l].k[0];
    } else {
      os << "[" << pairs[l].k[0] << ", " << pairs[l].k[1] << "]";
    }
    os << ")";
  }
  os << "}";
  return os.str();
}

}  // namespace wavepax
