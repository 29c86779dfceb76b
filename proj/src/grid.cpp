#include "wavepax/grid.hpp"

#include <cmath>

#include "wavepax/errors.hpp"

namespace wavepax {

namespace {

bool is_power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

}  // namespace

Grid::Grid(int d, std::size_t n, double k_max) : d_(d), n_(n), k_max_(k_max) {
  if (d != 1 && d != 2) throw Error(ErrorCode::InvalidArgument, "grid dimension must be 1 or 2");
  if (!is_power_of_two(n)) throw Error(ErrorCode::InvalidArgument, "node count must be a power of two");
  if (!(k_max > 0.0)) throw Error(ErrorCode::InvalidArgument, "k_max must be positive");
  dk_ = 2.0 * k_max / static_cast<double>(n);
  size_ = d == 1 ? n : n * n;
}

KVec Grid::k(std::size_t idx) const {
  if (d_ == 1) return KVec(k_axis(idx));
  return KVec(k_axis(idx / n_), k_axis(idx % n_));
}

KVec Grid::r(std::size_t idx) const {
  if (d_ == 1) return KVec(r_axis(idx));
  return KVec(r_axis(idx / n_), r_axis(idx % n_));
}

std::size_t Grid::nearest_axis_index(double k) const {
  double x = std::round((k + k_max_) / dk_);
  if (x < 0.0) x = 0.0;
  if (x > static_cast<double>(n_ - 1)) x = static_cast<double>(n_ - 1);
  return static_cast<std::size_t>(x);
}

std::size_t Grid::nearest_node(const KVec& k) const {
  if (d_ == 1) return nearest_axis_index(k[0]);
  return nearest_axis_index(k[0]) * n_ + nearest_axis_index(k[1]);
}

nlohmann::json Grid::to_json() const {
  return {{"d", d_}, {"n", n_}, {"k_max", k_max_}};
}

Grid Grid::from_json(const nlohmann::json& j) {
  return Grid(j.value("d", 1), j.at("n").get<std::size_t>(), j.at("k_max").get<double>());
}

}  // namespace wavepax
