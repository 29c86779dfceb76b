#pragma once

#include <cstddef>
#include <numbers>

#include <nlohmann/json.hpp>

#include "wavepax/vec.hpp"

namespace wavepax {

// Uniform k-grid on [-K_max, K_max)^d with n nodes per dimension, and its DFT-dual r-grid.
// Node index is row-major: idx = i0 * n + i1 for d = 2.
class Grid {
 public:
  Grid() = default;
  Grid(int d, std::size_t n, double k_max);

  int d() const { return d_; }
  std::size_t n() const { return n_; }
  std::size_t size() const { return size_; }
  double k_max() const { return k_max_; }
  double dk() const { return dk_; }
  double dr() const { return std::numbers::pi / k_max_; }
  // Period of the dual r-grid.
  double r_period() const { return 2.0 * std::numbers::pi / dk_; }
  // Quadrature weight dk^d.
  double weight() const { return d_ == 1 ? dk_ : dk_ * dk_; }

  double k_axis(std::size_t i) const { return -k_max_ + static_cast<double>(i) * dk_; }
  double r_axis(std::size_t i) const {
    return (static_cast<double>(i) - static_cast<double>(n_ / 2)) * dr();
  }
  KVec k(std::size_t idx) const;
  KVec r(std::size_t idx) const;

  // Axis index of the node nearest to coordinate value, clamped to the grid.
  std::size_t nearest_axis_index(double k) const;
  std::size_t nearest_node(const KVec& k) const;

  bool operator==(const Grid& o) const {
    return d_ == o.d_ && n_ == o.n_ && k_max_ == o.k_max_;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }

  nlohmann::json to_json() const;
  static Grid from_json(const nlohmann::json& j);

 private:
  int d_ = 1;
  std::size_t n_ = 0;
  std::size_t size_ = 0;
  double k_max_ = 1.0;
  double dk_ = 0.0;
};

}  // namespace wavepax
