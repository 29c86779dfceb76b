#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace wavepax {

// Wavevector or position in d <= 2 dimensions. Unused trailing entries stay zero.
struct KVec {
  std::array<double, 2> c{0.0, 0.0};

  KVec() = default;
  constexpr KVec(double x, double y = 0.0) : c{x, y} {}

  double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

  KVec& operator+=(const KVec& o) {
    c[0] += o.c[0];
    c[1] += o.c[1];
    return *this;
  }
  KVec& operator-=(const KVec& o) {
    c[0] -= o.c[0];
    c[1] -= o.c[1];
    return *this;
  }
  KVec& operator*=(double s) {
    c[0] *= s;
    c[1] *= s;
    return *this;
  }
  friend KVec operator+(KVec a, const KVec& b) { return a += b; }
  friend KVec operator-(KVec a, const KVec& b) { return a -= b; }
  friend KVec operator*(double s, KVec a) { return a *= s; }
  friend KVec operator*(KVec a, double s) { return a *= s; }
  KVec operator-() const { return KVec(-c[0], -c[1]); }

  double dot(const KVec& o) const { return c[0] * o.c[0] + c[1] * o.c[1]; }
  double norm() const { return std::hypot(c[0], c[1]); }
  double norm_inf() const { return std::max(std::abs(c[0]), std::abs(c[1])); }
};

inline double dist(const KVec& a, const KVec& b) { return (a - b).norm(); }

}  // namespace wavepax
