#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wavepax/vec.hpp"

namespace wavepax {

// One nk-pair: band index n (1-based) and principal wavevector k*.
struct NkPair {
  int n = 1;
  KVec k;
};

// Ordered list of distinct nk-pairs.
struct NkSpectrum {
  int d = 1;
  std::vector<NkPair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  // Index of the pair matching (n, k) within tol_k, or -1.
  int find(int n, const KVec& k, double tol_k) const;
  bool contains(int n, const KVec& k, double tol_k) const { return find(n, k, tol_k) >= 0; }
  double max_abs_k() const;

  // Same pairs regardless of order.
  bool same_set(const NkSpectrum& other, double tol_k) const;

  // Spectra are written as [[n, k0], ...] or [[n, k0, k1], ...].
  nlohmann::json to_json() const;
  static NkSpectrum from_json(const nlohmann::json& j, int d);
  std::string str() const;
};

}  // namespace wavepax
