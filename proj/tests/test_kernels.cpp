#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "wavepax/kernels.hpp"

using wavepax::cplx;
using wavepax::KernelTable;

namespace {

std::vector<cplx> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<cplx> v(n);
  for (auto& x : v) x = {g(rng), g(rng)};
  return v;
}

std::vector<const KernelTable*> variants() {
  std::vector<const KernelTable*> out;
  if (auto* t = wavepax::avx2_kernels()) out.push_back(t);
  if (auto* t = wavepax::neon_kernels()) out.push_back(t);
  return out;
}

double max_diff(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("dispatch picks a table") {
  const KernelTable& k = wavepax::kernels();
  CHECK(k.name != nullptr);
  MESSAGE("active kernels: " << k.name);
}

TEST_CASE("vector variants agree with scalar reference") {
  const KernelTable& ref = wavepax::scalar_kernels();
  std::mt19937_64 rng(42);
  for (const KernelTable* var : variants()) {
    CAPTURE(var->name);
    // Odd lengths exercise the scalar tails.
    for (std::size_t n : {1u, 3u, 7u, 64u, 1001u}) {
      CAPTURE(n);
      std::vector<std::vector<cplx>> comps;
      for (int c = 0; c < 4; ++c) comps.push_back(random_vec(n, rng));
      const cplx* ptrs[4] = {comps[0].data(), comps[1].data(), comps[2].data(), comps[3].data()};

      for (int nc = 1; nc <= 4; ++nc) {
        double a = ref.sum_node_norm(ptrs, nc, n);
        double b = var->sum_node_norm(ptrs, nc, n);
        CHECK(std::abs(a - b) <= 1e-13 * a);
      }

      for (int m = 1; m <= 4; ++m) {
        auto acc_a = random_vec(n, rng);
        auto acc_b = acc_a;
        cplx coef(0.3, -1.7);
        ref.mul_acc(acc_a.data(), coef, ptrs, m, n);
        var->mul_acc(acc_b.data(), coef, ptrs, m, n);
        CHECK(max_diff(acc_a, acc_b) <= 1e-13);
      }

      auto v_a = comps[0];
      auto v_b = comps[0];
      ref.cmul_inplace(v_a.data(), comps[1].data(), n);
      var->cmul_inplace(v_b.data(), comps[1].data(), n);
      CHECK(max_diff(v_a, v_b) <= 1e-14);

      auto y_a = comps[2];
      auto y_b = comps[2];
      ref.axpy(y_a.data(), -0.75, comps[3].data(), n);
      var->axpy(y_b.data(), -0.75, comps[3].data(), n);
      CHECK(max_diff(y_a, y_b) <= 1e-14);
    }
  }
}

TEST_CASE("scalar kernels match the defining formulas") {
  const KernelTable& ref = wavepax::scalar_kernels();
  std::vector<cplx> a{{3.0, 4.0}, {0.0, 0.0}};
  std::vector<cplx> b{{0.0, 0.0}, {1.0, 0.0}};
  const cplx* p[2] = {a.data(), b.data()};
  CHECK(ref.sum_node_norm(p, 2, 2) == doctest::Approx(6.0));

  std::vector<cplx> acc{{1.0, 0.0}, {0.0, 0.0}};
  ref.mul_acc(acc.data(), cplx(0.0, 1.0), p, 2, 2);
  CHECK(acc[0] == cplx(1.0, 0.0));
  CHECK(acc[1] == cplx(0.0, 0.0));
}
