#include "wavepax/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace wavepax {

namespace {

// Plain complex product without the NaN/Inf recovery path of operator*.
inline cplx cm(cplx a, cplx b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

double sum_node_norm_scalar(const cplx* const* comps, int ncomp, std::size_t n) {
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double s = 0.0;
    for (int c = 0; c < ncomp; ++c) s += std::norm(comps[c][p]);
    total += std::sqrt(s);
  }
  return total;
}

void mul_acc_scalar(cplx* acc, cplx coef, const cplx* const* f, int m, std::size_t n) {
  switch (m) {
    case 1:
      for (std::size_t p = 0; p < n; ++p) acc[p] += cm(coef, f[0][p]);
      break;
    case 2:
      for (std::size_t p = 0; p < n; ++p) acc[p] += cm(coef, cm(f[0][p], f[1][p]));
      break;
    case 3:
      for (std::size_t p = 0; p < n; ++p) acc[p] += cm(coef, cm(cm(f[0][p], f[1][p]), f[2][p]));
      break;
    default:
      for (std::size_t p = 0; p < n; ++p) {
        cplx t = f[0][p];
        for (int j = 1; j < m; ++j) t = cm(t, f[j][p]);
        acc[p] += cm(coef, t);
      }
  }
}

void cmul_inplace_scalar(cplx* v, const cplx* w, std::size_t n) {
  for (std::size_t p = 0; p < n; ++p) v[p] = cm(v[p], w[p]);
}

void axpy_scalar(cplx* y, double a, const cplx* x, std::size_t n) {
  for (std::size_t p = 0; p < n; ++p) y[p] += a * x[p];
}

const KernelTable kScalar{"scalar", sum_node_norm_scalar, mul_acc_scalar, cmul_inplace_scalar,
                          axpy_scalar};

const KernelTable& select() {
  const char* env = std::getenv("WAVEPAX_KERNELS");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return kScalar;
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return kScalar;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable& kernels() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace wavepax
