#pragma once

#include <complex>
#include <cstddef>
#include <string>

namespace wavepax {

using cplx = std::complex<double>;

// Inner-loop kernels. Every variant computes the same quantities; summation order may differ.
struct KernelTable {
  const char* name;
  // sum_p sqrt(sum_c |comps[c][p]|^2)
  double (*sum_node_norm)(const cplx* const* comps, int ncomp, std::size_t n);
  // acc[p] += coef * prod_j factors[j][p], 1 <= m <= 4
  void (*mul_acc)(cplx* acc, cplx coef, const cplx* const* factors, int m, std::size_t n);
  // v[p] *= w[p]
  void (*cmul_inplace)(cplx* v, const cplx* w, std::size_t n);
  // y[p] += a * x[p]
  void (*axpy)(cplx* y, double a, const cplx* x, std::size_t n);
};

const KernelTable& scalar_kernels();
// nullptr when the variant is not compiled in or the CPU lacks the instructions.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// Best variant for this CPU. WAVEPAX_KERNELS=scalar forces the reference kernels.
const KernelTable& kernels();

}  // namespace wavepax
