// Compiled with -mavx2 -mfma; only entered after a runtime CPU check.
#include "wavepax/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define WAVEPAX_HAVE_AVX2 1
#include <immintrin.h>
#else
#define WAVEPAX_HAVE_AVX2 0
#endif

#include <cmath>

namespace wavepax {

#if WAVEPAX_HAVE_AVX2

namespace {

inline __m256d load2(const cplx* p) { return _mm256_loadu_pd(reinterpret_cast<const double*>(p)); }
inline void store2(cplx* p, __m256d v) { _mm256_storeu_pd(reinterpret_cast<double*>(p), v); }

// Two complex products per register.
inline __m256d cmul2(__m256d a, __m256d b) {
  __m256d b_re = _mm256_movedup_pd(b);
  __m256d b_im = _mm256_permute_pd(b, 0xF);
  __m256d a_sw = _mm256_permute_pd(a, 0x5);
  return _mm256_fmaddsub_pd(a, b_re, _mm256_mul_pd(a_sw, b_im));
}

inline cplx cm(cplx a, cplx b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

double sum_node_norm_avx2(const cplx* const* comps, int ncomp, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    for (int c = 0; c < ncomp; ++c) {
      __m256d v0 = load2(comps[c] + p);
      __m256d v1 = load2(comps[c] + p + 2);
      s0 = _mm256_fmadd_pd(v0, v0, s0);
      s1 = _mm256_fmadd_pd(v1, v1, s1);
    }
    // lanes: |z_p|^2, |z_{p+2}|^2, |z_{p+1}|^2, |z_{p+3}|^2
    acc = _mm256_add_pd(acc, _mm256_sqrt_pd(_mm256_hadd_pd(s0, s1)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; p < n; ++p) {
    double s = 0.0;
    for (int c = 0; c < ncomp; ++c) s += std::norm(comps[c][p]);
    total += std::sqrt(s);
  }
  return total;
}

void mul_acc_avx2(cplx* acc, cplx coef, const cplx* const* f, int m, std::size_t n) {
  const __m256d vc = _mm256_setr_pd(coef.real(), coef.imag(), coef.real(), coef.imag());
  std::size_t p = 0;
  for (; p + 2 <= n; p += 2) {
    __m256d t = load2(f[0] + p);
    for (int j = 1; j < m; ++j) t = cmul2(t, load2(f[j] + p));
    store2(acc + p, _mm256_add_pd(load2(acc + p), cmul2(t, vc)));
  }
  for (; p < n; ++p) {
    cplx t = f[0][p];
    for (int j = 1; j < m; ++j) t = cm(t, f[j][p]);
    acc[p] += cm(t, coef);
  }
}

void cmul_inplace_avx2(cplx* v, const cplx* w, std::size_t n) {
  std::size_t p = 0;
  for (; p + 2 <= n; p += 2) store2(v + p, cmul2(load2(v + p), load2(w + p)));
  for (; p < n; ++p) v[p] = cm(v[p], w[p]);
}

void axpy_avx2(cplx* y, double a, const cplx* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t p = 0;
  for (; p + 2 <= n; p += 2) store2(y + p, _mm256_fmadd_pd(va, load2(x + p), load2(y + p)));
  for (; p < n; ++p) y[p] += a * x[p];
}

const KernelTable kAvx2{"avx2", sum_node_norm_avx2, mul_acc_avx2, cmul_inplace_avx2, axpy_avx2};

}  // namespace

const KernelTable* avx2_kernels() {
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &kAvx2 : nullptr;
}

#else

const KernelTable* avx2_kernels() { return nullptr; }

#endif

}  // namespace wavepax
