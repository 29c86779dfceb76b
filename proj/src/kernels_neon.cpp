#include "wavepax/kernels.hpp"

#if defined(__aarch64__) || defined(_M_ARM64)
#define WAVEPAX_HAVE_NEON 1
#include <arm_neon.h>
#else
#define WAVEPAX_HAVE_NEON 0
#endif

#include <cmath>

namespace wavepax {

#if WAVEPAX_HAVE_NEON

namespace {

inline float64x2_t load1(const cplx* p) { return vld1q_f64(reinterpret_cast<const double*>(p)); }
inline void store1(cplx* p, float64x2_t v) { vst1q_f64(reinterpret_cast<double*>(p), v); }

// One complex product per register: [ar*br - ai*bi, ai*br + ar*bi].
inline float64x2_t cmul1(float64x2_t a, float64x2_t b) {
  const float64x2_t sign = {-1.0, 1.0};
  float64x2_t a_sw = vmulq_f64(vextq_f64(a, a, 1), sign);
  float64x2_t t = vmulq_laneq_f64(a, b, 0);
  return vfmaq_laneq_f64(t, a_sw, b, 1);
}

double sum_node_norm_neon(const cplx* const* comps, int ncomp, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t p = 0;
  for (; p + 2 <= n; p += 2) {
    float64x2_t s0 = vdupq_n_f64(0.0);
    float64x2_t s1 = vdupq_n_f64(0.0);
    for (int c = 0; c < ncomp; ++c) {
      float64x2_t v0 = load1(comps[c] + p);
      float64x2_t v1 = load1(comps[c] + p + 1);
      s0 = vfmaq_f64(s0, v0, v0);
      s1 = vfmaq_f64(s1, v1, v1);
    }
    acc = vaddq_f64(acc, vsqrtq_f64(vpaddq_f64(s0, s1)));
  }
  double total = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; p < n; ++p) {
    double s = 0.0;
    for (int c = 0; c < ncomp; ++c) s += std::norm(comps[c][p]);
    total += std::sqrt(s);
  }
  return total;
}

void mul_acc_neon(cplx* acc, cplx coef, const cplx* const* f, int m, std::size_t n) {
  const float64x2_t vc = {coef.real(), coef.imag()};
  for (std::size_t p = 0; p < n; ++p) {
    float64x2_t t = load1(f[0] + p);
    for (int j = 1; j < m; ++j) t = cmul1(t, load1(f[j] + p));
    store1(acc + p, vaddq_f64(load1(acc + p), cmul1(t, vc)));
  }
}

void cmul_inplace_neon(cplx* v, const cplx* w, std::size_t n) {
  for (std::size_t p = 0; p < n; ++p) store1(v + p, cmul1(load1(v + p), load1(w + p)));
}

void axpy_neon(cplx* y, double a, const cplx* x, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  for (std::size_t p = 0; p < n; ++p) store1(y + p, vfmaq_f64(load1(y + p), va, load1(x + p)));
}

const KernelTable kNeon{"neon", sum_node_norm_neon, mul_acc_neon, cmul_inplace_neon, axpy_neon};

}  // namespace

// NEON is part of the aarch64 baseline, so no runtime probe is needed.
const KernelTable* neon_kernels() { return &kNeon; }

#else

const KernelTable* neon_kernels() { return nullptr; }

#endif

}  // namespace wavepax
