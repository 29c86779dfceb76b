#include "wavepax/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace wavepax {

namespace {

struct PlanCache {
  std::mutex mutex;
  std::map<std::tuple<int, std::size_t, int>, fftw_plan> plans;

  ~PlanCache() {
    for (auto& [key, plan] : plans) fftw_destroy_plan(plan);
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

// FFTW_ESTIMATE keeps the chosen algorithm, and so the rounding, identical from run to run.
fftw_plan get_plan(int d, std::size_t p, int sign) {
  PlanCache& c = cache();
  std::lock_guard<std::mutex> lock(c.mutex);
  auto key = std::make_tuple(d, p, sign);
  auto it = c.plans.find(key);
  if (it != c.plans.end()) return it->second;
  std::size_t total = d == 1 ? p : p * p;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * total));
  int dims[2] = {static_cast<int>(p), static_cast<int>(p)};
  fftw_plan plan = fftw_plan_dft(d, dims, buf, buf, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD,
                                 FFTW_ESTIMATE);
  fftw_free(buf);
  c.plans.emplace(key, plan);
  return plan;
}

}  // namespace

void* fft_alloc(std::size_t bytes) { return fftw_malloc(bytes); }
void fft_free(void* p) { fftw_free(p); }

void fft_inplace(int d, std::size_t p, int sign, cplx* data) {
  fftw_plan plan = get_plan(d, p, sign);
  auto* x = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, x, x);
}

}  // namespace wavepax
