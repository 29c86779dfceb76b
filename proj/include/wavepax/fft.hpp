#pragma once

#include <complex>
#include <cstddef>
#include <new>
#include <vector>

namespace wavepax {

using cplx = std::complex<double>;

void* fft_alloc(std::size_t bytes);
void fft_free(void* p);

// Allocator returning FFTW-aligned storage so every buffer matches the planning alignment.
template <class T>
struct FftAllocator {
  using value_type = T;
  FftAllocator() = default;
  template <class U>
  FftAllocator(const FftAllocator<U>&) {}
  T* allocate(std::size_t n) {
    void* p = fft_alloc(n * sizeof(T));
    if (p == nullptr) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) { fft_free(p); }
  template <class U>
  bool operator==(const FftAllocator<U>&) const { return true; }
  template <class U>
  bool operator!=(const FftAllocator<U>&) const { return false; }
};

using CVec = std::vector<cplx, FftAllocator<cplx>>;

// In-place unnormalized DFT of a d-dimensional cube with p points per side.
// sign = -1: sum x e^{-2 pi i jk/p}; sign = +1: sum x e^{+2 pi i jk/p}.
// The buffer must come from FftAllocator.
void fft_inplace(int d, std::size_t p, int sign, cplx* data);

}  // namespace wavepax
