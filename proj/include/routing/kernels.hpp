#pragma once
// Data-parallel double-precision kernels behind a runtime-selected dispatch
// table. The scalar table is the reference; wider variants must agree with it
// exactly for elementwise kernels and up to summation order for reductions.

#include <cstddef>
#include <span>
#include <string_view>

namespace routing::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = alpha * x[i]
  void (*scale)(double alpha, const double* x, double* out, std::size_t n);
  // out[i] = a[i] + b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out = M x, M row-major rows x cols
  void (*matvec)(const double* m, const double* x, double* out, std::size_t rows,
                 std::size_t cols);
  // out = M^T y, M row-major rows x cols, out has cols entries
  void (*matvec_t)(const double* m, const double* y, double* out, std::size_t rows,
                   std::size_t cols);
  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_kernels();

// The table every caller should use. Chosen once per process from CPU
// features; ROUTING_SIMD=scalar in the environment forces the reference path.
const KernelTable& kernels();

Isa active_isa();

// Test hook: pin the active table. Returns false if the ISA is unavailable.
bool force_isa(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}

inline double sum(std::span<const double> x) { return kernels().sum(x.data(), x.size()); }

inline double max(std::span<const double> x) { return kernels().max(x.data(), x.size()); }

}  // namespace routing::simd
