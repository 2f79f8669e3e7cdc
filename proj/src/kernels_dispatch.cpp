#include <cstdlib>
#include <cstring>

#include "seec/common.hpp"
#include "seec/kernels.hpp"

namespace seec::kern {

namespace {

struct Table {
  void (*vexp)(const double*, double*, std::size_t);
  void (*vsigmoid)(const double*, double*, std::size_t);
  void (*vsigc)(const double*, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*vadd)(const double*, const double*, double*, std::size_t);
  void (*vmul)(const double*, const double*, double*, std::size_t);
  void (*vleaky)(const double*, double*, std::size_t, double);
  double (*dot4)(const double*, const double*, std::size_t);
};

constexpr Table kScalarTable = {
    scalar::vexp, scalar::vsigmoid, scalar::vsigc,  scalar::axpy,
    scalar::vadd, scalar::vmul,     scalar::vleaky, scalar::dot4,
};

#if defined(__x86_64__) || defined(_M_X64)
constexpr Table kAvx2Table = {
    avx2::vexp, avx2::vsigmoid, avx2::vsigc,  avx2::axpy,
    avx2::vadd, avx2::vmul,     avx2::vleaky, avx2::dot4,
};
#endif

Isa g_isa = Isa::scalar;
const Table* g_table = &kScalarTable;

Isa detect() {
#if defined(__x86_64__) || defined(_M_X64)
  const char* force = std::getenv("SEEC_FORCE_SCALAR");
  if (force != nullptr && std::strcmp(force, "0") != 0) return Isa::scalar;
  if (__builtin_cpu_supports("avx2")) return Isa::avx2;
#endif
  return Isa::scalar;
}

struct Init {
  Init() {
    g_isa = detect();
#if defined(__x86_64__) || defined(_M_X64)
    if (g_isa == Isa::avx2) g_table = &kAvx2Table;
#endif
  }
};
Init g_init;

}  // namespace

Isa active_isa() { return g_isa; }

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "?";
}

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

void force_isa(Isa isa) {
  if (isa == Isa::avx2) {
#if defined(__x86_64__) || defined(_M_X64)
    SEEC_CHECK_MSG(avx2_supported(), "AVX2 not available on this CPU");
    g_isa = Isa::avx2;
    g_table = &kAvx2Table;
    return;
#else
    SEEC_CHECK_MSG(false, "AVX2 not available on this architecture");
#endif
  }
  g_isa = Isa::scalar;
  g_table = &kScalarTable;
}

void vexp(const double* x, double* y, std::size_t n) {
  g_table->vexp(x, y, n);
}
void vsigmoid(const double* x, double* y, std::size_t n) {
  g_table->vsigmoid(x, y, n);
}
void vsigc(const double* x, double* y, std::size_t n) {
  g_table->vsigc(x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  g_table->axpy(a, x, y, n);
}
void vadd(const double* a, const double* b, double* y, std::size_t n) {
  g_table->vadd(a, b, y, n);
}
void vmul(const double* a, const double* b, double* y, std::size_t n) {
  g_table->vmul(a, b, y, n);
}
void vleaky(const double* x, double* y, std::size_t n, double slope) {
  g_table->vleaky(x, y, n, slope);
}
double dot4(const double* a, const double* b, std::size_t n) {
  return g_table->dot4(a, b, n);
}

}  // namespace seec::kern
