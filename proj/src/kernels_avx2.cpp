// AVX2 variants of the batched kernels. Every lane performs the identical
// operation sequence to the scalar reference (no FMA, same rounding at every
// step), so outputs are bit-identical to kernels_scalar.cpp. Equivalence is
// enforced by tests/test_kernels.cpp.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cstdint>
#include <limits>

#include "kernels_coeffs.hpp"
#include "seec/kernels.hpp"

namespace seec::kern::avx2 {

using namespace detail;

namespace {

inline __m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(kExpHi);
  const __m256d lo = _mm256_set1_pd(kExpLo);

  __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  __m256d hi_mask = _mm256_cmp_pd(x, hi, _CMP_GE_OQ);
  __m256d lo_mask = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);

  // Clamp so lane arithmetic below stays in range; out-of-range lanes get
  // their results overwritten by the blends at the end.
  __m256d xs = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  __m256d px = _mm256_floor_pd(
      _mm256_add_pd(_mm256_mul_pd(_mm256_set1_pd(kLog2E), xs),
                    _mm256_set1_pd(0.5)));
  __m128i n32 = _mm256_cvttpd_epi32(px);

  __m256d r = _mm256_sub_pd(xs, _mm256_mul_pd(px, _mm256_set1_pd(kExpC1)));
  r = _mm256_sub_pd(r, _mm256_mul_pd(px, _mm256_set1_pd(kExpC2)));
  __m256d rr = _mm256_mul_pd(r, r);

  __m256d p = _mm256_mul_pd(_mm256_set1_pd(kExpP0), rr);
  p = _mm256_add_pd(p, _mm256_set1_pd(kExpP1));
  p = _mm256_mul_pd(p, rr);
  p = _mm256_add_pd(p, _mm256_set1_pd(kExpP2));
  p = _mm256_mul_pd(p, r);

  __m256d q = _mm256_mul_pd(_mm256_set1_pd(kExpQ0), rr);
  q = _mm256_add_pd(q, _mm256_set1_pd(kExpQ1));
  q = _mm256_mul_pd(q, rr);
  q = _mm256_add_pd(q, _mm256_set1_pd(kExpQ2));
  q = _mm256_mul_pd(q, rr);
  q = _mm256_add_pd(q, _mm256_set1_pd(kExpQ3));

  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_add_pd(_mm256_set1_pd(1.0), _mm256_add_pd(e, e));

  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(n64, _mm256_set1_epi64x(1023)), 52);
  __m256d scale = _mm256_castsi256_pd(bits);
  __m256d res = _mm256_mul_pd(e, scale);

  const __m256d inf =
      _mm256_set1_pd(std::numeric_limits<double>::infinity());
  res = _mm256_blendv_pd(res, inf, hi_mask);
  res = _mm256_blendv_pd(res, _mm256_setzero_pd(), lo_mask);
  res = _mm256_blendv_pd(res, x, nan_mask);
  return res;
}

}  // namespace

void vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = det_exp(x[i]);
}

void vsigmoid(const double* x, double* y, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d signbit = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    // t = exp(-|v|); nonneg lanes take 1/(1+t), negative lanes t/(1+t).
    __m256d neg_abs = _mm256_or_pd(_mm256_andnot_pd(signbit, v), signbit);
    __m256d t = exp4(neg_abs);
    __m256d denom = _mm256_add_pd(one, t);
    __m256d pos = _mm256_div_pd(one, denom);
    __m256d neg = _mm256_div_pd(t, denom);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(pos, neg, v));
  }
  for (; i < n; ++i) y[i] = det_sigmoid(x[i]);
}

void vsigc(const double* x, double* y, std::size_t n) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d signbit = _mm256_set1_pd(-0.0);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    __m256d neg_abs = _mm256_or_pd(_mm256_andnot_pd(signbit, v), signbit);
    __m256d e = exp4(neg_abs);
    __m256d c =
        _mm256_sub_pd(_mm256_div_pd(one, _mm256_add_pd(one, e)), half);
    __m256d neg_mask = _mm256_cmp_pd(v, zero, _CMP_LT_OQ);
    _mm256_storeu_pd(
        y + i, _mm256_blendv_pd(c, _mm256_xor_pd(c, signbit), neg_mask));
  }
  for (; i < n; ++i) y[i] = det_sigmoid_centered(x[i]);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    __m256d xv = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(av, xv)));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void vadd(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] + b[i];
}

void vmul(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

void vleaky(const double* x, double* y, std::size_t n, double slope) {
  const __m256d sv = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    __m256d mask = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(y + i,
                     _mm256_blendv_pd(_mm256_mul_pd(sv, v), v, mask));
  }
  for (; i < n; ++i) {
    double v = x[i];
    y[i] = v > 0.0 ? v : slope * v;
  }
}

double dot4(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t n4 = n & ~static_cast<std::size_t>(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  for (; i < n; ++i) lanes[i & 3] += a[i] * b[i];
  return ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
}

}  // namespace seec::kern::avx2

#endif  // x86_64
