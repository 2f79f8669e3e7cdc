#pragma once

// Arithmetic kernels used by the tensor engine and the entropy-model hot
// loops. Two requirements drive this layer:
//
//  1. Determinism. Encoder and decoder must build bit-identical CDF tables
//     from the same weights on any machine, so every transcendental on a
//     coding path is computed here with explicit double arithmetic instead
//     of libm (whose results vary across platforms).
//  2. Throughput. The per-pixel CDF construction evaluates hundreds of
//     sigmoids per pixel; the batched kernels have AVX2 variants selected
//     at runtime that perform the same operation sequence per lane and
//     therefore return bit-identical results to the scalar reference.
//
// Compile everything without FP contraction (-ffp-contract=off); the AVX2
// paths use no FMA so scalar and vector rounding agree exactly.

#include <cstddef>

namespace seec::kern {

// --- deterministic scalar math -------------------------------------------
//
// det_exp flushes subnormal results to zero (x < -708.3964...) and returns
// +inf for x >= 709.0895657 (ln 2^1023). Within that domain accuracy is
// ~1 ulp. The codec never evaluates outside it.
double det_exp(double x);
double det_log(double x);    // natural log
double det_log1p(double x);
double det_log2(double x);
double det_sigmoid(double x);
// sigmoid(x) - 0.5 as an exactly odd function: computed on |x| with the
// sign applied afterwards, so mirrored arguments give exact negations and
// symmetric bin probabilities tie bit-exactly.
double det_sigmoid_centered(double x);
double det_softplus(double x);  // log(1 + e^x)
double det_tanh(double x);
double det_erf(double x);
double det_erfc(double x);
double det_normal_cdf(double x);  // standard Gaussian CDF

// --- batched kernels (runtime-dispatched) --------------------------------

// y[i] = det_exp(x[i])
void vexp(const double* x, double* y, std::size_t n);
// y[i] = det_sigmoid(x[i])
void vsigmoid(const double* x, double* y, std::size_t n);
// y[i] = det_sigmoid_centered(x[i])
void vsigc(const double* x, double* y, std::size_t n);
// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);
// y[i] = a[i] + b[i] / y[i] = a[i] * b[i]
void vadd(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
// y[i] = x[i] > 0 ? x[i] : slope * x[i]
void vleaky(const double* x, double* y, std::size_t n, double slope);
// Dot product with four independent accumulators (lane j sums elements
// i == j mod 4), reduced in fixed order; scalar and AVX2 agree bit-exactly.
double dot4(const double* a, const double* b, std::size_t n);

// --- dispatch control -----------------------------------------------------

enum class Isa { scalar, avx2 };

// Currently selected variant. AVX2 is picked when the CPU supports it
// unless SEEC_FORCE_SCALAR=1 is set in the environment or force_isa was
// called.
Isa active_isa();
const char* isa_name(Isa isa);
// Force a variant (tests use this for equivalence checks). Throws
// ContractError when the requested ISA is unavailable on this CPU.
void force_isa(Isa isa);
bool avx2_supported();

// Scalar reference entry points, callable regardless of dispatch state so
// equivalence tests can compare variants directly.
namespace scalar {
void vexp(const double* x, double* y, std::size_t n);
void vsigmoid(const double* x, double* y, std::size_t n);
void vsigc(const double* x, double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void vadd(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
void vleaky(const double* x, double* y, std::size_t n, double slope);
double dot4(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
void vexp(const double* x, double* y, std::size_t n);
void vsigmoid(const double* x, double* y, std::size_t n);
void vsigc(const double* x, double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void vadd(const double* a, const double* b, double* y, std::size_t n);
void vmul(const double* a, const double* b, double* y, std::size_t n);
void vleaky(const double* x, double* y, std::size_t n, double slope);
double dot4(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#endif

}  // namespace seec::kern
