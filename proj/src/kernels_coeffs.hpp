#pragma once

// Shared constants for the deterministic exp used by both the scalar
// reference and the AVX2 variant. Rational approximation and range
// reduction follow the classic Cephes expm-style construction; both
// variants must execute the identical operation sequence, so the split
// of ln2 and the clamp bounds live here and nowhere else.

namespace seec::kern::detail {

inline constexpr double kLog2E = 1.4426950408889634073599;  // 1/ln 2
inline constexpr double kExpC1 = 6.93145751953125e-1;       // ln2 high part
inline constexpr double kExpC2 = 1.42860682030941723212e-6; // ln2 low part

// exp(x) = +inf at and above ln(2^1023); below kExpLo the true result is
// subnormal and we flush to zero so the 2^n scaling stays a single exact
// normal-power multiply in both variants.
inline constexpr double kExpHi = 709.0895657128241;
inline constexpr double kExpLo = -708.3964185322641;

inline constexpr double kExpP0 = 1.26177193074810590878e-4;
inline constexpr double kExpP1 = 3.02994407707441961300e-2;
inline constexpr double kExpP2 = 9.99999999999999999910e-1;

inline constexpr double kExpQ0 = 3.00198505138664455042e-6;
inline constexpr double kExpQ1 = 2.52448340349684104192e-3;
inline constexpr double kExpQ2 = 2.27265548208155028766e-1;
inline constexpr double kExpQ3 = 2.00000000000000000005e0;

}  // namespace seec::kern::detail
