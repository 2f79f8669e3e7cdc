#include "seec/kernels.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "kernels_coeffs.hpp"

namespace seec::kern {

using namespace detail;

namespace {

// 2^n for n in [-1022, 1023], built from exponent bits. The callers clamp
// n into that range, so the multiply by it is a single exact scaling.
inline double pow2i(int n) {
  return std::bit_cast<double>(static_cast<std::uint64_t>(n + 1023) << 52);
}

}  // namespace

double det_exp(double x) {
  if (x != x) return x;
  if (x >= kExpHi) return std::numeric_limits<double>::infinity();
  if (x < kExpLo) return 0.0;
  double px = std::floor(kLog2E * x + 0.5);
  int n = static_cast<int>(px);
  double r = x - px * kExpC1;
  r = r - px * kExpC2;
  double rr = r * r;
  double p = r * ((kExpP0 * rr + kExpP1) * rr + kExpP2);
  double q = ((kExpQ0 * rr + kExpQ1) * rr + kExpQ2) * rr + kExpQ3;
  double e = p / (q - p);
  e = 1.0 + 2.0 * e;
  return e * pow2i(n);
}

namespace {

constexpr double kLogP[6] = {
    1.01875663804580931796e-4, 4.97494994976747001425e-1,
    4.70579119878881725854e0,  1.44989225341610930846e1,
    1.79368678507819816313e1,  7.70838733755885391666e0,
};
constexpr double kLogQ[5] = {
    1.12873587189167450590e1, 4.52279145837532221105e1,
    8.29875266912776603211e1, 7.11544750618563894466e1,
    2.31251620126765340583e1,
};
constexpr double kSqrtHalf = 0.70710678118654752440;

inline double polevl(double x, const double* c, int n) {
  double r = c[0];
  for (int i = 1; i <= n; ++i) r = r * x + c[i];
  return r;
}

// Like polevl with an implicit leading coefficient of 1.
inline double p1evl(double x, const double* c, int n) {
  double r = x + c[0];
  for (int i = 1; i < n; ++i) r = r * x + c[i];
  return r;
}

}  // namespace

double det_log(double x) {
  if (x != x) return x;
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x < 0.0) return std::numeric_limits<double>::quiet_NaN();
  if (x == std::numeric_limits<double>::infinity()) return x;
  int e;
  x = std::frexp(x, &e);
  if (x < kSqrtHalf) {
    e -= 1;
    x = 2.0 * x - 1.0;
  } else {
    x = x - 1.0;
  }
  double z = x * x;
  double y = x * (z * polevl(x, kLogP, 5) / p1evl(x, kLogQ, 5));
  double de = static_cast<double>(e);
  y = y - de * 2.121944400546905827679e-4;
  y = y - 0.5 * z;
  double r = x + y;
  return r + de * 0.693359375;
}

double det_log1p(double u) {
  double w = 1.0 + u;
  if (w == 1.0) return u;
  // Goldberg correction keeps full precision for small u.
  return det_log(w) * (u / (w - 1.0));
}

double det_log2(double x) { return det_log(x) * kLog2E; }

double det_sigmoid(double x) {
  if (x >= 0.0) {
    double t = det_exp(-x);
    return 1.0 / (1.0 + t);
  }
  double t = det_exp(x);
  return t / (1.0 + t);
}

double det_sigmoid_centered(double x) {
  double t = std::fabs(x);
  double e = det_exp(-t);
  // 1/(1+e) lies in [0.5, 1], so subtracting 0.5 is exact (Sterbenz).
  double c = 1.0 / (1.0 + e) - 0.5;
  return x < 0.0 ? -c : c;
}

double det_softplus(double x) {
  if (x > 36.0) return x + det_exp(-x);
  if (x < -36.0) return det_exp(x);
  return det_log1p(det_exp(x));
}

namespace {

constexpr double kTanhP[3] = {
    -9.64399179425052238628e-1,
    -9.92877231001918586564e1,
    -1.61468768441708447952e3,
};
constexpr double kTanhQ[3] = {
    1.12811678491632931402e2,
    2.23548839060100448583e3,
    4.84406305325125486048e3,
};

}  // namespace

double det_tanh(double x) {
  if (x != x) return x;
  double z = std::fabs(x);
  if (z > 350.0) return x > 0.0 ? 1.0 : -1.0;
  if (z >= 0.625) {
    double s = det_exp(2.0 * z);
    double r = 1.0 - 2.0 / (s + 1.0);
    return x >= 0.0 ? r : -r;
  }
  if (x == 0.0) return x;
  double s = x * x;
  return x + x * s * (polevl(s, kTanhP, 2) / p1evl(s, kTanhQ, 3));
}

namespace {

// Cephes erf/erfc rational approximations.
constexpr double kErfT[5] = {
    9.60497373987051638749e0, 9.00260197203842689217e1,
    2.23200534594684319226e3, 7.00332514112805075473e3,
    5.55923013010394962768e4,
};
constexpr double kErfU[5] = {
    3.35617141647503099647e1, 5.21357949780152679795e2,
    4.59432382970980127987e3, 2.26290000613890934246e4,
    4.92673942608635921086e4,
};
constexpr double kErfcP[9] = {
    2.46196981473530512524e-10, 5.64189564831068821977e-1,
    7.46321056442269912687e0,   4.86371970985681366614e1,
    1.96520832956077098242e2,   5.26445194995477358631e2,
    9.34528527171957607540e2,   1.02755188689515710272e3,
    5.57535335369399327526e2,
};
constexpr double kErfcQ[8] = {
    1.32281951154744992508e1, 8.67072140885989742329e1,
    3.54937778887819891062e2, 9.75708501743205489753e2,
    1.82390916687909736289e3, 2.24633760818710981792e3,
    1.65666309194161350182e3, 5.57535340817727675546e2,
};
}  // namespace

double det_erf(double x) {
  if (x != x) return x;
  if (std::fabs(x) > 1.0) return 1.0 - det_erfc(x);
  double z = x * x;
  return x * polevl(z, kErfT, 4) / p1evl(z, kErfU, 5);
}

double det_erfc(double a) {
  if (a != a) return a;
  double x = std::fabs(a);
  if (x < 1.0) return 1.0 - det_erf(a);

  double z = -a * a;
  if (z < -708.0) {
    return a < 0.0 ? 2.0 : 0.0;
  }
  z = det_exp(z);

  // The rational form holds its accuracy over the whole range where
  // exp(-a*a) is representable, so one branch covers all |a| >= 1.
  double p = polevl(x, kErfcP, 8);
  double q = p1evl(x, kErfcQ, 8);
  double y = (z * p) / q;
  if (a < 0.0) y = 2.0 - y;
  if (y == 0.0) return a < 0.0 ? 2.0 : 0.0;
  return y;
}

double det_normal_cdf(double x) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  return 0.5 * det_erfc(-x * kInvSqrt2);
}

namespace scalar {

void vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = det_exp(x[i]);
}

void vsigmoid(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = det_sigmoid(x[i]);
}

void vsigc(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = det_sigmoid_centered(x[i]);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void vadd(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void vmul(const double* a, const double* b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void vleaky(const double* x, double* y, std::size_t n, double slope) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    y[i] = v > 0.0 ? v : slope * v;
  }
}

double dot4(const double* a, const double* b, std::size_t n) {
  double acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
  std::size_t n4 = n & ~static_cast<std::size_t>(3);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  double acc[4] = {acc0, acc1, acc2, acc3};
  for (; i < n; ++i) acc[i & 3] += a[i] * b[i];
  return ((acc[0] + acc[1]) + acc[2]) + acc[3];
}

}  // namespace scalar

}  // namespace seec::kern
