#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "seec/common.hpp"
#include "seec/kernels.hpp"

using namespace seec;

namespace {

std::vector<double> random_args(std::size_t n, double lo, double hi,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = uniform_range(rng, lo, hi);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("det_exp matches libm to a few ulp over the working range") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200000; ++i) {
    double x = uniform_range(rng, -700.0, 700.0);
    double got = kern::det_exp(x);
    double want = std::exp(x);
    if (want == 0.0) {
      CHECK(got == 0.0);
    } else {
      CHECK(std::fabs(got - want) / want < 1e-14);
    }
  }
  CHECK(kern::det_exp(0.0) == 1.0);
  CHECK(kern::det_exp(-1e9) == 0.0);
  CHECK(kern::det_exp(1e9) ==
        std::numeric_limits<double>::infinity());
  CHECK(std::isnan(kern::det_exp(std::nan(""))));
}

TEST_CASE("det_log / det_log1p / det_log2 accuracy") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 100000; ++i) {
    double x = std::pow(10.0, uniform_range(rng, -300.0, 300.0));
    CHECK(std::fabs(kern::det_log(x) - std::log(x)) <=
          1e-14 * std::max(1.0, std::fabs(std::log(x))));
  }
  for (int i = 0; i < 10000; ++i) {
    double u = uniform_range(rng, -0.5, 0.5) * std::pow(10.0, -uniform_range(rng, 0.0, 12.0));
    CHECK(kern::det_log1p(u) ==
          doctest::Approx(std::log1p(u)).epsilon(1e-13));
  }
  CHECK(kern::det_log2(8.0) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(kern::det_log(0.0) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("det_sigmoid / det_tanh / det_softplus / det_erfc accuracy") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100000; ++i) {
    double x = uniform_range(rng, -40.0, 40.0);
    double sig = 1.0 / (1.0 + std::exp(-x));
    CHECK(std::fabs(kern::det_sigmoid(x) - sig) < 1e-14);
    CHECK(std::fabs(kern::det_tanh(x) - std::tanh(x)) < 1e-14);
    double sp = x > 30 ? x : std::log1p(std::exp(x));
    CHECK(std::fabs(kern::det_softplus(x) - sp) <=
          1e-13 * std::max(1.0, sp));
  }
  for (int i = 0; i < 50000; ++i) {
    double x = uniform_range(rng, -10.0, 10.0);
    double want = std::erfc(x);
    double got = kern::det_erfc(x);
    if (want > 0) CHECK(std::fabs(got - want) / want < 1e-11);
    double phi = 0.5 * std::erfc(-x / std::sqrt(2.0));
    if (phi > 0) {
      CHECK(std::fabs(kern::det_normal_cdf(x) - phi) / phi < 1e-11);
    }
  }
  // Frozen high-precision value used by the latent-rate example:
  // -log2(Phi(0.5) - Phi(-0.5)) computed with 60-digit arithmetic.
  double p = kern::det_normal_cdf(0.5) - kern::det_normal_cdf(-0.5);
  CHECK(-kern::det_log2(p) ==
        doctest::Approx(1.384866534290989684597275).epsilon(1e-12));
}

#if defined(__x86_64__) || defined(_M_X64)
TEST_CASE("AVX2 variants are bit-identical to the scalar reference") {
  if (!kern::avx2_supported()) {
    MESSAGE("AVX2 unavailable; skipping equivalence checks");
    return;
  }
  // Sizes chosen to exercise both full vectors and remainder lanes.
  for (std::size_t n : {0ul, 1ul, 3ul, 4ul, 5ul, 64ul, 1001ul}) {
    auto xs = random_args(n, -710.0, 710.0, 100 + n);
    // Sprinkle special values.
    if (n >= 4) {
      xs[0] = std::numeric_limits<double>::infinity();
      xs[1] = -std::numeric_limits<double>::infinity();
      xs[2] = 0.0;
      xs[3] = -0.0;
    }
    std::vector<double> a(n), b(n);
    kern::scalar::vexp(xs.data(), a.data(), n);
    kern::avx2::vexp(xs.data(), b.data(), n);
    CHECK(bit_equal(a, b));

    kern::scalar::vsigmoid(xs.data(), a.data(), n);
    kern::avx2::vsigmoid(xs.data(), b.data(), n);
    CHECK(bit_equal(a, b));

    kern::scalar::vsigc(xs.data(), a.data(), n);
    kern::avx2::vsigc(xs.data(), b.data(), n);
    CHECK(bit_equal(a, b));

    auto ys = random_args(n, -5.0, 5.0, 200 + n);
    auto zs = random_args(n, -5.0, 5.0, 300 + n);

    a = ys; b = ys;
    kern::scalar::axpy(1.7, zs.data(), a.data(), n);
    kern::avx2::axpy(1.7, zs.data(), b.data(), n);
    CHECK(bit_equal(a, b));

    kern::scalar::vadd(ys.data(), zs.data(), a.data(), n);
    kern::avx2::vadd(ys.data(), zs.data(), b.data(), n);
    CHECK(bit_equal(a, b));

    kern::scalar::vmul(ys.data(), zs.data(), a.data(), n);
    kern::avx2::vmul(ys.data(), zs.data(), b.data(), n);
    CHECK(bit_equal(a, b));

    kern::scalar::vleaky(ys.data(), a.data(), n, 0.01);
    kern::avx2::vleaky(ys.data(), b.data(), n, 0.01);
    CHECK(bit_equal(a, b));
  }
}

TEST_CASE("dispatch honors force_isa") {
  kern::Isa original = kern::active_isa();
  kern::force_isa(kern::Isa::scalar);
  CHECK(kern::active_isa() == kern::Isa::scalar);
  if (kern::avx2_supported()) {
    kern::force_isa(kern::Isa::avx2);
    CHECK(kern::active_isa() == kern::Isa::avx2);
  }
  kern::force_isa(original);
}
#endif

TEST_CASE("vexp NaN handling matches scalar") {
  double x = std::numeric_limits<double>::quiet_NaN();
  double y = 0;
  kern::vexp(&x, &y, 1);
  CHECK(std::isnan(y));
}

#if defined(__x86_64__) || defined(_M_X64)
TEST_CASE("dot4 scalar/AVX2 bit equivalence and correctness") {
  if (!kern::avx2_supported()) return;
  std::mt19937_64 rng(77);
  for (std::size_t n : {0ul, 1ul, 2ul, 3ul, 4ul, 7ul, 64ul, 1003ul}) {
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = uniform_range(rng, -3.0, 3.0);
    for (auto& v : b) v = uniform_range(rng, -3.0, 3.0);
    double s = kern::scalar::dot4(a.data(), b.data(), n);
    double v = kern::avx2::dot4(a.data(), b.data(), n);
    CHECK(std::memcmp(&s, &v, 8) == 0);
    double ref = 0;
    for (std::size_t i = 0; i < n; ++i) ref += a[i] * b[i];
    CHECK(s == doctest::Approx(ref).epsilon(1e-12));
  }
}
#endif
