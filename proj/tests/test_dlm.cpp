#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "seec/common.hpp"
#include "seec/dlm.hpp"
#include "seec/kernels.hpp"

using namespace seec;
using namespace seec::dlm;

namespace {

std::vector<double> random_raw(const HeadLayout& layout, std::mt19937_64& rng,
                               double scale = 1.5) {
  std::vector<double> raw(layout.channels());
  for (auto& v : raw) v = scale * (uniform_unit(rng) * 2.0 - 1.0);
  return raw;
}

}  // namespace

TEST_CASE("bin_probability frozen high-precision oracle values") {
  // Oracle values computed with 60-digit arithmetic:
  //   sigma((127.5-127.5)/10) - sigma((126.5-127.5)/10)
  CHECK(bin_probability(127, 127.5, 10.0) ==
        doctest::Approx(0.02497918747893998609919318).epsilon(1e-13));
  //   mu = 124.5 gives sigma(0.3) - sigma(0.2)
  CHECK(bin_probability(127, 124.5, 10.0) ==
        doctest::Approx(0.02460851949918107859291872).epsilon(1e-13));
}

TEST_CASE("bin_probability: all mass below the first edge maps to bin 0") {
  CHECK(std::fabs(bin_probability(0, -1000.0, 1.0) - 1.0) < 1e-12);
  CHECK(std::fabs(bin_probability(255, 2000.0, 1.0) - 1.0) < 1e-12);
}

TEST_CASE("bin_probability sums to 1 over the alphabet for any mu, s") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    double mu = uniform_range(rng, -300.0, 600.0);
    double s = std::pow(10.0, uniform_range(rng, -3.0, 3.0));
    double sum = 0.0;
    for (int x = 0; x < 256; ++x) sum += bin_probability(x, mu, s);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("conditional_means: degenerate and linear-shift cases") {
  MixtureParams p{};
  p.K = 1;
  p.mu[0][0] = 1.0;
  p.mu[1][0] = 5.0;
  p.mu[2][0] = 2.0;
  std::array<std::array<double, kMaxK>, 3> mh{};

  // All beta = 0: mu_hat == mu.
  conditional_means(p, 10.0, 20.0, mh);
  CHECK(mh[0][0] == 1.0);
  CHECK(mh[1][0] == 5.0);
  CHECK(mh[2][0] == 2.0);

  // beta_rg = 1, x_r = 10, mu_g = 5 -> 15.
  p.beta[0][0] = 1.0;
  conditional_means(p, 10.0, 20.0, mh);
  CHECK(mh[1][0] == 15.0);
}

TEST_CASE("conditional_means matches direct formula on random draws") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    MixtureParams p{};
    p.K = 1 + static_cast<int>(rng() % kMaxK);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < p.K; ++k) {
        p.mu[c][k] = uniform_range(rng, -2, 2);
        p.beta[c][k] = uniform_range(rng, -1, 1);
      }
    double xr = uniform_range(rng, -1, 1), xg = uniform_range(rng, -1, 1);
    std::array<std::array<double, kMaxK>, 3> mh{};
    conditional_means(p, xr, xg, mh);
    for (int k = 0; k < p.K; ++k) {
      CHECK(mh[0][k] == doctest::Approx(p.mu[0][k]).epsilon(1e-12));
      CHECK(mh[1][k] ==
            doctest::Approx(p.mu[1][k] + p.beta[0][k] * xr).epsilon(1e-12));
      CHECK(mh[2][k] ==
            doctest::Approx(p.mu[2][k] + p.beta[1][k] * xr +
                            p.beta[2][k] * xg)
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("materialize enforces the parameter invariants") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    HeadLayout layout{1 + static_cast<int>(rng() % kMaxK),
                      (rng() & 1) == 0};
    auto raw = random_raw(layout, rng, 4.0);
    MixtureParams p = materialize(raw.data(), layout);
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int k = 0; k < p.K; ++k) {
        CHECK(p.pi[c][k] >= 0.0);
        CHECK(p.s[c][k] >= kScaleMin);
        CHECK(p.beta[c][k] >= -1.0);
        CHECK(p.beta[c][k] <= 1.0);
        sum += p.pi[c][k];
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    if (!layout.channel_specific_weights)
      for (int k = 0; k < p.K; ++k) {
        CHECK(p.pi[0][k] == p.pi[1][k]);
        CHECK(p.pi[1][k] == p.pi[2][k]);
      }
  }
}

TEST_CASE("pixel_log_likelihood: mixture of one and mixture collapse") {
  std::mt19937_64 rng(13);
  HeadLayout l1{1, true};
  auto raw1 = random_raw(l1, rng);
  // Zero the beta block: independent channels.
  for (int j = 0; j < 3; ++j) raw1[l1.beta_offset(j)] = 0.0;
  MixtureParams p1 = materialize(raw1.data(), l1);
  int xr = 100, xg = 150, xb = 31;
  double want = 0.0;
  for (int c = 0; c < 3; ++c) {
    int xc = c == 0 ? xr : (c == 1 ? xg : xb);
    want += std::log2(bin_probability(xc, (p1.mu[c][0] + 1.0) * 127.5,
                                      p1.s[c][0] * 127.5));
  }
  CHECK(pixel_log_likelihood(p1, xr, xg, xb) ==
        doctest::Approx(want).epsilon(1e-12));

  // K identical components with uniform weights collapse to K = 1.
  const int K = 4;
  HeadLayout lK{K, true};
  std::vector<double> rawK(lK.channels());
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < K; ++k) {
      rawK[lK.logit_offset(c) + k] = 0.7;  // equal -> uniform weights
      rawK[lK.mu_offset(c) + k] = raw1[l1.mu_offset(c)];
      rawK[lK.scale_offset(c) + k] = raw1[l1.scale_offset(c)];
      rawK[lK.beta_offset(c) + k] = 0.0;
    }
  MixtureParams pK = materialize(rawK.data(), lK);
  CHECK(pixel_log_likelihood(pK, xr, xg, xb) ==
        doctest::Approx(pixel_log_likelihood(p1, xr, xg, xb))
            .epsilon(1e-12));
}

TEST_CASE("per-channel normalization: 2^loglik sums to 1 over 256 values") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    HeadLayout layout{1 + static_cast<int>(rng() % 5), true};
    auto raw = random_raw(layout, rng);
    MixtureParams p = materialize(raw.data(), layout);
    int xr = static_cast<int>(rng() % 256), xg = static_cast<int>(rng() % 256);
    // Channel b conditioned on (xr, xg): pmf from channel_pmf must sum to 1
    // and agree with 2^(per-channel log likelihood term).
    double pmf[256];
    channel_pmf(p, 2, xr, xg, pmf);
    double sum = 0.0;
    for (double v : pmf) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-9);
    for (int xb : {0, 1, 77, 255}) {
      double lp = pixel_log_likelihood(p, xr, xg, xb) -
                  pixel_log_likelihood(p, xr, xg, 0) +
                  std::log2(std::max(pmf[0], 1e-12));
      CHECK(std::pow(2.0, lp) ==
            doctest::Approx(std::max(pmf[xb], 1e-12)).epsilon(1e-9));
    }
  }
}

TEST_CASE("channel_cdf: invariants hold across random parameter draws") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 500; ++trial) {
    HeadLayout layout{1 + static_cast<int>(rng() % kMaxK), (rng() & 1) == 0};
    auto raw = random_raw(layout, rng, 3.0);
    MixtureParams p = materialize(raw.data(), layout);
    int c = static_cast<int>(rng() % 3);
    coder::CdfTable t = channel_cdf(p, c, static_cast<int>(rng() % 256),
                                    static_cast<int>(rng() % 256));
    REQUIRE(t.alphabet == 256);
    REQUIRE(t.valid());
  }
}

TEST_CASE("channel_cdf: near-deterministic pmf keeps the floor rule") {
  HeadLayout layout{1, true};
  std::vector<double> raw(layout.channels(), 0.0);
  raw[layout.mu_offset(0)] = 100.0 / 127.5 - 1.0;   // mu at pixel 100
  raw[layout.scale_offset(0)] = -40.0;              // softplus -> ~0 + floor
  MixtureParams p = materialize(raw.data(), layout);
  CHECK(p.s[0][0] == doctest::Approx(kScaleMin).epsilon(1e-4));
  coder::CdfTable t = channel_cdf(p, 0, 0, 0);
  CHECK(t.freq(100) >= 65536u - 255u - 16u);
  for (int v = 0; v < 256; ++v) CHECK(t.freq(v) >= 1u);
}

TEST_CASE("quantization loss: table cross-entropy within 0.01 bits of true") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    HeadLayout layout{1 + static_cast<int>(rng() % 5), true};
    auto raw = random_raw(layout, rng, 1.0);
    // Keep scales >= 1 pixel unit: raw scale >= softplus^-1(1/127.5).
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < layout.K; ++k) {
        double& rs = raw[layout.scale_offset(c) + k];
        rs = uniform_range(rng, -4.8, 2.0);
        if (kern::det_softplus(rs) + kScaleMin < 1.0 / 127.5)
          rs = -4.8;  // ~= 1 pixel unit after softplus
      }
    MixtureParams p = materialize(raw.data(), layout);
    int c = static_cast<int>(rng() % 3);
    int xr = static_cast<int>(rng() % 256), xg = static_cast<int>(rng() % 256);
    double pmf[256];
    channel_pmf(p, c, xr, xg, pmf);
    coder::CdfTable t = channel_cdf(p, c, xr, xg);
    double true_h = 0.0, cross_h = 0.0;
    for (int v = 0; v < 256; ++v) {
      if (pmf[v] <= 0) continue;
      true_h -= pmf[v] * std::log2(pmf[v]);
      cross_h -= pmf[v] * std::log2(t.freq(v) / 65536.0);
    }
    CHECK(cross_h - true_h < 0.01);
    CHECK(cross_h >= true_h - 1e-9);  // cross-entropy lower bound
  }
}

TEST_CASE("argmax_sample: frozen scan result and tie-break") {
  // K = 1, mu_r = 100.2 pixel units, s = 2: brute-force scan gives 100.
  HeadLayout layout{1, true};
  std::vector<double> raw(layout.channels(), 0.0);
  raw[layout.mu_offset(0)] = 100.2 / 127.5 - 1.0;
  raw[layout.scale_offset(0)] = std::log(std::exp(2.0 / 127.5) - 1.0);
  MixtureParams p = materialize(raw.data(), layout);
  double pmf[256];
  channel_pmf(p, 0, 0, 0, pmf);
  int scan_best = 0;
  for (int v = 1; v < 256; ++v)
    if (pmf[v] > pmf[scan_best]) scan_best = v;
  CHECK(scan_best == 100);
  CHECK(argmax_sample(p).r == 100);

  // mu exactly midway between bins 99 and 100: tie toward the smaller.
  MixtureParams pt = p;
  pt.mu[0][0] = 99.5 / 127.5 - 1.0;
  CHECK(argmax_sample(pt).r == 99);
}

TEST_CASE("argmax_sample equals exhaustive per-channel scan on random draws") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    HeadLayout layout{1 + static_cast<int>(rng() % 5), true};
    auto raw = random_raw(layout, rng);
    MixtureParams p = materialize(raw.data(), layout);
    Rgb got = argmax_sample(p);
    double pmf[256];
    int vals[3] = {0, 0, 0};
    for (int c = 0; c < 3; ++c) {
      channel_pmf(p, c, vals[0], vals[1], pmf);
      int best = 0;
      for (int v = 1; v < 256; ++v)
        if (pmf[v] > pmf[best]) best = v;
      vals[c] = best;
    }
    CHECK(got.r == vals[0]);
    CHECK(got.g == vals[1]);
    CHECK(got.b == vals[2]);
  }
}

TEST_CASE("argmax invariance under strictly increasing pmf transforms") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    HeadLayout layout{3, true};
    auto raw = random_raw(layout, rng);
    MixtureParams p = materialize(raw.data(), layout);
    double pmf[256];
    channel_pmf(p, 0, 0, 0, pmf);
    auto argmax_of = [](const double* v) {
      int b = 0;
      for (int i = 1; i < 256; ++i)
        if (v[i] > v[b]) b = i;
      return b;
    };
    double t1[256], t2[256];
    for (int i = 0; i < 256; ++i) {
      t1[i] = std::sqrt(pmf[i]);
      t2[i] = 3.0 * pmf[i] + 7.0;
    }
    int base = argmax_of(pmf);
    CHECK(argmax_of(t1) == base);
    CHECK(argmax_of(t2) == base);
  }
}

TEST_CASE("tensor composite agrees with the scalar likelihood") {
  std::mt19937_64 rng(37);
  for (bool channel_specific : {true, false}) {
    HeadLayout layout{4, channel_specific};
    const int H = 3, W = 5;
    nd::Tensor head({1, layout.channels(), H, W});
    for (auto& v : head.values()) v = uniform_range(rng, -2.0, 2.0);
    nd::Tensor target({1, 3, H, W});
    for (auto& v : target.values())
      v = static_cast<double>(rng() % 256);

    nd::Tensor bits = dlm::mixture_nll_bits(head, target, layout, nullptr);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        std::vector<double> raw(layout.channels());
        for (int ch = 0; ch < layout.channels(); ++ch)
          raw[ch] = head.values()[(static_cast<std::size_t>(ch) * H + y) * W + x];
        MixtureParams p = materialize(raw.data(), layout);
        auto px = [&](int c) {
          return static_cast<int>(
              target.values()[(static_cast<std::size_t>(c) * H + y) * W + x]);
        };
        double want = -pixel_log_likelihood(p, px(0), px(1), px(2));
        double got = bits.values()[static_cast<std::size_t>(y) * W + x];
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
      }
  }
}

TEST_CASE("gradient of mean NLL with respect to raw head outputs") {
  std::mt19937_64 rng(41);
  HeadLayout layout{3, true};
  const int H = 2, W = 3;
  nd::Tensor head({1, layout.channels(), H, W});
  for (auto& v : head.values()) v = uniform_range(rng, -1.5, 1.5);
  head.set_requires_grad(true);
  nd::Tensor target({1, 3, H, W});
  for (auto& v : target.values()) v = static_cast<double>(rng() % 256);

  auto loss_fn = [&](nd::Tape* t) {
    return nd::reduce_sum(dlm::mixture_nll_bits(head, target, layout, t), t);
  };
  nd::Tape tape;
  nd::Tensor loss = loss_fn(&tape);
  tape.backward(loss);
  std::vector<double> analytic(head.grad_values());

  const double eps = 1e-5;
  std::mt19937_64 pick(5);
  for (int t = 0; t < 48; ++t) {
    int i = static_cast<int>(pick() % head.size());
    double saved = head.values()[i];
    head.values()[i] = saved + eps;
    double up = loss_fn(nullptr).item();
    head.values()[i] = saved - eps;
    double dn = loss_fn(nullptr).item();
    head.values()[i] = saved;
    double fd = (up - dn) / (2 * eps);
    double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-6});
    CHECK_MESSAGE(std::fabs(fd - analytic[i]) / denom < 1e-4,
                  "coord " << i << " fd=" << fd << " an=" << analytic[i]);
  }
}
