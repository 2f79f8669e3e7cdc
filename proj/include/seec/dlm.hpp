#pragma once

// Multi-channel discretized logistic mixture likelihood. Channel order is
// r, g, b; the autoregression runs through the means: green's mean shifts
// by beta_rg * x_r, blue's by beta_rb * x_r + beta_gb * x_g. Mixture
// weights are per-channel by default; the shared-weight variant is the
// ablation toggle.
//
// Two faces of the same model:
//  - a scalar path (materialize / pmf / CDF tables / argmax) used by the
//    encoder and decoder, built on the deterministic kernels so both sides
//    construct bit-identical tables;
//  - a tensor composite (mixture_nll_bits) used for training, whose value
//    agrees with the scalar path to rounding error.
//
// All network-side parameters live in normalized units (x/127.5 - 1);
// pixel-unit values are derived where the 256-bin discretization needs
// them.

#include <array>

#include "seec/coder.hpp"
#include "seec/tensor.hpp"

namespace seec::dlm {

inline constexpr int kMaxK = 10;
inline constexpr double kPixelScale = 127.5;
inline constexpr double kHalfBin = 0.5 / kPixelScale;
// Scale floor is 1e-3 in pixel-value units; the softplus floor below is its
// normalized-unit equivalent.
inline constexpr double kScaleMinPixel = 1e-3;
inline constexpr double kScaleMin = kScaleMinPixel / kPixelScale;
inline constexpr double kLikelihoodFloor = 1e-12;  // probability floor

// Channel layout of one entropy head's raw output vector. Roles are grouped
// (weight logits, means, raw scales, coefficients), channels within a role.
struct HeadLayout {
  int K = 5;
  bool channel_specific_weights = true;

  int channels() const { return (channel_specific_weights ? 12 : 10) * K; }
  int logit_offset(int c) const {
    return channel_specific_weights ? c * K : 0;
  }
  int mu_offset(int c) const {
    return (channel_specific_weights ? 3 : 1) * K + c * K;
  }
  int scale_offset(int c) const {
    return (channel_specific_weights ? 6 : 4) * K + c * K;
  }
  // j: 0 = r->g, 1 = r->b, 2 = g->b.
  int beta_offset(int j) const {
    return (channel_specific_weights ? 9 : 7) * K + j * K;
  }
};

// Materialized per-pixel mixture parameters (normalized units).
struct MixtureParams {
  int K = 0;
  std::array<std::array<double, kMaxK>, 3> pi;    // weights per channel
  std::array<std::array<double, kMaxK>, 3> mu;    // means
  std::array<std::array<double, kMaxK>, 3> s;     // scales >= kScaleMin
  std::array<std::array<double, kMaxK>, 3> beta;  // coefficients in [-1,1]
};

// Applies softmax / softplus-floor / tanh to one pixel's raw head output.
MixtureParams materialize(const double* raw, const HeadLayout& layout);

// P(X = x) for one discretized logistic component, pixel units:
// sigma((x+0.5-mu)/s) - sigma((x-0.5-mu)/s), with the lower edge of bin 0
// at -inf and the upper edge of bin 255 at +inf.
double bin_probability(int x, double mu, double s);

// Channel-autoregressive mean adjustment. Unit-agnostic: x_r, x_g must be
// given in the same units as the means (the codec passes normalized
// values). Component k of: r unchanged, g += beta_rg*x_r,
// b += beta_rb*x_r + beta_gb*x_g.
void conditional_means(const MixtureParams& p, double x_r, double x_g,
                       std::array<std::array<double, kMaxK>, 3>& mu_hat);

// 256-bin pmf of one channel given the decoded earlier channels.
void channel_pmf(const MixtureParams& p, int channel, int x_r, int x_g,
                 double* pmf256);

// log2 p(r) + log2 p(g|r) + log2 p(b|r,g), each channel term floored at
// log2(kLikelihoodFloor) after a log-sum-exp over components.
double pixel_log_likelihood(const MixtureParams& p, int x_r, int x_g,
                            int x_b);

// Quantized CDF table for one channel (what the coder consumes).
coder::CdfTable channel_cdf(const MixtureParams& p, int channel, int x_r,
                            int x_g);

// Channel-sequential mode: argmax over the 256-bin pmf per channel, earlier
// channels conditioning later ones; ties break toward the smaller value.
struct Rgb {
  int r = 0, g = 0, b = 0;
};
Rgb argmax_sample(const MixtureParams& p);

// --- training composite ----------------------------------------------------

// Per-pixel code length in bits, [B,1,H,W], from raw head output maps
// [B,layout.channels(),H,W] and the original 8-bit image channels packed as
// [B,3,H,W] integer values 0..255 stored as doubles.
nd::Tensor mixture_nll_bits(const nd::Tensor& head_out,
                            const nd::Tensor& target_u8,
                            const HeadLayout& layout, nd::Tape* tape);

}  // namespace seec::dlm
