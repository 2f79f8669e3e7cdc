#pragma once

// Latent path of the codec: analysis transform (4x stride-2 5x5 convs with
// leaky-ReLU), mirrored synthesis transform, and the hyper pair that
// predicts per-element Gaussian parameters for the quantized latent. The
// hyper-latent itself is coded under a learned per-channel discretized
// logistic prior.
//
// Latent coding is integer-symbol coding: quantized values saturate into
// [clamp_lo, clamp_hi] and are offset into [0, alphabet).

#include <random>

#include "seec/coder.hpp"
#include "seec/tensor.hpp"
#include "seec/weights.hpp"

namespace seec::sic {

inline constexpr double kSigmaMin = 0.11;
inline constexpr double kZScaleMin = 1e-3;
inline constexpr double kRateFloor = 1e-12;

struct ModelConfig {
  int cy = 64;     // latent channels
  int cz = 32;     // hyper-latent channels
  int cf = 64;     // synthesized feature channels
  int cctx = 64;   // context / fused feature channels
  int chead = 64;  // entropy-head hidden width
  int K = 5;       // mixture components (1..10)
  int N = 2;       // semantic classes
  bool channel_specific_weights = true;  // mixture-weight variant toggle
  bool single_head = false;              // one head for all classes
  int clamp_lo = -64;
  int clamp_hi = 63;

  int num_heads() const { return single_head ? 1 : N; }
  int latent_alphabet() const { return clamp_hi - clamp_lo + 1; }
  void validate() const;
};

class LatentCodec {
 public:
  LatentCodec(const ModelConfig& cfg, ParamStore& store);

  // x_norm [B,3,H,W] (H, W multiples of 16) -> y [B,cy,H/16,W/16]
  nd::Tensor analyze(const nd::Tensor& x_norm, nd::Tape* tape = nullptr) const;
  // y_hat -> features f [B,cf,H,W]
  nd::Tensor synthesize(const nd::Tensor& y_hat,
                        nd::Tape* tape = nullptr) const;
  // y_hat -> z [B,cz,~H/64,~W/64]
  nd::Tensor hyper_analyze(const nd::Tensor& y_hat,
                           nd::Tape* tape = nullptr) const;
  // z_hat -> concatenated (mu, raw_sigma) [B,2cy,yh,yw]; output paddings
  // are derived from the target latent size.
  nd::Tensor hyper_synthesize(const nd::Tensor& z_hat, int yh, int yw,
                              nd::Tape* tape = nullptr) const;
  // Splits hyper_synthesize output; sigma = softplus(raw) + kSigmaMin.
  static nd::Tensor gauss_mu(const nd::Tensor& hs_out, nd::Tape* tape);
  static nd::Tensor gauss_sigma(const nd::Tensor& hs_out, nd::Tape* tape);

  // Training rates in bits (discretized Gaussian / logistic, floored at
  // kRateFloor), summed over all elements.
  nd::Tensor y_rate_bits(const nd::Tensor& y_tilde, const nd::Tensor& mu,
                         const nd::Tensor& sigma, nd::Tape* tape) const;
  nd::Tensor z_rate_bits(const nd::Tensor& z_tilde, nd::Tape* tape) const;

  // --- coding side (deterministic scalars) ---------------------------------
  // pmf over the clamp alphabet with tails absorbed into the end bins.
  void gauss_pmf(double mu, double sigma, double* pmf) const;
  coder::CdfTable gauss_cdf(double mu, double sigma) const;
  void z_pmf(int channel, double* pmf) const;
  coder::CdfTable z_cdf(int channel) const;
  // Model code length (bits) of a clamped symbol under the absorbed pmf.
  double gauss_symbol_bits(int symbol, double mu, double sigma) const;
  double z_symbol_bits(int symbol, int channel) const;

  // Saturating round-quantization to the clamp range; counts saturation
  // events into *clipped when given.
  nd::Tensor clamp_round(const nd::Tensor& t, long* clipped = nullptr) const;

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  // g_a / g_s / h_a / h_s weights and biases, in forward order.
  std::vector<nd::Tensor> ga_w_, ga_b_;
  std::vector<nd::Tensor> gs_w_, gs_b_;
  std::vector<nd::Tensor> ha_w_, ha_b_;
  std::vector<nd::Tensor> hs_w_, hs_b_;
  nd::Tensor z_prior_mu_;     // [cz]
  nd::Tensor z_prior_raw_s_;  // [cz]
};

}  // namespace seec::sic
