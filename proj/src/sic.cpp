#include "seec/sic.hpp"

#include <cmath>

#include "seec/dlm.hpp"
#include "seec/kernels.hpp"

namespace seec::sic {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr double kInvLn2 = 1.4426950408889634073599;
// Weight init gain: small enough that initial latents and predictions stay
// near zero, which keeps untrained rates close to the uniform limit.
constexpr double kInitGain = 0.5;

}  // namespace

void ModelConfig::validate() const {
  SEEC_CHECK_MSG(cy >= 1 && cz >= 1 && cf >= 1 && cctx >= 1 && chead >= 1,
                 "channel widths must be positive");
  SEEC_CHECK_MSG(K >= 1 && K <= dlm::kMaxK, "K must be in 1..10");
  SEEC_CHECK_MSG(N >= 1 && N <= 255, "N must be in 1..255");
  SEEC_CHECK_MSG(clamp_lo < 0 && clamp_hi > 0 &&
                     clamp_hi - clamp_lo + 1 <= coder::kMaxAlphabet,
                 "invalid latent clamp range");
}

LatentCodec::LatentCodec(const ModelConfig& cfg, ParamStore& store)
    : cfg_(cfg) {
  cfg_.validate();
  const int cy = cfg.cy, cz = cfg.cz, cf = cfg.cf;
  auto conv = [&](const std::string& name, int out, int in, int k,
                  std::vector<nd::Tensor>& ws, std::vector<nd::Tensor>& bs) {
    ws.push_back(store.create(name + ".w", {out, in, k, k}, kInitGain,
                              in * k * k));
    bs.push_back(store.create_const(name + ".b", {out}, 0.0));
  };
  auto tconv = [&](const std::string& name, int in, int out, int k,
                   std::vector<nd::Tensor>& ws, std::vector<nd::Tensor>& bs) {
    // Fan-in per output element of a stride-2 transposed conv is about
    // in * k * k / 4.
    ws.push_back(store.create(name + ".w", {in, out, k, k}, kInitGain,
                              std::max(1, in * k * k / 4)));
    bs.push_back(store.create_const(name + ".b", {out}, 0.0));
  };

  conv("ga.0", cy, 3, 5, ga_w_, ga_b_);
  conv("ga.1", cy, cy, 5, ga_w_, ga_b_);
  conv("ga.2", cy, cy, 5, ga_w_, ga_b_);
  conv("ga.3", cy, cy, 5, ga_w_, ga_b_);

  tconv("gs.0", cy, cf, 5, gs_w_, gs_b_);
  tconv("gs.1", cf, cf, 5, gs_w_, gs_b_);
  tconv("gs.2", cf, cf, 5, gs_w_, gs_b_);
  tconv("gs.3", cf, cf, 5, gs_w_, gs_b_);

  conv("ha.0", cz, cy, 5, ha_w_, ha_b_);
  conv("ha.1", cz, cz, 5, ha_w_, ha_b_);

  tconv("hs.0", cz, cz, 5, hs_w_, hs_b_);
  tconv("hs.1", cz, 2 * cy, 5, hs_w_, hs_b_);

  z_prior_mu_ = store.create_const("zprior.mu", {cz}, 0.0);
  z_prior_raw_s_ = store.create_const("zprior.raw_s", {cz}, 0.55);
}

nd::Tensor LatentCodec::analyze(const nd::Tensor& x_norm,
                                nd::Tape* tape) const {
  nd::Tensor t = x_norm;
  for (std::size_t i = 0; i < ga_w_.size(); ++i) {
    t = nd::conv2d(t, ga_w_[i], ga_b_[i], 2, 2, tape);
    t = nd::leaky_relu(t, kLeakySlope, tape);
  }
  return t;
}

nd::Tensor LatentCodec::synthesize(const nd::Tensor& y_hat,
                                   nd::Tape* tape) const {
  nd::Tensor t = y_hat;
  for (std::size_t i = 0; i < gs_w_.size(); ++i) {
    t = nd::conv2d_transpose(t, gs_w_[i], gs_b_[i], 2, 2, 1, 1, tape);
    t = nd::leaky_relu(t, kLeakySlope, tape);
  }
  return t;
}

nd::Tensor LatentCodec::hyper_analyze(const nd::Tensor& y_hat,
                                      nd::Tape* tape) const {
  nd::Tensor t = nd::conv2d(y_hat, ha_w_[0], ha_b_[0], 2, 2, tape);
  t = nd::leaky_relu(t, kLeakySlope, tape);
  t = nd::conv2d(t, ha_w_[1], ha_b_[1], 2, 2, tape);
  return t;
}

namespace {

// Size produced by a stride-2 5x5 pad-2 conv.
int down2(int n) { return (n - 1) / 2 + 1; }
// Output padding needed for the mirrored transposed conv to hit `target`.
int out_pad_for(int in, int target) {
  int op = target - (2 * in - 1);
  SEEC_CHECK_MSG(op == 0 || op == 1, "transposed conv cannot reach target");
  return op;
}

}  // namespace

nd::Tensor LatentCodec::hyper_synthesize(const nd::Tensor& z_hat, int yh,
                                         int yw, nd::Tape* tape) const {
  const int mid_h = down2(yh), mid_w = down2(yw);
  nd::Tensor t = nd::conv2d_transpose(z_hat, hs_w_[0], hs_b_[0], 2, 2,
                                      out_pad_for(z_hat.dim(2), mid_h),
                                      out_pad_for(z_hat.dim(3), mid_w), tape);
  t = nd::leaky_relu(t, kLeakySlope, tape);
  t = nd::conv2d_transpose(t, hs_w_[1], hs_b_[1], 2, 2,
                           out_pad_for(mid_h, yh), out_pad_for(mid_w, yw),
                           tape);
  return t;
}

nd::Tensor LatentCodec::gauss_mu(const nd::Tensor& hs_out, nd::Tape* tape) {
  return nd::slice_channels(hs_out, 0, hs_out.dim(1) / 2, tape);
}

nd::Tensor LatentCodec::gauss_sigma(const nd::Tensor& hs_out,
                                    nd::Tape* tape) {
  nd::Tensor raw = nd::slice_channels(hs_out, hs_out.dim(1) / 2,
                                      hs_out.dim(1), tape);
  return nd::add_scalar(nd::softplus(raw, tape), kSigmaMin, tape);
}

nd::Tensor LatentCodec::y_rate_bits(const nd::Tensor& y_tilde,
                                    const nd::Tensor& mu,
                                    const nd::Tensor& sigma,
                                    nd::Tape* tape) const {
  nd::Tensor upper = nd::normal_cdf(
      nd::div(nd::add_scalar(nd::sub(y_tilde, mu, tape), 0.5, tape), sigma,
              tape),
      tape);
  nd::Tensor lower = nd::normal_cdf(
      nd::div(nd::add_scalar(nd::sub(y_tilde, mu, tape), -0.5, tape), sigma,
              tape),
      tape);
  nd::Tensor p = nd::clamp_min(nd::sub(upper, lower, tape), kRateFloor, tape);
  nd::Tensor bits = nd::mul_scalar(nd::log_op(p, tape), -kInvLn2, tape);
  return nd::reduce_sum(bits, tape);
}

nd::Tensor LatentCodec::z_rate_bits(const nd::Tensor& z_tilde,
                                    nd::Tape* tape) const {
  const int B = z_tilde.dim(0), H = z_tilde.dim(2), W = z_tilde.dim(3);
  nd::Tensor mu = nd::tile_channel_param(z_prior_mu_, B, H, W, tape);
  nd::Tensor s = nd::add_scalar(
      nd::softplus(nd::tile_channel_param(z_prior_raw_s_, B, H, W, tape),
                   tape),
      kZScaleMin, tape);
  nd::Tensor centered = nd::sub(z_tilde, mu, tape);
  nd::Tensor upper = nd::sigmoid(
      nd::div(nd::add_scalar(centered, 0.5, tape), s, tape), tape);
  nd::Tensor lower = nd::sigmoid(
      nd::div(nd::add_scalar(centered, -0.5, tape), s, tape), tape);
  nd::Tensor p = nd::clamp_min(nd::sub(upper, lower, tape), kRateFloor, tape);
  nd::Tensor bits = nd::mul_scalar(nd::log_op(p, tape), -kInvLn2, tape);
  return nd::reduce_sum(bits, tape);
}

void LatentCodec::gauss_pmf(double mu, double sigma, double* pmf) const {
  const int lo = cfg_.clamp_lo, hi = cfg_.clamp_hi;
  const double inv = 1.0 / sigma;
  // Interior edges between symbol v and v+1 sit at v + 0.5; the alphabet
  // ends absorb the tails, so the pmf sums to 1 exactly.
  double prev = 0.0;
  for (int v = lo; v <= hi; ++v) {
    double upper =
        v == hi ? 1.0 : kern::det_normal_cdf((v + 0.5 - mu) * inv);
    pmf[v - lo] = upper - prev;
    prev = upper;
  }
}

coder::CdfTable LatentCodec::gauss_cdf(double mu, double sigma) const {
  double pmf[coder::kMaxAlphabet];
  gauss_pmf(mu, sigma, pmf);
  return coder::quantize_pmf(
      std::span<const double>(pmf, cfg_.latent_alphabet()));
}

void LatentCodec::z_pmf(int channel, double* pmf) const {
  const int lo = cfg_.clamp_lo, hi = cfg_.clamp_hi;
  double mu = z_prior_mu_.values()[channel];
  double s = kern::det_softplus(z_prior_raw_s_.values()[channel]) + kZScaleMin;
  double inv = 1.0 / s;
  double prev = 0.0;
  for (int v = lo; v <= hi; ++v) {
    double upper =
        v == hi ? 1.0 : kern::det_sigmoid((v + 0.5 - mu) * inv);
    pmf[v - lo] = upper - prev;
    prev = upper;
  }
}

coder::CdfTable LatentCodec::z_cdf(int channel) const {
  double pmf[coder::kMaxAlphabet];
  z_pmf(channel, pmf);
  return coder::quantize_pmf(
      std::span<const double>(pmf, cfg_.latent_alphabet()));
}

double LatentCodec::gauss_symbol_bits(int symbol, double mu,
                                      double sigma) const {
  double pmf[coder::kMaxAlphabet];
  gauss_pmf(mu, sigma, pmf);
  double p = pmf[symbol];
  if (p < kRateFloor) p = kRateFloor;
  return -kern::det_log2(p);
}

double LatentCodec::z_symbol_bits(int symbol, int channel) const {
  double pmf[coder::kMaxAlphabet];
  z_pmf(channel, pmf);
  double p = pmf[symbol];
  if (p < kRateFloor) p = kRateFloor;
  return -kern::det_log2(p);
}

nd::Tensor LatentCodec::clamp_round(const nd::Tensor& t, long* clipped) const {
  nd::Tensor out = nd::quantize_round(t);
  long clips = 0;
  for (auto& v : out.values()) {
    if (v < cfg_.clamp_lo) {
      v = cfg_.clamp_lo;
      ++clips;
    } else if (v > cfg_.clamp_hi) {
      v = cfg_.clamp_hi;
      ++clips;
    }
  }
  if (clipped) *clipped += clips;
  return out;
}

}  // namespace seec::sic
