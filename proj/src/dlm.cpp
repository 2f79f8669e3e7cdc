#include "seec/dlm.hpp"

#include <cmath>

#include "seec/kernels.hpp"

namespace seec::dlm {

using kern::det_exp;
using kern::det_log;
using kern::det_sigmoid;
using kern::det_softplus;
using kern::det_tanh;

MixtureParams materialize(const double* raw, const HeadLayout& layout) {
  const int K = layout.K;
  SEEC_CHECK(K >= 1 && K <= kMaxK);
  MixtureParams p;
  p.K = K;
  for (int c = 0; c < 3; ++c) {
    const double* logits = raw + layout.logit_offset(c);
    double m = logits[0];
    for (int k = 1; k < K; ++k) m = std::max(m, logits[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
      p.pi[c][k] = det_exp(logits[k] - m);
      sum += p.pi[c][k];
    }
    for (int k = 0; k < K; ++k) p.pi[c][k] /= sum;
    const double* mu = raw + layout.mu_offset(c);
    const double* rs = raw + layout.scale_offset(c);
    const double* bt = raw + layout.beta_offset(c);
    for (int k = 0; k < K; ++k) {
      p.mu[c][k] = mu[k];
      p.s[c][k] = det_softplus(rs[k]) + kScaleMin;
      p.beta[c][k] = det_tanh(bt[k]);
    }
  }
  return p;
}

double bin_probability(int x, double mu, double s) {
  // Centered form (sigmoid - 0.5, exactly odd) so symmetric configurations
  // produce bit-identical probabilities and argmax ties resolve by rule.
  double upper =
      x >= 255 ? 0.5 : kern::det_sigmoid_centered((x + 0.5 - mu) / s);
  double lower =
      x <= 0 ? -0.5 : kern::det_sigmoid_centered((x - 0.5 - mu) / s);
  return upper - lower;
}

void conditional_means(const MixtureParams& p, double x_r, double x_g,
                       std::array<std::array<double, kMaxK>, 3>& mu_hat) {
  for (int k = 0; k < p.K; ++k) {
    mu_hat[0][k] = p.mu[0][k];
    mu_hat[1][k] = p.mu[1][k] + p.beta[0][k] * x_r;
    mu_hat[2][k] = p.mu[2][k] + p.beta[1][k] * x_r + p.beta[2][k] * x_g;
  }
}

namespace {

inline double to_norm(int v) { return v / kPixelScale - 1.0; }

// Pixel-unit conditional mean and scale of component k for `channel`,
// conditioning on already-coded channel values.
inline void pixel_unit_component(const MixtureParams& p, int channel, int k,
                                 int x_r, int x_g, double* mu_pix,
                                 double* s_pix) {
  double mu_n = p.mu[channel][k];
  if (channel == 1) {
    mu_n += p.beta[0][k] * to_norm(x_r);
  } else if (channel == 2) {
    mu_n += p.beta[1][k] * to_norm(x_r) + p.beta[2][k] * to_norm(x_g);
  }
  *mu_pix = (mu_n + 1.0) * kPixelScale;
  *s_pix = p.s[channel][k] * kPixelScale;
}

}  // namespace

void channel_pmf(const MixtureParams& p, int channel, int x_r, int x_g,
                 double* pmf256) {
  SEEC_CHECK(channel >= 0 && channel < 3);
  const int K = p.K;
  // 255 interior edges per component; bin v spans (edge[v-1], edge[v]] with
  // edge[-1] = 0 and edge[255] = 1, so each edge is evaluated once and the
  // pmf telescopes to exactly 1.
  double args[kMaxK * 255];
  double sig[kMaxK * 255];
  double mu_pix[kMaxK], s_pix[kMaxK];
  for (int k = 0; k < K; ++k) {
    pixel_unit_component(p, channel, k, x_r, x_g, &mu_pix[k], &s_pix[k]);
    double inv_s = 1.0 / s_pix[k];
    double* a = args + k * 255;
    for (int v = 0; v < 255; ++v) a[v] = (v + 0.5 - mu_pix[k]) * inv_s;
  }
  kern::vsigc(args, sig, static_cast<std::size_t>(K) * 255);
  for (int v = 0; v < 256; ++v) pmf256[v] = 0.0;
  for (int k = 0; k < K; ++k) {
    const double* sg = sig + k * 255;
    double w = p.pi[channel][k];
    double prev = -0.5;
    for (int v = 0; v < 255; ++v) {
      pmf256[v] += w * (sg[v] - prev);
      prev = sg[v];
    }
    pmf256[255] += w * (0.5 - prev);
  }
}

double pixel_log_likelihood(const MixtureParams& p, int x_r, int x_g,
                            int x_b) {
  const int xs[3] = {x_r, x_g, x_b};
  const double log_floor = det_log(kLikelihoodFloor);
  double total_log2 = 0.0;
  for (int c = 0; c < 3; ++c) {
    // log-sum-exp over components of log pi_k + log binprob_k.
    double terms[kMaxK];
    double m = -1e300;
    for (int k = 0; k < p.K; ++k) {
      double mu_pix, s_pix;
      pixel_unit_component(p, c, k, x_r, x_g, &mu_pix, &s_pix);
      double bp = bin_probability(xs[c], mu_pix, s_pix);
      double lt = det_log(p.pi[c][k]) + det_log(bp > 1e-300 ? bp : 1e-300);
      terms[k] = lt;
      m = std::max(m, lt);
    }
    double sum = 0.0;
    for (int k = 0; k < p.K; ++k) sum += det_exp(terms[k] - m);
    double log_p = m + det_log(sum);
    if (log_p < log_floor) log_p = log_floor;
    total_log2 += log_p;
  }
  return total_log2 * 1.4426950408889634073599;  // nats -> bits
}

coder::CdfTable channel_cdf(const MixtureParams& p, int channel, int x_r,
                            int x_g) {
  double pmf[256];
  channel_pmf(p, channel, x_r, x_g, pmf);
  return coder::quantize_pmf(std::span<const double>(pmf, 256));
}

Rgb argmax_sample(const MixtureParams& p) {
  Rgb out;
  double pmf[256];
  int* fields[3] = {&out.r, &out.g, &out.b};
  for (int c = 0; c < 3; ++c) {
    channel_pmf(p, c, out.r, out.g, pmf);
    int best = 0;
    for (int v = 1; v < 256; ++v)
      if (pmf[v] > pmf[best]) best = v;  // strict: ties go to the smaller v
    *fields[c] = best;
  }
  return out;
}

// --------------------------------------------------------------------------
// training composite
// --------------------------------------------------------------------------

namespace {

using nd::Tensor;

// Constant (no-grad) edge tensors for one channel: the normalized bin edge
// values, with the outermost edges pushed to +-1e9 so the sigmoid saturates
// to exactly 0/1 and its gradient vanishes, realizing the clipped-edge rule
// without masking.
void edge_tensors(const Tensor& target_u8, int channel, int K, Tensor* up,
                  Tensor* lo) {
  const int B = target_u8.dim(0), H = target_u8.dim(2), W = target_u8.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor u({B, 1, H, W}), l({B, 1, H, W});
  for (int b = 0; b < B; ++b) {
    const double* x =
        target_u8.data() + (static_cast<std::size_t>(b) * 3 + channel) * hw;
    double* uv = u.data() + b * hw;
    double* lv = l.data() + b * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      int v = static_cast<int>(x[i]);
      uv[i] = v >= 255 ? 1e9 : (v + 0.5) / kPixelScale - 1.0;
      lv[i] = v <= 0 ? -1e9 : (v - 0.5) / kPixelScale - 1.0;
    }
  }
  *up = nd::repeat_channels(u, K);
  *lo = nd::repeat_channels(l, K);
}

Tensor norm_channel(const Tensor& target_u8, int channel, int K) {
  const int B = target_u8.dim(0), H = target_u8.dim(2), W = target_u8.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor t({B, 1, H, W});
  for (int b = 0; b < B; ++b) {
    const double* x =
        target_u8.data() + (static_cast<std::size_t>(b) * 3 + channel) * hw;
    double* tv = t.data() + b * hw;
    for (std::size_t i = 0; i < hw; ++i) tv[i] = x[i] / kPixelScale - 1.0;
  }
  return nd::repeat_channels(t, K);
}

}  // namespace

nd::Tensor mixture_nll_bits(const nd::Tensor& head_out,
                            const nd::Tensor& target_u8,
                            const HeadLayout& layout, nd::Tape* tape) {
  SEEC_CHECK_MSG(head_out.dim(1) == layout.channels(),
                 "head output width does not match layout");
  SEEC_CHECK_MSG(target_u8.dim(1) == 3, "target must be [B,3,H,W]");
  const int K = layout.K;
  const double log_floor = std::log(kLikelihoodFloor);

  Tensor xr_n = norm_channel(target_u8, 0, K);
  Tensor xg_n = norm_channel(target_u8, 1, K);

  Tensor bits_total;
  for (int c = 0; c < 3; ++c) {
    Tensor logits = nd::slice_channels(head_out, layout.logit_offset(c),
                                       layout.logit_offset(c) + K, tape);
    Tensor log_pi = nd::sub(
        logits,
        nd::repeat_channels(nd::logsumexp_channels(logits, tape), K, tape),
        tape);
    Tensor mu = nd::slice_channels(head_out, layout.mu_offset(c),
                                   layout.mu_offset(c) + K, tape);
    Tensor s = nd::add_scalar(
        nd::softplus(nd::slice_channels(head_out, layout.scale_offset(c),
                                        layout.scale_offset(c) + K, tape),
                     tape),
        kScaleMin, tape);
    Tensor mu_hat = mu;
    if (c == 1) {
      Tensor beta = nd::tanh_op(
          nd::slice_channels(head_out, layout.beta_offset(0),
                             layout.beta_offset(0) + K, tape),
          tape);
      mu_hat = nd::add(mu, nd::mul(beta, xr_n, tape), tape);
    } else if (c == 2) {
      Tensor beta_rb = nd::tanh_op(
          nd::slice_channels(head_out, layout.beta_offset(1),
                             layout.beta_offset(1) + K, tape),
          tape);
      Tensor beta_gb = nd::tanh_op(
          nd::slice_channels(head_out, layout.beta_offset(2),
                             layout.beta_offset(2) + K, tape),
          tape);
      mu_hat = nd::add(mu,
                       nd::add(nd::mul(beta_rb, xr_n, tape),
                               nd::mul(beta_gb, xg_n, tape), tape),
                       tape);
    }
    Tensor up, lo;
    edge_tensors(target_u8, c, K, &up, &lo);
    Tensor p_bin = nd::sub(
        nd::sigmoid(nd::div(nd::sub(up, mu_hat, tape), s, tape), tape),
        nd::sigmoid(nd::div(nd::sub(lo, mu_hat, tape), s, tape), tape),
        tape);
    Tensor log_terms = nd::add(
        log_pi, nd::log_op(nd::clamp_min(p_bin, 1e-300, tape), tape), tape);
    Tensor log_p = nd::clamp_min(nd::logsumexp_channels(log_terms, tape),
                                 log_floor, tape);
    Tensor bits_c = nd::mul_scalar(log_p, -1.4426950408889634073599, tape);
    bits_total = c == 0 ? bits_c : nd::add(bits_total, bits_c, tape);
  }
  return bits_total;
}

}  // namespace seec::dlm
