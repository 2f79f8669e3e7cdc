#include "seec/smem.hpp"

#include <cmath>

namespace seec::smem {

namespace {

constexpr double kLeakySlope = 0.01;
constexpr double kInitGain = 0.5;
// Raw-scale bias at init puts the logistic scale near 48 pixel units, which
// keeps untrained predictions close to the uniform 24 bpp limit.
constexpr double kRawScaleInitBias = -0.78;

}  // namespace

PixelModel::PixelModel(const ModelConfig& cfg, ParamStore& store,
                       int head_hidden)
    : cfg_(cfg), head_hidden_(head_hidden > 0 ? head_hidden : cfg.chead) {
  cfg_.validate();
  const int cctx = cfg.cctx, cf = cfg.cf;
  const dlm::HeadLayout lay = layout();

  // Small positive bias init keeps the leaky units in their linear region
  // early, which speeds up the context-regression convergence noticeably.
  ctx_a_w_ = store.create("ctx.a.w", {cctx, 3, 5, 5}, kInitGain, 3 * 12);
  ctx_a_b_ = store.create_const("ctx.a.b", {cctx}, 0.1);
  ctx_b_w_ =
      store.create("ctx.b.w", {cctx, cctx, 5, 5}, kInitGain, cctx * 13);
  ctx_b_b_ = store.create_const("ctx.b.b", {cctx}, 0.1);

  fuse_f_w_ = store.create("fuse.f.w", {cctx, cf, 1, 1}, kInitGain, cf);
  fuse_f_b_ = store.create_const("fuse.f.b", {cctx}, 0.1);
  fuse_c_w_ = store.create("fuse.c.w", {cctx, cctx, 1, 1}, kInitGain, cctx);

  const int heads = cfg_.num_heads();
  for (int h = 0; h < heads; ++h) {
    std::string base = "head." + std::to_string(h);
    head_w1_.push_back(store.create(base + ".w1",
                                    {head_hidden_, cctx, 1, 1}, kInitGain,
                                    cctx));
    head_b1_.push_back(store.create_const(base + ".b1", {head_hidden_}, 0.1));
    // Small output-layer gain so initial predictions ride on the biases.
    head_w2_.push_back(store.create(base + ".w2",
                                    {lay.channels(), head_hidden_, 1, 1}, 0.2,
                                    head_hidden_));
    nd::Tensor b2 = store.create_const(base + ".b2", {lay.channels()}, 0.0);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < lay.K; ++k)
        b2.values()[lay.scale_offset(c) + k] = kRawScaleInitBias;
    head_b2_.push_back(b2);
  }
}

nd::Tensor PixelModel::context_features(const nd::Tensor& x_norm,
                                        nd::Tape* tape) const {
  nd::Tensor t =
      nd::masked_conv2d(x_norm, ctx_a_w_, ctx_a_b_, nd::MaskType::A, tape);
  t = nd::leaky_relu(t, kLeakySlope, tape);
  return nd::masked_conv2d(t, ctx_b_w_, ctx_b_b_, nd::MaskType::B, tape);
}

nd::Tensor PixelModel::fuse(const nd::Tensor& f, const nd::Tensor& c_x,
                            nd::Tape* tape) const {
  SEEC_CHECK_MSG(f.dim(2) == c_x.dim(2) && f.dim(3) == c_x.dim(3),
                 "fuse inputs must share spatial dims");
  nd::Tensor a = nd::conv2d(f, fuse_f_w_, fuse_f_b_, 1, 0, tape);
  nd::Tensor b = nd::conv2d(c_x, fuse_c_w_, nd::Tensor(), 1, 0, tape);
  return nd::leaky_relu(nd::add(a, b, tape), kLeakySlope, tape);
}

nd::Tensor PixelModel::head_output(const nd::Tensor& f_s, int head,
                                   nd::Tape* tape) const {
  SEEC_CHECK(head >= 0 && head < cfg_.num_heads());
  nd::Tensor t = nd::conv2d(f_s, head_w1_[head], head_b1_[head], 1, 0, tape);
  t = nd::leaky_relu(t, kLeakySlope, tape);
  return nd::conv2d(t, head_w2_[head], head_b2_[head], 1, 0, tape);
}

nd::Tensor PixelModel::route_and_predict(const nd::Tensor& f_s,
                                         const nd::Tensor& mask_ids,
                                         nd::Tape* tape) const {
  SEEC_CHECK_MSG(mask_ids.dim(0) == f_s.dim(0) && mask_ids.dim(1) == 1 &&
                     mask_ids.dim(2) == f_s.dim(2) &&
                     mask_ids.dim(3) == f_s.dim(3),
                 "mask tensor shape mismatch");
  for (double v : mask_ids.values())
    if (v < 0 || v >= cfg_.N)
      throw ValidationError("mask class id outside [0, N)");
  if (cfg_.single_head) return head_output(f_s, 0, tape);

  const int C = layout().channels();
  nd::Tensor out;
  for (int n = 0; n < cfg_.N; ++n) {
    nd::Tensor one_hot(mask_ids.shape());
    for (std::size_t i = 0; i < one_hot.size(); ++i)
      one_hot.values()[i] = mask_ids.values()[i] == n ? 1.0 : 0.0;
    nd::Tensor gated = nd::mul(head_output(f_s, n, tape),
                               nd::repeat_channels(one_hot, C), tape);
    out = n == 0 ? gated : nd::add(out, gated, tape);
  }
  return out;
}

nd::Tensor PixelModel::nll_bits_map(const nd::Tensor& target_u8,
                                    const nd::Tensor& f_s,
                                    const nd::Tensor& mask_ids,
                                    nd::Tape* tape) const {
  nd::Tensor params = route_and_predict(f_s, mask_ids, tape);
  return dlm::mixture_nll_bits(params, target_u8, layout(), tape);
}

nd::Tensor mask_to_tensor(const MaskMap& mask) {
  nd::Tensor t({1, 1, mask.height, mask.width});
  for (std::size_t i = 0; i < mask.ids.size(); ++i)
    t.values()[i] = static_cast<double>(mask.ids[i]);
  return t;
}

nd::Tensor image_to_u8_tensor(const ImageU8& img) {
  nd::Tensor t({1, 3, img.height, img.width});
  const std::size_t hw = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      t.values()[c * hw + i] = static_cast<double>(img.pixels[i * 3 + c]);
  return t;
}

nd::Tensor image_to_norm_tensor(const ImageU8& img) {
  nd::Tensor t = image_to_u8_tensor(img);
  for (auto& v : t.values()) v = v / dlm::kPixelScale - 1.0;
  return t;
}

PixelRate pixel_rate(const nd::Tensor& bits_map, const MaskMap& mask) {
  SEEC_CHECK_MSG(bits_map.dim(0) == 1 && bits_map.dim(1) == 1,
                 "bits map must be [1,1,H,W]");
  SEEC_CHECK_MSG(bits_map.dim(2) == mask.height &&
                     bits_map.dim(3) == mask.width,
                 "bits map / mask shape mismatch");
  PixelRate r;
  r.class_bits.assign(mask.num_classes, 0.0);
  for (std::size_t i = 0; i < mask.ids.size(); ++i)
    r.class_bits[mask.ids[i]] += bits_map.values()[i];
  for (double b : r.class_bits) r.total_bits += b;
  return r;
}

}  // namespace seec::smem
