#pragma once

// Mask-gated multi-entropy pixel model: a causal two-layer masked-conv
// context extractor shared across classes, additive 1x1 fusion with the
// synthesized features, and one two-layer 1x1 entropy head per semantic
// class emitting mixture parameters. Routing is hard: each pixel's
// parameters come from exactly the head its mask class selects.

#include "seec/dlm.hpp"
#include "seec/image.hpp"
#include "seec/sic.hpp"

namespace seec::smem {

using sic::ModelConfig;

class PixelModel {
 public:
  // head_hidden widens the per-head hidden layer; 0 keeps cfg.chead (the
  // parameter-matched single-head ablation passes an explicit width).
  PixelModel(const ModelConfig& cfg, ParamStore& store, int head_hidden = 0);

  dlm::HeadLayout layout() const {
    return {cfg_.K, cfg_.channel_specific_weights};
  }
  int head_for_class(int cls) const { return cfg_.single_head ? 0 : cls; }
  int head_hidden() const { return head_hidden_; }

  // Type-A 5x5 masked conv, leaky-ReLU, type-B 5x5 masked conv.
  nd::Tensor context_features(const nd::Tensor& x_norm,
                              nd::Tape* tape = nullptr) const;
  // leaky(conv1x1_f(f) + conv1x1_c(c_x)); bias lives on the f branch.
  nd::Tensor fuse(const nd::Tensor& f, const nd::Tensor& c_x,
                  nd::Tape* tape = nullptr) const;
  // Full-image output of one head, [B,layout.channels(),H,W].
  nd::Tensor head_output(const nd::Tensor& f_s, int head,
                         nd::Tape* tape = nullptr) const;
  // Pixelwise selection sum_n m_n * head_n(f_s); mask ids given as a const
  // [B,1,H,W] tensor. Ids >= N raise a validation error.
  nd::Tensor route_and_predict(const nd::Tensor& f_s,
                               const nd::Tensor& mask_ids,
                               nd::Tape* tape = nullptr) const;

  // Per-pixel code-length map [B,1,H,W] of the original pixels under the
  // routed parameters (targets as raw 0..255 values in a tensor).
  nd::Tensor nll_bits_map(const nd::Tensor& target_u8, const nd::Tensor& f_s,
                          const nd::Tensor& mask_ids,
                          nd::Tape* tape = nullptr) const;

  // Raw weight views for the serial per-pixel coding loop.
  const nd::Tensor& ctx_a_w() const { return ctx_a_w_; }
  const nd::Tensor& ctx_a_b() const { return ctx_a_b_; }
  const nd::Tensor& ctx_b_w() const { return ctx_b_w_; }
  const nd::Tensor& ctx_b_b() const { return ctx_b_b_; }
  const nd::Tensor& fuse_f_w() const { return fuse_f_w_; }
  const nd::Tensor& fuse_f_b() const { return fuse_f_b_; }
  const nd::Tensor& fuse_c_w() const { return fuse_c_w_; }
  const nd::Tensor& head_w1(int h) const { return head_w1_[h]; }
  const nd::Tensor& head_b1(int h) const { return head_b1_[h]; }
  const nd::Tensor& head_w2(int h) const { return head_w2_[h]; }
  const nd::Tensor& head_b2(int h) const { return head_b2_[h]; }

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  int head_hidden_ = 0;
  nd::Tensor ctx_a_w_, ctx_a_b_, ctx_b_w_, ctx_b_b_;
  nd::Tensor fuse_f_w_, fuse_f_b_, fuse_c_w_;
  std::vector<nd::Tensor> head_w1_, head_b1_, head_w2_, head_b2_;
};

// Converts a MaskMap to the const id tensor route_and_predict consumes.
nd::Tensor mask_to_tensor(const MaskMap& mask);
// Packs an image into a [1,3,H,W] tensor of raw 0..255 values.
nd::Tensor image_to_u8_tensor(const ImageU8& img);
// Same, normalized to [-1, 1].
nd::Tensor image_to_norm_tensor(const ImageU8& img);

// Total and per-class sums of a [1,1,H,W] per-pixel bits map.
struct PixelRate {
  double total_bits = 0.0;
  std::vector<double> class_bits;
};
PixelRate pixel_rate(const nd::Tensor& bits_map, const MaskMap& mask);

}  // namespace seec::smem
