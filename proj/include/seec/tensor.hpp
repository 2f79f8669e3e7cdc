#pragma once

// Dense double-precision tensors with reverse-mode differentiation on an
// explicit tape. Coverage is exactly what the codec networks and the
// mixture likelihood need: plain/strided/masked/transposed convolutions,
// a handful of elementwise nonlinearities, channel slicing/concat, and
// channel-axis reductions. Row-major [B,C,H,W] layout, no broadcasting
// beyond scalar-tensor.
//
// Forward passes are deterministic: accumulation order inside every op is
// fixed, and all transcendentals go through the deterministic kernels, so
// identical inputs and weights give bit-identical outputs on any platform.

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "seec/common.hpp"

namespace seec::nd {

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor full(std::vector<int> shape, double v);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[i]; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t size() const { return impl_->data.size(); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  // Lazily allocated, zero-initialized gradient buffer (same shape).
  double* grad();
  const std::vector<double>& grad_values() const { return impl_->grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  void zero_grad();

  double item() const;

  // Identity of the underlying buffer; two Tensor handles may share it.
  const void* id() const { return impl_.get(); }

  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

std::size_t shape_numel(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Recorded operations for one forward pass. backward() visits nodes in
// reverse recording order (reverse topological order for a tape), resets
// the gradient of every op output first, then accumulates into leaves, so
// running backward twice without zeroing leaf grads doubles them exactly.
class Tape {
 public:
  void record(const Tensor& output, std::function<void()> backward_fn);
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<Tensor::Impl> output;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
};

enum class MaskType { A, B };

// --- convolutions ----------------------------------------------------------
// conv2d:           in [B,C,H,W], w [O,C,kh,kw], bias [O] or undefined.
// conv2d_transpose: in [B,C,H,W], w [C,O,kh,kw]; out side = (H-1)*stride
//                   - 2*pad + kh + out_pad.
// masked_conv2d:    stride 1, pad (k-1)/2; type A taps strictly before the
//                   center in raster order, type B adds the center.
Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& bias,
              int stride, int pad, Tape* tape = nullptr);
Tensor conv2d_transpose(const Tensor& in, const Tensor& w, const Tensor& bias,
                        int stride, int pad, int out_pad_h, int out_pad_w,
                        Tape* tape = nullptr);
Tensor masked_conv2d(const Tensor& in, const Tensor& w, const Tensor& bias,
                     MaskType type, Tape* tape = nullptr);

// True when kernel tap (ky,kx) of a kh x kw kernel participates in a
// masked convolution of the given type.
bool masked_tap_allowed(MaskType type, int ky, int kx, int kh, int kw);

// --- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor div(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add_scalar(const Tensor& a, double s, Tape* tape = nullptr);
Tensor mul_scalar(const Tensor& a, double s, Tape* tape = nullptr);
Tensor leaky_relu(const Tensor& x, double slope, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);
Tensor tanh_op(const Tensor& x, Tape* tape = nullptr);
Tensor softplus(const Tensor& x, Tape* tape = nullptr);
Tensor exp_op(const Tensor& x, Tape* tape = nullptr);
Tensor log_op(const Tensor& x, Tape* tape = nullptr);
Tensor normal_cdf(const Tensor& x, Tape* tape = nullptr);
Tensor clamp_min(const Tensor& x, double floor, Tape* tape = nullptr);

// --- shape ops (channel axis of [B,C,H,W]) ---------------------------------
Tensor slice_channels(const Tensor& x, int c0, int c1, Tape* tape = nullptr);
Tensor concat_channels(const std::vector<Tensor>& xs, Tape* tape = nullptr);
Tensor repeat_channels(const Tensor& x, int times, Tape* tape = nullptr);
// Tiles a per-channel parameter vector [C] to [B,C,H,W]; backward sums over
// batch and space (used by learned per-channel priors).
Tensor tile_channel_param(const Tensor& param, int B, int H, int W,
                          Tape* tape = nullptr);

// --- channel-axis reductions -----------------------------------------------
Tensor softmax_channels(const Tensor& x, Tape* tape = nullptr);
Tensor sum_channels(const Tensor& x, Tape* tape = nullptr);       // keepdim
Tensor logsumexp_channels(const Tensor& x, Tape* tape = nullptr); // keepdim
Tensor reduce_sum(const Tensor& x, Tape* tape = nullptr);         // -> [1]

// --- quantization ----------------------------------------------------------
// Noise mode adds iid U(-0.5, 0.5) (training relaxation, gradient passes
// through); round mode rounds half away from zero and is inference-only.
Tensor quantize_noise(const Tensor& x, std::mt19937_64& rng,
                      Tape* tape = nullptr);
Tensor quantize_round(const Tensor& x);
double round_half_away(double v);

}  // namespace seec::nd
