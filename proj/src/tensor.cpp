#include "seec/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "seec/kernels.hpp"

namespace seec::nd {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline std::size_t plane_offset(const Tensor& t, int b, int c) {
  const auto& s = t.shape();
  return (static_cast<std::size_t>(b) * s[1] + c) *
         (static_cast<std::size_t>(s[2]) * s[3]);
}

void check_4d(const Tensor& t, const char* what) {
  SEEC_CHECK_MSG(t.defined() && t.rank() == 4, what << " must be 4-D");
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) {
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(shape_numel(impl_->shape), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) {
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  SEEC_CHECK_MSG(shape_numel(impl_->shape) == data.size(),
                 "shape/data size mismatch");
  impl_->data = std::move(data);
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

double* Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad.data();
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty())
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  SEEC_CHECK_MSG(size() == 1, "item() requires a scalar tensor");
  return impl_->data[0];
}

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    SEEC_CHECK_MSG(d > 0, "non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
  nodes_.push_back({output.impl_, std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  SEEC_CHECK_MSG(loss.defined() && loss.size() == 1,
                 "backward requires a scalar loss");
  // Reset op-output grads so repeated backward calls re-derive the same
  // increments into leaf gradients (leaves are never op outputs).
  for (auto& n : nodes_) {
    if (n.output->grad.empty())
      n.output->grad.assign(n.output->data.size(), 0.0);
    else
      std::fill(n.output->grad.begin(), n.output->grad.end(), 0.0);
  }
  Tensor l = loss;
  l.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->backward_fn();
  }
}

void Tape::clear() { nodes_.clear(); }

// --------------------------------------------------------------------------
// convolutions
// --------------------------------------------------------------------------

bool masked_tap_allowed(MaskType type, int ky, int kx, int kh, int kw) {
  int cy = kh / 2, cx = kw / 2;
  if (ky < cy) return true;
  if (ky > cy) return false;
  if (kx < cx) return true;
  return type == MaskType::B && kx == cx;
}

namespace {

// Accumulates one kernel tap over an output plane: out[oy,ox] += wv *
// in[oy*stride+ky-pad, ox*stride+kx-pad]. Tap order across calls fixes the
// per-element accumulation order; stride-1 rows go through the dispatched
// axpy kernel (lane-independent, bit-identical to scalar).
void tap_accumulate(double wv, const double* in, int h, int w, double* out,
                    int oh, int ow, int stride, int pad, int ky, int kx) {
  for (int oy = 0; oy < oh; ++oy) {
    int iy = oy * stride + ky - pad;
    if (iy < 0 || iy >= h) continue;
    const double* in_row = in + static_cast<std::size_t>(iy) * w;
    double* out_row = out + static_cast<std::size_t>(oy) * ow;
    if (stride == 1) {
      int ox0 = std::max(0, pad - kx);
      int ox1 = std::min(ow, w + pad - kx);
      if (ox1 > ox0)
        kern::axpy(wv, in_row + ox0 + kx - pad, out_row + ox0, ox1 - ox0);
    } else {
      for (int ox = 0; ox < ow; ++ox) {
        int ix = ox * stride + kx - pad;
        if (ix < 0 || ix >= w) continue;
        out_row[ox] += wv * in_row[ix];
      }
    }
  }
}

// grad_in[iy,ix] += wv * gout[oy,ox] for the same index map (scatter form).
void tap_scatter(double wv, const double* gout, int oh, int ow, double* gin,
                 int h, int w, int stride, int pad, int ky, int kx) {
  for (int oy = 0; oy < oh; ++oy) {
    int iy = oy * stride + ky - pad;
    if (iy < 0 || iy >= h) continue;
    const double* g_row = gout + static_cast<std::size_t>(oy) * ow;
    double* gin_row = gin + static_cast<std::size_t>(iy) * w;
    if (stride == 1) {
      int ox0 = std::max(0, pad - kx);
      int ox1 = std::min(ow, w + pad - kx);
      if (ox1 > ox0)
        kern::axpy(wv, g_row + ox0, gin_row + ox0 + kx - pad, ox1 - ox0);
    } else {
      for (int ox = 0; ox < ow; ++ox) {
        int ix = ox * stride + kx - pad;
        if (ix < 0 || ix >= w) continue;
        gin_row[ix] += wv * g_row[ox];
      }
    }
  }
}

double tap_dot(const double* in, int h, int w, const double* gout, int oh,
               int ow, int stride, int pad, int ky, int kx) {
  double acc = 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    int iy = oy * stride + ky - pad;
    if (iy < 0 || iy >= h) continue;
    const double* in_row = in + static_cast<std::size_t>(iy) * w;
    const double* g_row = gout + static_cast<std::size_t>(oy) * ow;
    if (stride == 1) {
      int ox0 = std::max(0, pad - kx);
      int ox1 = std::min(ow, w + pad - kx);
      if (ox1 > ox0)
        acc += kern::dot4(in_row + ox0 + kx - pad, g_row + ox0, ox1 - ox0);
    } else {
      for (int ox = 0; ox < ow; ++ox) {
        int ix = ox * stride + kx - pad;
        if (ix < 0 || ix >= w) continue;
        acc += in_row[ix] * g_row[ox];
      }
    }
  }
  return acc;
}

Tensor conv2d_impl(const Tensor& in, const Tensor& w, const Tensor& bias,
                   int stride, int pad, Tape* tape, bool masked,
                   MaskType type) {
  check_4d(in, "conv input");
  check_4d(w, "conv weight");
  const int B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  SEEC_CHECK_MSG(w.dim(1) == C, "conv weight channel mismatch");
  SEEC_CHECK_MSG(kh % 2 == 1 && kw % 2 == 1, "conv kernel sizes must be odd");
  SEEC_CHECK(stride >= 1 && pad >= 0);
  if (masked) {
    SEEC_CHECK_MSG(stride == 1 && pad == kh / 2 && pad == kw / 2,
                   "masked conv requires stride 1, same padding");
  }
  if (bias.defined())
    SEEC_CHECK_MSG(bias.size() == static_cast<std::size_t>(O),
                   "conv bias size mismatch");
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  SEEC_CHECK_MSG(OH > 0 && OW > 0, "conv output would be empty");

  Tensor out({B, O, OH, OW});
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < O; ++o) {
      double* out_p = out.data() + plane_offset(out, b, o);
      if (bias.defined()) {
        double bv = bias.data()[o];
        std::fill(out_p, out_p + static_cast<std::size_t>(OH) * OW, bv);
      }
      for (int c = 0; c < C; ++c) {
        const double* in_p = in.data() + plane_offset(in, b, c);
        const double* w_p =
            w.data() + (static_cast<std::size_t>(o) * C + c) * kh * kw;
        for (int ky = 0; ky < kh; ++ky) {
          for (int kx = 0; kx < kw; ++kx) {
            if (masked && !masked_tap_allowed(type, ky, kx, kh, kw)) continue;
            tap_accumulate(w_p[ky * kw + kx], in_p, H, W, out_p, OH, OW,
                           stride, pad, ky, kx);
          }
        }
      }
    }
  }

  bool rec = tape && (in.requires_grad() || w.requires_grad() ||
                      (bias.defined() && bias.requires_grad()));
  if (rec) {
    out.set_requires_grad(true);
    Tensor in_c = in, w_c = w, bias_c = bias, out_c = out;
    tape->record(out, [=]() mutable {
      const double* gout = out_c.grad_values().data();
      if (bias_c.defined() && bias_c.requires_grad()) {
        double* gb = bias_c.grad();
        for (int b = 0; b < B; ++b)
          for (int o = 0; o < O; ++o) {
            const double* g = gout + plane_offset(out_c, b, o);
            double acc = 0.0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
              acc += g[i];
            gb[o] += acc;
          }
      }
      if (w_c.requires_grad()) {
        double* gw = w_c.grad();
        for (int o = 0; o < O; ++o)
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                if (masked && !masked_tap_allowed(type, ky, kx, kh, kw))
                  continue;
                double acc = 0.0;
                for (int b = 0; b < B; ++b) {
                  acc += tap_dot(in_c.data() + plane_offset(in_c, b, c), H, W,
                                 gout + plane_offset(out_c, b, o), OH, OW,
                                 stride, pad, ky, kx);
                }
                gw[(static_cast<std::size_t>(o) * C + c) * kh * kw +
                   ky * kw + kx] += acc;
              }
      }
      if (in_c.requires_grad()) {
        double* gin = in_c.grad();
        for (int b = 0; b < B; ++b)
          for (int o = 0; o < O; ++o) {
            const double* g = gout + plane_offset(out_c, b, o);
            for (int c = 0; c < C; ++c) {
              const double* w_p =
                  w_c.data() + (static_cast<std::size_t>(o) * C + c) * kh * kw;
              double* gin_p = gin + plane_offset(in_c, b, c);
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  if (masked && !masked_tap_allowed(type, ky, kx, kh, kw))
                    continue;
                  tap_scatter(w_p[ky * kw + kx], g, OH, OW, gin_p, H, W,
                              stride, pad, ky, kx);
                }
            }
          }
      }
    });
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& bias,
              int stride, int pad, Tape* tape) {
  return conv2d_impl(in, w, bias, stride, pad, tape, false, MaskType::A);
}

Tensor masked_conv2d(const Tensor& in, const Tensor& w, const Tensor& bias,
                     MaskType type, Tape* tape) {
  SEEC_CHECK_MSG(w.rank() == 4 && w.dim(2) % 2 == 1 && w.dim(3) % 2 == 1,
                 "masked conv kernel sizes must be odd");
  return conv2d_impl(in, w, bias, 1, w.dim(2) / 2, tape, true, type);
}

Tensor conv2d_transpose(const Tensor& in, const Tensor& w, const Tensor& bias,
                        int stride, int pad, int out_pad_h, int out_pad_w,
                        Tape* tape) {
  check_4d(in, "tconv input");
  check_4d(w, "tconv weight");
  const int B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  SEEC_CHECK_MSG(w.dim(0) == C, "tconv weight channel mismatch");
  const int O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  SEEC_CHECK_MSG(kh % 2 == 1 && kw % 2 == 1, "tconv kernel sizes must be odd");
  SEEC_CHECK(stride >= 1 && pad >= 0);
  SEEC_CHECK(out_pad_h >= 0 && out_pad_h < stride && out_pad_w >= 0 &&
             out_pad_w < stride);
  const int OH = (H - 1) * stride - 2 * pad + kh + out_pad_h;
  const int OW = (W - 1) * stride - 2 * pad + kw + out_pad_w;
  SEEC_CHECK_MSG(OH > 0 && OW > 0, "tconv output would be empty");
  if (bias.defined())
    SEEC_CHECK_MSG(bias.size() == static_cast<std::size_t>(O),
                   "tconv bias size mismatch");

  Tensor out({B, O, OH, OW});
  // Scatter form: out[iy*s+ky-p, ix*s+kx-p] += w[c,o,ky,kx] * in[c,iy,ix].
  for (int b = 0; b < B; ++b) {
    for (int o = 0; o < O; ++o) {
      double* out_p = out.data() + plane_offset(out, b, o);
      if (bias.defined()) {
        double bv = bias.data()[o];
        std::fill(out_p, out_p + static_cast<std::size_t>(OH) * OW, bv);
      }
      for (int c = 0; c < C; ++c) {
        const double* in_p = in.data() + plane_offset(in, b, c);
        const double* w_p =
            w.data() + (static_cast<std::size_t>(c) * O + o) * kh * kw;
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            double wv = w_p[ky * kw + kx];
            for (int iy = 0; iy < H; ++iy) {
              int oy = iy * stride + ky - pad;
              if (oy < 0 || oy >= OH) continue;
              const double* in_row = in_p + static_cast<std::size_t>(iy) * W;
              double* out_row = out_p + static_cast<std::size_t>(oy) * OW;
              if (stride == 1) {
                int ix0 = std::max(0, pad - kx);
                int ix1 = std::min(W, OW + pad - kx);
                if (ix1 > ix0)
                  kern::axpy(wv, in_row + ix0, out_row + ix0 + kx - pad,
                             ix1 - ix0);
              } else {
                for (int ix = 0; ix < W; ++ix) {
                  int ox = ix * stride + kx - pad;
                  if (ox < 0 || ox >= OW) continue;
                  out_row[ox] += wv * in_row[ix];
                }
              }
            }
          }
      }
    }
  }

  bool rec = tape && (in.requires_grad() || w.requires_grad() ||
                      (bias.defined() && bias.requires_grad()));
  if (rec) {
    out.set_requires_grad(true);
    Tensor in_c = in, w_c = w, bias_c = bias, out_c = out;
    tape->record(out, [=]() mutable {
      const double* gout = out_c.grad_values().data();
      if (bias_c.defined() && bias_c.requires_grad()) {
        double* gb = bias_c.grad();
        for (int b = 0; b < B; ++b)
          for (int o = 0; o < O; ++o) {
            const double* g = gout + plane_offset(out_c, b, o);
            double acc = 0.0;
            for (std::size_t i = 0; i < static_cast<std::size_t>(OH) * OW; ++i)
              acc += g[i];
            gb[o] += acc;
          }
      }
      // grad_in gathers: gin[iy,ix] += w * gout[iy*s+ky-p, ix*s+kx-p].
      if (in_c.requires_grad()) {
        double* gin = in_c.grad();
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) {
            double* gin_p = gin + plane_offset(in_c, b, c);
            for (int o = 0; o < O; ++o) {
              const double* g = gout + plane_offset(out_c, b, o);
              const double* w_p =
                  w_c.data() + (static_cast<std::size_t>(c) * O + o) * kh * kw;
              for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                  double wv = w_p[ky * kw + kx];
                  for (int iy = 0; iy < H; ++iy) {
                    int oy = iy * stride + ky - pad;
                    if (oy < 0 || oy >= OH) continue;
                    const double* g_row =
                        g + static_cast<std::size_t>(oy) * OW;
                    double* gin_row =
                        gin_p + static_cast<std::size_t>(iy) * W;
                    for (int ix = 0; ix < W; ++ix) {
                      int ox = ix * stride + kx - pad;
                      if (ox < 0 || ox >= OW) continue;
                      gin_row[ix] += wv * g_row[ox];
                    }
                  }
                }
            }
          }
      }
      if (w_c.requires_grad()) {
        double* gw = w_c.grad();
        for (int c = 0; c < C; ++c)
          for (int o = 0; o < O; ++o)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                double acc = 0.0;
                for (int b = 0; b < B; ++b) {
                  const double* in_p =
                      in_c.data() + plane_offset(in_c, b, c);
                  const double* g = gout + plane_offset(out_c, b, o);
                  for (int iy = 0; iy < H; ++iy) {
                    int oy = iy * stride + ky - pad;
                    if (oy < 0 || oy >= OH) continue;
                    const double* in_row =
                        in_p + static_cast<std::size_t>(iy) * W;
                    const double* g_row =
                        g + static_cast<std::size_t>(oy) * OW;
                    for (int ix = 0; ix < W; ++ix) {
                      int ox = ix * stride + kx - pad;
                      if (ox < 0 || ox >= OW) continue;
                      acc += in_row[ix] * g_row[ox];
                    }
                  }
                }
                gw[(static_cast<std::size_t>(c) * O + o) * kh * kw +
                   ky * kw + kx] += acc;
              }
      }
    });
  }
  return out;
}

// --------------------------------------------------------------------------
// elementwise
// --------------------------------------------------------------------------

namespace {

using UnaryFwd = void (*)(const double*, double*, std::size_t);

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Tape* tape, Fwd fwd, Bwd bwd) {
  Tensor y(x.shape());
  fwd(x.values(), y.values());
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      double* gx = x_c.grad();
      const auto& gy = y_c.grad_values();
      bwd(x_c.values(), y_c.values(), gy, gx);
    });
  }
  return y;
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Tape* tape, Fwd fwd,
                 Bwd bwd) {
  SEEC_CHECK_MSG(same_shape(a, b), "elementwise shape mismatch");
  Tensor y(a.shape());
  fwd(a.values(), b.values(), y.values());
  if (tape && (a.requires_grad() || b.requires_grad())) {
    y.set_requires_grad(true);
    Tensor a_c = a, b_c = b, y_c = y;
    tape->record(y, [=]() mutable { bwd(a_c, b_c, y_c); });
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_op(
      a, b, tape,
      [](const std::vector<double>& av, const std::vector<double>& bv,
         std::vector<double>& yv) {
        kern::vadd(av.data(), bv.data(), yv.data(), yv.size());
      },
      [](Tensor& a_c, Tensor& b_c, Tensor& y_c) {
        const auto& g = y_c.grad_values();
        if (a_c.requires_grad())
          kern::axpy(1.0, g.data(), a_c.grad(), g.size());
        if (b_c.requires_grad())
          kern::axpy(1.0, g.data(), b_c.grad(), g.size());
      });
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_op(
      a, b, tape,
      [](const std::vector<double>& av, const std::vector<double>& bv,
         std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] - bv[i];
      },
      [](Tensor& a_c, Tensor& b_c, Tensor& y_c) {
        const auto& g = y_c.grad_values();
        if (a_c.requires_grad())
          kern::axpy(1.0, g.data(), a_c.grad(), g.size());
        if (b_c.requires_grad())
          kern::axpy(-1.0, g.data(), b_c.grad(), g.size());
      });
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_op(
      a, b, tape,
      [](const std::vector<double>& av, const std::vector<double>& bv,
         std::vector<double>& yv) {
        kern::vmul(av.data(), bv.data(), yv.data(), yv.size());
      },
      [](Tensor& a_c, Tensor& b_c, Tensor& y_c) {
        const auto& g = y_c.grad_values();
        if (a_c.requires_grad()) {
          double* ga = a_c.grad();
          const auto& bv = b_c.values();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (b_c.requires_grad()) {
          double* gb = b_c.grad();
          const auto& av = a_c.values();
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary_op(
      a, b, tape,
      [](const std::vector<double>& av, const std::vector<double>& bv,
         std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] / bv[i];
      },
      [](Tensor& a_c, Tensor& b_c, Tensor& y_c) {
        const auto& g = y_c.grad_values();
        const auto& av = a_c.values();
        const auto& bv = b_c.values();
        if (a_c.requires_grad()) {
          double* ga = a_c.grad();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
        }
        if (b_c.requires_grad()) {
          double* gb = b_c.grad();
          for (std::size_t i = 0; i < g.size(); ++i)
            gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
        }
      });
}

Tensor add_scalar(const Tensor& a, double s, Tape* tape) {
  return unary_op(
      a, tape,
      [s](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = xv[i] + s;
      },
      [](const std::vector<double>&, const std::vector<double>&,
         const std::vector<double>& gy, double* gx) {
        kern::axpy(1.0, gy.data(), gx, gy.size());
      });
}

Tensor mul_scalar(const Tensor& a, double s, Tape* tape) {
  return unary_op(
      a, tape,
      [s](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = xv[i] * s;
      },
      [s](const std::vector<double>&, const std::vector<double>&,
          const std::vector<double>& gy, double* gx) {
        kern::axpy(s, gy.data(), gx, gy.size());
      });
}

Tensor leaky_relu(const Tensor& x, double slope, Tape* tape) {
  return unary_op(
      x, tape,
      [slope](const std::vector<double>& xv, std::vector<double>& yv) {
        kern::vleaky(xv.data(), yv.data(), yv.size(), slope);
      },
      [slope](const std::vector<double>& xv, const std::vector<double>&,
              const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx[i] += xv[i] > 0.0 ? gy[i] : slope * gy[i];
      });
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
  return unary_op(
      x, tape,
      [](const std::vector<double>& xv, std::vector<double>& yv) {
        kern::vsigmoid(xv.data(), yv.data(), yv.size());
      },
      [](const std::vector<double>&, const std::vector<double>& yv,
         const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
      });
}

Tensor tanh_op(const Tensor& x, Tape* tape) {
  return unary_op(
      x, tape,
      [](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i)
          yv[i] = kern::det_tanh(xv[i]);
      },
      [](const std::vector<double>&, const std::vector<double>& yv,
         const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
      });
}

Tensor softplus(const Tensor& x, Tape* tape) {
  return unary_op(
      x, tape,
      [](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i)
          yv[i] = kern::det_softplus(xv[i]);
      },
      [](const std::vector<double>& xv, const std::vector<double>&,
         const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx[i] += gy[i] * kern::det_sigmoid(xv[i]);
      });
}

Tensor exp_op(const Tensor& x, Tape* tape) {
  return unary_op(
      x, tape,
      [](const std::vector<double>& xv, std::vector<double>& yv) {
        kern::vexp(xv.data(), yv.data(), yv.size());
      },
      [](const std::vector<double>&, const std::vector<double>& yv,
         const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i];
      });
}

Tensor log_op(const Tensor& x, Tape* tape) {
  return unary_op(
      x, tape,
      [](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i)
          yv[i] = kern::det_log(xv[i]);
      },
      [](const std::vector<double>& xv, const std::vector<double>&,
         const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] / xv[i];
      });
}

Tensor normal_cdf(const Tensor& x, Tape* tape) {
  return unary_op(
      x, tape,
      [](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i)
          yv[i] = kern::det_normal_cdf(xv[i]);
      },
      [](const std::vector<double>& xv, const std::vector<double>&,
         const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i)
          gx[i] += gy[i] * kInvSqrt2Pi * kern::det_exp(-0.5 * xv[i] * xv[i]);
      });
}

Tensor clamp_min(const Tensor& x, double floor, Tape* tape) {
  return unary_op(
      x, tape,
      [floor](const std::vector<double>& xv, std::vector<double>& yv) {
        for (std::size_t i = 0; i < yv.size(); ++i)
          yv[i] = xv[i] > floor ? xv[i] : floor;
      },
      [floor](const std::vector<double>& xv, const std::vector<double>&,
              const std::vector<double>& gy, double* gx) {
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (xv[i] > floor) gx[i] += gy[i];
      });
}

// --------------------------------------------------------------------------
// shape ops
// --------------------------------------------------------------------------

Tensor slice_channels(const Tensor& x, int c0, int c1, Tape* tape) {
  check_4d(x, "slice input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  SEEC_CHECK_MSG(0 <= c0 && c0 < c1 && c1 <= C, "channel slice out of range");
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor y({B, c1 - c0, H, W});
  for (int b = 0; b < B; ++b)
    for (int c = c0; c < c1; ++c)
      std::copy_n(x.data() + plane_offset(x, b, c), hw,
                  y.data() + plane_offset(y, b, c - c0));
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      double* gx = x_c.grad();
      const double* gy = y_c.grad_values().data();
      for (int b = 0; b < B; ++b)
        for (int c = c0; c < c1; ++c)
          kern::axpy(1.0, gy + plane_offset(y_c, b, c - c0),
                     gx + plane_offset(x_c, b, c), hw);
    });
  }
  return y;
}

Tensor concat_channels(const std::vector<Tensor>& xs, Tape* tape) {
  SEEC_CHECK_MSG(!xs.empty(), "concat of zero tensors");
  check_4d(xs[0], "concat input");
  const int B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int C = 0;
  bool any_grad = false;
  for (const auto& x : xs) {
    check_4d(x, "concat input");
    SEEC_CHECK_MSG(x.dim(0) == B && x.dim(2) == H && x.dim(3) == W,
                   "concat shape mismatch");
    C += x.dim(1);
    any_grad = any_grad || x.requires_grad();
  }
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor y({B, C, H, W});
  int base = 0;
  for (const auto& x : xs) {
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < x.dim(1); ++c)
        std::copy_n(x.data() + plane_offset(x, b, c), hw,
                    y.data() + plane_offset(y, b, base + c));
    base += x.dim(1);
  }
  if (tape && any_grad) {
    y.set_requires_grad(true);
    std::vector<Tensor> xs_c = xs;
    Tensor y_c = y;
    tape->record(y, [=]() mutable {
      const double* gy = y_c.grad_values().data();
      int off = 0;
      for (auto& x : xs_c) {
        if (x.requires_grad()) {
          double* gx = x.grad();
          for (int b = 0; b < B; ++b)
            for (int c = 0; c < x.dim(1); ++c)
              kern::axpy(1.0, gy + plane_offset(y_c, b, off + c),
                         gx + plane_offset(x, b, c), hw);
        }
        off += x.dim(1);
      }
    });
  }
  return y;
}

Tensor repeat_channels(const Tensor& x, int times, Tape* tape) {
  SEEC_CHECK(times >= 1);
  std::vector<Tensor> copies(static_cast<std::size_t>(times), x);
  return concat_channels(copies, tape);
}

// --------------------------------------------------------------------------
// channel reductions
// --------------------------------------------------------------------------

Tensor softmax_channels(const Tensor& x, Tape* tape) {
  check_4d(x, "softmax input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor y(x.shape());
  for (int b = 0; b < B; ++b) {
    const double* xp = x.data() + plane_offset(x, b, 0);
    double* yp = y.data() + plane_offset(y, b, 0);
    for (std::size_t i = 0; i < hw; ++i) {
      double m = xp[i];
      for (int c = 1; c < C; ++c) m = std::max(m, xp[c * hw + i]);
      double s = 0.0;
      for (int c = 0; c < C; ++c) {
        double e = kern::det_exp(xp[c * hw + i] - m);
        yp[c * hw + i] = e;
        s += e;
      }
      for (int c = 0; c < C; ++c) yp[c * hw + i] /= s;
    }
  }
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      double* gx = x_c.grad();
      for (int b = 0; b < B; ++b) {
        const double* yp = y_c.values().data() + plane_offset(y_c, b, 0);
        const double* gy = y_c.grad_values().data() + plane_offset(y_c, b, 0);
        double* gxp = gx + plane_offset(x_c, b, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          double dot = 0.0;
          for (int c = 0; c < C; ++c) dot += gy[c * hw + i] * yp[c * hw + i];
          for (int c = 0; c < C; ++c)
            gxp[c * hw + i] += yp[c * hw + i] * (gy[c * hw + i] - dot);
        }
      }
    });
  }
  return y;
}

Tensor sum_channels(const Tensor& x, Tape* tape) {
  check_4d(x, "sum_channels input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor y({B, 1, H, W});
  for (int b = 0; b < B; ++b) {
    const double* xp = x.data() + plane_offset(x, b, 0);
    double* yp = y.data() + plane_offset(y, b, 0);
    for (std::size_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += xp[c * hw + i];
      yp[i] = s;
    }
  }
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      double* gx = x_c.grad();
      for (int b = 0; b < B; ++b) {
        const double* gy = y_c.grad_values().data() + plane_offset(y_c, b, 0);
        double* gxp = gx + plane_offset(x_c, b, 0);
        for (int c = 0; c < C; ++c)
          kern::axpy(1.0, gy, gxp + c * hw, hw);
      }
    });
  }
  return y;
}

Tensor logsumexp_channels(const Tensor& x, Tape* tape) {
  check_4d(x, "logsumexp input");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor y({B, 1, H, W});
  for (int b = 0; b < B; ++b) {
    const double* xp = x.data() + plane_offset(x, b, 0);
    double* yp = y.data() + plane_offset(y, b, 0);
    for (std::size_t i = 0; i < hw; ++i) {
      double m = xp[i];
      for (int c = 1; c < C; ++c) m = std::max(m, xp[c * hw + i]);
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += kern::det_exp(xp[c * hw + i] - m);
      yp[i] = m + kern::det_log(s);
    }
  }
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      double* gx = x_c.grad();
      for (int b = 0; b < B; ++b) {
        const double* xp = x_c.values().data() + plane_offset(x_c, b, 0);
        const double* yp = y_c.values().data() + plane_offset(y_c, b, 0);
        const double* gy = y_c.grad_values().data() + plane_offset(y_c, b, 0);
        double* gxp = gx + plane_offset(x_c, b, 0);
        for (std::size_t i = 0; i < hw; ++i)
          for (int c = 0; c < C; ++c)
            gxp[c * hw + i] += gy[i] * kern::det_exp(xp[c * hw + i] - yp[i]);
      }
    });
  }
  return y;
}

Tensor reduce_sum(const Tensor& x, Tape* tape) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor y = Tensor::scalar(s);
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      double g = y_c.grad_values()[0];
      double* gx = x_c.grad();
      for (std::size_t i = 0; i < x_c.size(); ++i) gx[i] += g;
    });
  }
  return y;
}

// --------------------------------------------------------------------------
// quantization
// --------------------------------------------------------------------------

Tensor tile_channel_param(const Tensor& param, int B, int H, int W,
                          Tape* tape) {
  SEEC_CHECK_MSG(param.rank() == 1, "tile_channel_param expects a vector");
  const int C = param.dim(0);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor y({B, C, H, W});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      double v = param.values()[c];
      double* p = y.data() + plane_offset(y, b, c);
      std::fill(p, p + hw, v);
    }
  if (tape && param.requires_grad()) {
    y.set_requires_grad(true);
    Tensor p_c = param, y_c = y;
    tape->record(y, [=]() mutable {
      double* gp = p_c.grad();
      const double* gy = y_c.grad_values().data();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const double* g = gy + plane_offset(y_c, b, c);
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += g[i];
          gp[c] += acc;
        }
    });
  }
  return y;
}

double round_half_away(double v) { return std::round(v); }

Tensor quantize_noise(const Tensor& x, std::mt19937_64& rng, Tape* tape) {
  Tensor y(x.shape());
  const auto& xv = x.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i)
    yv[i] = xv[i] + (uniform_unit(rng) - 0.5);
  if (tape && x.requires_grad()) {
    y.set_requires_grad(true);
    Tensor x_c = x, y_c = y;
    tape->record(y, [=]() mutable {
      const auto& gy = y_c.grad_values();
      kern::axpy(1.0, gy.data(), x_c.grad(), gy.size());
    });
  }
  return y;
}

Tensor quantize_round(const Tensor& x) {
  Tensor y(x.shape());
  const auto& xv = x.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = std::round(xv[i]);
  return y;
}

}  // namespace seec::nd
