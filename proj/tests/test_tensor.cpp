#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "seec/common.hpp"
#include "seec/tensor.hpp"

using namespace seec;
using namespace seec::nd;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                     double scale = 1.0, bool rg = false) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * (uniform_unit(rng) * 2.0 - 1.0);
  t.set_requires_grad(rg);
  return t;
}

// Direct 6-loop convolution, the independent reference for conv2d.
Tensor conv2d_oracle(const Tensor& in, const Tensor& w, const Tensor& bias,
                     int stride, int pad) {
  int B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  int O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int OH = (H + 2 * pad - kh) / stride + 1;
  int OW = (W + 2 * pad - kw) / stride + 1;
  Tensor out({B, O, OH, OW});
  auto in_at = [&](int b, int c, int y, int x) -> double {
    if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;
    return in.values()[((static_cast<std::size_t>(b) * C + c) * H + y) * W + x];
  };
  for (int b = 0; b < B; ++b)
    for (int o = 0; o < O; ++o)
      for (int oy = 0; oy < OH; ++oy)
        for (int ox = 0; ox < OW; ++ox) {
          double acc = bias.defined() ? bias.values()[o] : 0.0;
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx)
                acc += w.values()[((static_cast<std::size_t>(o) * C + c) * kh +
                                   ky) * kw + kx] *
                       in_at(b, c, oy * stride + ky - pad,
                             ox * stride + kx - pad);
          out.values()[((static_cast<std::size_t>(b) * O + o) * OH + oy) * OW +
                       ox] = acc;
        }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.values()[i] - b.values()[i]));
  return m;
}

// Central finite differences against the analytic gradient of a scalar
// function of `param`, perturbing a sample of coordinates.
template <typename LossFn>
void check_gradient(Tensor& param, LossFn loss_fn, double tol = 1e-6,
                    int max_coords = 24) {
  param.grad();
  param.zero_grad();  // earlier checks may have accumulated into this leaf
  Tape tape;
  Tensor loss = loss_fn(&tape);
  tape.backward(loss);
  std::vector<double> analytic(param.grad(), param.grad() + param.size());

  std::mt19937_64 pick(42);
  int n = static_cast<int>(param.size());
  int coords = std::min(n, max_coords);
  const double eps = 1e-5;
  for (int t = 0; t < coords; ++t) {
    int i = coords == n ? t : static_cast<int>(pick() % n);
    double saved = param.values()[i];
    param.values()[i] = saved + eps;
    double up = loss_fn(nullptr).item();
    param.values()[i] = saved - eps;
    double dn = loss_fn(nullptr).item();
    param.values()[i] = saved;
    double fd = (up - dn) / (2 * eps);
    double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-8});
    CHECK_MESSAGE(std::fabs(fd - analytic[i]) / denom < tol,
                  "coord " << i << " fd=" << fd << " an=" << analytic[i]);
  }
}

}  // namespace

TEST_CASE("conv2d box sum and identity kernels") {
  // 1x1x3x3 ones input, 3x3 ones kernel, stride 1 pad 1: center 9, corner 4.
  Tensor in = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = conv2d(in, w, Tensor(), 1, 1);
  CHECK(out.values()[4] == doctest::Approx(9.0));
  CHECK(out.values()[0] == doctest::Approx(4.0));
  CHECK(out.values()[2] == doctest::Approx(4.0));

  // Identity kernel reproduces the input exactly.
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({1, 2, 6, 7}, rng);
  Tensor id({2, 2, 3, 3});
  id.values()[(0 * 2 + 0) * 9 + 4] = 1.0;
  id.values()[(1 * 2 + 1) * 9 + 4] = 1.0;
  Tensor y = conv2d(x, id, Tensor(), 1, 1);
  CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv2d matches the 6-loop oracle") {
  std::mt19937_64 rng(11);
  Tensor in = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  for (int stride : {1, 2}) {
    Tensor got = conv2d(in, w, b, stride, 1);
    Tensor want = conv2d_oracle(in, w, b, stride, 1);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
  // Larger asymmetric case.
  Tensor in2 = random_tensor({2, 3, 9, 6}, rng);
  Tensor w2 = random_tensor({4, 3, 5, 5}, rng);
  Tensor got = conv2d(in2, w2, Tensor(), 2, 2);
  CHECK(max_abs_diff(got, conv2d_oracle(in2, w2, Tensor(), 2, 2)) < 1e-12);
}

TEST_CASE("conv2d output shape arithmetic") {
  Tensor in({1, 3, 64, 64});
  Tensor w({8, 3, 5, 5});
  Tensor y = conv2d(in, w, Tensor(), 2, 2);
  CHECK(y.shape() == std::vector<int>{1, 8, 32, 32});
  CHECK_THROWS_AS(conv2d(in, Tensor({8, 4, 5, 5}), Tensor(), 2, 2),
                  ContractError);
  CHECK_THROWS_AS(conv2d(in, Tensor({8, 3, 4, 4}), Tensor(), 1, 1),
                  ContractError);
}

TEST_CASE("conv2d_transpose inverts stride arithmetic and matches scatter oracle") {
  std::mt19937_64 rng(17);
  Tensor in = random_tensor({1, 3, 4, 4}, rng);
  Tensor w = random_tensor({3, 2, 5, 5}, rng);
  Tensor b = random_tensor({2}, rng);
  Tensor y = conv2d_transpose(in, w, b, 2, 2, 1, 1);
  CHECK(y.shape() == std::vector<int>{1, 2, 8, 8});

  // Scatter oracle.
  Tensor want({1, 2, 8, 8});
  for (int o = 0; o < 2; ++o)
    for (std::size_t i = 0; i < 64; ++i)
      want.values()[o * 64 + i] = b.values()[o];
  for (int c = 0; c < 3; ++c)
    for (int o = 0; o < 2; ++o)
      for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix)
          for (int ky = 0; ky < 5; ++ky)
            for (int kx = 0; kx < 5; ++kx) {
              int oy = iy * 2 + ky - 2, ox = ix * 2 + kx - 2;
              if (oy < 0 || oy >= 8 || ox < 0 || ox >= 8) continue;
              want.values()[(static_cast<std::size_t>(o) * 8 + oy) * 8 + ox] +=
                  w.values()[((static_cast<std::size_t>(c) * 2 + o) * 5 + ky) *
                             5 + kx] *
                  in.values()[(static_cast<std::size_t>(c) * 4 + iy) * 4 + ix];
            }
  CHECK(max_abs_diff(y, want) < 1e-12);
}

TEST_CASE("masked conv type A: first pixel sees only the bias") {
  std::mt19937_64 rng(23);
  Tensor in = random_tensor({1, 2, 6, 6}, rng);
  Tensor w = random_tensor({3, 2, 5, 5}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor y = masked_conv2d(in, w, b, MaskType::A);
  for (int o = 0; o < 3; ++o)
    CHECK(y.values()[static_cast<std::size_t>(o) * 36] ==
          doctest::Approx(b.values()[o]).epsilon(1e-15));
}

TEST_CASE("masked conv causality: raster-earlier outputs unaffected") {
  std::mt19937_64 rng(29);
  const int H = 7, W = 6;
  Tensor in = random_tensor({1, 1, H, W}, rng);
  Tensor w = random_tensor({1, 1, 5, 5}, rng);
  for (MaskType type : {MaskType::A, MaskType::B}) {
    Tensor base = masked_conv2d(in, w, Tensor(), type);
    int rr = 3, cc = 2;
    Tensor in2 = in;
    Tensor mod(in.shape(), in.values());
    mod.values()[rr * W + cc] += 1.5;
    Tensor pert = masked_conv2d(mod, w, Tensor(), type);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        bool earlier = r < rr || (r == rr && c < cc);
        bool self = r == rr && c == cc;
        double d = std::fabs(base.values()[r * W + c] -
                             pert.values()[r * W + c]);
        if (earlier) CHECK(d == 0.0);
        // Type A must not see its own position either.
        if (self && type == MaskType::A) CHECK(d == 0.0);
      }
  }
}

TEST_CASE("masked conv equals conv2d with explicitly zeroed kernel") {
  std::mt19937_64 rng(31);
  Tensor in = random_tensor({1, 3, 8, 8}, rng);
  Tensor w = random_tensor({4, 3, 5, 5}, rng);
  Tensor b = random_tensor({4}, rng);
  for (MaskType type : {MaskType::A, MaskType::B}) {
    Tensor wz(w.shape(), w.values());
    for (int o = 0; o < 4; ++o)
      for (int c = 0; c < 3; ++c)
        for (int ky = 0; ky < 5; ++ky)
          for (int kx = 0; kx < 5; ++kx)
            if (!masked_tap_allowed(type, ky, kx, 5, 5))
              wz.values()[((static_cast<std::size_t>(o) * 3 + c) * 5 + ky) *
                          5 + kx] = 0.0;
    Tensor got = masked_conv2d(in, w, b, type);
    Tensor want = conv2d(in, wz, b, 1, 2);
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
  CHECK_THROWS_AS(masked_conv2d(in, Tensor({4, 3, 4, 4}), b, MaskType::A),
                  ContractError);
}

TEST_CASE("backward: linear case grad(w) = x") {
  std::mt19937_64 rng(37);
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tensor w = random_tensor({1, 1, 4, 4}, rng, 1.0, true);
  Tape tape;
  Tensor loss = reduce_sum(mul(w, x, &tape), &tape);
  tape.backward(loss);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(w.grad_values()[i] == doctest::Approx(x.values()[i]).epsilon(1e-15));
}

TEST_CASE("backward: two calls without reset exactly double leaf grads") {
  std::mt19937_64 rng(41);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, 1.0, true);
  Tape tape;
  Tensor y = conv2d(x, w, Tensor(), 1, 1, &tape);
  Tensor loss = reduce_sum(leaky_relu(y, 0.01, &tape), &tape);
  tape.backward(loss);
  std::vector<double> once(w.grad_values());
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(w.grad_values()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-14));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  Tensor v({2}, {1.0, 2.0});
  CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("finite differences: conv2d") {
  std::mt19937_64 rng(43);
  Tensor x = random_tensor({1, 2, 6, 6}, rng, 1.0, true);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, 1.0, true);
  Tensor b = random_tensor({3}, rng, 1.0, true);
  auto make_loss = [&](Tape* t) {
    Tensor y = conv2d(x, w, b, 1, 1, t);
    return reduce_sum(mul(y, y, t), t);
  };
  check_gradient(w, make_loss);
  check_gradient(x, make_loss);
  check_gradient(b, make_loss);
}

TEST_CASE("finite differences: conv2d stride 2 and transpose") {
  std::mt19937_64 rng(47);
  Tensor x = random_tensor({1, 2, 6, 6}, rng, 1.0, true);
  Tensor w = random_tensor({3, 2, 5, 5}, rng, 1.0, true);
  auto loss1 = [&](Tape* t) {
    Tensor y = conv2d(x, w, Tensor(), 2, 2, t);
    return reduce_sum(mul(y, y, t), t);
  };
  check_gradient(w, loss1);
  check_gradient(x, loss1);

  Tensor wt = random_tensor({2, 3, 5, 5}, rng, 1.0, true);
  Tensor bt = random_tensor({3}, rng, 1.0, true);
  auto loss2 = [&](Tape* t) {
    Tensor y = conv2d_transpose(x, wt, bt, 2, 2, 1, 1, t);
    return reduce_sum(mul(y, y, t), t);
  };
  check_gradient(wt, loss2);
  check_gradient(x, loss2);
  check_gradient(bt, loss2);
}

TEST_CASE("finite differences: masked conv") {
  std::mt19937_64 rng(53);
  Tensor x = random_tensor({1, 2, 5, 5}, rng, 1.0, true);
  Tensor w = random_tensor({2, 2, 3, 3}, rng, 1.0, true);
  for (MaskType type : {MaskType::A, MaskType::B}) {
    auto loss = [&, type](Tape* t) {
      Tensor y = masked_conv2d(x, w, Tensor(), type, t);
      return reduce_sum(mul(y, y, t), t);
    };
    check_gradient(w, loss);
    check_gradient(x, loss);
  }
}

TEST_CASE("finite differences: elementwise and reductions") {
  std::mt19937_64 rng(59);
  Tensor a = random_tensor({1, 3, 4, 4}, rng, 0.8, true);
  Tensor b = random_tensor({1, 3, 4, 4}, rng, 0.8, true);
  // Keep b away from zero for div.
  for (auto& v : b.values()) v += v >= 0 ? 1.5 : -1.5;

  auto composite = [&](Tape* t) {
    Tensor u = div(a, b, t);
    Tensor v = mul(sigmoid(u, t), tanh_op(a, t), t);
    Tensor w1 = add(softplus(v, t), mul_scalar(sub(a, b, t), 0.3, t), t);
    Tensor w2 = add(exp_op(mul_scalar(w1, 0.2, t), t),
                    normal_cdf(w1, t), t);
    Tensor w3 = log_op(add_scalar(mul(w2, w2, t), 1.0, t), t);
    return reduce_sum(w3, t);
  };
  check_gradient(a, composite, 1e-5);
  check_gradient(b, composite, 1e-5);

  auto reductions = [&](Tape* t) {
    Tensor sm = softmax_channels(a, t);
    Tensor ls = logsumexp_channels(mul_scalar(a, 2.0, t), t);
    Tensor sc = sum_channels(mul(sm, sm, t), t);
    return reduce_sum(add(add(sc, ls, t), sm.defined() ? ls : ls, t), t);
  };
  check_gradient(a, reductions, 1e-5);

  auto shapes = [&](Tape* t) {
    Tensor s1 = slice_channels(a, 0, 2, t);
    Tensor s2 = slice_channels(a, 1, 3, t);
    Tensor c = concat_channels({s1, s2, repeat_channels(s1, 2, t)}, t);
    Tensor lr = leaky_relu(c, 0.01, t);
    return reduce_sum(mul(lr, lr, t), t);
  };
  check_gradient(a, shapes, 1e-5);
}

TEST_CASE("quantize: round half away from zero and idempotence") {
  Tensor t({6}, {2.5, -2.5, 0.4, -0.4, 1.5, -1.49});
  Tensor r = quantize_round(t);
  CHECK(r.values() == std::vector<double>{3.0, -3.0, 0.0, -0.0, 2.0, -1.0});
  Tensor rr = quantize_round(r);
  for (std::size_t i = 0; i < r.size(); ++i)
    CHECK(rr.values()[i] == r.values()[i]);
}

TEST_CASE("quantize noise stays within half a unit and passes gradient") {
  std::mt19937_64 rng(61);
  Tensor x = random_tensor({1, 1, 8, 8}, rng, 3.0, true);
  std::mt19937_64 noise_rng(7);
  Tensor y = quantize_noise(x, noise_rng);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::fabs(y.values()[i] - x.values()[i]) <= 0.5);

  std::mt19937_64 fixed(99);
  auto loss = [&](Tape* t) {
    std::mt19937_64 local(123);  // same noise each evaluation
    Tensor q = quantize_noise(x, local, t);
    return reduce_sum(mul(q, q, t), t);
  };
  check_gradient(x, loss);
}

TEST_CASE("forward determinism: identical runs give bit-identical outputs") {
  std::mt19937_64 rng(67);
  Tensor x = random_tensor({1, 3, 10, 10}, rng);
  Tensor w = random_tensor({4, 3, 5, 5}, rng);
  Tensor y1 = conv2d(x, w, Tensor(), 2, 2);
  Tensor y2 = conv2d(x, w, Tensor(), 2, 2);
  for (std::size_t i = 0; i < y1.size(); ++i)
    CHECK(y1.values()[i] == y2.values()[i]);
}

TEST_CASE("masked conv exact causality of gradients") {
  // d out[j] / d in[i] must be exactly zero for j raster-earlier than i.
  std::mt19937_64 rng(71);
  const int H = 5, W = 5;
  Tensor x = random_tensor({1, 1, H, W}, rng, 1.0, true);
  Tensor w = random_tensor({1, 1, 3, 3}, rng);
  int jr = 2, jc = 2;  // probe output position
  Tape tape;
  Tensor y = masked_conv2d(x, w, Tensor(), MaskType::A, &tape);
  Tensor pick({1, 1, H, W});
  pick.values()[jr * W + jc] = 1.0;
  Tensor loss = reduce_sum(mul(y, pick, &tape), &tape);
  tape.backward(loss);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      bool later_or_self = r > jr || (r == jr && c >= jc);
      if (later_or_self) CHECK(x.grad_values()[r * W + c] == 0.0);
    }
}
