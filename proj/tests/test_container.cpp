#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "seec/common.hpp"
#include "seec/container.hpp"
#include "seec/dlm.hpp"

using namespace seec;
using namespace seec::container;

namespace {

sic::ModelConfig tiny_config() {
  sic::ModelConfig cfg;
  cfg.cy = 8;
  cfg.cz = 4;
  cfg.cf = 8;
  cfg.cctx = 8;
  cfg.chead = 16;
  cfg.K = 2;
  cfg.N = 2;
  return cfg;
}

ImageU8 random_image(int w, int h, std::mt19937_64& rng) {
  ImageU8 img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

ImageU8 gradient_image(int w, int h) {
  ImageU8 img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      img.at(y, x, 0) = static_cast<std::uint8_t>((x * 255) / std::max(1, w - 1));
      img.at(y, x, 1) = static_cast<std::uint8_t>((y * 255) / std::max(1, h - 1));
      img.at(y, x, 2) = static_cast<std::uint8_t>(((x + y) * 255) /
                                                  std::max(1, w + h - 2));
    }
  return img;
}

MaskMap split_mask(int w, int h, double fg_fraction) {
  MaskMap m(w, h, 2);
  int cut = static_cast<int>(h * (1.0 - fg_fraction));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x) = y >= cut ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("lossless round trip across sizes and content types") {
  SeecModel model = SeecModel::create(tiny_config(), 42);
  std::mt19937_64 rng(7);
  // Sizes deliberately include 1x1, non-multiples of 16, and odd shapes.
  std::vector<std::pair<int, int>> sizes = {{1, 1},  {3, 2},  {16, 16},
                                            {17, 5}, {31, 47}, {64, 64},
                                            {80, 48}, {33, 70}};
  for (auto [w, h] : sizes) {
    for (int kind = 0; kind < 3; ++kind) {
      ImageU8 img = kind == 0   ? random_image(w, h, rng)
                    : kind == 1 ? gradient_image(w, h)
                                : ImageU8(w, h);  // constant black
      MaskMap mask = split_mask(w, h, 0.5);
      EncodeStats st;
      auto stream = encode_image(img, mask, model, false, &st);
      MaskMap mask_back;
      ImageU8 out = decode_image(stream, model, &mask_back);
      REQUIRE(out == img);
      REQUIRE(mask_back == mask);
      CHECK(st.total_bytes() == stream.size());
    }
  }
}

TEST_CASE("decode is deterministic across repeated runs") {
  SeecModel model = SeecModel::create(tiny_config(), 43);
  std::mt19937_64 rng(11);
  ImageU8 img = random_image(40, 24, rng);
  MaskMap mask = split_mask(40, 24, 0.4);
  auto s1 = encode_image(img, mask, model, false);
  auto s2 = encode_image(img, mask, model, false);
  CHECK(s1 == s2);  // byte-identical encodes
  ImageU8 d1 = decode_image(s1, model);
  ImageU8 d2 = decode_image(s1, model);
  CHECK(d1 == d2);
}

TEST_CASE("header: section lengths, bpp bookkeeping identity") {
  SeecModel model = SeecModel::create(tiny_config(), 44);
  std::mt19937_64 rng(13);
  ImageU8 img = random_image(48, 32, rng);
  MaskMap mask = split_mask(48, 32, 0.3);
  EncodeStats st;
  auto stream = encode_image(img, mask, model, false, &st);
  Header h = parse_header(stream);
  CHECK(h.width == 48);
  CHECK(h.height == 32);
  CHECK(h.pad_h == 0);
  CHECK(h.pad_w == 0);
  CHECK(h.z_len == st.z_bytes);
  CHECK(h.y_len == st.y_bytes);
  CHECK(h.mask_len == st.mask_bytes);
  CHECK(h.pixel_len == st.pixel_bytes);
  CHECK(kHeaderBytes + h.z_len + h.y_len + h.mask_len + h.pixel_len ==
        stream.size());
}

TEST_CASE("rate consistency: stream bits within model estimate + slack") {
  SeecModel model = SeecModel::create(tiny_config(), 45);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 4; ++trial) {
    ImageU8 img = trial % 2 == 0 ? random_image(48, 48, rng)
                                 : gradient_image(56, 40);
    MaskMap mask = split_mask(img.width, img.height, 0.5);
    EncodeStats st;
    auto stream = encode_image(img, mask, model, false, &st);
    double stream_bits = 8.0 * static_cast<double>(stream.size());
    double estimate = st.model_bits_z + st.model_bits_y +
                      st.model_bits_pixel +
                      8.0 * static_cast<double>(st.mask_bytes) +
                      8.0 * static_cast<double>(st.header_bytes);
    CHECK(stream_bits <= estimate * 1.001 + 64 * 8);
  }
}

TEST_CASE("corrupted streams are rejected with explicit errors") {
  SeecModel model = SeecModel::create(tiny_config(), 46);
  std::mt19937_64 rng(19);
  ImageU8 img = random_image(32, 32, rng);
  MaskMap mask = split_mask(32, 32, 0.5);
  auto stream = encode_image(img, mask, model, false);

  // Bad magic.
  auto bad = stream;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_image(bad, model), ValidationError);

  // Bad version.
  bad = stream;
  bad[4] = 99;
  CHECK_THROWS_AS(decode_image(bad, model), ValidationError);

  // Hash mismatch (different weights).
  SeecModel other = SeecModel::create(tiny_config(), 999);
  CHECK_THROWS_AS(decode_image(stream, other), ValidationError);

  // Truncated sections.
  bad = stream;
  bad.resize(bad.size() / 2);
  CHECK_THROWS_AS(decode_image(bad, model), StreamError);
}

TEST_CASE("checkpoint save/load round trip preserves hash and decode") {
  SeecModel model = SeecModel::create(tiny_config(), 47);
  std::mt19937_64 rng(23);
  ImageU8 img = random_image(24, 24, rng);
  MaskMap mask = split_mask(24, 24, 0.5);
  auto stream = encode_image(img, mask, model, false);

  const std::string path = "/tmp/seec_test_ckpt.bin";
  model.save(path);
  SeecModel loaded = SeecModel::load(path);
  std::remove(path.c_str());
  CHECK(loaded.hash() == model.hash());
  CHECK(loaded.cfg.K == model.cfg.K);
  CHECK(loaded.cfg.cctx == model.cfg.cctx);
  ImageU8 out = decode_image(stream, loaded);
  CHECK(out == img);
}

TEST_CASE("ROI: foreground exact, background matches batch-path argmax oracle") {
  SeecModel model = SeecModel::create(tiny_config(), 48);
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 3; ++trial) {
    ImageU8 img = random_image(32, 32, rng);
    MaskMap mask = split_mask(32, 32, 0.4);  // 60% background
    EncodeStats st_roi, st_full;
    auto roi_stream = encode_image(img, mask, model, true, &st_roi);
    auto full_stream = encode_image(img, mask, model, false, &st_full);

    // ROI pixel stream strictly smaller with >= 30% background.
    CHECK(st_roi.pixel_bytes < st_full.pixel_bytes);

    ImageU8 rec = decode_image(roi_stream, model);
    // Foreground pixels decode byte-exactly.
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (mask.at(y, x) == 1)
          for (int c = 0; c < 3; ++c)
            REQUIRE(rec.at(y, x, c) == img.at(y, x, c));

    // Two ROI decodes are identical.
    CHECK(decode_image(roi_stream, model) == rec);

    // Background oracle: recompute the model over the reconstructed image
    // with the full-image (batch) path and scan all 256 values per channel.
    nd::Tensor x_norm = smem::image_to_norm_tensor(rec);
    nd::Tensor y = model.latent->analyze(x_norm);
    nd::Tensor y_hat = model.latent->clamp_round(y);
    nd::Tensor z_hat = model.latent->clamp_round(
        model.latent->hyper_analyze(y_hat));
    nd::Tensor f = model.latent->synthesize(y_hat);
    nd::Tensor cx = model.pixel->context_features(x_norm);
    nd::Tensor fs = model.pixel->fuse(f, cx);
    nd::Tensor routed =
        model.pixel->route_and_predict(fs, smem::mask_to_tensor(mask));
    const int H = 32, W = 32;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    dlm::HeadLayout lay = model.pixel->layout();
    for (int yy = 0; yy < H; ++yy)
      for (int xx = 0; xx < W; ++xx) {
        if (mask.at(yy, xx) != 0) continue;
        std::vector<double> raw(lay.channels());
        for (int ch = 0; ch < lay.channels(); ++ch)
          raw[ch] =
              routed.values()[ch * hw + static_cast<std::size_t>(yy) * W + xx];
        dlm::MixtureParams p = dlm::materialize(raw.data(), lay);
        // Exhaustive 256-way scan per channel, conditioning on the decoded
        // earlier channels.
        int vals[3] = {rec.at(yy, xx, 0), rec.at(yy, xx, 1),
                       rec.at(yy, xx, 2)};
        double pmf[256];
        for (int ch = 0; ch < 3; ++ch) {
          dlm::channel_pmf(p, ch, vals[0], vals[1], pmf);
          int best = 0;
          for (int v = 1; v < 256; ++v)
            if (pmf[v] > pmf[best]) best = v;
          REQUIRE(best == vals[ch]);
        }
      }
  }
}

TEST_CASE("ROI on an all-background mask produces an empty pixel stream") {
  SeecModel model = SeecModel::create(tiny_config(), 49);
  std::mt19937_64 rng(31);
  ImageU8 img = random_image(16, 16, rng);
  MaskMap mask(16, 16, 2);  // all class 0
  EncodeStats st;
  auto stream = encode_image(img, mask, model, true, &st);
  CHECK(st.coded_pixels == 0);
  CHECK(st.pixel_bytes <= 8);
  ImageU8 rec = decode_image(stream, model);
  CHECK(rec.width == 16);
  CHECK(rec.height == 16);
}

TEST_CASE("mask/image dimension mismatch is a validation error") {
  SeecModel model = SeecModel::create(tiny_config(), 50);
  std::mt19937_64 rng(37);
  ImageU8 img = random_image(16, 16, rng);
  MaskMap mask(8, 16, 2);
  CHECK_THROWS_AS(encode_image(img, mask, model, false), ValidationError);
  MaskMap bad(16, 16, 5);
  bad.at(0, 0) = 4;  // id >= model N
  CHECK_THROWS_AS(encode_image(img, bad, model, false), ValidationError);
}
