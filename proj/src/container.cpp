#include "seec/container.hpp"

#include <chrono>
#include <cmath>

#include "seec/coder.hpp"
#include "seec/dlm.hpp"
#include "seec/kernels.hpp"

namespace seec::container {

namespace {

constexpr double kLeakySlope = 0.01;

double floored_log2(double p) {
  if (p < dlm::kLikelihoodFloor) p = dlm::kLikelihoodFloor;
  return kern::det_log2(p);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32v(std::vector<std::uint8_t>& out, std::uint32_t v) {
  put_u16(out, static_cast<std::uint16_t>(v));
  put_u16(out, static_cast<std::uint16_t>(v >> 16));
}

}  // namespace

SeecModel SeecModel::create(const sic::ModelConfig& cfg, std::uint64_t seed,
                            int head_hidden) {
  cfg.validate();
  SeecModel m;
  m.cfg = cfg;
  m.store.seed(seed);
  int hidden = head_hidden > 0 ? head_hidden : cfg.chead;
  m.store.create_meta(
      "config.meta", {8},
      {static_cast<double>(cfg.K), static_cast<double>(cfg.N),
       cfg.channel_specific_weights ? 1.0 : 0.0, cfg.single_head ? 1.0 : 0.0,
       static_cast<double>(cfg.clamp_lo), static_cast<double>(cfg.clamp_hi),
       static_cast<double>(cfg.chead), static_cast<double>(hidden)});
  m.latent = std::make_unique<sic::LatentCodec>(m.cfg, m.store);
  m.pixel = std::make_unique<smem::PixelModel>(m.cfg, m.store, head_hidden);
  return m;
}

SeecModel SeecModel::load(const std::string& checkpoint_path) {
  auto raw = read_checkpoint(checkpoint_path);
  auto find = [&](const std::string& name) -> const nd::Tensor& {
    for (const auto& [n, t] : raw)
      if (n == name) return t;
    throw ValidationError("checkpoint missing tensor: " + name);
  };
  const nd::Tensor& meta = find("config.meta");
  if (meta.size() != 8) throw ValidationError("bad config.meta");
  sic::ModelConfig cfg;
  cfg.K = static_cast<int>(meta.values()[0]);
  cfg.N = static_cast<int>(meta.values()[1]);
  cfg.channel_specific_weights = meta.values()[2] != 0.0;
  cfg.single_head = meta.values()[3] != 0.0;
  cfg.clamp_lo = static_cast<int>(meta.values()[4]);
  cfg.clamp_hi = static_cast<int>(meta.values()[5]);
  cfg.chead = static_cast<int>(meta.values()[6]);
  int hidden = static_cast<int>(meta.values()[7]);
  cfg.cy = find("ga.0.w").dim(0);
  cfg.cz = find("ha.0.w").dim(0);
  cfg.cf = find("gs.0.w").dim(1);
  cfg.cctx = find("ctx.a.w").dim(0);

  SeecModel m = create(cfg, 0, hidden);
  for (auto& [name, src] : raw) {
    nd::Tensor dst = m.store.find(name);
    if (dst.shape() != src.shape())
      throw ValidationError("checkpoint shape mismatch for " + name);
    dst.values() = src.values();
  }
  return m;
}

void SeecModel::save(const std::string& checkpoint_path) const {
  save_checkpoint(checkpoint_path, store);
}

// --------------------------------------------------------------------------
// header
// --------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> build_header(const SeecModel& model, bool roi,
                                       std::uint32_t h, std::uint32_t w,
                                       int pad_h, int pad_w, int num_classes,
                                       std::uint32_t z_len,
                                       std::uint32_t y_len,
                                       std::uint32_t mask_len,
                                       std::uint32_t pixel_len) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes);
  out.insert(out.end(), {'S', 'E', 'E', 'C'});
  out.push_back(kFormatVersion);
  out.push_back(roi ? 1 : 0);
  put_u32v(out, h);
  put_u32v(out, w);
  out.push_back(static_cast<std::uint8_t>(pad_h));
  out.push_back(static_cast<std::uint8_t>(pad_w));
  out.push_back(static_cast<std::uint8_t>(num_classes));
  out.push_back(static_cast<std::uint8_t>(model.cfg.K));
  auto hash = model.hash();
  out.insert(out.end(), hash.begin(), hash.end());
  put_u16(out, static_cast<std::uint16_t>(model.cfg.cy));
  put_u16(out, static_cast<std::uint16_t>(model.cfg.cz));
  put_u16(out, static_cast<std::uint16_t>(model.cfg.cf));
  put_u16(out, static_cast<std::uint16_t>(model.cfg.cctx));
  put_u16(out, static_cast<std::uint16_t>(model.cfg.chead));
  put_u16(out, static_cast<std::uint16_t>(
                   static_cast<std::int16_t>(model.cfg.clamp_lo)));
  put_u16(out, static_cast<std::uint16_t>(
                   static_cast<std::int16_t>(model.cfg.clamp_hi)));
  put_u32v(out, z_len);
  put_u32v(out, y_len);
  put_u32v(out, mask_len);
  put_u32v(out, pixel_len);
  SEEC_CHECK(out.size() == kHeaderBytes);
  return out;
}

}  // namespace

Header parse_header(std::span<const std::uint8_t> stream) {
  if (stream.size() < kHeaderBytes)
    throw StreamError("stream shorter than header");
  if (stream[0] != 'S' || stream[1] != 'E' || stream[2] != 'E' ||
      stream[3] != 'C')
    throw ValidationError("bad container magic");
  Header h;
  h.version = stream[4];
  if (h.version != kFormatVersion)
    throw ValidationError("unsupported container version " +
                          std::to_string(h.version));
  h.roi = (stream[5] & 1) != 0;
  auto u32 = [&](std::size_t at) {
    return static_cast<std::uint32_t>(stream[at]) |
           (static_cast<std::uint32_t>(stream[at + 1]) << 8) |
           (static_cast<std::uint32_t>(stream[at + 2]) << 16) |
           (static_cast<std::uint32_t>(stream[at + 3]) << 24);
  };
  auto u16 = [&](std::size_t at) {
    return static_cast<std::uint16_t>(
        stream[at] | (static_cast<std::uint16_t>(stream[at + 1]) << 8));
  };
  h.height = u32(6);
  h.width = u32(10);
  h.pad_h = stream[14];
  h.pad_w = stream[15];
  h.num_classes = stream[16];
  h.mixture_k = stream[17];
  for (int i = 0; i < 16; ++i) h.hash[i] = stream[18 + i];
  h.cy = u16(34);
  h.cz = u16(36);
  h.cf = u16(38);
  h.cctx = u16(40);
  h.chead = u16(42);
  h.clamp_lo = static_cast<std::int16_t>(u16(44));
  h.clamp_hi = static_cast<std::int16_t>(u16(46));
  h.z_len = u32(48);
  h.y_len = u32(52);
  h.mask_len = u32(56);
  h.pixel_len = u32(60);
  return h;
}

// --------------------------------------------------------------------------
// serial pixel loop
// --------------------------------------------------------------------------

namespace {

// Per-pixel parameter computation shared by encoder and decoder. Every
// accumulation order matches the batch tensor path exactly, so the two
// paths produce bit-identical mixture parameters.
class PixelLoop {
 public:
  PixelLoop(const smem::PixelModel& model, const nd::Tensor& phi_f,
            const MaskMap& padded_mask)
      : model_(model),
        phi_f_(phi_f),
        mask_(padded_mask),
        h_(padded_mask.height),
        w_(padded_mask.width),
        cctx_(model.config().cctx),
        layout_(model.layout()),
        l1_ring_(static_cast<std::size_t>(3) * w_ * cctx_, 0.0),
        l2_(cctx_, 0.0),
        fs_(cctx_, 0.0),
        hidden_(model.head_hidden(), 0.0),
        raw_(layout_.channels(), 0.0) {}

  // Computes mixture parameters for pixel (r, c) given the working image
  // contents at raster-earlier positions.
  dlm::MixtureParams params_at(const ImageU8& work, int r, int c) {
    compute_l1(work, r, c);
    compute_l2(r, c);
    compute_fs(r, c);
    int head = model_.head_for_class(mask_.at(r, c));
    compute_head(head);
    return dlm::materialize(raw_.data(), layout_);
  }

 private:
  double* l1_at(int r, int c) {
    return l1_ring_.data() +
           (static_cast<std::size_t>(r % 3) * w_ + c) * cctx_;
  }

  static double norm_px(const ImageU8& img, int y, int x, int ch) {
    return static_cast<double>(img.at(y, x, ch)) / dlm::kPixelScale - 1.0;
  }

  void compute_l1(const ImageU8& work, int r, int c) {
    const auto& w = model_.ctx_a_w();
    const auto& b = model_.ctx_a_b();
    double* out = l1_at(r, c);
    for (int o = 0; o < cctx_; ++o) {
      double acc = b.values()[o];
      const double* wo = w.data() + static_cast<std::size_t>(o) * 3 * 25;
      for (int ci = 0; ci < 3; ++ci)
        for (int ky = 0; ky < 5; ++ky)
          for (int kx = 0; kx < 5; ++kx) {
            if (!nd::masked_tap_allowed(nd::MaskType::A, ky, kx, 5, 5))
              continue;
            int yy = r + ky - 2, xx = c + kx - 2;
            if (yy < 0 || yy >= h_ || xx < 0 || xx >= w_) continue;
            acc += wo[ci * 25 + ky * 5 + kx] * norm_px(work, yy, xx, ci);
          }
      out[o] = acc > 0.0 ? acc : kLeakySlope * acc;  // stored post-leaky
    }
  }

  void compute_l2(int r, int c) {
    const auto& w = model_.ctx_b_w();
    const auto& b = model_.ctx_b_b();
    for (int o = 0; o < cctx_; ++o) {
      double acc = b.values()[o];
      const double* wo =
          w.data() + static_cast<std::size_t>(o) * cctx_ * 25;
      for (int ci = 0; ci < cctx_; ++ci)
        for (int ky = 0; ky < 5; ++ky)
          for (int kx = 0; kx < 5; ++kx) {
            if (!nd::masked_tap_allowed(nd::MaskType::B, ky, kx, 5, 5))
              continue;
            int yy = r + ky - 2, xx = c + kx - 2;
            if (yy < 0 || yy >= h_ || xx < 0 || xx >= w_) continue;
            acc += wo[ci * 25 + ky * 5 + kx] * l1_at(yy, xx)[ci];
          }
      l2_[o] = acc;
    }
  }

  void compute_fs(int r, int c) {
    const auto& wc = model_.fuse_c_w();
    const std::size_t hw = static_cast<std::size_t>(h_) * w_;
    const double* phi = phi_f_.data();
    for (int o = 0; o < cctx_; ++o) {
      double acc = 0.0;
      const double* wo = wc.data() + static_cast<std::size_t>(o) * cctx_;
      for (int ci = 0; ci < cctx_; ++ci) acc += wo[ci] * l2_[ci];
      double v = phi[o * hw + static_cast<std::size_t>(r) * w_ + c] + acc;
      fs_[o] = v > 0.0 ? v : kLeakySlope * v;
    }
  }

  void compute_head(int head) {
    const auto& w1 = model_.head_w1(head);
    const auto& b1 = model_.head_b1(head);
    const auto& w2 = model_.head_w2(head);
    const auto& b2 = model_.head_b2(head);
    const int hidden = model_.head_hidden();
    for (int j = 0; j < hidden; ++j) {
      double acc = b1.values()[j];
      const double* wj = w1.data() + static_cast<std::size_t>(j) * cctx_;
      for (int i = 0; i < cctx_; ++i) acc += wj[i] * fs_[i];
      hidden_[j] = acc > 0.0 ? acc : kLeakySlope * acc;
    }
    const int out_ch = layout_.channels();
    for (int o = 0; o < out_ch; ++o) {
      double acc = b2.values()[o];
      const double* wo = w2.data() + static_cast<std::size_t>(o) * hidden;
      for (int j = 0; j < hidden; ++j) acc += wo[j] * hidden_[j];
      raw_[o] = acc;
    }
  }

  const smem::PixelModel& model_;
  const nd::Tensor& phi_f_;
  const MaskMap& mask_;
  int h_, w_, cctx_;
  dlm::HeadLayout layout_;
  std::vector<double> l1_ring_, l2_, fs_, hidden_, raw_;
};

struct LatentTensors {
  nd::Tensor y_hat, z_hat, mu, sigma, phi_f;
};

// Forward passes shared by encode and decode once y_hat/z_hat are known.
LatentTensors derive_from_latents(const SeecModel& model, nd::Tensor y_hat,
                                  nd::Tensor z_hat) {
  LatentTensors lt;
  lt.y_hat = std::move(y_hat);
  lt.z_hat = std::move(z_hat);
  nd::Tensor hs = model.latent->hyper_synthesize(lt.z_hat, lt.y_hat.dim(2),
                                                 lt.y_hat.dim(3));
  lt.mu = sic::LatentCodec::gauss_mu(hs, nullptr);
  lt.sigma = sic::LatentCodec::gauss_sigma(hs, nullptr);
  nd::Tensor f = model.latent->synthesize(lt.y_hat);
  lt.phi_f = nd::conv2d(f, model.pixel->fuse_f_w(), model.pixel->fuse_f_b(),
                        1, 0);
  return lt;
}

}  // namespace

// --------------------------------------------------------------------------
// encode
// --------------------------------------------------------------------------

std::vector<std::uint8_t> encode_image(const ImageU8& image,
                                       const MaskMap& mask,
                                       const SeecModel& model, bool roi,
                                       EncodeStats* stats) {
  auto t0 = std::chrono::steady_clock::now();
  const sic::ModelConfig& cfg = model.cfg;
  if (mask.width != image.width || mask.height != image.height)
    throw ValidationError("mask dimensions do not match image");
  for (std::uint8_t id : mask.ids)
    if (id >= cfg.N)
      throw ValidationError("mask class id outside model range");
  if (image.width > (1 << 20) || image.height > (1 << 20))
    throw ValidationError("image dimensions overflow container limits");

  EncodeStats st;
  int pad_h = 0, pad_w = 0;
  ImageU8 padded = pad_to_multiple(image, 16, &pad_h, &pad_w);
  MaskMap padded_mask = pad_mask_to_multiple(mask, 16);

  // Latent path.
  nd::Tensor x_norm = smem::image_to_norm_tensor(padded);
  nd::Tensor y = model.latent->analyze(x_norm);
  nd::Tensor y_hat = model.latent->clamp_round(y, &st.clipped_latents);
  nd::Tensor z = model.latent->hyper_analyze(y_hat);
  nd::Tensor z_hat = model.latent->clamp_round(z, &st.clipped_latents);
  LatentTensors lt = derive_from_latents(model, y_hat, z_hat);

  const int lo = cfg.clamp_lo;
  const int alpha = cfg.latent_alphabet();

  // z stream: channel-major, then raster; one table per channel.
  coder::RangeEncoder ez;
  {
    const int zc = lt.z_hat.dim(1), zh = lt.z_hat.dim(2),
              zw = lt.z_hat.dim(3);
    std::vector<double> pmf(alpha);
    for (int c = 0; c < zc; ++c) {
      model.latent->z_pmf(c, pmf.data());
      coder::CdfTable table = coder::quantize_pmf(pmf);
      const double* plane =
          lt.z_hat.data() + static_cast<std::size_t>(c) * zh * zw;
      for (int i = 0; i < zh * zw; ++i) {
        int sym = static_cast<int>(plane[i]) - lo;
        ez.encode_symbol(sym, table);
        st.model_bits_z += -floored_log2(pmf[sym]);
      }
    }
  }
  std::vector<std::uint8_t> z_bytes = ez.finish();

  // y stream: per-element Gaussian tables from the decoded-side (mu, sigma).
  coder::RangeEncoder ey;
  {
    const int yc = lt.y_hat.dim(1), yh = lt.y_hat.dim(2),
              yw = lt.y_hat.dim(3);
    std::vector<double> pmf(alpha);
    for (int c = 0; c < yc; ++c) {
      const std::size_t off = static_cast<std::size_t>(c) * yh * yw;
      for (int i = 0; i < yh * yw; ++i) {
        double mu = lt.mu.data()[off + i];
        double sigma = lt.sigma.data()[off + i];
        model.latent->gauss_pmf(mu, sigma, pmf.data());
        coder::CdfTable table = coder::quantize_pmf(pmf);
        int sym = static_cast<int>(lt.y_hat.data()[off + i]) - lo;
        ey.encode_symbol(sym, table);
        st.model_bits_y += -floored_log2(pmf[sym]);
      }
    }
  }
  std::vector<std::uint8_t> y_bytes = ey.finish();

  // Mask stream (original size; padding is reproducible from the header).
  std::vector<std::uint8_t> mask_bytes = maskio::compress_mask(mask);

  // Pixel stream. The working image starts as the truth; ROI-skipped
  // pixels are replaced by their argmax reconstructions so later context
  // matches the decoder.
  coder::RangeEncoder ep;
  {
    ImageU8 work = padded;
    PixelLoop loop(*model.pixel, lt.phi_f, padded_mask);
    double pmf[256];
    for (int r = 0; r < padded.height; ++r)
      for (int c = 0; c < padded.width; ++c) {
        dlm::MixtureParams params = loop.params_at(work, r, c);
        if (roi && padded_mask.at(r, c) == 0) {
          dlm::Rgb rec = dlm::argmax_sample(params);
          work.at(r, c, 0) = static_cast<std::uint8_t>(rec.r);
          work.at(r, c, 1) = static_cast<std::uint8_t>(rec.g);
          work.at(r, c, 2) = static_cast<std::uint8_t>(rec.b);
          ++st.skipped_pixels;
          continue;
        }
        int vals[3] = {work.at(r, c, 0), work.at(r, c, 1), work.at(r, c, 2)};
        for (int ch = 0; ch < 3; ++ch) {
          dlm::channel_pmf(params, ch, vals[0], vals[1], pmf);
          coder::CdfTable table =
              coder::quantize_pmf(std::span<const double>(pmf, 256));
          ep.encode_symbol(vals[ch], table);
          st.model_bits_pixel += -floored_log2(pmf[vals[ch]]);
        }
        ++st.coded_pixels;
      }
  }
  std::vector<std::uint8_t> pixel_bytes = ep.finish();

  std::vector<std::uint8_t> out = build_header(
      model, roi, static_cast<std::uint32_t>(image.height),
      static_cast<std::uint32_t>(image.width), pad_h, pad_w, cfg.N,
      static_cast<std::uint32_t>(z_bytes.size()),
      static_cast<std::uint32_t>(y_bytes.size()),
      static_cast<std::uint32_t>(mask_bytes.size()),
      static_cast<std::uint32_t>(pixel_bytes.size()));
  st.header_bytes = out.size();
  out.insert(out.end(), z_bytes.begin(), z_bytes.end());
  out.insert(out.end(), y_bytes.begin(), y_bytes.end());
  out.insert(out.end(), mask_bytes.begin(), mask_bytes.end());
  out.insert(out.end(), pixel_bytes.begin(), pixel_bytes.end());

  st.z_bytes = z_bytes.size();
  st.y_bytes = y_bytes.size();
  st.mask_bytes = mask_bytes.size();
  st.pixel_bytes = pixel_bytes.size();
  st.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (stats) *stats = st;
  return out;
}

// --------------------------------------------------------------------------
// decode
// --------------------------------------------------------------------------

ImageU8 decode_image(std::span<const std::uint8_t> stream,
                     const SeecModel& model, MaskMap* mask_out) {
  Header h = parse_header(stream);
  if (h.hash != model.hash())
    throw ValidationError("model hash mismatch: stream was encoded with "
                          "different weights");
  const sic::ModelConfig& cfg = model.cfg;
  if (h.num_classes != cfg.N || h.mixture_k != cfg.K ||
      h.cy != cfg.cy || h.cz != cfg.cz || h.cf != cfg.cf ||
      h.cctx != cfg.cctx || h.clamp_lo != cfg.clamp_lo ||
      h.clamp_hi != cfg.clamp_hi)
    throw ValidationError("container/model configuration mismatch");

  std::size_t need = kHeaderBytes + static_cast<std::size_t>(h.z_len) +
                     h.y_len + h.mask_len + h.pixel_len;
  if (stream.size() < need) throw StreamError("truncated container");

  auto section = [&](std::size_t off, std::size_t len) {
    return stream.subspan(off, len);
  };
  std::size_t at = kHeaderBytes;
  auto z_bytes = section(at, h.z_len);
  at += h.z_len;
  auto y_bytes = section(at, h.y_len);
  at += h.y_len;
  auto mask_bytes = section(at, h.mask_len);
  at += h.mask_len;
  auto pixel_bytes = section(at, h.pixel_len);

  const int W = static_cast<int>(h.width), H = static_cast<int>(h.height);
  const int PW = W + h.pad_w, PH = H + h.pad_h;
  SEEC_CHECK_MSG(PW % 16 == 0 && PH % 16 == 0, "padded size not aligned");
  const int yh = PH / 16, yw = PW / 16;
  const int mid_h = (yh - 1) / 2 + 1, mid_w = (yw - 1) / 2 + 1;
  const int zh = (mid_h - 1) / 2 + 1, zw = (mid_w - 1) / 2 + 1;
  const int lo = cfg.clamp_lo;
  const int alpha = cfg.latent_alphabet();

  // z stream.
  nd::Tensor z_hat({1, cfg.cz, zh, zw});
  {
    coder::RangeDecoder dz(z_bytes);
    std::vector<double> pmf(alpha);
    for (int c = 0; c < cfg.cz; ++c) {
      model.latent->z_pmf(c, pmf.data());
      coder::CdfTable table = coder::quantize_pmf(pmf);
      double* plane = z_hat.data() + static_cast<std::size_t>(c) * zh * zw;
      for (int i = 0; i < zh * zw; ++i)
        plane[i] = static_cast<double>(dz.decode_symbol(table) + lo);
    }
  }

  // Hyper synthesis gives the Gaussian parameters for the y stream.
  nd::Tensor hs = model.latent->hyper_synthesize(z_hat, yh, yw);
  nd::Tensor mu = sic::LatentCodec::gauss_mu(hs, nullptr);
  nd::Tensor sigma = sic::LatentCodec::gauss_sigma(hs, nullptr);

  nd::Tensor y_hat({1, cfg.cy, yh, yw});
  {
    coder::RangeDecoder dy(y_bytes);
    std::vector<double> pmf(alpha);
    for (int c = 0; c < cfg.cy; ++c) {
      const std::size_t off = static_cast<std::size_t>(c) * yh * yw;
      for (int i = 0; i < yh * yw; ++i) {
        model.latent->gauss_pmf(mu.data()[off + i], sigma.data()[off + i],
                                pmf.data());
        coder::CdfTable table = coder::quantize_pmf(pmf);
        y_hat.data()[off + i] =
            static_cast<double>(dy.decode_symbol(table) + lo);
      }
    }
  }

  LatentTensors lt = derive_from_latents(model, y_hat, z_hat);

  MaskMap mask = maskio::decompress_mask(mask_bytes, W, H, h.num_classes);
  MaskMap padded_mask = pad_mask_to_multiple(mask, 16);

  ImageU8 work(PW, PH);
  {
    coder::RangeDecoder dp(pixel_bytes);
    PixelLoop loop(*model.pixel, lt.phi_f, padded_mask);
    double pmf[256];
    for (int r = 0; r < PH; ++r)
      for (int c = 0; c < PW; ++c) {
        dlm::MixtureParams params = loop.params_at(work, r, c);
        if (h.roi && padded_mask.at(r, c) == 0) {
          dlm::Rgb rec = dlm::argmax_sample(params);
          work.at(r, c, 0) = static_cast<std::uint8_t>(rec.r);
          work.at(r, c, 1) = static_cast<std::uint8_t>(rec.g);
          work.at(r, c, 2) = static_cast<std::uint8_t>(rec.b);
          continue;
        }
        int vals[3] = {0, 0, 0};
        for (int ch = 0; ch < 3; ++ch) {
          dlm::channel_pmf(params, ch, vals[0], vals[1], pmf);
          coder::CdfTable table =
              coder::quantize_pmf(std::span<const double>(pmf, 256));
          vals[ch] = dp.decode_symbol(table);
          work.at(r, c, ch) = static_cast<std::uint8_t>(vals[ch]);
        }
      }
  }

  if (mask_out) *mask_out = mask;
  return crop(work, W, H);
}

}  // namespace seec::container
