#pragma once

// The .seec container: header, hyper-latent stream, latent stream, mask
// stream, pixel stream, and the end-to-end encode/decode pipelines
// including ROI mode.
//
// Header layout (64 bytes, little-endian):
//   magic "SEEC" | version u8 | flags u8 (bit 0: ROI) | H u32 | W u32 |
//   pad_h u8 | pad_w u8 | N u8 | K u8 | model hash 16B |
//   cy u16 | cz u16 | cf u16 | cctx u16 | chead u16 |
//   clamp_lo i16 | clamp_hi i16 |
//   z_len u32 | y_len u32 | mask_len u32 | pixel_len u32
//
// Pixel coding is strictly serial in raster order, channels r,g,b within a
// pixel. In ROI mode class-0 pixels are skipped by the coder and replaced
// with their argmax reconstructions in the working image on BOTH sides, so
// encoder and decoder context stay aligned.

#include <memory>
#include <optional>

#include "seec/image.hpp"
#include "seec/maskio.hpp"
#include "seec/smem.hpp"

namespace seec::container {

inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 64;

// Config, weights, and the two network halves bundled together.
struct SeecModel {
  sic::ModelConfig cfg;
  ParamStore store;
  std::unique_ptr<sic::LatentCodec> latent;
  std::unique_ptr<smem::PixelModel> pixel;

  static SeecModel create(const sic::ModelConfig& cfg, std::uint64_t seed,
                          int head_hidden = 0);
  static SeecModel load(const std::string& checkpoint_path);
  void save(const std::string& checkpoint_path) const;
  std::array<std::uint8_t, 16> hash() const { return model_hash(store); }
};

struct EncodeStats {
  std::size_t header_bytes = 0;
  std::size_t z_bytes = 0;
  std::size_t y_bytes = 0;
  std::size_t mask_bytes = 0;
  std::size_t pixel_bytes = 0;
  // Model estimates (bits) at the coded values, absorbed-tail priors.
  double model_bits_z = 0;
  double model_bits_y = 0;
  double model_bits_pixel = 0;
  long clipped_latents = 0;
  std::size_t coded_pixels = 0;    // pixels that went through the coder
  std::size_t skipped_pixels = 0;  // ROI-skipped background pixels
  double seconds = 0;

  std::size_t total_bytes() const {
    return header_bytes + z_bytes + y_bytes + mask_bytes + pixel_bytes;
  }
};

std::vector<std::uint8_t> encode_image(const ImageU8& image,
                                       const MaskMap& mask,
                                       const SeecModel& model, bool roi,
                                       EncodeStats* stats = nullptr);

ImageU8 decode_image(std::span<const std::uint8_t> stream,
                     const SeecModel& model,
                     MaskMap* mask_out = nullptr);

// Parsed header fields, exposed for tests and tooling.
struct Header {
  std::uint8_t version = 0;
  bool roi = false;
  std::uint32_t height = 0, width = 0;
  std::uint8_t pad_h = 0, pad_w = 0;
  std::uint8_t num_classes = 0, mixture_k = 0;
  std::array<std::uint8_t, 16> hash = {};
  std::uint16_t cy = 0, cz = 0, cf = 0, cctx = 0, chead = 0;
  std::int16_t clamp_lo = 0, clamp_hi = 0;
  std::uint32_t z_len = 0, y_len = 0, mask_len = 0, pixel_len = 0;
};
Header parse_header(std::span<const std::uint8_t> stream);

}  // namespace seec::container
