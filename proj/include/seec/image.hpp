#pragma once

// 8-bit RGB images, class-id mask maps, and binary PPM (P6) / PGM (P5) I/O.

#include <cstdint>
#include <string>
#include <vector>

#include "seec/common.hpp"

namespace seec {

// H x W x 3 interleaved 8-bit pixels, raster order, channel order r,g,b.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // size = width * height * 3

  ImageU8() = default;
  ImageU8(int w, int h) : width(w), height(h) {
    SEEC_CHECK(w >= 1 && h >= 1);
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
  }

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const ImageU8&) const = default;
};

// H x W class ids in [0, num_classes).
struct MaskMap {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> ids;  // size = width * height

  MaskMap() = default;
  MaskMap(int w, int h, int n) : width(w), height(h), num_classes(n) {
    SEEC_CHECK(w >= 1 && h >= 1 && n >= 1 && n <= 256);
    ids.assign(static_cast<std::size_t>(w) * h, 0);
  }

  std::uint8_t& at(int y, int x) {
    return ids[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return ids[static_cast<std::size_t>(y) * width + x];
  }
  void validate() const;
  bool operator==(const MaskMap&) const = default;
};

ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// Raw 8-bit PGM payload plus any header comments.
struct PgmFile {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> gray;
  std::vector<std::string> comments;
};
PgmFile read_pgm(const std::string& path);
void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& gray,
               const std::vector<std::string>& comments = {});

// Reflect-pads (symmetric, edge-inclusive, so 1-pixel inputs work) to the
// next multiples of `multiple`. Returns the pad amounts added on the
// bottom/right.
ImageU8 pad_to_multiple(const ImageU8& img, int multiple, int* pad_h,
                        int* pad_w);
MaskMap pad_mask_to_multiple(const MaskMap& mask, int multiple);
ImageU8 crop(const ImageU8& img, int width, int height);

}  // namespace seec
