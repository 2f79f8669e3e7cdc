#pragma once

// Segmentation-mask ingestion and the lossless in-container mask codec:
// raster-order run-length tokens (runs continue across row boundaries)
// entropy-coded with order-0 adaptive models.

#include <cstdint>
#include <span>
#include <vector>

#include "seec/image.hpp"

namespace seec::maskio {

// Binary PGM (P5), maxval 255. A header comment "classes=N" switches to
// raw-id mode (pixel values are class ids, validated < N); otherwise the
// mask is binary: values >= 128 become class 1 (foreground), N = 2.
MaskMap load_mask(const std::string& path);

// Pairs with load_mask raw-id mode when the mask has more than 2 classes.
void save_mask(const std::string& path, const MaskMap& mask);

// Compressed payload carries no dimensions; the container header supplies
// them to decompress_mask.
std::vector<std::uint8_t> compress_mask(const MaskMap& mask);
MaskMap decompress_mask(std::span<const std::uint8_t> bytes, int width,
                        int height, int num_classes);

}  // namespace seec::maskio
