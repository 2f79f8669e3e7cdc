#pragma once

// Bit-exact 32-bit range coder with byte-wise renormalization and carry
// propagation, plus the quantized cumulative-frequency tables shared by
// encoder and decoder. 16-bit frequency precision (total 65536). The coder
// is the only transport in the codec: latents, mask runs, and pixels all go
// through it.

#include <cstdint>
#include <span>
#include <vector>

#include "seec/common.hpp"

namespace seec::coder {

inline constexpr std::uint32_t kFreqTotal = 65536;
inline constexpr int kMaxAlphabet = 256;

// Cumulative counts cum[0..alphabet], cum[0] = 0, cum[alphabet] = 65536,
// strictly increasing (every symbol has count >= 1).
struct CdfTable {
  int alphabet = 0;
  std::uint32_t cum[kMaxAlphabet + 1] = {};

  std::uint32_t freq(int s) const { return cum[s + 1] - cum[s]; }
  bool valid() const;
};

// Quantizes a pmf (non-negative, roughly summing to 1) to a CdfTable.
// Deterministic: counts are floored, the remainder goes to the largest bin
// (lowest index on ties), and when flooring to a minimum count of 1
// overshoots the total, counts are stolen one at a time from the current
// largest bin (lowest index on ties). Encoder and decoder must call this
// with bit-identical pmfs.
CdfTable quantize_pmf(std::span<const double> pmf);

class RangeEncoder {
 public:
  void encode(std::uint32_t cum, std::uint32_t freq, std::uint32_t total);
  void encode_symbol(int symbol, const CdfTable& table);
  // Flushes the remaining state (5 bytes: head byte plus 4 payload bytes)
  // and returns the stream. The encoder must not be reused afterwards.
  std::vector<std::uint8_t> finish();
  std::size_t bytes_pending() const { return out_.size(); }

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t pending_ff_ = 0;
  bool first_byte_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);

  // Returns the scaled cumulative value in [0, total); the caller looks up
  // the symbol and must then call consume() with that symbol's interval.
  std::uint32_t decode_target(std::uint32_t total);
  void consume(std::uint32_t cum, std::uint32_t freq, std::uint32_t total);
  int decode_symbol(const CdfTable& table);

  std::size_t bytes_consumed() const { return pos_; }

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

// Order-0 adaptive frequency model for small alphabets (used by the mask
// codec). Encoder and decoder mirror updates exactly.
class AdaptiveModel {
 public:
  explicit AdaptiveModel(int alphabet);
  void encode(RangeEncoder& enc, int symbol);
  int decode(RangeDecoder& dec);

 private:
  void bump(int symbol);
  static constexpr std::uint32_t kIncrement = 32;
  std::vector<std::uint32_t> counts_;
  std::uint32_t total_ = 0;
};

}  // namespace seec::coder
