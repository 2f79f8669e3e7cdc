#include "seec/coder.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace seec::coder {

bool CdfTable::valid() const {
  if (alphabet < 1 || alphabet > kMaxAlphabet) return false;
  if (cum[0] != 0 || cum[alphabet] != kFreqTotal) return false;
  for (int s = 0; s < alphabet; ++s)
    if (cum[s + 1] <= cum[s]) return false;
  return true;
}

CdfTable quantize_pmf(std::span<const double> pmf) {
  const int S = static_cast<int>(pmf.size());
  SEEC_CHECK_MSG(S >= 1 && S <= kMaxAlphabet, "pmf alphabet out of range");

  double total = 0.0;
  for (double v : pmf)
    if (v > 0.0 && std::isfinite(v)) total += v;

  std::uint32_t counts[kMaxAlphabet];
  std::uint64_t sum = 0;
  if (total <= 0.0) {
    std::uint32_t base = kFreqTotal / S;
    std::uint32_t rem = kFreqTotal % S;
    for (int i = 0; i < S; ++i) {
      counts[i] = base + (static_cast<std::uint32_t>(i) < rem ? 1 : 0);
      sum += counts[i];
    }
  } else {
    for (int i = 0; i < S; ++i) {
      double v = pmf[i];
      if (!(v > 0.0) || !std::isfinite(v)) v = 0.0;
      double scaled = std::floor(v * (static_cast<double>(kFreqTotal) / total));
      if (scaled > static_cast<double>(kFreqTotal)) scaled = kFreqTotal;
      std::uint32_t c = static_cast<std::uint32_t>(scaled);
      if (c < 1) c = 1;
      counts[i] = c;
      sum += c;
    }
  }

  if (sum < kFreqTotal) {
    // Remainder goes to the largest bin, lowest index on ties.
    int best = 0;
    for (int i = 1; i < S; ++i)
      if (counts[i] > counts[best]) best = i;
    counts[best] += static_cast<std::uint32_t>(kFreqTotal - sum);
  } else if (sum > kFreqTotal) {
    // Steal one count at a time from the current largest bin (lowest index
    // on ties). Heap key orders by (count desc, index asc).
    std::uint64_t excess = sum - kFreqTotal;
    using Key = std::pair<std::uint32_t, int>;  // (count, S - index)
    std::priority_queue<Key> heap;
    for (int i = 0; i < S; ++i)
      if (counts[i] > 1) heap.push({counts[i], S - i});
    while (excess > 0) {
      SEEC_CHECK_MSG(!heap.empty(), "pmf quantization cannot reach total");
      auto [c, ridx] = heap.top();
      heap.pop();
      int i = S - ridx;
      counts[i] = c - 1;
      if (counts[i] > 1) heap.push({counts[i], ridx});
      --excess;
    }
  }

  CdfTable t;
  t.alphabet = S;
  t.cum[0] = 0;
  for (int i = 0; i < S; ++i) t.cum[i + 1] = t.cum[i] + counts[i];
  return t;
}

// --------------------------------------------------------------------------
// RangeEncoder
// --------------------------------------------------------------------------

void RangeEncoder::shift_low() {
  if (low_ < 0xFF000000ull || low_ >= (1ull << 32)) {
    std::uint8_t carry = static_cast<std::uint8_t>(low_ >> 32);
    // The head byte carries no information the decoder uses (its window
    // starts after it), so it is never emitted; the decoder likewise does
    // not expect it.
    if (first_byte_)
      first_byte_ = false;
    else
      out_.push_back(static_cast<std::uint8_t>(cache_ + carry));
    for (; pending_ff_ > 0; --pending_ff_)
      out_.push_back(static_cast<std::uint8_t>(0xFF + carry));
    cache_ = static_cast<std::uint8_t>((low_ >> 24) & 0xFF);
  } else {
    ++pending_ff_;
  }
  low_ = (low_ << 8) & 0xFFFFFFFFull;
}

void RangeEncoder::encode(std::uint32_t cum, std::uint32_t freq,
                          std::uint32_t total) {
  SEEC_CHECK_MSG(freq > 0 && cum + freq <= total && total <= kFreqTotal,
                 "invalid coding interval");
  std::uint32_t r = range_ / total;
  low_ += static_cast<std::uint64_t>(cum) * r;
  range_ = freq * r;
  while (range_ < (1u << 24)) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_symbol(int symbol, const CdfTable& table) {
  SEEC_CHECK_MSG(symbol >= 0 && symbol < table.alphabet,
                 "symbol outside table alphabet");
  encode(table.cum[symbol], table.freq(symbol), kFreqTotal);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

// --------------------------------------------------------------------------
// RangeDecoder
// --------------------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  if (pos_ >= in_.size()) throw StreamError("range coder stream exhausted");
  return in_[pos_++];
}

std::uint32_t RangeDecoder::decode_target(std::uint32_t total) {
  SEEC_CHECK_MSG(total >= 1 && total <= kFreqTotal, "invalid coding total");
  std::uint32_t r = range_ / total;
  std::uint32_t t = code_ / r;
  return t < total ? t : total - 1;
}

void RangeDecoder::consume(std::uint32_t cum, std::uint32_t freq,
                           std::uint32_t total) {
  std::uint32_t r = range_ / total;
  code_ -= cum * r;
  range_ = freq * r;
  while (range_ < (1u << 24)) {
    code_ = (code_ << 8) | next_byte();
    range_ <<= 8;
  }
}

int RangeDecoder::decode_symbol(const CdfTable& table) {
  std::uint32_t t = decode_target(kFreqTotal);
  // Largest s with cum[s] <= t.
  const std::uint32_t* begin = table.cum;
  const std::uint32_t* end = table.cum + table.alphabet + 1;
  int s = static_cast<int>(std::upper_bound(begin, end, t) - begin) - 1;
  consume(table.cum[s], table.freq(s), kFreqTotal);
  return s;
}

// --------------------------------------------------------------------------
// AdaptiveModel
// --------------------------------------------------------------------------

AdaptiveModel::AdaptiveModel(int alphabet)
    : counts_(static_cast<std::size_t>(alphabet), 1),
      total_(static_cast<std::uint32_t>(alphabet)) {
  SEEC_CHECK(alphabet >= 1 && alphabet <= kMaxAlphabet);
}

void AdaptiveModel::bump(int symbol) {
  counts_[symbol] += kIncrement;
  total_ += kIncrement;
  if (total_ >= kFreqTotal) {
    total_ = 0;
    for (auto& c : counts_) {
      c = (c + 1) >> 1;
      total_ += c;
    }
  }
}

void AdaptiveModel::encode(RangeEncoder& enc, int symbol) {
  SEEC_CHECK(symbol >= 0 &&
             symbol < static_cast<int>(counts_.size()));
  std::uint32_t cum = 0;
  for (int i = 0; i < symbol; ++i) cum += counts_[i];
  enc.encode(cum, counts_[symbol], total_);
  bump(symbol);
}

int AdaptiveModel::decode(RangeDecoder& dec) {
  std::uint32_t t = dec.decode_target(total_);
  std::uint32_t cum = 0;
  int s = 0;
  while (cum + counts_[s] <= t) {
    cum += counts_[s];
    ++s;
  }
  dec.consume(cum, counts_[s], total_);
  bump(s);
  return s;
}

}  // namespace seec::coder
