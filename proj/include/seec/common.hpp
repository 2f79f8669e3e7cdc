#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace seec {

// Contract violation: caller passed arguments that break an operation's
// preconditions (shape mismatch, bad kernel size, ...).
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid external input (malformed file, mask/image mismatch, bad config).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Compressed stream ended early or is corrupt.
class StreamError : public std::runtime_error {
 public:
  explicit StreamError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
[[noreturn]] inline void throw_contract(const char* expr, const char* file,
                                        int line, const std::string& msg) {
  std::ostringstream os;
  os << "contract violation: " << expr << " at " << file << ":" << line;
  if (!msg.empty()) os << " (" << msg << ")";
  throw ContractError(os.str());
}
}  // namespace detail

#define SEEC_CHECK(cond)                                                 \
  do {                                                                   \
    if (!(cond))                                                         \
      ::seec::detail::throw_contract(#cond, __FILE__, __LINE__, "");     \
  } while (0)

#define SEEC_CHECK_MSG(cond, msg)                                        \
  do {                                                                   \
    if (!(cond)) {                                                       \
      std::ostringstream os_;                                            \
      os_ << msg;                                                        \
      ::seec::detail::throw_contract(#cond, __FILE__, __LINE__,          \
                                     os_.str());                         \
    }                                                                    \
  } while (0)

// Deterministic uniform doubles from raw mt19937_64 bits. std::uniform_*
// distributions are implementation-defined, so every random draw in the
// project goes through these helpers instead.
template <typename Rng>
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1p-53;
}

template <typename Rng>
inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

}  // namespace seec
