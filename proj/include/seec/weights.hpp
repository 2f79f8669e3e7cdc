#pragma once

// Named parameter registry with canonical serialization. Registration order
// is the on-disk order; the model hash is computed over the serialized
// bytes, so identical weights always hash identically.
//
// Checkpoint layout: magic "SEECW001", then per tensor: name length (u32le),
// name bytes, ndim (u32le), dims (u32le each), values (f64le).

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "seec/tensor.hpp"

namespace seec {

inline constexpr char kWeightsMagic[8] = {'S', 'E', 'E', 'C',
                                          'W', '0', '0', '1'};

class ParamStore {
 public:
  // Uniform(-bound, bound) init with bound = gain * sqrt(3 / fan_in),
  // drawn from the store's deterministic rng.
  nd::Tensor create(const std::string& name, std::vector<int> shape,
                    double gain, int fan_in);
  nd::Tensor create_const(const std::string& name, std::vector<int> shape,
                          double value);
  // Non-trainable metadata tensor (serialized, hashed, never updated).
  nd::Tensor create_meta(const std::string& name, std::vector<int> shape,
                         std::vector<double> values);

  void seed(std::uint64_t s) { rng_.seed(s); }

  const std::vector<std::pair<std::string, nd::Tensor>>& items() const {
    return items_;
  }
  std::vector<std::pair<std::string, nd::Tensor>>& items() { return items_; }
  nd::Tensor find(const std::string& name) const;
  std::size_t total_values() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, nd::Tensor>> items_;
  std::mt19937_64 rng_{0};
};

std::vector<std::uint8_t> serialize_params(const ParamStore& store);
// Copies values into the store's existing tensors, matching by name and
// shape; unknown or missing names are validation errors.
void deserialize_params(std::span<const std::uint8_t> bytes,
                        ParamStore& store);

std::array<std::uint8_t, 16> model_hash(const ParamStore& store);

void save_checkpoint(const std::string& path, const ParamStore& store);
void load_checkpoint(const std::string& path, ParamStore& store);

// Shapes of the named tensors in a checkpoint file, for configuration
// inference before the model is built.
std::vector<std::pair<std::string, std::vector<int>>> peek_checkpoint(
    const std::string& path);

// Full checkpoint contents as free-standing tensors.
std::vector<std::pair<std::string, nd::Tensor>> read_checkpoint(
    const std::string& path);

}  // namespace seec
