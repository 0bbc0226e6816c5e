#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oapt/rng.hpp"
#include "oapt/tensor.hpp"

namespace oapt {

// Named trainable parameters in registration order. The order is the weight
// file order and the optimizer slot order.
class ParamStore {
 public:
  Tensor add(const std::string& name, std::vector<std::int64_t> shape, Tape& tape);
  Tensor& find(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  std::int64_t param_count() const;
  void zero_grads();

  // Deterministic initializers.
  void init_normal(Tensor& t, Rng& rng, real stddev);
  void init_conv(Tensor& t, Rng& rng);  // fan-in scaled normal

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct AdamConfig {
  real lr = 2e-4;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamStore& params, AdamConfig cfg) : params_(&params), cfg_(cfg) {}
  void step();
  void set_lr(real lr) { cfg_.lr = lr; }
  real lr() const { return cfg_.lr; }

 private:
  ParamStore* params_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<real>> m_, v_;
};

// Weight file: magic "OAPTW", version byte 1, then records of
//   u32 name length (LE), name bytes, u64 rank (LE), rank u64 extents (LE),
//   payload as little-endian float32.
// Round-trips bit-exactly at the float32 level.
void save_weights(const std::string& path, const ParamStore& params);
// Loads into an existing store; throws DataError listing missing/extra names
// or shape mismatches.
void load_weights(const std::string& path, ParamStore& params);

}  // namespace oapt
