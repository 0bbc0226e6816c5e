#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "oapt/errors.hpp"

namespace oapt {

// Build-wide scalar type. Double everywhere: gradient checking is only
// meaningful in double precision, and the toy scale does not need float32
// throughput. Weight files store float32 on disk regardless.
using real = double;

class Tape;

namespace detail {
struct TensorNode {
  std::vector<std::int64_t> shape;
  std::vector<real> data;
  std::vector<real> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  Tape* tape = nullptr;
};
}  // namespace detail

std::string shape_str(const std::vector<std::int64_t>& s);

// Dense row-major N-d array. Value semantics over a shared node: copies are
// aliases, which is what the tape needs to accumulate adjoints.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, real v);
  static Tensor from_data(std::vector<std::int64_t> shape, std::vector<real> data);
  static Tensor scalar(real v) { return from_data({}, {v}); }
  // Trainable leaf registered on a tape.
  static Tensor leaf(std::vector<std::int64_t> shape, Tape& tape);

  bool defined() const { return n_ != nullptr; }
  const std::vector<std::int64_t>& shape() const { return n_->shape; }
  std::int64_t rank() const { return static_cast<std::int64_t>(n_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(n_->data.size()); }
  std::int64_t extent(std::int64_t axis) const { return n_->shape[static_cast<std::size_t>(axis)]; }

  // Handle semantics: a const Tensor still aliases mutable node storage,
  // which the adjoint closures rely on (they capture by value).
  std::vector<real>& data() const { return n_->data; }
  std::vector<real>& grad() const { return n_->grad; }

  bool requires_grad() const { return n_->requires_grad; }
  Tape* tape() const { return n_->tape; }
  void set_autograd(Tape* tape);  // marks requires_grad, zeroes grad buffer
  void zero_grad();

  real item() const;
  real& at(std::initializer_list<std::int64_t> idx);
  real at(std::initializer_list<std::int64_t> idx) const;

  // Same-node identity (aliasing test).
  bool same_node(const Tensor& o) const { return n_ == o.n_; }

 private:
  std::shared_ptr<detail::TensorNode> n_;
};

// Reverse-mode tape. Records one adjoint closure per executed op and replays
// them in strict reverse order. Confined to one logical thread.
class Tape {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss) = 1, replays adjoints in reverse, then clears.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> ops_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

// Scoped suppression of tape recording (inference without adjoint closures).
bool autograd_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

}  // namespace oapt
