#include "oapt/tensor.hpp"

#include <sstream>

namespace oapt {

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  Tensor t;
  t.n_ = std::make_shared<detail::TensorNode>();
  const auto n = shape_numel(shape);
  t.n_->shape = std::move(shape);
  t.n_->data.assign(static_cast<std::size_t>(n), real(0));
  return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, real v) {
  Tensor t = zeros(std::move(shape));
  for (auto& x : t.data()) x = v;
  return t;
}

Tensor Tensor::from_data(std::vector<std::int64_t> shape, std::vector<real> data) {
  const auto n = shape.empty() ? 1 : shape_numel(shape);
  if (n != static_cast<std::int64_t>(data.size()))
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  Tensor t;
  t.n_ = std::make_shared<detail::TensorNode>();
  t.n_->shape = std::move(shape);
  t.n_->data = std::move(data);
  return t;
}

Tensor Tensor::leaf(std::vector<std::int64_t> shape, Tape& tape) {
  Tensor t = zeros(std::move(shape));
  t.set_autograd(&tape);
  return t;
}

void Tensor::set_autograd(Tape* tape) {
  n_->requires_grad = true;
  n_->tape = tape;
  n_->grad.assign(n_->data.size(), real(0));
}

void Tensor::zero_grad() {
  if (n_->requires_grad) n_->grad.assign(n_->data.size(), real(0));
}

real Tensor::item() const {
  if (n_->data.size() != 1)
    throw ContractError("item() on non-scalar tensor " + shape_str(n_->shape));
  return n_->data[0];
}

static std::size_t flat_index(const std::vector<std::int64_t>& shape,
                              std::initializer_list<std::int64_t> idx) {
  if (idx.size() != shape.size())
    throw DimensionError("index rank mismatch for shape " + shape_str(shape));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    flat = flat * static_cast<std::size_t>(shape[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return flat;
}

real& Tensor::at(std::initializer_list<std::int64_t> idx) {
  return n_->data[flat_index(n_->shape, idx)];
}

real Tensor::at(std::initializer_list<std::int64_t> idx) const {
  return n_->data[flat_index(n_->shape, idx)];
}

namespace {
thread_local int g_no_grad_depth = 0;
}

bool autograd_enabled() { return g_no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

void Tape::backward(Tensor loss) {
  if (loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw ContractError("backward on a loss that is not on the tape");
  loss.grad().assign(1, real(1));
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  clear();
}

}  // namespace oapt
