#pragma once

#include <memory>
#include <vector>

#include "oapt/tensor.hpp"

namespace oapt::ops {

// Elementwise / reductions
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, real s);
Tensor mul_scalar(const Tensor& a, real s);
// b's shape must be a trailing suffix of a's shape; b is broadcast over the
// leading extents.
Tensor add_bcast(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_hw(const Tensor& x);  // [C,H,W] -> [C]

// Activations
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation, see ops.cpp for constants
Tensor sigmoid(const Tensor& x);

// Linear algebra
// Batched matrix product [..,m,k] x [..,k,n] -> [..,m,n]; batch extents
// broadcast (equal or 1). Sequential reduction over k.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // w [out,in]

// Convolutions on [C,H,W]; zero padding of k/2 each side, odd kernels only.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1);
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride = 1);  // w [C,kh,kw]
Tensor depthwise_separable_conv(const Tensor& x, const Tensor& w_depth,
                                const Tensor& w_point, const Tensor& b, int stride = 1);

// Data movement (pure index maps; adjoints are scatter-adds)
using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;
Tensor gather(const Tensor& x, const IndexMap& idx, std::vector<std::int64_t> out_shape);
// Inverse of a set of gathers: parts[p][i] lands at dest[p][i]; the union of
// dest maps must be a bijection onto out_shape.
Tensor assemble(const std::vector<Tensor>& parts, const std::vector<IndexMap>& dest,
                std::vector<std::int64_t> out_shape);
Tensor reshape(const Tensor& x, std::vector<std::int64_t> shape);
Tensor permute(const Tensor& x, const std::vector<std::int64_t>& axes);
Tensor pad2d_replicate(const Tensor& x, int top, int bottom, int left, int right);
Tensor crop2d(const Tensor& x, int top, int left, std::int64_t out_h, std::int64_t out_w);
Tensor cyclic_shift2d(const Tensor& x, int dy, int dx);  // positive rolls down/right

// Losses
Tensor charbonnier(const Tensor& pred, const Tensor& target, real eps = 1e-3);
Tensor l1(const Tensor& pred, const Tensor& target);

}  // namespace oapt::ops
