#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>

#include "oapt/ops.hpp"
#include "oapt/tensor.hpp"

namespace oapt {

// Pattern ids: which first-compression block the cell of a second-pass 8x8
// block came from.
enum PatternId : int { kTL = 0, kTR = 1, kBL = 2, kBR = 3 };

// Bijective index map from a padded feature map to its <=4 same-pattern
// sub-images for one offset pair. Immutable and shareable.
struct ClusterLayout {
  int r = 0, c = 0;                  // offsets
  std::int64_t orig_h = 0, orig_w = 0;
  std::int64_t H = 0, W = 0;         // padded dims, multiples of 8
  int u_star = 0, v_star = 0;        // intra-block split points, (8-r)%8 / (8-c)%8
  std::int64_t h_a = 0, h_b = 0;     // cluster heights: h_a = (H/8)*u*, h_b = H-h_a
  std::int64_t w_a = 0, w_b = 0;

  struct Extent {
    std::int64_t h = 0, w = 0;
  };
  std::array<Extent, 4> extents;     // TL, TR, BL, BR (zero extents allowed)

  // Per cluster, in cluster raster order: index into the padded H*W map.
  std::array<std::shared_ptr<const std::vector<std::int64_t>>, 4> src;

  bool is_identity() const { return u_star == 0 && v_star == 0; }
  bool empty(int id) const { return extents[static_cast<std::size_t>(id)].h == 0 ||
                                    extents[static_cast<std::size_t>(id)].w == 0; }
};

ClusterLayout layout_for(int r, int c, std::int64_t h, std::int64_t w);

// <=4 sub-feature-maps (channels preserved). Empty clusters stay as
// default-constructed tensors; their zero extents live in the layout.
struct ClusteredFeature {
  std::array<Tensor, 4> clusters;
  ClusterLayout layout;
  bool passthrough = false;  // plugin fast path: clusters[kBR] is the input itself
};

// Replicate-pads x [C,h,w] to [C,H,W] and applies the forward permutation
// channel-wise. Pure gather, no arithmetic on values.
ClusteredFeature pc(const Tensor& x, const ClusterLayout& layout);

// Exact inverse: inv_pc(pc(x, L)) == x after cropping the padding.
Tensor inv_pc(const ClusteredFeature& cf);

// Zero-parameter plugin pair for wrapping any attention layer. With an
// identity layout the hooks pass the input through untouched (no padding),
// so wrapped == unwrapped bit-exactly.
struct PluginHooks {
  std::function<ClusteredFeature(const Tensor&)> pre;
  std::function<Tensor(const ClusteredFeature&)> post;
};

PluginHooks plugin_hooks(const ClusterLayout& layout);

}  // namespace oapt
