#include "oapt/cluster.hpp"

#include "oapt/errors.hpp"

namespace oapt {

ClusterLayout layout_for(int r, int c, std::int64_t h, std::int64_t w) {
  if (r < 0 || r > 7 || c < 0 || c > 7)
    throw ArgumentError("cluster offsets must be in [0,7], got (" + std::to_string(r) + "," +
                        std::to_string(c) + ")");
  if (h < 1 || w < 1) throw ArgumentError("cluster layout needs positive dims");
  ClusterLayout L;
  L.r = r;
  L.c = c;
  L.orig_h = h;
  L.orig_w = w;
  L.H = (h + 7) / 8 * 8;
  L.W = (w + 7) / 8 * 8;
  // Removing r rows puts first-compression block boundaries at 8k - r, i.e.
  // intra-block row (8 - r) mod 8 of the second grid.
  L.u_star = (8 - r) % 8;
  L.v_star = (8 - c) % 8;
  const std::int64_t bh = L.H / 8, bw = L.W / 8;
  L.h_a = bh * L.u_star;
  L.h_b = L.H - L.h_a;
  L.w_a = bw * L.v_star;
  L.w_b = L.W - L.w_a;
  L.extents[kTL] = {L.h_a, L.w_a};
  L.extents[kTR] = {L.h_a, L.w_b};
  L.extents[kBL] = {L.h_b, L.w_a};
  L.extents[kBR] = {L.h_b, L.w_b};

  std::array<std::shared_ptr<std::vector<std::int64_t>>, 4> maps;
  for (int id = 0; id < 4; ++id) {
    const auto& e = L.extents[static_cast<std::size_t>(id)];
    maps[static_cast<std::size_t>(id)] =
        std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(e.h * e.w));
  }
  // Cluster coordinates keep block raster order and intra-sub-rectangle raster
  // order, so each cluster is itself a 2-D image of same-pattern cells.
  for (std::int64_t y = 0; y < L.H; ++y) {
    const std::int64_t by = y / 8;
    const int u = static_cast<int>(y % 8);
    const bool top = u < L.u_star;
    const std::int64_t cy = top ? by * L.u_star + u : by * (8 - L.u_star) + (u - L.u_star);
    for (std::int64_t x = 0; x < L.W; ++x) {
      const std::int64_t bx = x / 8;
      const int v = static_cast<int>(x % 8);
      const bool left = v < L.v_star;
      const std::int64_t cx = left ? bx * L.v_star + v : bx * (8 - L.v_star) + (v - L.v_star);
      const int id = (top ? 0 : 2) + (left ? 0 : 1);
      const auto& e = L.extents[static_cast<std::size_t>(id)];
      (*maps[static_cast<std::size_t>(id)])[static_cast<std::size_t>(cy * e.w + cx)] =
          y * L.W + x;
    }
  }
  for (int id = 0; id < 4; ++id)
    L.src[static_cast<std::size_t>(id)] = maps[static_cast<std::size_t>(id)];
  return L;
}

namespace {

// Replicates a single-channel map across C channels of a [C,H,W] buffer.
ops::IndexMap expand_channels(const std::vector<std::int64_t>& base, std::int64_t C,
                              std::int64_t plane) {
  auto out = std::make_shared<std::vector<std::int64_t>>(base.size() * static_cast<std::size_t>(C));
  std::size_t k = 0;
  for (std::int64_t ch = 0; ch < C; ++ch) {
    const std::int64_t off = ch * plane;
    for (const auto i : base) (*out)[k++] = off + i;
  }
  return out;
}

}  // namespace

ClusteredFeature pc(const Tensor& x, const ClusterLayout& layout) {
  if (x.rank() != 3)
    throw ContractError("pc expects [C,h,w], got " + shape_str(x.shape()));
  if (x.extent(1) != layout.orig_h || x.extent(2) != layout.orig_w)
    throw ContractError("pc: layout built for " + std::to_string(layout.orig_h) + "x" +
                        std::to_string(layout.orig_w) + ", got feature " +
                        shape_str(x.shape()));
  const std::int64_t C = x.extent(0);
  Tensor padded = ops::pad2d_replicate(x, 0, static_cast<int>(layout.H - layout.orig_h), 0,
                                       static_cast<int>(layout.W - layout.orig_w));
  ClusteredFeature cf;
  cf.layout = layout;
  for (int id = 0; id < 4; ++id) {
    if (layout.empty(id)) continue;
    const auto& e = layout.extents[static_cast<std::size_t>(id)];
    auto idx = expand_channels(*layout.src[static_cast<std::size_t>(id)], C,
                               layout.H * layout.W);
    cf.clusters[static_cast<std::size_t>(id)] = ops::gather(padded, idx, {C, e.h, e.w});
  }
  return cf;
}

Tensor inv_pc(const ClusteredFeature& cf) {
  const ClusterLayout& L = cf.layout;
  if (cf.passthrough) {
    if (!cf.clusters[kBR].defined())
      throw ContractError("inv_pc: passthrough feature without payload");
    return cf.clusters[kBR];
  }
  std::vector<Tensor> parts;
  std::vector<ops::IndexMap> dest;
  std::int64_t C = -1;
  for (int id = 0; id < 4; ++id) {
    const auto& e = L.extents[static_cast<std::size_t>(id)];
    const Tensor& t = cf.clusters[static_cast<std::size_t>(id)];
    if (L.empty(id)) {
      if (t.defined())
        throw ContractError("inv_pc: payload present for an empty cluster");
      continue;
    }
    if (!t.defined())
      throw ContractError("inv_pc: missing cluster payload");
    if (t.rank() != 3 || t.extent(1) != e.h || t.extent(2) != e.w)
      throw ContractError("inv_pc: cluster extents tampered: got " + shape_str(t.shape()) +
                          ", layout says " + std::to_string(e.h) + "x" + std::to_string(e.w));
    if (C < 0)
      C = t.extent(0);
    else if (t.extent(0) != C)
      throw ContractError("inv_pc: inconsistent channel counts across clusters");
    parts.push_back(t);
    dest.push_back(expand_channels(*L.src[static_cast<std::size_t>(id)], t.extent(0),
                                   L.H * L.W));
  }
  Tensor padded = ops::assemble(parts, dest, {C, L.H, L.W});
  if (L.H == L.orig_h && L.W == L.orig_w) return padded;
  return ops::crop2d(padded, 0, 0, L.orig_h, L.orig_w);
}

PluginHooks plugin_hooks(const ClusterLayout& layout) {
  PluginHooks hooks;
  if (layout.is_identity()) {
    hooks.pre = [layout](const Tensor& x) {
      ClusteredFeature cf;
      cf.layout = layout;
      cf.passthrough = true;
      cf.clusters[kBR] = x;
      return cf;
    };
    hooks.post = [](const ClusteredFeature& cf) { return inv_pc(cf); };
  } else {
    hooks.pre = [layout](const Tensor& x) { return pc(x, layout); };
    hooks.post = [](const ClusteredFeature& cf) { return inv_pc(cf); };
  }
  return hooks;
}

}  // namespace oapt
