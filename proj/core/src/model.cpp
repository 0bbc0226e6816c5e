#include "oapt/model.hpp"

#include <cmath>

#include "oapt/errors.hpp"

namespace oapt {

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.hpab_count = 2;
  c.channels = 32;
  c.window_size = 4;
  c.mlp_expansion = 2;
  c.heads = 4;
  return c;
}

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.hpab_count = 6;
  c.channels = 180;
  c.window_size = 7;
  c.mlp_expansion = 2;
  c.heads = 6;
  return c;
}

std::vector<LayerKind> ModelConfig::effective_pattern() const {
  using K = LayerKind;
  if (variant == Variant::SHA && !layer_pattern.empty()) return layer_pattern;
  switch (variant) {
    case Variant::SHA:
      // 4 STL-kind + 2 PCSTL-kind per block; shift schedule alternates.
      return {K::STL, K::STL_Shifted, K::PCSTL, K::STL, K::STL_Shifted, K::PCSTL_Shifted};
    case Variant::USA:
      return {K::PCSTL, K::PCSTL_Shifted, K::PCSTL, K::PCSTL_Shifted, K::PCSTL,
              K::PCSTL_Shifted};
    case Variant::UDA:
      return {K::STL, K::STL_Shifted, K::STL, K::STL_Shifted, K::STL, K::STL_Shifted};
    case Variant::PHA:
      // First half: dense branch; second half: clustered branch. Branch
      // outputs are averaged in hpab_forward.
      return {K::STL, K::STL_Shifted, K::STL, K::PCSTL, K::PCSTL_Shifted, K::PCSTL};
  }
  throw ContractError("unknown variant");
}

void ModelConfig::validate() const {
  if (channels % heads != 0)
    throw ArgumentError("channels (" + std::to_string(channels) +
                        ") must be divisible by heads (" + std::to_string(heads) + ")");
  if (variant == Variant::PHA && effective_pattern().size() % 2 != 0)
    throw ArgumentError("PHA needs an even layer count");
}

Variant variant_from_string(const std::string& s) {
  if (s == "SHA") return Variant::SHA;
  if (s == "USA") return Variant::USA;
  if (s == "PHA") return Variant::PHA;
  if (s == "UDA") return Variant::UDA;
  throw ArgumentError("unknown variant '" + s + "' (want SHA|USA|PHA|UDA)");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::SHA: return "SHA";
    case Variant::USA: return "USA";
    case Variant::PHA: return "PHA";
    case Variant::UDA: return "UDA";
  }
  return "?";
}

namespace {

// [C,h,w] <-> token-major [h*w, C]
Tensor to_tokens(const Tensor& x) {
  const auto C = x.extent(0), h = x.extent(1), w = x.extent(2);
  return ops::reshape(ops::permute(x, {1, 2, 0}), {h * w, C});
}

Tensor to_chw(const Tensor& t, std::int64_t h, std::int64_t w) {
  const auto C = t.extent(1);
  return ops::permute(ops::reshape(t, {h, w, C}), {2, 0, 1});
}

Tensor ln_chw(const Tensor& x, const Tensor& g, const Tensor& b) {
  const auto h = x.extent(1), w = x.extent(2);
  return to_chw(ops::layer_norm(to_tokens(x), g, b, 1e-5), h, w);
}

// Gather map for window partition: [C,H,W] -> [nW, T, C].
ops::IndexMap partition_map(std::int64_t C, std::int64_t H, std::int64_t W, int win,
                            std::vector<std::int64_t>* out_shape) {
  const std::int64_t wy = H / win, wx = W / win, T = static_cast<std::int64_t>(win) * win;
  auto idx = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(wy * wx * T * C));
  std::size_t k = 0;
  for (std::int64_t gy = 0; gy < wy; ++gy)
    for (std::int64_t gx = 0; gx < wx; ++gx)
      for (int ty = 0; ty < win; ++ty)
        for (int tx = 0; tx < win; ++tx)
          for (std::int64_t c = 0; c < C; ++c)
            (*idx)[k++] = (c * H + (gy * win + ty)) * W + (gx * win + tx);
  *out_shape = {wy * wx, T, C};
  return idx;
}

// Relative-position index map into the bias table, expanded to [heads,T,T].
ops::IndexMap bias_map(int win, int heads) {
  const int T = win * win, span = 2 * win - 1;
  auto idx = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(heads) * T * T);
  std::size_t k = 0;
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < T; ++j) {
        const int dy = i / win - j / win + win - 1;
        const int dx = i % win - j % win + win - 1;
        (*idx)[k++] = static_cast<std::int64_t>(dy * span + dx) * heads + h;
      }
  return idx;
}

// Additive mask for shifted windows: 0 within a contiguous region,
// -1e9 across wrap seams. Built on window region ids the way Swin does.
Tensor shift_mask(std::int64_t H, std::int64_t W, int win, int s, std::int64_t heads) {
  const std::int64_t wy = H / win, wx = W / win, T = static_cast<std::int64_t>(win) * win;
  std::vector<int> region(static_cast<std::size_t>(H * W));
  auto slice_id = [&](std::int64_t v, std::int64_t n) {
    if (v < n - win) return 0;
    if (v < n - s) return 1;
    return 2;
  };
  // Region ids are read at the window's own coordinates, not rolled with the
  // features: the slice boundaries are chosen so that tokens of each rolled
  // window share an id exactly when they were contiguous before the roll.
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      region[static_cast<std::size_t>(y * W + x)] = slice_id(y, H) * 3 + slice_id(x, W);
  Tensor mask = Tensor::zeros({wy * wx, heads, T, T});
  for (std::int64_t gy = 0; gy < wy; ++gy)
    for (std::int64_t gx = 0; gx < wx; ++gx) {
      const std::int64_t wi = gy * wx + gx;
      for (std::int64_t i = 0; i < T; ++i)
        for (std::int64_t j = 0; j < T; ++j) {
          const std::int64_t yi = gy * win + i / win, xi = gx * win + i % win;
          const std::int64_t yj = gy * win + j / win, xj = gx * win + j % win;
          if (region[static_cast<std::size_t>(yi * W + xi)] !=
              region[static_cast<std::size_t>(yj * W + xj)]) {
            for (std::int64_t h = 0; h < heads; ++h)
              mask.at({wi, h, i, j}) = real(-1e9);
          }
        }
    }
  return mask;
}

}  // namespace

Tensor window_attention(const Tensor& x, const AttentionParams& p, bool shifted) {
  if (x.rank() != 3) throw DimensionError("window_attention expects [C,h,w]");
  const std::int64_t C = x.extent(0), h = x.extent(1), w = x.extent(2);
  const int win = p.window;
  if (C % p.heads != 0)
    throw ArgumentError("channels " + std::to_string(C) + " not divisible by heads " +
                        std::to_string(p.heads));
  const std::int64_t d = C / p.heads;
  const std::int64_t H = (h + win - 1) / win * win;
  const std::int64_t W = (w + win - 1) / win * win;
  Tensor f = (H == h && W == w)
                 ? x
                 : ops::pad2d_replicate(x, 0, static_cast<int>(H - h), 0, static_cast<int>(W - w));
  const bool single_window = (H <= win && W <= win);
  const int s = (shifted && !single_window) ? win / 2 : 0;
  if (s > 0) f = ops::cyclic_shift2d(f, -s, -s);

  std::vector<std::int64_t> tok_shape;
  auto pmap = partition_map(C, H, W, win, &tok_shape);
  Tensor tokens = ops::gather(f, pmap, tok_shape);  // [nW, T, C]
  const std::int64_t nW = tok_shape[0], T = tok_shape[1];

  Tensor q = ops::linear(tokens, p.wq, p.bq);
  Tensor k = ops::linear(tokens, p.wk, p.bk);
  Tensor v = ops::linear(tokens, p.wv, p.bv);
  // [nW,T,C] -> [nW,heads,T,d]
  auto split_heads = [&](const Tensor& t) {
    return ops::permute(ops::reshape(t, {nW, T, p.heads, d}), {0, 2, 1, 3});
  };
  q = ops::mul_scalar(split_heads(q), real(1) / std::sqrt(static_cast<real>(d)));
  k = split_heads(k);
  v = split_heads(v);
  Tensor attn = ops::matmul(q, ops::permute(k, {0, 1, 3, 2}));  // [nW,heads,T,T]
  attn = ops::add_bcast(attn, ops::gather(p.bias_table, bias_map(win, p.heads),
                                          {static_cast<std::int64_t>(p.heads), T, T}));
  if (s > 0) attn = ops::add(attn, shift_mask(H, W, win, s, p.heads));
  attn = ops::softmax_lastdim(attn);
  Tensor out = ops::matmul(attn, v);  // [nW,heads,T,d]
  out = ops::reshape(ops::permute(out, {0, 2, 1, 3}), {nW, T, C});
  out = ops::linear(out, p.wo, p.bo);

  // Un-partition: tokens land back at their padded positions.
  Tensor merged = ops::assemble({out}, {pmap}, {C, H, W});
  if (s > 0) merged = ops::cyclic_shift2d(merged, s, s);
  if (H != h || W != w) merged = ops::crop2d(merged, 0, 0, h, w);
  return merged;
}

namespace {

Tensor mlp_chw(const Tensor& x, const StlParams& p) {
  const auto h = x.extent(1), w = x.extent(2);
  Tensor t = to_tokens(x);
  t = ops::linear(t, p.fc1_w, p.fc1_b);
  t = ops::gelu(t);
  t = ops::linear(t, p.fc2_w, p.fc2_b);
  return to_chw(t, h, w);
}

}  // namespace

Tensor stl_forward(const Tensor& x, const StlParams& p, bool shifted) {
  Tensor y = ops::add(x, window_attention(ln_chw(x, p.ln1_g, p.ln1_b), p.attn, shifted));
  return ops::add(y, mlp_chw(ln_chw(y, p.ln2_g, p.ln2_b), p));
}

Tensor pc_stl_forward(const Tensor& x, const StlParams& p, const ClusterLayout& layout,
                      bool shifted) {
  if (layout.orig_h != x.extent(1) || layout.orig_w != x.extent(2))
    throw ContractError("pc_stl_forward: layout dims " + std::to_string(layout.orig_h) + "x" +
                        std::to_string(layout.orig_w) + " do not match feature " +
                        shape_str(x.shape()));
  PluginHooks hooks = plugin_hooks(layout);
  ClusteredFeature cf = hooks.pre(ln_chw(x, p.ln1_g, p.ln1_b));
  for (int id = 0; id < 4; ++id) {
    Tensor& cl = cf.clusters[static_cast<std::size_t>(id)];
    if (!cl.defined()) continue;  // empty clusters skipped
    cl = window_attention(cl, p.attn, shifted);
  }
  Tensor y = ops::add(x, hooks.post(cf));
  return ops::add(y, mlp_chw(ln_chw(y, p.ln2_g, p.ln2_b), p));
}

namespace {

Tensor run_layer(const Tensor& x, const StlParams& p, const ClusterLayout& layout) {
  switch (p.kind) {
    case LayerKind::STL: return stl_forward(x, p, false);
    case LayerKind::STL_Shifted: return stl_forward(x, p, true);
    case LayerKind::PCSTL: return pc_stl_forward(x, p, layout, false);
    case LayerKind::PCSTL_Shifted: return pc_stl_forward(x, p, layout, true);
  }
  throw ContractError("unknown layer kind");
}

}  // namespace

Tensor hpab_forward(const Tensor& x, const HpabParams& block, const ClusterLayout& layout,
                    Variant variant) {
  Tensor f;
  if (variant == Variant::PHA) {
    const std::size_t half = block.layers.size() / 2;
    Tensor a = x, b = x;
    for (std::size_t i = 0; i < half; ++i) a = run_layer(a, block.layers[i], layout);
    for (std::size_t i = half; i < block.layers.size(); ++i)
      b = run_layer(b, block.layers[i], layout);
    f = ops::mul_scalar(ops::add(a, b), real(0.5));
  } else {
    f = x;
    for (const auto& layer : block.layers) f = run_layer(f, layer, layout);
  }
  f = ops::conv2d(f, block.conv_w, block.conv_b);
  return ops::add(f, x);
}

Reconstructor::Reconstructor(const ModelConfig& cfg, Tape& tape, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::int64_t C = cfg_.channels;
  const std::int64_t span = (2 * cfg_.window_size - 1) * (2 * cfg_.window_size - 1);
  const std::int64_t hidden = C * cfg_.mlp_expansion;

  auto conv_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    Tensor t = params_.add(name, std::move(shape), tape);
    params_.init_conv(t, rng);
    return t;
  };
  auto lin_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    Tensor t = params_.add(name, std::move(shape), tape);
    params_.init_normal(t, rng, 0.02);
    return t;
  };
  auto zero_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    return params_.add(name, std::move(shape), tape);
  };
  auto ones_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    Tensor t = params_.add(name, std::move(shape), tape);
    for (auto& v : t.data()) v = 1;
    return t;
  };

  shallow_w_ = conv_param("shallow.w", {C, 1, 3, 3});
  shallow_b_ = zero_param("shallow.b", {C});

  const auto pattern = cfg_.effective_pattern();
  for (int bi = 0; bi < cfg_.hpab_count; ++bi) {
    const std::string bp = "hpab" + std::to_string(bi) + ".";
    HpabParams block;
    for (std::size_t li = 0; li < pattern.size(); ++li) {
      const std::string lp = bp + "layer" + std::to_string(li) + ".";
      StlParams p;
      p.kind = pattern[li];
      p.ln1_g = ones_param(lp + "ln1.g", {C});
      p.ln1_b = zero_param(lp + "ln1.b", {C});
      p.ln2_g = ones_param(lp + "ln2.g", {C});
      p.ln2_b = zero_param(lp + "ln2.b", {C});
      p.attn.wq = lin_param(lp + "attn.wq", {C, C});
      p.attn.bq = zero_param(lp + "attn.bq", {C});
      p.attn.wk = lin_param(lp + "attn.wk", {C, C});
      p.attn.bk = zero_param(lp + "attn.bk", {C});
      p.attn.wv = lin_param(lp + "attn.wv", {C, C});
      p.attn.bv = zero_param(lp + "attn.bv", {C});
      p.attn.wo = lin_param(lp + "attn.wo", {C, C});
      p.attn.bo = zero_param(lp + "attn.bo", {C});
      p.attn.bias_table = lin_param(lp + "attn.bias", {span, cfg_.heads});
      p.attn.heads = cfg_.heads;
      p.attn.window = cfg_.window_size;
      p.fc1_w = lin_param(lp + "mlp.fc1.w", {hidden, C});
      p.fc1_b = zero_param(lp + "mlp.fc1.b", {hidden});
      p.fc2_w = lin_param(lp + "mlp.fc2.w", {C, hidden});
      p.fc2_b = zero_param(lp + "mlp.fc2.b", {C});
      block.layers.push_back(std::move(p));
    }
    block.conv_w = conv_param(bp + "conv.w", {C, C, 3, 3});
    block.conv_b = zero_param(bp + "conv.b", {C});
    hpabs_.push_back(std::move(block));
  }

  body_w_ = conv_param("body.w", {C, C, 3, 3});
  body_b_ = zero_param("body.b", {C});
  // Zero reconstruction conv: the model starts as the identity through the
  // global residual and training can only improve on the input.
  recon_w_ = zero_param("recon.w", {1, C, 3, 3});
  recon_b_ = zero_param("recon.b", {1});
}

Tensor Reconstructor::forward(const Tensor& img01, int r, int c) {
  if (img01.rank() != 3 || img01.extent(0) != 1)
    throw DimensionError("Reconstructor expects [1,h,w], got " + shape_str(img01.shape()));
  const std::int64_t h = img01.extent(1), w = img01.extent(2);
  const ClusterLayout layout = layout_for(r, c, h, w);
  Tensor f0 = ops::conv2d(img01, shallow_w_, shallow_b_);
  Tensor f = f0;
  for (const auto& block : hpabs_) f = hpab_forward(f, block, layout, cfg_.variant);
  f = ops::add(ops::conv2d(f, body_w_, body_b_), f0);
  return ops::add(img01, ops::conv2d(f, recon_w_, recon_b_));
}

Plane Reconstructor::restore(const Plane& lq, int r, int c) {
  NoGradGuard ng;
  return Plane::from_tensor01(forward(lq.to_tensor01(), r, c));
}

ConvRestorer::ConvRestorer(int channels, Tape& tape, std::uint64_t seed) {
  Rng rng(seed);
  auto conv_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    Tensor t = params_.add(name, std::move(shape), tape);
    params_.init_conv(t, rng);
    return t;
  };
  w1_ = conv_param("c1.w", {channels, 1, 3, 3});
  b1_ = params_.add("c1.b", {channels}, tape);
  w2_ = conv_param("c2.w", {channels, channels, 3, 3});
  b2_ = params_.add("c2.b", {channels}, tape);
  // Zero last conv: identity start through the residual.
  w3_ = params_.add("c3.w", {1, channels, 3, 3}, tape);
  b3_ = params_.add("c3.b", {1}, tape);
}

Tensor ConvRestorer::forward(const Tensor& img01) {
  Tensor f = ops::relu(ops::conv2d(img01, w1_, b1_));
  f = ops::relu(ops::conv2d(f, w2_, b2_));
  return ops::add(img01, ops::conv2d(f, w3_, b3_));
}

Plane ConvRestorer::restore(const Plane& lq) {
  NoGradGuard ng;
  return Plane::from_tensor01(forward(lq.to_tensor01()));
}

}  // namespace oapt
