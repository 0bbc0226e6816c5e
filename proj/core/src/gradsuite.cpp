#include "oapt/gradsuite.hpp"

#include <cmath>

#include "oapt/cluster.hpp"
#include "oapt/model.hpp"
#include "oapt/ops.hpp"
#include "oapt/rng.hpp"

namespace oapt {

namespace {

// Deterministic non-uniform weighting; turns any output into a scalar whose
// gradient does not cancel structured errors.
Tensor probe(const Tensor& out) {
  std::vector<real> w(static_cast<std::size_t>(out.size()));
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = 0.25 + 0.07 * static_cast<real>((i * 7) % 13);
  return ops::sum(ops::mul(out, Tensor::from_data(out.shape(), std::move(w))));
}

struct Ctx {
  Tape tape;
  ParamStore params;
  Rng rng{1234};

  Tensor leaf(const std::string& name, std::vector<std::int64_t> shape,
              real scale = 0.5, bool away_from_zero = false, real bias = 0) {
    Tensor t = params.add(name, std::move(shape), tape);
    for (auto& v : t.data()) {
      v = rng.normal() * scale + bias;
      if (away_from_zero && std::abs(v) < 0.1) v += v >= 0 ? 0.2 : -0.2;
    }
    return t;
  }
};

void merge(GradCheckReport& into, const std::string& prefix, const GradCheckReport& sub) {
  for (auto e : sub.entries) {
    e.name = prefix + "." + e.name;
    into.entries.push_back(e);
    into.passed = into.passed && e.passed;
  }
}

void check(GradCheckReport& report, const std::string& name, Ctx& ctx,
           const std::function<Tensor()>& f, real step, real threshold) {
  merge(report, name, gradcheck(f, ctx.params, ctx.tape, step, threshold));
}

void check_stl(GradCheckReport& report, real step, real threshold) {
  constexpr int C = 8, heads = 2, win = 4;
  Ctx ctx;
  StlParams p;
  p.ln1_g = ctx.leaf("ln1_g", {C}, 0.2, false, 1);
  p.ln1_b = ctx.leaf("ln1_b", {C}, 0.2);
  p.ln2_g = ctx.leaf("ln2_g", {C}, 0.2, false, 1);
  p.ln2_b = ctx.leaf("ln2_b", {C}, 0.2);
  p.attn.wq = ctx.leaf("wq", {C, C}, 0.3);
  p.attn.bq = ctx.leaf("bq", {C}, 0.1);
  p.attn.wk = ctx.leaf("wk", {C, C}, 0.3);
  p.attn.bk = ctx.leaf("bk", {C}, 0.1);
  p.attn.wv = ctx.leaf("wv", {C, C}, 0.3);
  p.attn.bv = ctx.leaf("bv", {C}, 0.1);
  p.attn.wo = ctx.leaf("wo", {C, C}, 0.3);
  p.attn.bo = ctx.leaf("bo", {C}, 0.1);
  p.attn.bias_table = ctx.leaf("bias_table", {(2 * win - 1) * (2 * win - 1), heads}, 0.3);
  p.attn.heads = heads;
  p.attn.window = win;
  p.fc1_w = ctx.leaf("fc1_w", {2 * C, C}, 0.3);
  p.fc1_b = ctx.leaf("fc1_b", {2 * C}, 0.1);
  p.fc2_w = ctx.leaf("fc2_w", {C, 2 * C}, 0.3);
  p.fc2_b = ctx.leaf("fc2_b", {C}, 0.1);
  Tensor x = ctx.leaf("x", {C, 8, 8}, 0.5);
  check(report, "stl", ctx, [&] { return probe(stl_forward(x, p, false)); }, step, threshold);
}

void check_hpab(GradCheckReport& report, real step, real threshold) {
  constexpr int C = 8, heads = 2, win = 4;
  Ctx ctx;
  HpabParams block;
  const LayerKind kinds[4] = {LayerKind::STL, LayerKind::STL_Shifted, LayerKind::PCSTL,
                              LayerKind::PCSTL_Shifted};
  for (int li = 0; li < 4; ++li) {
    const std::string lp = "l" + std::to_string(li) + ".";
    StlParams p;
    p.kind = kinds[li];
    p.ln1_g = ctx.leaf(lp + "ln1_g", {C}, 0.2, false, 1);
    p.ln1_b = ctx.leaf(lp + "ln1_b", {C}, 0.2);
    p.ln2_g = ctx.leaf(lp + "ln2_g", {C}, 0.2, false, 1);
    p.ln2_b = ctx.leaf(lp + "ln2_b", {C}, 0.2);
    p.attn.wq = ctx.leaf(lp + "wq", {C, C}, 0.3);
    p.attn.bq = ctx.leaf(lp + "bq", {C}, 0.1);
    p.attn.wk = ctx.leaf(lp + "wk", {C, C}, 0.3);
    p.attn.bk = ctx.leaf(lp + "bk", {C}, 0.1);
    p.attn.wv = ctx.leaf(lp + "wv", {C, C}, 0.3);
    p.attn.bv = ctx.leaf(lp + "bv", {C}, 0.1);
    p.attn.wo = ctx.leaf(lp + "wo", {C, C}, 0.3);
    p.attn.bo = ctx.leaf(lp + "bo", {C}, 0.1);
    p.attn.bias_table = ctx.leaf(lp + "bias_table", {(2 * win - 1) * (2 * win - 1), heads}, 0.3);
    p.attn.heads = heads;
    p.attn.window = win;
    p.fc1_w = ctx.leaf(lp + "fc1_w", {2 * C, C}, 0.3);
    p.fc1_b = ctx.leaf(lp + "fc1_b", {2 * C}, 0.1);
    p.fc2_w = ctx.leaf(lp + "fc2_w", {C, 2 * C}, 0.3);
    p.fc2_b = ctx.leaf(lp + "fc2_b", {C}, 0.1);
    block.layers.push_back(std::move(p));
  }
  block.conv_w = ctx.leaf("conv_w", {C, C, 3, 3}, 0.15);
  block.conv_b = ctx.leaf("conv_b", {C}, 0.1);
  Tensor x = ctx.leaf("x", {C, 12, 12}, 0.5);
  const ClusterLayout layout = layout_for(4, 4, 12, 12);
  check(report, "hpab", ctx,
        [&] { return probe(hpab_forward(x, block, layout, Variant::SHA)); }, step, threshold);
}

}  // namespace

GradCheckReport run_gradcheck_suite(real step, real threshold) {
  GradCheckReport report;
  auto run = [&](const std::string& name, auto&& build) {
    Ctx ctx;
    auto f = build(ctx);
    check(report, name, ctx, f, step, threshold);
  };

  run("add", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 4}), b = c.leaf("b", {3, 4});
    return [=] { return probe(ops::add(a, b)); };
  });
  run("sub", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 4}), b = c.leaf("b", {3, 4});
    return [=] { return probe(ops::sub(a, b)); };
  });
  run("mul", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 4}), b = c.leaf("b", {3, 4});
    return [=] { return probe(ops::mul(a, b)); };
  });
  run("add_scalar", [](Ctx& c) {
    Tensor a = c.leaf("a", {5});
    return [=] { return probe(ops::add_scalar(a, 0.7)); };
  });
  run("mul_scalar", [](Ctx& c) {
    Tensor a = c.leaf("a", {5});
    return [=] { return probe(ops::mul_scalar(a, -1.3)); };
  });
  run("add_bcast", [](Ctx& c) {
    Tensor a = c.leaf("a", {2, 3, 4}), b = c.leaf("b", {3, 4});
    return [=] { return probe(ops::add_bcast(a, b)); };
  });
  run("sum", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 4});
    return [=] { return ops::sum(a); };
  });
  run("mean", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 4});
    return [=] { return ops::mean(a); };
  });
  run("mean_hw", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 4, 5});
    return [=] { return probe(ops::mean_hw(a)); };
  });
  run("relu", [](Ctx& c) {
    Tensor a = c.leaf("a", {4, 4}, 0.5, true);
    return [=] { return probe(ops::relu(a)); };
  });
  run("gelu", [](Ctx& c) {
    Tensor a = c.leaf("a", {4, 4});
    return [=] { return probe(ops::gelu(a)); };
  });
  run("sigmoid", [](Ctx& c) {
    Tensor a = c.leaf("a", {4, 4});
    return [=] { return probe(ops::sigmoid(a)); };
  });
  run("matmul", [](Ctx& c) {
    Tensor a = c.leaf("a", {2, 3, 4}), b = c.leaf("b", {2, 4, 5});
    return [=] { return probe(ops::matmul(a, b)); };
  });
  run("matmul_bcast", [](Ctx& c) {
    Tensor a = c.leaf("a", {2, 3, 4}), b = c.leaf("b", {1, 4, 5});
    return [=] { return probe(ops::matmul(a, b)); };
  });
  run("softmax", [](Ctx& c) {
    Tensor a = c.leaf("a", {3, 6});
    return [=] { return probe(ops::softmax_lastdim(a)); };
  });
  run("layer_norm", [](Ctx& c) {
    Tensor a = c.leaf("a", {5, 8});
    Tensor g = c.leaf("g", {8}, 0.2, false, 1), b = c.leaf("b", {8}, 0.2);
    return [=] { return probe(ops::layer_norm(a, g, b, 1e-5)); };
  });
  run("linear", [](Ctx& c) {
    Tensor x = c.leaf("x", {3, 4}), w = c.leaf("w", {5, 4}), b = c.leaf("b", {5});
    return [=] { return probe(ops::linear(x, w, b)); };
  });
  run("conv2d", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 6, 5}), w = c.leaf("w", {3, 2, 3, 3}), b = c.leaf("b", {3});
    return [=] { return probe(ops::conv2d(x, w, b)); };
  });
  run("conv2d_s2", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 7, 6}), w = c.leaf("w", {3, 2, 3, 3}), b = c.leaf("b", {3});
    return [=] { return probe(ops::conv2d(x, w, b, 2)); };
  });
  run("depthwise_conv2d", [](Ctx& c) {
    Tensor x = c.leaf("x", {3, 6, 6}), w = c.leaf("w", {3, 3, 3});
    return [=] { return probe(ops::depthwise_conv2d(x, w)); };
  });
  run("dwsep_conv", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 5, 5}), wd = c.leaf("wd", {2, 3, 3});
    Tensor wp = c.leaf("wp", {4, 2, 1, 1}), b = c.leaf("b", {4});
    return [=] { return probe(ops::depthwise_separable_conv(x, wd, wp, b)); };
  });
  run("dwsep_conv_s2", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 6, 5}), wd = c.leaf("wd", {2, 3, 3});
    Tensor wp = c.leaf("wp", {4, 2, 1, 1}), b = c.leaf("b", {4});
    return [=] { return probe(ops::depthwise_separable_conv(x, wd, wp, b, 2)); };
  });
  run("gather", [](Ctx& c) {
    Tensor x = c.leaf("x", {6});
    auto idx = std::make_shared<std::vector<std::int64_t>>(
        std::vector<std::int64_t>{5, 1, 3, 1});
    return [=] { return probe(ops::gather(x, idx, {4})); };
  });
  run("assemble", [](Ctx& c) {
    Tensor x = c.leaf("x", {6});
    auto i0 = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{5, 1, 3});
    auto i1 = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{0, 4, 2});
    auto d0 = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{0, 2, 4});
    auto d1 = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{1, 3, 5});
    return [=] {
      std::vector<Tensor> parts = {ops::gather(x, i0, {3}), ops::gather(x, i1, {3})};
      return probe(ops::assemble(parts, {d0, d1}, {6}));
    };
  });
  run("reshape_permute", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 3, 4});
    return [=] { return probe(ops::reshape(ops::permute(x, {2, 0, 1}), {4, 6})); };
  });
  run("pad_crop", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 4, 5});
    return [=] { return probe(ops::crop2d(ops::pad2d_replicate(x, 1, 2, 2, 1), 1, 0, 5, 7)); };
  });
  run("cyclic_shift", [](Ctx& c) {
    Tensor x = c.leaf("x", {2, 4, 5});
    return [=] { return probe(ops::cyclic_shift2d(x, 2, -1)); };
  });
  run("charbonnier", [](Ctx& c) {
    Tensor p = c.leaf("p", {3, 4}), t = c.leaf("t", {3, 4});
    return [=] { return ops::charbonnier(p, t); };
  });
  run("l1", [](Ctx& c) {
    Tensor p = c.leaf("p", {3, 4}, 0.5, true);
    Tensor t = c.leaf("t", {3, 4}, 0.5, true, 3);  // keep pred - target off zero
    return [=] { return ops::l1(p, t); };
  });

  check_stl(report, step, threshold);
  check_hpab(report, step, threshold);
  return report;
}

}  // namespace oapt
