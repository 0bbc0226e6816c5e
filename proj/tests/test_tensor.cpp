#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oapt/gradcheck.hpp"
#include "oapt/nn.hpp"
#include "oapt/ops.hpp"
#include "oapt/rng.hpp"
#include "oapt/tensor.hpp"

using namespace oapt;

namespace {

Tensor make_leaf(ParamStore& ps, Tape& tape, const std::string& name,
                 std::vector<std::int64_t> shape, std::vector<real> data) {
  Tensor t = ps.add(name, std::move(shape), tape);
  t.data() = std::move(data);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and hand-computed product") {
  Tensor I = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(3);
  std::vector<real> av(9);
  for (auto& v : av) v = rng.normal();
  Tensor A = Tensor::from_data({3, 3}, av);
  Tensor P = ops::matmul(I, A);
  for (int i = 0; i < 9; ++i) CHECK(P.data()[i] == doctest::Approx(av[i]).epsilon(1e-12));

  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {1, 1});
  Tensor c = ops::matmul(a, b);
  CHECK(c.data()[0] == 3);
  CHECK(c.data()[1] == 7);
}

TEST_CASE("matmul gradient of sum(a*b) wrt a is ones x b^T") {
  Tape tape;
  ParamStore ps;
  Rng rng(9);
  std::vector<real> av(20), bv(15);
  for (auto& v : av) v = rng.normal();
  for (auto& v : bv) v = rng.normal();
  Tensor a = make_leaf(ps, tape, "a", {4, 5}, av);
  Tensor b = make_leaf(ps, tape, "b", {5, 3}, bv);
  tape.backward(ops::sum(ops::matmul(a, b)));
  // d sum(ab)/da[i,k] = sum_j b[k,j]
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 5; ++k) {
      real expect = 0;
      for (int j = 0; j < 3; ++j) expect += bv[static_cast<std::size_t>(k * 3 + j)];
      CHECK(a.grad()[static_cast<std::size_t>(i * 5 + k)] ==
            doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 2});
  CHECK_THROWS_AS(ops::matmul(a, b), DimensionError);
}

TEST_CASE("softmax uniform, stabilized, rows sum to one") {
  Tensor z = ops::softmax_lastdim(Tensor::from_data({4}, {0, 0, 0, 0}));
  for (int i = 0; i < 4; ++i) CHECK(z.data()[i] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor s = ops::softmax_lastdim(Tensor::from_data({2}, {1000, 0}));
  CHECK(s.data()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.data()[1] == doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(4);
  std::vector<real> xv(21);
  for (auto& v : xv) v = rng.normal() * 3;
  Tensor r = ops::softmax_lastdim(Tensor::from_data({3, 7}, xv));
  for (int row = 0; row < 3; ++row) {
    real sum = 0;
    for (int j = 0; j < 7; ++j) sum += r.data()[static_cast<std::size_t>(row * 7 + j)];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax rejects non-finite input") {
  CHECK_THROWS_AS(
      ops::softmax_lastdim(Tensor::from_data({2}, {std::nan(""), 0.0})), NumericError);
}

TEST_CASE("layer_norm constant token, two-point token, random statistics") {
  Tensor g = Tensor::from_data({4}, {1, 1, 1, 1});
  Tensor b = Tensor::zeros({4});
  Tensor c = ops::layer_norm(Tensor::from_data({1, 4}, {5, 5, 5, 5}), g, b, 1e-5);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(c.data()[i]) < 1e-9);

  Tensor g2 = Tensor::from_data({2}, {1, 1});
  Tensor t = ops::layer_norm(Tensor::from_data({1, 2}, {1, 3}), g2, Tensor::zeros({2}), 1e-12);
  CHECK(t.data()[0] == doctest::Approx(-1).epsilon(1e-5));
  CHECK(t.data()[1] == doctest::Approx(1).epsilon(1e-5));

  Rng rng(5);
  std::vector<real> xv(32);
  for (auto& v : xv) v = rng.normal() * 4 + 2;
  Tensor gg = Tensor::from_data({32}, std::vector<real>(32, 1));
  Tensor out = ops::layer_norm(Tensor::from_data({1, 32}, xv), gg, Tensor::zeros({32}), 1e-8);
  real mean = 0, var = 0;
  for (auto v : out.data()) mean += v;
  mean /= 32;
  for (auto v : out.data()) var += (v - mean) * (v - mean);
  var /= 32;
  CHECK(std::abs(mean) < 1e-6);
  CHECK(std::abs(var - 1) < 1e-4);
}

TEST_CASE("layer_norm requires positive eps") {
  Tensor g = Tensor::from_data({2}, {1, 1});
  CHECK_THROWS_AS(ops::layer_norm(Tensor::zeros({1, 2}), g, Tensor::zeros({2}), 0),
                  ArgumentError);
}

TEST_CASE("conv2d 1x1 identity and 3x3 averaging on constant input") {
  Rng rng(6);
  std::vector<real> xv(25);
  for (auto& v : xv) v = rng.normal();
  Tensor x = Tensor::from_data({1, 5, 5}, xv);
  Tensor w = Tensor::from_data({1, 1, 1, 1}, {1});
  Tensor out = ops::conv2d(x, w, Tensor::zeros({1}));
  for (int i = 0; i < 25; ++i) CHECK(out.data()[i] == doctest::Approx(xv[i]).epsilon(1e-12));

  Tensor c = Tensor::full({1, 5, 5}, 9);
  Tensor avg = Tensor::full({1, 1, 3, 3}, real(1) / 9);
  Tensor y = ops::conv2d(c, avg, Tensor::zeros({1}));
  CHECK(y.at({0, 2, 2}) == doctest::Approx(9).epsilon(1e-12));   // interior
  CHECK(y.at({0, 0, 0}) == doctest::Approx(4).epsilon(1e-12));   // corner: 4 of 9 taps inside
}

TEST_CASE("conv2d channel mismatch") {
  CHECK_THROWS_AS(
      ops::conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({3, 1, 3, 3}), Tensor::zeros({3})),
      DimensionError);
}

TEST_CASE("depthwise separable conv: delta kernel identity and composition") {
  Rng rng(7);
  std::vector<real> xv(2 * 5 * 5);
  for (auto& v : xv) v = rng.normal();
  Tensor x = Tensor::from_data({2, 5, 5}, xv);

  // depthwise delta, pointwise identity
  Tensor wd = Tensor::zeros({2, 3, 3});
  wd.at({0, 1, 1}) = 1;
  wd.at({1, 1, 1}) = 1;
  Tensor wp = Tensor::zeros({2, 2, 1, 1});
  wp.at({0, 0, 0, 0}) = 1;
  wp.at({1, 1, 0, 0}) = 1;
  Tensor out = ops::depthwise_separable_conv(x, wd, wp, Tensor::zeros({2}));
  for (std::size_t i = 0; i < xv.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(xv[i]).epsilon(1e-12));

  // equivalence with depthwise_conv2d followed by 1x1 conv2d
  std::vector<real> wdv(2 * 9), wpv(3 * 2);
  for (auto& v : wdv) v = rng.normal();
  for (auto& v : wpv) v = rng.normal();
  Tensor wd2 = Tensor::from_data({2, 3, 3}, wdv);
  Tensor wp2 = Tensor::from_data({3, 2, 1, 1}, wpv);
  Tensor b = Tensor::from_data({3}, {0.1, -0.2, 0.3});
  Tensor fused = ops::depthwise_separable_conv(x, wd2, wp2, b);
  Tensor composed = ops::conv2d(ops::depthwise_conv2d(x, wd2), wp2, b);
  for (std::int64_t i = 0; i < fused.size(); ++i)
    CHECK(std::abs(fused.data()[static_cast<std::size_t>(i)] -
                   composed.data()[static_cast<std::size_t>(i)]) < 1e-6);
}

TEST_CASE("depthwise separable parameter count for c=8,k=3,c_out=16") {
  const std::int64_t depth = 8 * 3 * 3, point = 16 * 8, bias = 16;
  CHECK(depth + point + bias == 216);
  CHECK(shape_numel({8, 3, 3}) + shape_numel({16, 8, 1, 1}) + shape_numel({16}) == 216);
}

TEST_CASE("activation fixed points and linear identity") {
  CHECK(ops::gelu(Tensor::scalar(0)).item() == 0);
  CHECK(ops::relu(Tensor::scalar(-5)).item() == 0);
  Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor I = Tensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor y = ops::linear(x, I, Tensor::zeros({3}));
  for (int i = 0; i < 6; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
  Tape tape;
  ParamStore ps;
  Tensor x = make_leaf(ps, tape, "x", {4}, {1, -2, 3, 0.5});
  tape.backward(ops::sum(x));
  for (auto g : x.grad()) CHECK(g == 1);

  ps.zero_grads();
  tape.backward(ops::sum(ops::mul(x, x)));
  for (int i = 0; i < 4; ++i)
    CHECK(x.grad()[static_cast<std::size_t>(i)] == doctest::Approx(2 * x.data()[i]));
}

TEST_CASE("backward on non-scalar is a contract error") {
  Tape tape;
  ParamStore ps;
  Tensor x = make_leaf(ps, tape, "x", {3}, {1, 2, 3});
  Tensor y = ops::mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("fan-out accumulates gradients additively") {
  Tape tape;
  ParamStore ps;
  Tensor x = make_leaf(ps, tape, "x", {2}, {3, 4});
  tape.backward(ops::sum(ops::add(x, x)));  // y = 2x
  CHECK(x.grad()[0] == 2);
  CHECK(x.grad()[1] == 2);
}

TEST_CASE("forward without backward has no hidden state") {
  Tensor x = Tensor::from_data({3}, {1, 2, 3});
  Tensor a = ops::gelu(x);
  Tensor b = ops::gelu(x);
  for (int i = 0; i < 3; ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("NoGradGuard suppresses tape recording") {
  Tape tape;
  ParamStore ps;
  Tensor x = make_leaf(ps, tape, "x", {3}, {1, 2, 3});
  const std::size_t before = tape.size();
  {
    NoGradGuard ng;
    (void)ops::sum(ops::mul(x, x));
  }
  CHECK(tape.size() == before);
}

TEST_CASE("gradcheck: quadratic is near machine precision") {
  Tape tape;
  ParamStore ps;
  Tensor x = make_leaf(ps, tape, "x", {5}, {0.3, -1.2, 2.0, 0.7, -0.4});
  auto report = gradcheck([&] { return ops::sum(ops::mul(x, x)); }, ps, tape);
  CHECK(report.passed);
  CHECK(report.worst() < 1e-9);
}

TEST_CASE("gradcheck: softmax cross-entropy style objective passes") {
  Tape tape;
  ParamStore ps;
  Rng rng(11);
  std::vector<real> xv(8), wv(8);
  for (auto& v : xv) v = rng.normal();
  for (auto& v : wv) v = rng.uniform();
  Tensor x = make_leaf(ps, tape, "logits", {2, 4}, xv);
  Tensor w = Tensor::from_data({2, 4}, wv);
  auto report = gradcheck(
      [&] {
        Tensor p = ops::softmax_lastdim(x);
        return ops::sum(ops::mul(p, w));
      },
      ps, tape);
  CHECK(report.passed);
  CHECK(report.worst() < 1e-6);
}

TEST_CASE("gradcheck: corrupted adjoint is reported as failure") {
  Tape tape;
  ParamStore ps;
  Tensor x = make_leaf(ps, tape, "x", {3}, {1, 2, 3});
  auto report = gradcheck(
      [&] {
        Tensor y = ops::sum(ops::mul(x, x));
        tape.record([x] { x.grad()[0] += 0.5; });  // deliberate corruption
        return y;
      },
      ps, tape);
  CHECK_FALSE(report.passed);
}

TEST_CASE("weight file round-trips through float32") {
  Tape tape;
  ParamStore a;
  Rng rng(21);
  Tensor t1 = a.add("layer.w", {3, 4}, tape);
  Tensor t2 = a.add("layer.b", {4}, tape);
  a.init_normal(t1, rng, 1.0);
  a.init_normal(t2, rng, 1.0);
  const std::string path = "weights_roundtrip.bin";
  save_weights(path, a);

  Tape tape2;
  ParamStore b;
  b.add("layer.w", {3, 4}, tape2);
  b.add("layer.b", {4}, tape2);
  load_weights(path, b);
  // double -> float32 -> double must be idempotent from the second save on
  save_weights(path, b);
  Tape tape3;
  ParamStore c;
  c.add("layer.w", {3, 4}, tape3);
  c.add("layer.b", {4}, tape3);
  load_weights(path, c);
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(b.find("layer.w").data()[i] == c.find("layer.w").data()[i]);
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(static_cast<float>(a.find("layer.w").data()[i]) ==
          static_cast<float>(b.find("layer.w").data()[i]));
}

TEST_CASE("weight loading reports missing, extra and mismatched tensors") {
  Tape tape;
  ParamStore a;
  a.add("only.w", {2, 2}, tape);
  save_weights("weights_err.bin", a);

  Tape tape2;
  ParamStore wrong_name;
  wrong_name.add("other.w", {2, 2}, tape2);
  CHECK_THROWS_AS(load_weights("weights_err.bin", wrong_name), DataError);

  Tape tape3;
  ParamStore wrong_shape;
  wrong_shape.add("only.w", {4}, tape3);
  CHECK_THROWS_AS(load_weights("weights_err.bin", wrong_shape), DataError);

  CHECK_THROWS_AS(load_weights("no_such_file.bin", a), DataError);
}
