#include "oapt/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "oapt/errors.hpp"
#include "oapt/ops.hpp"

namespace oapt {

Plane crop_input(const Plane& lq) {
  constexpr int N = PredictorConfig::kInputSize;
  Plane out(N, N);
  for (int y = 0; y < N; ++y) {
    const std::int64_t sy = std::min<std::int64_t>(y, lq.height - 1);
    for (int x = 0; x < N; ++x)
      out.at(y, x) = lq.at(sy, std::min<std::int64_t>(x, lq.width - 1));
  }
  return out;
}

std::pair<int, int> quantize_offsets(double raw_r, double raw_c) {
  if (!std::isfinite(raw_r) || !std::isfinite(raw_c))
    throw NumericError("quantize_offsets: non-finite raw offsets");
  auto q = [](double v) {
    const double s = 7.0 / (1.0 + std::exp(-v));
    const double r = s >= 0 ? std::floor(s + 0.5) : std::ceil(s - 0.5);
    return static_cast<int>(std::clamp(r, 0.0, 7.0));
  };
  return {q(raw_r), q(raw_c)};
}

Tensor offset_loss(const Tensor& raw2, int label_r, int label_c) {
  if (raw2.size() != 2) throw DimensionError("offset_loss expects a 2-vector");
  if (label_r < 0 || label_r > 7 || label_c < 0 || label_c > 7)
    throw ArgumentError("offset labels must be in [0,7]");
  Tensor cont = ops::mul_scalar(ops::sigmoid(raw2), 7);
  Tensor label = Tensor::from_data({2}, {static_cast<real>(label_r), static_cast<real>(label_c)});
  return ops::l1(cont, label);
}

OffsetPredictor::OffsetPredictor(const PredictorConfig& cfg, Tape& tape, std::uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  auto conv_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    Tensor t = params_.add(name, std::move(shape), tape);
    params_.init_conv(t, rng);
    return t;
  };
  auto zero_param = [&](const std::string& name, std::vector<std::int64_t> shape) {
    return params_.add(name, std::move(shape), tape);
  };

  stem_w_ = conv_param("stem.w", {cfg_.base_channels, 1, 3, 3});
  // Seed the first stem filters as signed difference kernels. The grid offset
  // shows up as a periodic ridge in the pixel gradients, so handing the net
  // |gradient| channels (each +/- pair under ReLU) shortcuts the hardest part
  // of the search. The filters stay trainable.
  if (cfg_.base_channels >= 4) {
    auto& w = stem_w_.data();
    std::fill(w.begin(), w.begin() + 4 * 9, real(0));
    const real g = 2;
    w[0 * 9 + 4] = g;  w[0 * 9 + 5] = -g;  // horizontal diff
    w[1 * 9 + 4] = -g; w[1 * 9 + 5] = g;
    w[2 * 9 + 4] = g;  w[2 * 9 + 7] = -g;  // vertical diff
    w[3 * 9 + 4] = -g; w[3 * 9 + 7] = g;
  }

  int in_ch = cfg_.base_channels;
  for (int bi = 0; bi < cfg_.d_resblocks; ++bi) {
    const std::string bp = "block" + std::to_string(bi) + ".";
    Block blk;
    blk.stride = bi < cfg_.stride2_stages ? 2 : 1;
    const int out_ch = blk.stride == 2 ? std::min(in_ch * 2, cfg_.max_channels) : in_ch;
    blk.dw1 = conv_param(bp + "dw1", {in_ch, 3, 3});
    blk.pw1 = conv_param(bp + "pw1", {out_ch, in_ch, 1, 1});
    blk.dw2 = conv_param(bp + "dw2", {out_ch, 3, 3});
    blk.pw2 = conv_param(bp + "pw2", {out_ch, out_ch, 1, 1});
    if (blk.stride != 1 || in_ch != out_ch)
      blk.sc_w = conv_param(bp + "sc.w", {out_ch, in_ch, 1, 1});
    blocks_.push_back(std::move(blk));
    in_ch = out_ch;
  }

  head_w_ = zero_param("head.w", {2, in_ch});
  head_b_ = zero_param("head.b", {2});
  // Small head init keeps early predictions near the sigmoid midpoint.
  params_.init_normal(head_w_, rng, 0.01);
}

namespace {

// Per-channel normalization over the spatial extent (the CNN analog of the
// batch norm inside ResNet blocks, usable with a batch of one). No affine:
// the following convolution supplies scale, so biases upstream of a norm are
// dropped entirely.
Tensor channel_norm(const Tensor& f) {
  const std::int64_t C = f.extent(0), hw = f.extent(1) * f.extent(2);
  Tensor flat = ops::reshape(f, {C, hw});
  Tensor normed = ops::layer_norm(flat, Tensor::full({hw}, 1), Tensor::zeros({hw}), 1e-5);
  return ops::reshape(normed, f.shape());
}

}  // namespace

Tensor OffsetPredictor::forward_raw(const Tensor& patch01) {
  if (patch01.rank() != 3 || patch01.extent(0) != 1 ||
      patch01.extent(1) != PredictorConfig::kInputSize ||
      patch01.extent(2) != PredictorConfig::kInputSize)
    throw DimensionError("predictor expects [1,44,44], got " + shape_str(patch01.shape()));
  const Tensor no_bias0 = Tensor::zeros({cfg_.base_channels});
  Tensor f = ops::relu(channel_norm(ops::conv2d(patch01, stem_w_, no_bias0)));
  for (const auto& blk : blocks_) {
    const Tensor nb = Tensor::zeros({blk.pw1.extent(0)});
    Tensor main = ops::depthwise_separable_conv(f, blk.dw1, blk.pw1, nb, blk.stride);
    main = ops::relu(channel_norm(main));
    main = ops::depthwise_separable_conv(main, blk.dw2, blk.pw2, nb, 1);
    main = channel_norm(main);
    Tensor sc = blk.sc_w.defined() ? channel_norm(ops::conv2d(f, blk.sc_w, nb, blk.stride)) : f;
    f = ops::relu(ops::add(main, sc));
  }
  Tensor pooled = ops::mean_hw(f);
  return ops::linear(pooled, head_w_, head_b_);
}

OffsetPrediction OffsetPredictor::predict(const Plane& lq) {
  NoGradGuard ng;
  Tensor raw = forward_raw(crop_input(lq).to_tensor01());
  OffsetPrediction p;
  p.raw_r = raw.data()[0];
  p.raw_c = raw.data()[1];
  std::tie(p.r, p.c) = quantize_offsets(p.raw_r, p.raw_c);
  return p;
}

void train_predictor(const std::vector<LoadedSample>& data, OffsetPredictor& net,
                     Adam& opt, Tape& tape, const PredictorTrainOptions& opts) {
  if (data.empty()) throw ArgumentError("train_predictor: empty dataset");
  Rng rng(opts.seed);
  // No augmentation: flips and free crops move the compression grid and
  // invalidate the offset labels. Inputs are the fixed corner crop.
  std::vector<Tensor> patches;
  patches.reserve(data.size());
  for (const auto& s : data) patches.push_back(crop_input(s.lq).to_tensor01());
  const real lr0 = opt.lr();
  for (int step = 0; step < opts.steps; ++step) {
    // cosine decay to lr0/10: the offset signal needs an aggressive start
    // but a calm finish, or late batches knock the head off its solution
    const real t = opts.steps > 1 ? static_cast<real>(step) / (opts.steps - 1) : 0;
    opt.set_lr(lr0 * (real(0.55) + real(0.45) * std::cos(t * real(3.14159265358979))));
    net.params().zero_grads();
    tape.clear();
    Tensor loss;
    for (int b = 0; b < opts.batch; ++b) {
      const auto idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
      Tensor raw = net.forward_raw(patches[idx]);
      Tensor l = offset_loss(raw, data[idx].record.spec.row_offset,
                             data[idx].record.spec.col_offset);
      loss = loss.defined() ? ops::add(loss, l) : l;
    }
    loss = ops::mul_scalar(loss, real(1) / opts.batch);
    if (opts.log_every > 0 && step % opts.log_every == 0)
      std::cerr << "step " << step << " loss " << loss.item() << "\n";
    tape.backward(loss);
    opt.step();
  }
}

PredictorEval eval_predictor(const std::vector<LoadedSample>& data, OffsetPredictor& net) {
  if (data.empty()) throw ArgumentError("eval_predictor: empty dataset");
  PredictorEval ev;
  for (const auto& s : data) {
    const OffsetPrediction p = net.predict(s.lq);
    const int dr = std::abs(p.r - s.record.spec.row_offset);
    const int dc = std::abs(p.c - s.record.spec.col_offset);
    const bool hit = dr == 0 && dc == 0;
    ev.exact_match += hit ? 1 : 0;
    ev.mean_l1 += dr + dc;
    ev.mean_pred_r += p.r;
    ev.mean_pred_c += p.c;
    auto& cell = ev.per_qf[{s.record.spec.qf1, s.record.spec.qf2}];
    cell.first += hit ? 1 : 0;
    cell.second += 1;
  }
  const double n = static_cast<double>(data.size());
  ev.exact_match /= n;
  ev.mean_l1 /= n;
  ev.mean_pred_r /= n;
  ev.mean_pred_c /= n;
  return ev;
}

}  // namespace oapt
