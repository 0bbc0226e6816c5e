#include "oapt/train.hpp"

#include <algorithm>
#include <iostream>
#include <tuple>

#include "oapt/errors.hpp"
#include "oapt/ops.hpp"

namespace oapt {

std::vector<real> train_reconstructor(const std::vector<LoadedSample>& data, Reconstructor& net,
                                      Adam& opt, Tape& tape, const ReconTrainOptions& opts) {
  if (data.empty()) throw ArgumentError("train_reconstructor: empty dataset");
  Rng rng(opts.seed);
  std::vector<Tensor> lq01, hq01;
  lq01.reserve(data.size());
  hq01.reserve(data.size());
  for (const auto& s : data) {
    lq01.push_back(s.lq.to_tensor01());
    hq01.push_back(s.hq.to_tensor01());
  }
  std::vector<real> curve;
  curve.reserve(static_cast<std::size_t>(opts.steps));
  for (int step = 0; step < opts.steps; ++step) {
    net.params().zero_grads();
    tape.clear();
    Tensor loss;
    for (int b = 0; b < opts.batch; ++b) {
      const auto idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1));
      const auto& spec = data[idx].record.spec;
      const int r = opts.oracle_offsets ? spec.row_offset : 0;
      const int c = opts.oracle_offsets ? spec.col_offset : 0;
      Tensor out = net.forward(lq01[idx], r, c);
      Tensor l = ops::charbonnier(out, hq01[idx]);
      loss = loss.defined() ? ops::add(loss, l) : l;
    }
    loss = ops::mul_scalar(loss, real(1) / opts.batch);
    curve.push_back(loss.item());
    if (opts.log_every > 0 && step % opts.log_every == 0)
      std::cerr << "step " << step << " loss " << loss.item() << "\n";
    tape.backward(loss);
    opt.step();
  }
  return curve;
}

std::vector<EvalRow> evaluate_model(const std::vector<LoadedSample>& data, Reconstructor& net,
                                    OffsetsMode mode, OffsetPredictor* predictor) {
  if (data.empty()) throw ArgumentError("evaluate_model: empty dataset");
  if (mode == OffsetsMode::Predict && predictor == nullptr)
    throw ArgumentError("evaluate_model: predict mode needs a predictor");
  std::vector<EvalRow> rows;
  auto row_for = [&](const CompressionSpec& spec) -> EvalRow& {
    for (auto& r : rows)
      if (r.spec == spec) return r;
    rows.push_back({spec, {}, 0});
    return rows.back();
  };
  for (const auto& s : data) {
    int r = 0, c = 0;
    if (mode == OffsetsMode::Oracle) {
      r = s.record.spec.row_offset;
      c = s.record.spec.col_offset;
    } else if (mode == OffsetsMode::Predict) {
      const OffsetPrediction p = predictor->predict(s.lq);
      r = p.r;
      c = p.c;
    }
    const Plane restored = net.restore(s.lq, r, c);
    const MetricReport m = evaluate_pair(s.hq, restored);
    EvalRow& row = row_for(s.record.spec);
    row.mean.psnr += m.psnr;
    row.mean.ssim += m.ssim;
    row.mean.psnr_b += m.psnr_b;
    row.count += 1;
  }
  for (auto& r : rows) {
    r.mean.psnr /= r.count;
    r.mean.ssim /= r.count;
    r.mean.psnr_b /= r.count;
  }
  std::sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.spec.qf1, a.spec.qf2, a.spec.row_offset, a.spec.col_offset) <
           std::tie(b.spec.qf1, b.spec.qf2, b.spec.row_offset, b.spec.col_offset);
  });
  return rows;
}

bool MotivationResult::direction_holds() const {
  if (cases.size() != 4) return false;
  return cases[0].delta() > cases[1].delta() && cases[2].delta() > cases[3].delta();
}

namespace {

struct MotivationSplit {
  std::vector<LoadedSample> train;
  std::vector<LoadedSample> test;
};

MotivationSplit make_split(const CompressionSpec& spec, const MotivationOptions& opts) {
  MotivationSplit sp;
  Rng rng(opts.seed ^ (static_cast<std::uint64_t>(spec.qf1) << 24 ^
                       static_cast<std::uint64_t>(spec.qf2) << 12 ^
                       static_cast<std::uint64_t>(spec.row_offset) << 6 ^
                       static_cast<std::uint64_t>(spec.col_offset)));
  const int total = opts.sources + 2;  // last two sources are held out
  for (int si = 0; si < total; ++si) {
    const Plane src = make_test_image(opts.source_size, opts.source_size,
                                      opts.seed * 1000 + static_cast<std::uint64_t>(si));
    for (int pi = 0; pi < opts.patches_per_image; ++pi) {
      const std::int64_t ph = opts.patch_size + spec.row_offset;
      const std::int64_t pw = opts.patch_size + spec.col_offset;
      const std::int64_t y0 = rng.uniform_int(0, src.height - ph);
      const std::int64_t x0 = rng.uniform_int(0, src.width - pw);
      Plane patch(ph, pw);
      for (std::int64_t y = 0; y < ph; ++y)
        for (std::int64_t x = 0; x < pw; ++x) patch.at(y, x) = src.at(y0 + y, x0 + x);
      DegradedPair pair = double_jpeg(patch, spec);
      LoadedSample s;
      s.record.spec = spec;
      s.record.size = opts.patch_size;
      s.lq = std::move(pair.lq);
      s.hq = std::move(pair.hq);
      (si < opts.sources ? sp.train : sp.test).push_back(std::move(s));
    }
  }
  return sp;
}

}  // namespace

MotivationResult run_motivation(const MotivationOptions& opts) {
  const std::vector<CompressionSpec> specs = {
      {30, 50, 0, 0}, {30, 50, 4, 4}, {50, 30, 0, 0}, {50, 30, 4, 4}};
  MotivationResult res;
  for (const auto& spec : specs) {
    const MotivationSplit sp = make_split(spec, opts);
    Tape tape;
    ConvRestorer net(opts.channels, tape, opts.seed);
    Adam opt(net.params(), {opts.lr, 0.9, 0.999, 1e-8});
    Rng rng(opts.seed + 17);
    for (int step = 0; step < opts.steps; ++step) {
      net.params().zero_grads();
      tape.clear();
      Tensor loss;
      for (int b = 0; b < opts.batch; ++b) {
        const auto idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(sp.train.size()) - 1));
        Tensor out = net.forward(sp.train[idx].lq.to_tensor01());
        Tensor l = ops::charbonnier(out, sp.train[idx].hq.to_tensor01());
        loss = loss.defined() ? ops::add(loss, l) : l;
      }
      loss = ops::mul_scalar(loss, real(1) / opts.batch);
      tape.backward(loss);
      opt.step();
    }
    MotivationCase mc;
    mc.spec = spec;
    for (const auto& s : sp.test) {
      mc.psnr_before += psnr(s.hq, s.lq);
      mc.psnr_after += psnr(s.hq, net.restore(s.lq));
    }
    mc.psnr_before /= static_cast<double>(sp.test.size());
    mc.psnr_after /= static_cast<double>(sp.test.size());
    res.cases.push_back(mc);
  }
  return res;
}

}  // namespace oapt
