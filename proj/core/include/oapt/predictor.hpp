#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "oapt/degrade.hpp"
#include "oapt/nn.hpp"
#include "oapt/plane.hpp"

namespace oapt {

struct PredictorConfig {
  int d_resblocks = 4;
  int base_channels = 16;
  int max_channels = 64;
  // The first stride2_stages blocks downsample by 2 and double the channels
  // (capped at max_channels). Three stages, not four: the 44x44 input
  // degenerates under a fourth halving.
  int stride2_stages = 3;
  static constexpr int kInputSize = 44;

  static PredictorConfig toy() { return {}; }
  static PredictorConfig full() {
    PredictorConfig c;
    c.d_resblocks = 8;
    c.base_channels = 64;
    c.max_channels = 512;
    return c;
  }
};

struct OffsetPrediction {
  double raw_r = 0, raw_c = 0;  // last-layer outputs, unbounded
  int r = 0, c = 0;             // Round(Sigmoid(raw) * 7), in [0,7]
};

// Top-left 44x44 patch (where the JPEG grid starts); replicate-pads smaller
// images.
Plane crop_input(const Plane& lq);

// Round(Sigmoid(raw) * 7), rounding half away from zero.
std::pair<int, int> quantize_offsets(double raw_r, double raw_c);

// Differentiable training surrogate: L1 between Sigmoid(raw)*7 and the
// labels (the round is a straight-through identity at train time).
Tensor offset_loss(const Tensor& raw2, int label_r, int label_c);

// ResNet-style CNN over depthwise separable convolutions (D-Resblocks) with
// per-channel normalization after each conv, global average pooling, linear
// head to 2 outputs.
class OffsetPredictor {
 public:
  OffsetPredictor(const PredictorConfig& cfg, Tape& tape, std::uint64_t seed);

  Tensor forward_raw(const Tensor& patch01);  // [1,44,44] -> [2]
  OffsetPrediction predict(const Plane& lq);

  ParamStore& params() { return params_; }
  const PredictorConfig& config() const { return cfg_; }

 private:
  struct Block {
    Tensor dw1, pw1, dw2, pw2;
    Tensor sc_w;  // 1x1 shortcut, defined only when shape changes
    int stride = 1;
  };
  PredictorConfig cfg_;
  ParamStore params_;
  Tensor stem_w_;
  std::vector<Block> blocks_;
  Tensor head_w_, head_b_;
};

struct PredictorTrainOptions {
  int steps = 1500;
  int batch = 8;
  real lr = 2e-3;  // toy schedule; at full scale use 2e-4
  std::uint64_t seed = 0;
  int log_every = 0;  // 0 = quiet
};

struct PredictorEval {
  double exact_match = 0;  // both offsets right
  double mean_l1 = 0;      // |dr| + |dc| on quantized predictions
  // Mean predicted offsets; exposes the center-bias failure mode.
  double mean_pred_r = 0, mean_pred_c = 0;
  std::map<std::pair<int, int>, std::pair<int, int>> per_qf;  // (qf1,qf2) -> (hits, total)
};

void train_predictor(const std::vector<LoadedSample>& data, OffsetPredictor& net,
                     Adam& opt, Tape& tape, const PredictorTrainOptions& opts);

PredictorEval eval_predictor(const std::vector<LoadedSample>& data, OffsetPredictor& net);

}  // namespace oapt
