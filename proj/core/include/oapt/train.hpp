#pragma once

#include <cstdint>
#include <vector>

#include "oapt/degrade.hpp"
#include "oapt/metrics.hpp"
#include "oapt/model.hpp"
#include "oapt/predictor.hpp"

namespace oapt {

struct ReconTrainOptions {
  int steps = 500;
  int batch = 1;
  real lr = 2e-3;  // toy schedule; at full scale use 2e-4
  std::uint64_t seed = 0;
  int log_every = 0;  // 0 = quiet
  bool oracle_offsets = true;  // feed ground-truth offsets to the PC layers
};

// Charbonnier training loop over manifest samples. Returns the per-step
// losses (the last entry is the final batch loss).
std::vector<real> train_reconstructor(const std::vector<LoadedSample>& data, Reconstructor& net,
                                      Adam& opt, Tape& tape, const ReconTrainOptions& opts);

enum class OffsetsMode { Predict, Oracle, None };

struct EvalRow {
  CompressionSpec spec;
  MetricReport mean;  // averaged over samples with this spec
  int count = 0;
};

// Restores every sample and reports metrics grouped by compression spec,
// rows sorted by (qf1, qf2, i, j). predictor may be null unless mode is
// Predict.
std::vector<EvalRow> evaluate_model(const std::vector<LoadedSample>& data, Reconstructor& net,
                                    OffsetsMode mode, OffsetPredictor* predictor);

struct MotivationOptions {
  std::uint64_t seed = 1;
  int sources = 6;           // procedural training images
  std::int64_t source_size = 160;
  int patches_per_image = 3;
  std::int64_t patch_size = 48;
  int channels = 16;         // restorer width
  int steps = 400;
  int batch = 4;
  real lr = 2e-3;
};

struct MotivationCase {
  CompressionSpec spec;
  double psnr_before = 0;  // PSNR(lq, hq) on the held-out split
  double psnr_after = 0;   // PSNR(restored, hq)
  double delta() const { return psnr_after - psnr_before; }
};

// Aligned-vs-nonaligned restoration difficulty probe: trains one small
// conv restorer per compression spec {(30,50),(50,30)} x {(0,0),(4,4)}
// and reports the PSNR gain of each. The expected direction is that the
// aligned specs gain more than the non-aligned ones.
struct MotivationResult {
  std::vector<MotivationCase> cases;  // aligned_3050, nonaligned_3050, aligned_5030, nonaligned_5030
  bool direction_holds() const;
};

MotivationResult run_motivation(const MotivationOptions& opts);

}  // namespace oapt
