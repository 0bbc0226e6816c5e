#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oapt/cluster.hpp"
#include "oapt/nn.hpp"
#include "oapt/plane.hpp"

namespace oapt {

enum class LayerKind { STL, STL_Shifted, PCSTL, PCSTL_Shifted };

enum class Variant { SHA, USA, PHA, UDA };

struct ModelConfig {
  int hpab_count = 2;
  int channels = 32;
  int window_size = 4;
  int mlp_expansion = 2;
  int heads = 4;
  // Per-HPAB layer ordering; empty means derive from the variant.
  std::vector<LayerKind> layer_pattern;
  Variant variant = Variant::SHA;

  // Desk-scale default.
  static ModelConfig toy();
  // Full-scale reference preset (6 blocks, 180 channels, window 7). Stored
  // as documentation of the full-size configuration; not trained here.
  static ModelConfig full();

  std::vector<LayerKind> effective_pattern() const;
  void validate() const;
};

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

// Per-layer W-MSA parameters. The relative position bias table has one row
// per (2*win-1)^2 relative displacement, one column per head.
struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor bias_table;  // [(2w-1)^2, heads]
  int heads = 1;
  int window = 4;
};

// Windowed multi-head self-attention on [C,h,w]. Pads internally to window
// multiples (replicate) and crops after. When shifted, applies a cyclic
// shift of floor(win/2) with masking across the wrap seams; if the map fits
// in a single window the shift is skipped (it would be a pure in-window
// permutation).
Tensor window_attention(const Tensor& x, const AttentionParams& p, bool shifted);

struct StlParams {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionParams attn;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
  LayerKind kind = LayerKind::STL;
};

// x + WMSA(LN(x)), then + MLP(LN(.)).
Tensor stl_forward(const Tensor& x, const StlParams& p, bool shifted);

// Same structure with the attention applied per pattern cluster (shared
// weights across clusters, empty clusters skipped).
Tensor pc_stl_forward(const Tensor& x, const StlParams& p, const ClusterLayout& layout,
                      bool shifted);

struct HpabParams {
  std::vector<StlParams> layers;
  Tensor conv_w, conv_b;
};

Tensor hpab_forward(const Tensor& x, const HpabParams& block, const ClusterLayout& layout,
                    Variant variant);

// Toy-scale OAPT reconstructor: shallow conv, HPAB chain, body conv with
// feature residual, reconstruction conv with global image residual.
class Reconstructor {
 public:
  Reconstructor(const ModelConfig& cfg, Tape& tape, std::uint64_t seed);

  // img01: [1,h,w] in [0,1]. Offsets select the shared cluster layout.
  Tensor forward(const Tensor& img01, int r, int c);
  Plane restore(const Plane& lq, int r, int c);

  ParamStore& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Tensor shallow_w_, shallow_b_;
  std::vector<HpabParams> hpabs_;
  Tensor body_w_, body_b_;
  Tensor recon_w_, recon_b_;
};

// Compact residual CNN restorer (conv-relu stack with a global residual).
// Used for the motivation experiment, which needs a cheap trainable model.
class ConvRestorer {
 public:
  ConvRestorer(int channels, Tape& tape, std::uint64_t seed);
  Tensor forward(const Tensor& img01);
  Plane restore(const Plane& lq);
  ParamStore& params() { return params_; }

 private:
  ParamStore params_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace oapt
