#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oapt/nn.hpp"
#include "oapt/tensor.hpp"

namespace oapt {

struct GradCheckEntry {
  std::string name;
  real max_rel_err = 0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  real worst() const {
    real w = 0;
    for (const auto& e : entries) w = std::max(w, e.max_rel_err);
    return w;
  }
};

// Compares analytic gradients of a taped scalar function against central
// finite differences of step h for every element of every parameter.
// rel err = |a - n| / max(1, |a| + |n|). Throws NumericError (naming the
// parameter) on non-finite values.
GradCheckReport gradcheck(const std::function<Tensor()>& f, ParamStore& params, Tape& tape,
                          real step = 1e-5, real threshold = 1e-4);

}  // namespace oapt
