#pragma once

#include "oapt/gradcheck.hpp"

namespace oapt {

// Finite-difference verification of every differentiable op plus one STL and
// one full HPAB pass at toy scale. Deterministic; double precision.
GradCheckReport run_gradcheck_suite(real step = 1e-5, real threshold = 1e-4);

}  // namespace oapt
