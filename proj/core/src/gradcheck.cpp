#include "oapt/gradcheck.hpp"

#include <cmath>

#include "oapt/errors.hpp"

namespace oapt {

GradCheckReport gradcheck(const std::function<Tensor()>& f, ParamStore& params, Tape& tape,
                          real step, real threshold) {
  params.zero_grads();
  tape.clear();
  Tensor loss = f();
  tape.backward(loss);

  // Snapshot analytic gradients; finite-difference probes reuse the params.
  std::vector<std::vector<real>> analytic;
  for (auto& [name, t] : params.items()) analytic.push_back(t.grad());

  GradCheckReport report;
  std::size_t pi = 0;
  for (auto& [name, t] : params.items()) {
    GradCheckEntry entry;
    entry.name = name;
    for (std::size_t j = 0; j < t.data().size(); ++j) {
      const real saved = t.data()[j];
      t.data()[j] = saved + step;
      tape.clear();
      const real fp = f().item();
      t.data()[j] = saved - step;
      tape.clear();
      const real fm = f().item();
      t.data()[j] = saved;
      const real numeric = (fp - fm) / (2 * step);
      const real a = analytic[pi][j];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw NumericError("gradcheck: non-finite gradient for parameter " + name);
      const real rel = std::abs(a - numeric) / std::max(real(1), std::abs(a) + std::abs(numeric));
      entry.max_rel_err = std::max(entry.max_rel_err, rel);
    }
    entry.passed = entry.max_rel_err < threshold;
    if (!entry.passed) report.passed = false;
    report.entries.push_back(entry);
    ++pi;
  }
  tape.clear();
  return report;
}

}  // namespace oapt
