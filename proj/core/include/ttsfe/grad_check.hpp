#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ttsfe/tensor.hpp"

namespace ttsfe {

/// Result of comparing analytic gradients against central finite differences.
/// A failing check is reported, never thrown.
struct GradCheckReport {
  /// Per-input maximum of |analytic - numeric| / max(1, |analytic|, |numeric|).
  std::vector<double> per_input_max;
  double max_error = 0.0;
  std::string to_string() const;
  bool passed(double tol) const { return max_error < tol; }
};

/// Checks d f / d inputs for a deterministic scalar-valued function built
/// from the given leaf tensors. `f` is re-evaluated with perturbed leaf data
/// (central differences, step `step`), so it must read the inputs fresh on
/// every call.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double step = 1e-6);

}  // namespace ttsfe
