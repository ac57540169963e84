#pragma once

#include <vector>

#include "ttsfe/tensor.hpp"

namespace ttsfe {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-parameter first/second moment buffers plus the shared step counter.
/// State is bound to a fixed parameter list; initialize with init().
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;

  void init(const std::vector<Tensor>& params);
};

/// One bias-corrected Adam update, reading each parameter's .grad buffer.
/// Parameters without an allocated gradient are treated as zero-gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& config);

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

void zero_grads(std::vector<Tensor>& params);

}  // namespace ttsfe
