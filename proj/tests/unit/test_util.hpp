#pragma once

#include <random>
#include <vector>

#include "ttsfe/tensor.hpp"

namespace ttsfe::test {

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

inline std::vector<double> to_vec(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace ttsfe::test
