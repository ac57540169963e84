#include "ttsfe/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ttsfe {

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os << "grad_check: max error " << max_error;
  for (std::size_t i = 0; i < per_input_max.size(); ++i) {
    os << "\n  input " << i << ": " << per_input_max[i];
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           double step) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    if (in.has_grad()) {
      analytic.emplace_back(in.grad().begin(), in.grad().end());
    } else {
      analytic.emplace_back(in.size(), 0.0);
    }
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    double worst = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      double saved = data[k];
      data[k] = saved + step;
      double hi = f().item();
      data[k] = saved - step;
      double lo = f().item();
      data[k] = saved;
      double numeric = (hi - lo) / (2.0 * step);
      double a = analytic[i][k];
      double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    report.per_input_max.push_back(worst);
    report.max_error = std::max(report.max_error, worst);
  }
  return report;
}

}  // namespace ttsfe
