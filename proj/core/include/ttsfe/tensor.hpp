#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttsfe {

/// Thrown when operand shapes are incompatible; the message names both shapes.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an op produces a non-finite value (NaN/Inf).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown on an out-of-range class label; the message names the position.
class LabelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown on API misuse (e.g. backward on a non-scalar).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for invalid model/run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct Node;
}

class OpGrad;
class Tensor;

/// Extension point for ops with hand-written backward rules (e.g. the CRF).
/// `bw` is invoked once during backward with the output gradient available.
Tensor make_op(const char* name, std::vector<Tensor> inputs,
               std::vector<std::size_t> out_shape, std::vector<double> out_data,
               std::function<void(OpGrad&)> bw);

/// Dense row-major tensor of doubles with reverse-mode autodiff.
///
/// A Tensor is a cheap handle to a graph node. Ops never mutate their
/// inputs; leaf tensors created with requires_grad are the trainable
/// parameters and may be updated in place by the optimizer. Nodes carry a
/// monotonically increasing creation index, so creation order is a
/// topological order of the graph and backward() visits each reachable
/// node exactly once, in reverse creation order.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> data);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  /// Raw write access; intended for leaf initialization and optimizer steps.
  std::span<double> mutable_data();

  double item() const;
  double at(std::initializer_list<std::size_t> idx) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Name of the op that produced this tensor ("leaf" for inputs/params).
  const char* op() const;
  /// Creation index; doubles as the node id in diagnostics.
  std::uint64_t id() const;

  /// Deep copy with no graph history (a fresh leaf).
  Tensor detached_copy() const;

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend void backward(const Tensor&);
  friend class OpGrad;
  friend Tensor make_op(const char*, std::vector<Tensor>, std::vector<std::size_t>,
                        std::vector<double>, std::function<void(OpGrad&)>);
};

/// Runs reverse-mode accumulation from a scalar loss. Gradients add into
/// any existing .grad buffers, so two backward passes accumulate.
void backward(const Tensor& loss);

/// Backward-rule context handed to custom ops: read the upstream gradient,
/// accumulate into the inputs.
class OpGrad {
 public:
  std::span<const double> out_grad() const;
  std::span<const double> out_data() const;
  std::span<const double> input_data(std::size_t input) const;
  bool input_needs_grad(std::size_t input) const;
  /// Accumulates v into element `elem` of input number `input`'s gradient.
  void add(std::size_t input, std::size_t elem, double v);

 private:
  friend Tensor make_op(const char*, std::vector<Tensor>, std::vector<std::size_t>,
                        std::vector<double>, std::function<void(OpGrad&)>);
  OpGrad(detail::Node* out, std::vector<detail::Node*> inputs)
      : out_(out), inputs_(std::move(inputs)) {}
  detail::Node* out_;
  std::vector<detail::Node*> inputs_;
};

// ---- elementwise and linear-algebra ops -----------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// x: [rows x cols], bias: [cols]; adds bias to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Softmax along `axis` (negative counts from the end). Max-subtracted.
Tensor softmax(const Tensor& x, int axis = -1);
/// Log-softmax along the last axis.
Tensor log_softmax(const Tensor& x);

/// Normalizes the last axis to zero mean / unit variance, then applies
/// gain and bias (both [d]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);

/// -(1/|mask|) * sum over masked-in t of log_probs[t, targets[t]].
/// An all-false mask yields the constant 0 with no gradient flow.
Tensor masked_cross_entropy(const Tensor& log_probs, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask);

// ---- gather / slice / concat ----------------------------------------------

Tensor slice_rows(const Tensor& x, std::size_t row0, std::size_t n);
Tensor slice_cols(const Tensor& x, std::size_t col0, std::size_t n);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Stacks n equally-shaped [a x b] matrices into [n x a x b].
Tensor stack0(const std::vector<Tensor>& parts);
/// Crops a [n x r x c] tensor to its leading [n x rows x cols] block.
Tensor crop3(const Tensor& x, std::size_t rows, std::size_t cols);

/// Gathers rows of `table` ([vocab x d]) by id; backward scatter-adds.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

/// Inverted dropout: keeps with prob 1-rate and rescales. The mask is
/// drawn from `rng`, so reproducibility is the caller's seeding contract.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace ttsfe
