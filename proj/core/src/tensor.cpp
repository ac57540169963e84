#include "ttsfe/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace ttsfe {

namespace detail {

struct Node {
  std::vector<std::size_t> shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

namespace {
std::atomic<std::uint64_t> g_seq{1};

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::shared_ptr<Node> new_node(const char* op, std::vector<std::size_t> shape,
                               std::vector<double> data) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}

void check_finite(const Node& n) {
  for (double v : n.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by op '") + n.op +
                         "' (node #" + std::to_string(n.seq) + ")");
    }
  }
}
}  // namespace
}  // namespace detail

using detail::Node;

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---- Tensor handle ----------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = detail::numel(shape);
  return Tensor(detail::new_node("leaf", std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = detail::numel(shape);
  return Tensor(detail::new_node("leaf", std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data) {
  if (detail::numel(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  return Tensor(detail::new_node("leaf", std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double value) {
  return Tensor(detail::new_node("leaf", {}, std::vector<double>{value}));
}

const std::vector<std::size_t>& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (size() != 1) {
    throw UsageError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != rank()) {
    throw UsageError("index rank " + std::to_string(idx.size()) +
                     " does not match tensor shape " + shape_str(shape()));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) {
    throw UsageError("gradient not populated; run backward() first");
  }
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

const char* Tensor::op() const { return node_->op; }
std::uint64_t Tensor::id() const { return node_->seq; }

Tensor Tensor::detached_copy() const {
  auto n = detail::new_node("leaf", node_->shape, node_->data);
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() requires a scalar loss");
  }
  Node* root = loss.node_.get();
  if (!root->requires_grad) return;

  // Collect reachable grad-requiring nodes; creation order is topological,
  // so sorting by seq descending gives the reverse pass order.
  std::vector<Node*> tape;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    tape.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(tape.begin(), tape.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (Node* n : tape) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---- op plumbing ------------------------------------------------------------

Tensor make_op(const char* name, std::vector<Tensor> inputs,
               std::vector<std::size_t> out_shape, std::vector<double> out_data,
               std::function<void(OpGrad&)> bw) {
  if (detail::numel(out_shape) != out_data.size()) {
    throw ShapeError("make_op: data length does not match shape " + shape_str(out_shape));
  }
  auto out = detail::new_node(name, std::move(out_shape), std::move(out_data));
  detail::check_finite(*out);
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (needs) {
    out->requires_grad = true;
    for (const auto& t : inputs) out->parents.push_back(t.node_);
    out->backward = [parents = out->parents, bw = std::move(bw)](Node& self) {
      std::vector<Node*> ins;
      ins.reserve(parents.size());
      for (const auto& p : parents) {
        if (p->requires_grad) p->ensure_grad();
        ins.push_back(p.get());
      }
      OpGrad g(&self, std::move(ins));
      bw(g);
    };
  }
  return Tensor(std::move(out));
}

std::span<const double> OpGrad::out_grad() const { return out_->grad; }
std::span<const double> OpGrad::out_data() const { return out_->data; }
std::span<const double> OpGrad::input_data(std::size_t input) const {
  return inputs_[input]->data;
}
bool OpGrad::input_needs_grad(std::size_t input) const {
  return inputs_[input]->requires_grad;
}
void OpGrad::add(std::size_t input, std::size_t elem, double v) {
  Node* n = inputs_[input];
  if (!n->requires_grad) return;
  n->ensure_grad();
  n->grad[elem] += v;
}

// ---- elementwise ------------------------------------------------------------

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_op("add", {a, b}, a.shape(), std::move(out), [](OpGrad& g) {
    auto go = g.out_grad();
    for (std::size_t i = 0; i < go.size(); ++i) {
      g.add(0, i, go[i]);
      g.add(1, i, go[i]);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_op("sub", {a, b}, a.shape(), std::move(out), [](OpGrad& g) {
    auto go = g.out_grad();
    for (std::size_t i = 0; i < go.size(); ++i) {
      g.add(0, i, go[i]);
      g.add(1, i, -go[i]);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_op("mul", {a, b}, a.shape(), std::move(out), [](OpGrad& g) {
    auto go = g.out_grad();
    auto av = g.input_data(0), bv = g.input_data(1);
    for (std::size_t i = 0; i < go.size(); ++i) {
      g.add(0, i, go[i] * bv[i]);
      g.add(1, i, go[i] * av[i]);
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return make_op("scale", {a}, a.shape(), std::move(out), [c](OpGrad& g) {
    auto go = g.out_grad();
    for (std::size_t i = 0; i < go.size(); ++i) g.add(0, i, go[i] * c);
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() != 2 || bias.rank() != 1 || x.shape()[1] != bias.shape()[0]) {
    throw ShapeError("add_bias: shape mismatch " + shape_str(x.shape()) + " vs " +
                     shape_str(bias.shape()));
  }
  std::size_t rows = x.shape()[0], cols = x.shape()[1];
  std::vector<double> out(x.size());
  auto xv = x.data(), bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] + bv[c];
  }
  return make_op("add_bias", {x, bias}, x.shape(), std::move(out),
                 [rows, cols](OpGrad& g) {
                   auto go = g.out_grad();
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t c = 0; c < cols; ++c) {
                       g.add(0, r * cols + c, go[r * cols + c]);
                       g.add(1, c, go[r * cols + c]);
                     }
                   }
                 });
}

// ---- matmul / transpose -----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const double* ap = a.data().data();
  const double* bp = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double aip = ap[i * k + p];
      const double* brow = bp + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_op("matmul", {a, b}, {m, n}, std::move(out), [m, k, n](OpGrad& g) {
    const double* go = g.out_grad().data();
    const double* ap = g.input_data(0).data();
    const double* bp = g.input_data(1).data();
    if (g.input_needs_grad(0)) {
      // a.grad += g . b^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = go + i * n;
          const double* brow = bp + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          g.add(0, i * k + p, s);
        }
      }
    }
    if (g.input_needs_grad(1)) {
      // b.grad += a^T . g
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += ap[i * k + p] * go[i * n + j];
          g.add(1, p * n + j, s);
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(a.shape()));
  }
  std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<double> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  }
  return make_op("transpose", {a}, {c, r}, std::move(out), [r, c](OpGrad& g) {
    auto go = g.out_grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g.add(0, i * c + j, go[j * r + i]);
    }
  });
}

// ---- softmax family ---------------------------------------------------------

namespace {

struct AxisIter {
  std::size_t outer, extent, inner;
};

AxisIter axis_layout(const std::vector<std::size_t>& shape, int axis) {
  int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw UsageError("softmax: axis out of range for shape " + shape_str(shape));
  }
  AxisIter it{1, shape[axis], 1};
  for (int i = 0; i < axis; ++i) it.outer *= shape[i];
  for (int i = axis + 1; i < r; ++i) it.inner *= shape[i];
  return it;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  AxisIter it = axis_layout(x.shape(), axis);
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t o = 0; o < it.outer; ++o) {
    for (std::size_t in = 0; in < it.inner; ++in) {
      std::size_t base = o * it.extent * it.inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < it.extent; ++j)
        mx = std::max(mx, xv[base + j * it.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < it.extent; ++j) {
        double e = std::exp(xv[base + j * it.inner] - mx);
        out[base + j * it.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < it.extent; ++j) out[base + j * it.inner] /= z;
    }
  }
  return make_op("softmax", {x}, x.shape(), std::move(out), [it](OpGrad& g) {
    auto go = g.out_grad();
    auto s = g.out_data();
    for (std::size_t o = 0; o < it.outer; ++o) {
      for (std::size_t in = 0; in < it.inner; ++in) {
        std::size_t base = o * it.extent * it.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < it.extent; ++j) {
          std::size_t k = base + j * it.inner;
          dot += go[k] * s[k];
        }
        for (std::size_t j = 0; j < it.extent; ++j) {
          std::size_t k = base + j * it.inner;
          g.add(0, k, s[k] * (go[k] - dot));
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0) throw UsageError("log_softmax: scalar input");
  std::size_t cols = x.shape().back();
  std::size_t rows = x.size() / cols;
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * cols;
    double mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(row[j] - mx);
    double lz = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = row[j] - lz;
  }
  return make_op("log_softmax", {x}, x.shape(), std::move(out), [rows, cols](OpGrad& g) {
    auto go = g.out_grad();
    auto lp = g.out_data();
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gs += go[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        std::size_t k = r * cols + j;
        g.add(0, k, go[k] - std::exp(lp[k]) * gs);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) throw UsageError("layer_norm: scalar input");
  std::size_t d = x.shape().back();
  if (gain.shape() != std::vector<std::size_t>{d} ||
      bias.shape() != std::vector<std::size_t>{d}) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      double h = (row[j] - mean) * is;
      xhat[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return make_op(
      "layer_norm", {x, gain, bias}, x.shape(), std::move(out),
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](OpGrad& g) {
        auto go = g.out_grad();
        auto gv = g.input_data(1);
        double dn = static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            std::size_t k = r * d + j;
            double dh = go[k] * gv[j];
            sum_dh += dh;
            sum_dh_h += dh * xhat[k];
          }
          for (std::size_t j = 0; j < d; ++j) {
            std::size_t k = r * d + j;
            double dh = go[k] * gv[j];
            g.add(0, k, (dh - sum_dh / dn - xhat[k] * sum_dh_h / dn) * inv_std[r]);
            g.add(1, j, go[k] * xhat[k]);
            g.add(2, j, go[k]);
          }
        }
      });
}

// ---- activations ------------------------------------------------------------

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  }
  return make_op("gelu", {x}, x.shape(), std::move(out), [](OpGrad& g) {
    auto go = g.out_grad();
    auto xv = g.input_data(0);
    for (std::size_t i = 0; i < go.size(); ++i) {
      double cdf = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
      g.add(0, i, go[i] * (cdf + xv[i] * pdf));
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return make_op("sigmoid", {x}, x.shape(), std::move(out), [](OpGrad& g) {
    auto go = g.out_grad();
    auto s = g.out_data();
    for (std::size_t i = 0; i < go.size(); ++i) g.add(0, i, go[i] * s[i] * (1.0 - s[i]));
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return make_op("tanh", {x}, x.shape(), std::move(out), [](OpGrad& g) {
    auto go = g.out_grad();
    auto t = g.out_data();
    for (std::size_t i = 0; i < go.size(); ++i) g.add(0, i, go[i] * (1.0 - t[i] * t[i]));
  });
}

// ---- reductions / losses ----------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op("sum", {x}, {}, {s}, [](OpGrad& g) {
    double go = g.out_grad()[0];
    for (std::size_t i = 0; i < g.input_data(0).size(); ++i) g.add(0, i, go);
  });
}

Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  double n = static_cast<double>(x.size());
  return make_op("mean", {x}, {}, {s / n}, [n](OpGrad& g) {
    double go = g.out_grad()[0] / n;
    for (std::size_t i = 0; i < g.input_data(0).size(); ++i) g.add(0, i, go);
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  auto av = a.data(), bv = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    double d = av[i] - bv[i];
    s += d * d;
  }
  double n = static_cast<double>(a.size());
  return make_op("mse", {a, b}, {}, {s / n}, [n](OpGrad& g) {
    double go = g.out_grad()[0];
    auto av = g.input_data(0), bv = g.input_data(1);
    for (std::size_t i = 0; i < av.size(); ++i) {
      double d = 2.0 * (av[i] - bv[i]) / n * go;
      g.add(0, i, d);
      g.add(1, i, -d);
    }
  });
}

Tensor masked_cross_entropy(const Tensor& log_probs, const std::vector<int>& targets,
                            const std::vector<std::uint8_t>& mask) {
  if (log_probs.rank() != 2) {
    throw ShapeError("masked_cross_entropy: expected [T x C] log-probs, got " +
                     shape_str(log_probs.shape()));
  }
  std::size_t t_len = log_probs.shape()[0], classes = log_probs.shape()[1];
  if (targets.size() != t_len || mask.size() != t_len) {
    throw ShapeError("masked_cross_entropy: sequence length mismatch (log_probs " +
                     std::to_string(t_len) + ", targets " + std::to_string(targets.size()) +
                     ", mask " + std::to_string(mask.size()) + ")");
  }
  std::size_t count = 0;
  double s = 0.0;
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= classes) {
      throw LabelError("target class " + std::to_string(targets[t]) + " at position " +
                       std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
    }
    ++count;
    s -= log_probs.at({t, static_cast<std::size_t>(targets[t])});
  }
  if (count == 0) {
    // Empty selection contributes nothing: constant zero, detached.
    return Tensor::scalar(0.0);
  }
  double inv = 1.0 / static_cast<double>(count);
  return make_op("masked_cross_entropy", {log_probs}, {}, {s * inv},
                 [targets, mask, classes, inv](OpGrad& g) {
                   double go = g.out_grad()[0];
                   for (std::size_t t = 0; t < mask.size(); ++t) {
                     if (!mask[t]) continue;
                     g.add(0, t * classes + static_cast<std::size_t>(targets[t]),
                           -go * inv);
                   }
                 });
}

// ---- reshuffling ops --------------------------------------------------------

Tensor slice_rows(const Tensor& x, std::size_t row0, std::size_t n) {
  if (x.rank() != 2 || row0 + n > x.shape()[0]) {
    throw ShapeError("slice_rows: rows [" + std::to_string(row0) + ", " +
                     std::to_string(row0 + n) + ") out of range for " +
                     shape_str(x.shape()));
  }
  std::size_t cols = x.shape()[1];
  std::vector<double> out(n * cols);
  std::copy_n(x.data().data() + row0 * cols, n * cols, out.data());
  return make_op("slice_rows", {x}, {n, cols}, std::move(out), [row0, cols](OpGrad& g) {
    auto go = g.out_grad();
    for (std::size_t i = 0; i < go.size(); ++i) g.add(0, row0 * cols + i, go[i]);
  });
}

Tensor slice_cols(const Tensor& x, std::size_t col0, std::size_t n) {
  if (x.rank() != 2 || col0 + n > x.shape()[1]) {
    throw ShapeError("slice_cols: cols [" + std::to_string(col0) + ", " +
                     std::to_string(col0 + n) + ") out of range for " +
                     shape_str(x.shape()));
  }
  std::size_t rows = x.shape()[0], cols = x.shape()[1];
  std::vector<double> out(rows * n);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * cols + col0 + j];
  }
  return make_op("slice_cols", {x}, {rows, n}, std::move(out),
                 [rows, cols, col0, n](OpGrad& g) {
                   auto go = g.out_grad();
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t j = 0; j < n; ++j) {
                       g.add(0, r * cols + col0 + j, go[r * n + j]);
                     }
                   }
                 });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_rows: empty input");
  std::size_t cols = parts[0].shape().back();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.shape()[1] != cols) {
      throw ShapeError("concat_rows: inconsistent shape " + shape_str(p.shape()));
    }
    rows += p.shape()[0];
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    off += p.size();
  }
  return make_op("concat_rows", parts, {rows, cols}, std::move(out),
                 [offsets](OpGrad& g) {
                   auto go = g.out_grad();
                   for (std::size_t i = 0; i < offsets.size(); ++i) {
                     std::size_t n = g.input_data(i).size();
                     for (std::size_t k = 0; k < n; ++k) g.add(i, k, go[offsets[i] + k]);
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: empty input");
  std::size_t rows = parts[0].shape()[0];
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.shape()[0] != rows) {
      throw ShapeError("concat_cols: inconsistent shape " + shape_str(p.shape()));
    }
    cols += p.shape()[1];
  }
  std::vector<double> out(rows * cols);
  std::size_t col0 = 0;
  for (const auto& p : parts) {
    std::size_t pc = p.shape()[1];
    auto pv = p.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.data() + r * pc, pc, out.data() + r * cols + col0);
    }
    col0 += pc;
  }
  std::vector<std::size_t> widths;
  for (const auto& p : parts) widths.push_back(p.shape()[1]);
  return make_op("concat_cols", parts, {rows, cols}, std::move(out),
                 [rows, cols, widths](OpGrad& g) {
                   auto go = g.out_grad();
                   std::size_t col0 = 0;
                   for (std::size_t i = 0; i < widths.size(); ++i) {
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t j = 0; j < widths[i]; ++j) {
                         g.add(i, r * widths[i] + j, go[r * cols + col0 + j]);
                       }
                     }
                     col0 += widths[i];
                   }
                 });
}

Tensor stack0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("stack0: empty input");
  auto base = parts[0].shape();
  if (base.size() != 2) throw ShapeError("stack0: expected rank-2 parts");
  for (const auto& p : parts) {
    if (p.shape() != base) {
      throw ShapeError("stack0: inconsistent shape " + shape_str(p.shape()) + " vs " +
                       shape_str(base));
    }
  }
  std::size_t each = parts[0].size();
  std::vector<double> out;
  out.reserve(parts.size() * each);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op("stack0", parts, {parts.size(), base[0], base[1]}, std::move(out),
                 [each](OpGrad& g) {
                   auto go = g.out_grad();
                   std::size_t n = go.size() / each;
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t k = 0; k < each; ++k) g.add(i, k, go[i * each + k]);
                   }
                 });
}

Tensor crop3(const Tensor& x, std::size_t rows, std::size_t cols) {
  if (x.rank() != 3 || rows > x.shape()[1] || cols > x.shape()[2]) {
    throw ShapeError("crop3: block " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " out of range for " + shape_str(x.shape()));
  }
  std::size_t n = x.shape()[0], r_full = x.shape()[1], c_full = x.shape()[2];
  std::vector<double> out(n * rows * cols);
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        out[(i * rows + r) * cols + c] = xv[(i * r_full + r) * c_full + c];
      }
    }
  }
  return make_op("crop3", {x}, {n, rows, cols}, std::move(out),
                 [n, r_full, c_full, rows, cols](OpGrad& g) {
                   auto go = g.out_grad();
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t r = 0; r < rows; ++r) {
                       for (std::size_t c = 0; c < cols; ++c) {
                         g.add(0, (i * r_full + r) * c_full + c,
                               go[(i * rows + r) * cols + c]);
                       }
                     }
                   }
                 });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) {
    throw ShapeError("embedding: table must be [vocab x d], got " +
                     shape_str(table.shape()));
  }
  std::size_t vocab = table.shape()[0], d = table.shape()[1];
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab) {
      throw LabelError("token id " + std::to_string(ids[t]) + " at position " +
                       std::to_string(t) + " outside [0, " + std::to_string(vocab) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[t]) * d, d, out.data() + t * d);
  }
  return make_op("embedding", {table}, {ids.size(), d}, std::move(out),
                 [ids, d](OpGrad& g) {
                   auto go = g.out_grad();
                   for (std::size_t t = 0; t < ids.size(); ++t) {
                     std::size_t row = static_cast<std::size_t>(ids[t]) * d;
                     for (std::size_t j = 0; j < d; ++j) {
                       g.add(0, row + j, go[t * d + j]);
                     }
                   }
                 });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw UsageError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0) return scale(x, 1.0);
  double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) {
    // top-53-bit uniform in [0, 1); avoids distribution implementation drift
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = (u >= rate) ? keep_scale : 0.0;
  }
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return make_op("dropout", {x}, x.shape(), std::move(out),
                 [mask = std::move(mask)](OpGrad& g) {
                   auto go = g.out_grad();
                   for (std::size_t i = 0; i < go.size(); ++i) g.add(0, i, go[i] * mask[i]);
                 });
}

}  // namespace ttsfe
