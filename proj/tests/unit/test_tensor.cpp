#include <doctest.h>

#include <cmath>
#include <sstream>

#include "test_util.hpp"
#include "ttsfe/grad_check.hpp"
#include "ttsfe/optim.hpp"
#include "ttsfe/serial.hpp"
#include "ttsfe/tensor.hpp"

using namespace ttsfe;
using test::random_tensor;

TEST_CASE("matmul identity and hand-evaluated product") {
  Tensor id = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor y = matmul(id, x);
  CHECK(test::to_vec(y) == test::to_vec(x));

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at({0, 0}) == doctest::Approx(3.0));
  CHECK(c.at({1, 0}) == doctest::Approx(7.0));
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences on 4x3 * 3x2") {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  auto report = grad_check([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(report.max_error < 1e-5);
}

TEST_CASE("softmax symmetry, stability, distribution properties") {
  Tensor z = Tensor::from({3}, {0, 0, 0});
  Tensor s = softmax(z);
  for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor big = Tensor::from({2}, {1000, 0});
  Tensor sb = softmax(big);
  CHECK(sb.data()[0] == doctest::Approx(1.0));
  CHECK(sb.data()[1] == doctest::Approx(0.0));
  for (double v : sb.data()) CHECK(std::isfinite(v));

  std::mt19937_64 rng(3);
  for (auto shape : std::vector<std::vector<std::size_t>>{{7}, {3, 5}, {2, 3, 4}}) {
    Tensor x = random_tensor(shape, rng, 3.0);
    Tensor sm = softmax(x);
    std::size_t cols = shape.back();
    std::size_t rows = sm.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        double v = sm.data()[r * cols + j];
        CHECK(v > 0.0);
        total += v;
      }
      CHECK(std::fabs(total - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("softmax over a non-trailing axis normalizes that axis") {
  Tensor x = Tensor::from({2, 2}, {1, 5, 3, 2});
  Tensor s = softmax(x, 0);
  CHECK(s.at({0, 0}) + s.at({1, 0}) == doctest::Approx(1.0));
  CHECK(s.at({0, 1}) + s.at({1, 1}) == doctest::Approx(1.0));
  CHECK(s.at({0, 1}) > s.at({1, 1}));
}

TEST_CASE("softmax gradient on random length-5 input") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({5}, rng);
  Tensor w = random_tensor({5}, rng);  // weighting makes the loss non-trivial
  auto report = grad_check([&] { return sum(mul(softmax(x), w)); }, {x});
  CHECK(report.max_error < 1e-5);
}

TEST_CASE("layer_norm constant row and hand-computed values") {
  Tensor gain = Tensor::full({4}, 1.0);
  Tensor bias = Tensor::zeros({4});
  Tensor c = Tensor::full({2, 4}, 3.7);
  Tensor out = layer_norm(c, gain, bias, 1e-5);
  for (double v : out.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  Tensor g3 = Tensor::full({3}, 1.0);
  Tensor b3 = Tensor::zeros({3});
  Tensor x = Tensor::from({1, 3}, {1, 2, 3});
  Tensor y = layer_norm(x, g3, b3, 0.0);
  double r = std::sqrt(1.5);
  CHECK(y.data()[0] == doctest::Approx(-r).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(y.data()[2] == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("layer_norm gradient") {
  std::mt19937_64 rng(7);
  for (auto rows : {1u, 3u}) {
    Tensor x = random_tensor({rows, 6}, rng);
    Tensor gain = random_tensor({6}, rng);
    Tensor bias = random_tensor({6}, rng);
    Tensor w = random_tensor({rows, 6}, rng);
    auto report = grad_check(
        [&] { return sum(mul(layer_norm(x, gain, bias, 1e-5), w)); }, {x, gain, bias});
    CHECK(report.max_error < 1e-5);
  }
}

TEST_CASE("masked_cross_entropy matches the averaged-count definition") {
  // prob 1.0 on the true class -> loss 0
  Tensor lp1 = log_softmax(Tensor::from({1, 2}, {60.0, -60.0}));
  Tensor l1 = masked_cross_entropy(lp1, {0}, {1});
  CHECK(l1.item() == doctest::Approx(0.0).epsilon(1e-9));

  // two masked-in positions, each with prob 0.5 on the true class -> ln 2
  Tensor lp2 = log_softmax(Tensor::from({2, 2}, {0, 0, 0, 0}));
  Tensor l2 = masked_cross_entropy(lp2, {0, 1}, {1, 1});
  CHECK(l2.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("masked_cross_entropy with all-false mask is zero with zero grads") {
  Tensor logits = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}).set_requires_grad(true);
  Tensor lp = log_softmax(logits);
  Tensor loss = masked_cross_entropy(lp, {0, 0}, {0, 0});
  CHECK(loss.item() == 0.0);
  CHECK_FALSE(loss.requires_grad());
  backward(loss);
  // no gradient was ever populated upstream
  CHECK_FALSE(logits.has_grad());
}

TEST_CASE("masked_cross_entropy rejects out-of-range targets with position") {
  Tensor lp = log_softmax(Tensor::zeros({2, 3}));
  try {
    masked_cross_entropy(lp, {0, 7}, {1, 1});
    FAIL("expected LabelError");
  } catch (const LabelError& e) {
    CHECK(std::string(e.what()).find("position 1") != std::string::npos);
  }
}

TEST_CASE("masked_cross_entropy gradient") {
  std::mt19937_64 rng(13);
  Tensor logits = random_tensor({4, 5}, rng);
  std::vector<int> targets{1, 0, 4, 2};
  std::vector<std::uint8_t> mask{1, 0, 1, 1};
  auto report = grad_check(
      [&] { return masked_cross_entropy(log_softmax(logits), targets, mask); }, {logits});
  CHECK(report.max_error < 1e-5);
}

TEST_CASE("mse examples and gradient") {
  std::mt19937_64 rng(17);
  Tensor x = random_tensor({3, 3}, rng);
  CHECK(mse(x, x).item() == 0.0);

  Tensor a = Tensor::from({2}, {1, 2});
  Tensor b = Tensor::from({2}, {1, 4});
  CHECK(mse(a, b).item() == doctest::Approx(2.0).epsilon(1e-12));

  Tensor u = random_tensor({2, 4}, rng);
  Tensor v = random_tensor({2, 4}, rng);
  auto report = grad_check([&] { return mse(u, v); }, {u, v});
  CHECK(report.max_error < 1e-6);
}

TEST_CASE("backward requires a scalar") {
  Tensor x = Tensor::zeros({2, 2}).set_requires_grad(true);
  CHECK_THROWS_AS(backward(add(x, x)), UsageError);
}

TEST_CASE("backward accumulation is linear over losses") {
  std::mt19937_64 rng(19);
  Tensor x = random_tensor({3, 4}, rng);
  x.set_requires_grad(true);

  auto loss_a = [&] { return sum(mul(x, x)); };
  auto loss_b = [&] { return mean_all(gelu(x)); };

  x.zero_grad();
  backward(add(loss_a(), loss_b()));
  std::vector<double> combined(x.grad().begin(), x.grad().end());

  x.zero_grad();
  backward(loss_a());
  backward(loss_b());
  std::vector<double> separate(x.grad().begin(), x.grad().end());

  for (std::size_t i = 0; i < combined.size(); ++i) {
    CHECK(combined[i] == doctest::Approx(separate[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradient accumulates across repeated tensor use") {
  Tensor x = Tensor::from({2}, {3, 4}).set_requires_grad(true);
  backward(sum(add(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("elementwise, bias, slicing and gather ops pass gradient checks") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    std::size_t rows = 2 + static_cast<std::size_t>(trial);
    std::size_t cols = 3 + static_cast<std::size_t>(trial);
    Tensor a = random_tensor({rows, cols}, rng);
    Tensor b = random_tensor({rows, cols}, rng);
    Tensor bias = random_tensor({cols}, rng);
    Tensor w = random_tensor({rows, cols}, rng);

    CHECK(grad_check([&] { return sum(mul(add(a, b), w)); }, {a, b}).max_error < 1e-6);
    CHECK(grad_check([&] { return sum(mul(sub(a, b), w)); }, {a, b}).max_error < 1e-6);
    CHECK(grad_check([&] { return sum(mul(scale(a, 1.7), w)); }, {a}).max_error < 1e-6);
    CHECK(grad_check([&] { return sum(mul(add_bias(a, bias), w)); }, {a, bias})
              .max_error < 1e-6);
    CHECK(grad_check([&] { return sum(mul(transpose(a), transpose(w))); }, {a})
              .max_error < 1e-6);
    CHECK(grad_check([&] { return sum(gelu(a)); }, {a}).max_error < 1e-5);
    CHECK(grad_check([&] { return sum(sigmoid(a)); }, {a}).max_error < 1e-5);
    CHECK(grad_check([&] { return sum(ttsfe::tanh(a)); }, {a}).max_error < 1e-5);
    CHECK(grad_check([&] { return mean_all(a); }, {a}).max_error < 1e-6);
    CHECK(grad_check([&] { return sum(log_softmax(a)); }, {a}).max_error < 1e-5);
    CHECK(grad_check([&] { return sum(slice_rows(a, 1, rows - 1)); }, {a}).max_error <
          1e-6);
    CHECK(grad_check([&] { return sum(slice_cols(a, 1, cols - 1)); }, {a}).max_error <
          1e-6);
    CHECK(grad_check([&] { return sum(concat_rows({a, b})); }, {a, b}).max_error < 1e-6);
    CHECK(grad_check([&] { return sum(concat_cols({a, b})); }, {a, b}).max_error < 1e-6);
    CHECK(grad_check([&] { return sum(crop3(stack0({a, b}), rows - 1, cols - 1)); },
                     {a, b})
              .max_error < 1e-6);

    Tensor table = random_tensor({6, cols}, rng);
    std::vector<int> ids{0, 3, 3, 5};
    double weight = 0.5 + trial;
    CHECK(grad_check([&] { return sum(scale(embedding(table, ids), weight)); }, {table})
              .max_error < 1e-6);
  }
}

TEST_CASE("ops reject non-finite results") {
  Tensor x = Tensor::from({1}, {1e308});
  CHECK_THROWS_AS(mul(x, x), NumericError);
}

TEST_CASE("ops are deterministic (bit-identical reruns)") {
  std::mt19937_64 rng(29);
  Tensor a = random_tensor({8, 8}, rng);
  Tensor b = random_tensor({8, 8}, rng);
  Tensor c1 = softmax(matmul(a, b));
  Tensor c2 = softmax(matmul(a, b));
  CHECK(test::to_vec(c1) == test::to_vec(c2));
}

TEST_CASE("dropout keeps scale and reuses its mask in backward") {
  std::mt19937_64 rng(31);
  Tensor x = Tensor::full({64, 8}, 1.0).set_requires_grad(true);
  std::mt19937_64 drop_rng(99);
  Tensor y = dropout(x, 0.25, drop_rng);
  double kept = 0.0;
  for (double v : y.data()) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    if (v != 0.0) kept += 1.0;
  }
  CHECK(kept / static_cast<double>(y.size()) == doctest::Approx(0.75).epsilon(0.05));
  backward(sum(y));
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(y.data()[i]));
  }
}

// ---- grad_check itself ------------------------------------------------------

TEST_CASE("grad_check on sum reports zero error") {
  Tensor x = Tensor::from({4}, {1, 2, 3, 4});
  auto report = grad_check([&] { return sum(x); }, {x});
  // exact up to float rounding of the finite differences themselves
  CHECK(report.max_error < 1e-8);
}

TEST_CASE("grad_check flags a corrupted backward rule") {
  Tensor x = Tensor::from({3}, {0.3, -0.2, 0.9});
  auto broken_double = [](const Tensor& t) {
    std::vector<double> out(t.data().begin(), t.data().end());
    for (auto& v : out) v *= 2.0;
    return make_op("broken_double", {t}, t.shape(), std::move(out), [](OpGrad& g) {
      auto go = g.out_grad();
      // wrong rule: claims d/dx (2x) == 5
      for (std::size_t i = 0; i < go.size(); ++i) g.add(0, i, 5.0 * go[i]);
    });
  };
  auto report = grad_check([&] { return sum(broken_double(x)); }, {x});
  CHECK(report.max_error > 1e-4);
}

// ---- optimizer ---------------------------------------------------------------

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  Tensor p = Tensor::from({3}, {1, 2, 3}).set_requires_grad(true);
  std::vector<Tensor> params{p};
  AdamState state;
  state.init(params);
  p.mutable_grad();  // allocated, all zero
  adam_step(params, state, {});
  CHECK(test::to_vec(p) == std::vector<double>{1, 2, 3});
}

TEST_CASE("adam first step moves by about lr in the gradient direction") {
  Tensor p = Tensor::from({}, {1.0}).set_requires_grad(true);
  std::vector<Tensor> params{p};
  AdamState state;
  state.init(params);
  p.mutable_grad()[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(params, state, cfg);
  CHECK(p.item() == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam is bit-for-bit reproducible") {
  auto run = [] {
    Tensor p = Tensor::from({4}, {0.5, -0.25, 2.0, 0.0}).set_requires_grad(true);
    std::vector<Tensor> params{p};
    AdamState state;
    state.init(params);
    for (int i = 0; i < 2; ++i) {
      auto g = p.mutable_grad();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] = 0.3 * static_cast<double>(k + 1);
      adam_step(params, state, {});
    }
    return test::to_vec(p);
  };
  CHECK(run() == run());
}

TEST_CASE("clip_grad_norm scales the joint gradient") {
  Tensor p = Tensor::zeros({2}).set_requires_grad(true);
  auto g = p.mutable_grad();
  g[0] = 3.0;
  g[1] = 4.0;
  std::vector<Tensor> params{p};
  double norm = clip_grad_norm(params, 1.0);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(p.grad()[0] == doctest::Approx(0.6));
  CHECK(p.grad()[1] == doctest::Approx(0.8));
}

// ---- tensor serialization ------------------------------------------------------

TEST_CASE("tensor binary format round trip and exact layout") {
  Tensor t = Tensor::from({2, 3}, {1.5, -2.0, 0.0, 3.25, 1e-9, 7.0});
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  std::string bytes = os.str();
  REQUIRE(bytes.size() == 4 + 4 + 2 * 4 + 6 * 8);
  CHECK(bytes.substr(0, 4) == "UFT1");
  // little-endian rank 2, dims 2 and 3
  CHECK(static_cast<unsigned char>(bytes[4]) == 2);
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 3);

  std::istringstream is(bytes, std::ios::binary);
  Tensor back = read_tensor(is);
  CHECK(back.shape() == t.shape());
  CHECK(test::to_vec(back) == test::to_vec(t));
}

TEST_CASE("tensor reader rejects bad magic") {
  std::istringstream is(std::string("NOPE\x01\x00\x00\x00", 8), std::ios::binary);
  CHECK_THROWS_AS(read_tensor(is), SerialError);
}
