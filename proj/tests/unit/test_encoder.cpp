#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "ttsfe/encoder.hpp"
#include "ttsfe/grad_check.hpp"
#include "ttsfe/heads.hpp"

using namespace ttsfe;

namespace {

EncoderConfig toy_config() {
  EncoderConfig c;
  c.num_layers = 2;
  c.hidden_size = 16;
  c.num_heads = 4;
  c.ffn_size = 32;
  c.vocab_size = 64;
  c.max_seq_len = 32;
  c.dropout_rate = 0.1;
  return c;
}

// Walks the parameter structure shape by shape, independent of the
// closed-form count. Matches what init_params materializes (verified below
// against real allocations on small configs).
std::size_t allocation_walk(const EncoderConfig& c) {
  std::size_t total = 0;
  auto block = [&](std::size_t rows, std::size_t cols) { total += rows * cols; };
  auto vec = [&](std::size_t n) { total += n; };
  block(c.vocab_size, c.hidden_size);
  block(c.max_seq_len, c.hidden_size);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    for (int proj = 0; proj < 4; ++proj) {
      block(c.hidden_size, c.hidden_size);  // q/k/v/o weight
      vec(c.hidden_size);                   // its bias
    }
    block(c.hidden_size, c.ffn_size);
    vec(c.ffn_size);
    block(c.ffn_size, c.hidden_size);
    vec(c.hidden_size);
    for (int norm = 0; norm < 2; ++norm) {
      vec(c.hidden_size);  // gain
      vec(c.hidden_size);  // bias
    }
  }
  vec(c.hidden_size);
  vec(c.hidden_size);
  return total;
}

TokenSeq seq(std::vector<int> ids) {
  TokenSeq t;
  t.length = ids.size();
  t.ids = std::move(ids);
  return t;
}

}  // namespace

TEST_CASE("length-1 sequence yields [[1.0]] attention everywhere") {
  EncoderParams params = init_params(toy_config(), 1);
  EncoderTrace trace = encode(params, seq({5}));
  for (const auto& attn : trace.attentions) {
    CHECK(attn.shape() == std::vector<std::size_t>{4, 1, 1});
    for (double v : attn.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("position embeddings break permutation symmetry") {
  EncoderParams params = init_params(toy_config(), 2);
  EncoderTrace a = encode(params, seq({7, 9, 11}));
  EncoderTrace b = encode(params, seq({9, 7, 11}));
  double diff = 0.0;
  auto av = a.hidden_states.back().data();
  auto bv = b.hidden_states.back().data();
  for (std::size_t i = 0; i < av.size(); ++i) diff += std::fabs(av[i] - bv[i]);
  CHECK(diff > 1e-3);
}

TEST_CASE("trace shapes for a 2-layer 16-hidden config at T=7") {
  EncoderParams params = init_params(toy_config(), 3);
  EncoderTrace trace = encode(params, seq({2, 3, 4, 5, 6, 7, 8}));
  REQUIRE(trace.hidden_states.size() == 3);
  REQUIRE(trace.attentions.size() == 2);
  for (const auto& h : trace.hidden_states) {
    CHECK(h.shape() == std::vector<std::size_t>{7, 16});
  }
  for (const auto& a : trace.attentions) {
    CHECK(a.shape() == std::vector<std::size_t>{4, 7, 7});
  }
}

TEST_CASE("attention rows are probability distributions at every layer and head") {
  EncoderParams params = init_params(toy_config(), 4);
  EncoderTrace trace = encode(params, seq({3, 1, 4, 1, 5, 9, 2, 6}));
  for (const auto& attn : trace.attentions) {
    std::size_t heads = attn.shape()[0], t_len = attn.shape()[1];
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t r = 0; r < t_len; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < t_len; ++c) {
          double v = attn.data()[(h * t_len + r) * t_len + c];
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::fabs(total - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("inference encode is a pure function") {
  EncoderParams params = init_params(toy_config(), 5);
  TokenSeq tokens = seq({10, 20, 30, 40});
  EncoderTrace a = encode(params, tokens);
  EncoderTrace b = encode(params, tokens);
  CHECK(test::to_vec(a.hidden_states.back()) == test::to_vec(b.hidden_states.back()));
  CHECK(test::to_vec(a.attentions[0]) == test::to_vec(b.attentions[0]));
}

TEST_CASE("train-mode dropout is reproducible from (seed, step)") {
  EncoderParams params = init_params(toy_config(), 6);
  TokenSeq tokens = seq({10, 20, 30});
  DropoutCtx ctx{true, 123, 7};
  EncoderTrace a = encode(params, tokens, ctx);
  EncoderTrace b = encode(params, tokens, ctx);
  CHECK(test::to_vec(a.hidden_states.back()) == test::to_vec(b.hidden_states.back()));
  DropoutCtx other{true, 123, 8};
  EncoderTrace c = encode(params, tokens, other);
  CHECK(test::to_vec(a.hidden_states.back()) != test::to_vec(c.hidden_states.back()));
}

TEST_CASE("padding invariance: appended PAD tokens leave valid outputs unchanged") {
  EncoderParams params = init_params(toy_config(), 7);
  TokenSeq bare = seq({12, 13, 14, 15, 16});
  TokenSeq padded;
  padded.ids = {12, 13, 14, 15, 16, TokenSeq::kPad, TokenSeq::kPad, TokenSeq::kPad};
  padded.length = 5;

  EncoderTrace a = encode(params, bare);
  EncoderTrace b = encode(params, padded);
  std::size_t d = 16;
  for (std::size_t layer = 0; layer < a.hidden_states.size(); ++layer) {
    auto av = a.hidden_states[layer].data();
    auto bv = b.hidden_states[layer].data();
    for (std::size_t i = 0; i < 5 * d; ++i) {
      CHECK(std::fabs(av[i] - bv[i]) < 1e-9);
    }
  }
  // padding columns carry (almost) no attention mass in valid rows
  for (const auto& attn : b.attentions) {
    std::size_t t_len = attn.shape()[1];
    for (std::size_t h = 0; h < 4; ++h) {
      for (std::size_t r = 0; r < 5; ++r) {
        for (std::size_t c = 5; c < t_len; ++c) {
          CHECK(attn.data()[(h * t_len + r) * t_len + c] < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("sequences beyond max_seq_len are rejected") {
  EncoderConfig cfg = toy_config();
  cfg.max_seq_len = 4;
  EncoderParams params = init_params(cfg, 8);
  CHECK_THROWS_AS(encode(params, seq({1, 2, 3, 4, 5})), LengthError);
}

TEST_CASE("init_params is reproducible and respects config validation") {
  EncoderParams a = init_params(toy_config(), 42);
  EncoderParams b = init_params(toy_config(), 42);
  CHECK(test::to_vec(a.char_embed) == test::to_vec(b.char_embed));
  CHECK(test::to_vec(a.layers[1].w1) == test::to_vec(b.layers[1].w1));

  EncoderConfig bad = toy_config();
  bad.hidden_size = 15;  // not divisible by 4 heads
  CHECK_THROWS_AS(init_params(bad, 1), ConfigError);
}

TEST_CASE("count_params equals the real allocation walk on small configs") {
  for (std::uint64_t i = 0; i < 3; ++i) {
    EncoderConfig cfg = toy_config();
    cfg.num_layers = 1 + i;
    cfg.hidden_size = 8 * (i + 1);
    cfg.num_heads = 2;
    cfg.ffn_size = 16 * (i + 1);
    // real allocations
    EncoderParams p = init_params(cfg, i);
    std::size_t allocated = 0;
    for (auto& [name, t] : p.named_parameters()) allocated += t.size();
    CHECK(count_params(cfg) == allocated);
    CHECK(allocation_walk(cfg) == allocated);
  }
}

TEST_CASE("count_params with zero layers leaves embeddings plus final norm") {
  EncoderConfig cfg = toy_config();
  cfg.num_layers = 0;
  std::size_t expect = cfg.vocab_size * 16 + cfg.max_seq_len * 16 + 2 * 16;
  CHECK(count_params(cfg) == expect);
}

TEST_CASE("reference-scale teacher/student parameter ratio matches the shape walk") {
  EncoderConfig teacher{12, 768, 12, 3072, 21128, 512, 0.1};
  EncoderConfig student{4, 312, 12, 1200, 21128, 512, 0.1};
  CHECK(count_params(teacher) == allocation_walk(teacher));
  CHECK(count_params(student) == allocation_walk(student));
  double ratio = static_cast<double>(count_params(student)) /
                 static_cast<double>(count_params(teacher));
  double oracle_ratio = static_cast<double>(allocation_walk(student)) /
                        static_cast<double>(allocation_walk(teacher));
  CHECK(ratio == oracle_ratio);
  CHECK(ratio < 0.25);  // the small model is a fraction of the reference one
}

TEST_CASE("desk presets keep the large/small structure") {
  EncoderConfig t = teacher_preset(63);
  EncoderConfig s = student_preset(63);
  CHECK(t.num_layers > s.num_layers);
  CHECK(t.hidden_size > s.hidden_size);
  CHECK(t.num_heads == s.num_heads);
  CHECK(count_params(s) < count_params(t));
}

TEST_CASE("gradient flows through the full encoder plus a head loss") {
  EncoderConfig cfg = toy_config();
  cfg.dropout_rate = 0.0;
  EncoderParams params = init_params(cfg, 77);
  HeadParams head = init_head(HeadConfig{HeadKind::kMlp, 16, 8, 5, false}, 78);
  TokenSeq tokens = seq({4, 9, 2, 30, 7});
  std::vector<int> targets{1, 3, 0, 4, 2};
  std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};

  auto loss = [&] {
    EncoderTrace trace = encode(params, tokens);
    Tensor logits = head_forward(head, trace.hidden_states.back(), tokens.length);
    return masked_cross_entropy(log_softmax(logits), targets, mask);
  };
  std::vector<Tensor> inputs = params.parameters();
  for (auto& t : head.parameters()) inputs.push_back(t);
  auto report = grad_check(loss, inputs);
  CHECK(report.max_error < 1e-4);
}
