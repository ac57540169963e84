#include "ttsfe/encoder.hpp"

#include <cmath>
#include <random>

namespace ttsfe {

namespace {

constexpr double kMaskPenalty = -1e9;
constexpr double kLayerNormEps = 1e-5;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t site) {
  return splitmix64(splitmix64(splitmix64(seed) ^ step) ^ (site * 0x9e3779b97f4a7c15ULL));
}

// N(0, std) truncated at +/- 2 std.
Tensor trunc_normal(std::vector<std::size_t> shape, double std_dev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std_dev);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) {
    double x;
    do {
      x = dist(rng);
    } while (std::fabs(x) > 2.0 * std_dev);
    v = x;
  }
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers == 0 || hidden_size == 0 || num_heads == 0 || ffn_size == 0 ||
      vocab_size < 2 || max_seq_len == 0) {
    throw ConfigError("encoder config has a zero-sized field");
  }
  if (hidden_size % num_heads != 0) {
    throw ConfigError("hidden_size " + std::to_string(hidden_size) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
}

EncoderConfig teacher_preset(std::size_t vocab_size, std::size_t max_seq_len) {
  return EncoderConfig{6, 96, 4, 192, vocab_size, max_seq_len, 0.1};
}

EncoderConfig student_preset(std::size_t vocab_size, std::size_t max_seq_len) {
  return EncoderConfig{2, 48, 4, 96, vocab_size, max_seq_len, 0.1};
}

std::vector<Tensor> EncoderParams::parameters() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> EncoderParams::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.char", char_embed);
  out.emplace_back("embed.pos", pos_embed);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    std::string p = "layer" + std::to_string(i) + ".";
    out.emplace_back(p + "attn.wq", l.wq);
    out.emplace_back(p + "attn.bq", l.bq);
    out.emplace_back(p + "attn.wk", l.wk);
    out.emplace_back(p + "attn.bk", l.bk);
    out.emplace_back(p + "attn.wv", l.wv);
    out.emplace_back(p + "attn.bv", l.bv);
    out.emplace_back(p + "attn.wo", l.wo);
    out.emplace_back(p + "attn.bo", l.bo);
    out.emplace_back(p + "ffn.w1", l.w1);
    out.emplace_back(p + "ffn.b1", l.b1);
    out.emplace_back(p + "ffn.w2", l.w2);
    out.emplace_back(p + "ffn.b2", l.b2);
    out.emplace_back(p + "ln1.gain", l.ln1_gain);
    out.emplace_back(p + "ln1.bias", l.ln1_bias);
    out.emplace_back(p + "ln2.gain", l.ln2_gain);
    out.emplace_back(p + "ln2.bias", l.ln2_bias);
  }
  out.emplace_back("final_norm.gain", final_gain);
  out.emplace_back("final_norm.bias", final_bias);
  return out;
}

void EncoderParams::set_trainable(bool flag) {
  for (auto& t : parameters()) t.set_requires_grad(flag);
}

EncoderParams EncoderParams::clone() const {
  EncoderParams out;
  out.config = config;
  out.char_embed = char_embed.detached_copy();
  out.pos_embed = pos_embed.detached_copy();
  for (const auto& l : layers) {
    EncoderParams::Layer c;
    c.wq = l.wq.detached_copy();
    c.bq = l.bq.detached_copy();
    c.wk = l.wk.detached_copy();
    c.bk = l.bk.detached_copy();
    c.wv = l.wv.detached_copy();
    c.bv = l.bv.detached_copy();
    c.wo = l.wo.detached_copy();
    c.bo = l.bo.detached_copy();
    c.w1 = l.w1.detached_copy();
    c.b1 = l.b1.detached_copy();
    c.w2 = l.w2.detached_copy();
    c.b2 = l.b2.detached_copy();
    c.ln1_gain = l.ln1_gain.detached_copy();
    c.ln1_bias = l.ln1_bias.detached_copy();
    c.ln2_gain = l.ln2_gain.detached_copy();
    c.ln2_bias = l.ln2_bias.detached_copy();
    out.layers.push_back(std::move(c));
  }
  out.final_gain = final_gain.detached_copy();
  out.final_bias = final_bias.detached_copy();
  return out;
}

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(splitmix64(seed));
  std::size_t d = config.hidden_size, f = config.ffn_size;

  EncoderParams p;
  p.config = config;
  p.char_embed = trunc_normal({config.vocab_size, d}, 0.02, rng).set_requires_grad(true);
  p.pos_embed = trunc_normal({config.max_seq_len, d}, 0.02, rng).set_requires_grad(true);
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    EncoderParams::Layer l;
    l.wq = trunc_normal({d, d}, 0.02, rng).set_requires_grad(true);
    l.bq = Tensor::zeros({d}).set_requires_grad(true);
    l.wk = trunc_normal({d, d}, 0.02, rng).set_requires_grad(true);
    l.bk = Tensor::zeros({d}).set_requires_grad(true);
    l.wv = trunc_normal({d, d}, 0.02, rng).set_requires_grad(true);
    l.bv = Tensor::zeros({d}).set_requires_grad(true);
    l.wo = trunc_normal({d, d}, 0.02, rng).set_requires_grad(true);
    l.bo = Tensor::zeros({d}).set_requires_grad(true);
    l.w1 = trunc_normal({d, f}, 0.02, rng).set_requires_grad(true);
    l.b1 = Tensor::zeros({f}).set_requires_grad(true);
    l.w2 = trunc_normal({f, d}, 0.02, rng).set_requires_grad(true);
    l.b2 = Tensor::zeros({d}).set_requires_grad(true);
    l.ln1_gain = Tensor::full({d}, 1.0).set_requires_grad(true);
    l.ln1_bias = Tensor::zeros({d}).set_requires_grad(true);
    l.ln2_gain = Tensor::full({d}, 1.0).set_requires_grad(true);
    l.ln2_bias = Tensor::zeros({d}).set_requires_grad(true);
    p.layers.push_back(std::move(l));
  }
  p.final_gain = Tensor::full({d}, 1.0).set_requires_grad(true);
  p.final_bias = Tensor::zeros({d}).set_requires_grad(true);
  return p;
}

std::size_t count_params(const EncoderConfig& config) {
  std::size_t d = config.hidden_size, f = config.ffn_size;
  std::size_t embeddings = config.vocab_size * d + config.max_seq_len * d;
  std::size_t attn = 4 * (d * d + d);
  std::size_t ffn = d * f + f + f * d + d;
  std::size_t norms = 4 * d;
  return embeddings + config.num_layers * (attn + ffn + norms) + 2 * d;
}

EncoderTrace encode(const EncoderParams& params, const TokenSeq& tokens,
                    const DropoutCtx& dropout_ctx) {
  const EncoderConfig& cfg = params.config;
  std::size_t t_len = tokens.ids.size();
  if (t_len == 0) throw LengthError("encode: empty token sequence");
  if (t_len > cfg.max_seq_len) {
    throw LengthError("encode: sequence length " + std::to_string(t_len) +
                      " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  std::size_t valid = std::min(tokens.length, t_len);
  std::size_t d = cfg.hidden_size;
  std::size_t heads = cfg.num_heads;
  std::size_t dh = d / heads;
  bool want_dropout = dropout_ctx.enabled && cfg.dropout_rate > 0.0;
  std::uint64_t site = 0;
  auto apply_dropout = [&](const Tensor& x) {
    ++site;
    if (!want_dropout) return x;
    std::mt19937_64 rng(mix_seed(dropout_ctx.seed, dropout_ctx.step, site));
    return dropout(x, cfg.dropout_rate, rng);
  };

  // Additive attention mask: padding columns get a large negative score.
  Tensor attn_mask;
  if (valid < t_len) {
    std::vector<double> m(t_len * t_len, 0.0);
    for (std::size_t r = 0; r < t_len; ++r) {
      for (std::size_t c = valid; c < t_len; ++c) m[r * t_len + c] = kMaskPenalty;
    }
    attn_mask = Tensor::from({t_len, t_len}, std::move(m));
  }

  EncoderTrace trace;
  Tensor x = add(embedding(params.char_embed, tokens.ids),
                 slice_rows(params.pos_embed, 0, t_len));
  x = apply_dropout(x);
  trace.hidden_states.push_back(x);

  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t li = 0; li < cfg.num_layers; ++li) {
    const auto& l = params.layers[li];
    Tensor u = layer_norm(x, l.ln1_gain, l.ln1_bias, kLayerNormEps);
    Tensor q = add_bias(matmul(u, l.wq), l.bq);
    Tensor k = add_bias(matmul(u, l.wk), l.bk);
    Tensor v = add_bias(matmul(u, l.wv), l.bv);

    std::vector<Tensor> head_ctx, head_probs, head_scores;
    for (std::size_t h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * dh, dh);
      Tensor kh = slice_cols(k, h * dh, dh);
      Tensor vh = slice_cols(v, h * dh, dh);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
      if (attn_mask.defined()) scores = add(scores, attn_mask);
      Tensor probs = softmax(scores, -1);
      head_scores.push_back(scores);
      head_probs.push_back(probs);
      head_ctx.push_back(matmul(probs, vh));
    }
    trace.attention_scores.push_back(stack0(head_scores));
    trace.attentions.push_back(stack0(head_probs));

    Tensor attn_out = apply_dropout(add_bias(matmul(concat_cols(head_ctx), l.wo), l.bo));
    Tensor res1 = add(x, attn_out);

    Tensor u2 = layer_norm(res1, l.ln2_gain, l.ln2_bias, kLayerNormEps);
    Tensor ffn = add_bias(matmul(gelu(add_bias(matmul(u2, l.w1), l.b1)), l.w2), l.b2);
    x = add(res1, apply_dropout(ffn));

    if (li + 1 == cfg.num_layers) {
      x = layer_norm(x, params.final_gain, params.final_bias, kLayerNormEps);
    }
    trace.hidden_states.push_back(x);
  }
  return trace;
}

}  // namespace ttsfe
