#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ttsfe/tensor.hpp"
#include "ttsfe/text.hpp"

namespace ttsfe {

/// Thrown when an input sequence exceeds the encoder's max length.
class LengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EncoderConfig {
  std::size_t num_layers = 6;
  std::size_t hidden_size = 96;
  std::size_t num_heads = 4;
  std::size_t ffn_size = 192;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 64;
  double dropout_rate = 0.1;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Desk-scale presets keeping the large/small structure trainable on a CPU.
EncoderConfig teacher_preset(std::size_t vocab_size, std::size_t max_seq_len = 64);
EncoderConfig student_preset(std::size_t vocab_size, std::size_t max_seq_len = 64);

struct EncoderParams {
  struct Layer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor w1, b1, w2, b2;
    Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  };

  EncoderConfig config;
  Tensor char_embed;  // [vocab x hidden]
  Tensor pos_embed;   // [max_seq_len x hidden]
  std::vector<Layer> layers;
  Tensor final_gain, final_bias;

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  void set_trainable(bool flag);
  EncoderParams clone() const;
};

/// Per-layer view of one forward pass; the distillation interface.
/// hidden_states[0] is the embedding-layer output, hidden_states[i] the
/// output of layer i, and hidden_states[num_layers] additionally carries the
/// final layer norm (it is what the task heads consume). attentions[i] holds
/// the post-softmax attention distributions of layer i+1 as [heads x T x T];
/// attention_scores[i] the matching pre-softmax (masked) scores.
struct EncoderTrace {
  std::vector<Tensor> hidden_states;
  std::vector<Tensor> attentions;
  std::vector<Tensor> attention_scores;
};

/// Dropout seeding contract: every mask is a pure function of
/// (seed, step, site), where sites are numbered in a fixed forward order.
struct DropoutCtx {
  bool enabled = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

/// Truncated-normal (std 0.02, cut at 2 sigma) init for embeddings and
/// projections, ones/zeros for layer norms; reproducible from the seed.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

/// Exact number of scalar parameters allocated for a config.
std::size_t count_params(const EncoderConfig& config);

EncoderTrace encode(const EncoderParams& params, const TokenSeq& tokens,
                    const DropoutCtx& dropout_ctx = {});

}  // namespace ttsfe
