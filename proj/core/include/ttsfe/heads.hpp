#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttsfe/tensor.hpp"

namespace ttsfe {

/// Thrown on lexicon/class-map inconsistencies at inference time.
class LexiconError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- pronunciation class space ---------------------------------------------

/// Dense bijection between (character, pronunciation) pairs of polyphonic
/// characters and class indices, plus each character's admissible subset.
class PronClassMap {
 public:
  /// Entries must cover only polyphonic characters (>= 2 pronunciations each).
  static PronClassMap build(
      const std::map<std::string, std::vector<std::string>>& prons_by_char);

  std::size_t num_classes() const { return classes_.size(); }
  const std::vector<std::pair<std::string, std::string>>& classes() const {
    return classes_;
  }
  int class_of(const std::string& ch, const std::string& pron) const;
  const std::string& pron_of(int cls) const { return classes_.at(cls).second; }
  bool is_polyphonic(const std::string& ch) const;
  /// Ascending class indices admissible for a polyphonic character.
  const std::vector<int>& admissible(const std::string& ch) const;

  /// Sorted text lines "char<TAB>pron<TAB>class_index".
  std::string to_text() const;
  static PronClassMap from_text(const std::string& text);

  bool operator==(const PronClassMap&) const = default;

 private:
  std::vector<std::pair<std::string, std::string>> classes_;  // index -> (char, pron)
  std::map<std::string, std::vector<int>> admissible_;
};

// ---- prediction layers -------------------------------------------------------

enum class HeadKind { kMlp, kBlstm };

struct HeadConfig {
  HeadKind kind = HeadKind::kMlp;
  std::size_t input_size = 96;
  std::size_t hidden_size = 64;  // MLP width, or BLSTM units per direction
  std::size_t num_classes = 4;
  bool crf = false;  // linear-chain CRF output layer (prosody variant)
};

/// A task prediction layer: three affine layers with GELU for the MLP
/// variant, or one bidirectional LSTM feeding an affine output. Rows past
/// `valid` are zero logits (they are masked out of every loss).
struct HeadParams {
  HeadConfig config;
  std::vector<Tensor> weights;  // layout depends on kind; see named_parameters
  // CRF potentials, present when config.crf
  Tensor crf_transitions;  // [C x C], trans[i][j] scores i -> j
  Tensor crf_start, crf_end;

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  void set_trainable(bool flag);
  HeadParams clone() const;
};

HeadParams init_head(const HeadConfig& config, std::uint64_t seed);

/// hidden: [T x input_size] -> logits [T x num_classes].
Tensor head_forward(const HeadParams& head, const Tensor& hidden, std::size_t valid);

// ---- losses -------------------------------------------------------------------

/// Mean cross-entropy over the polyphone positions only; exactly 0 (with no
/// gradient) when the mask is empty.
Tensor polyphone_loss(const Tensor& logits, const std::vector<int>& targets,
                      const std::vector<std::uint8_t>& poly_mask);

/// Mean cross-entropy over all valid (non-pad) characters.
Tensor prosody_loss(const Tensor& logits, const std::vector<int>& labels,
                    const std::vector<std::uint8_t>& valid_mask);

/// alpha1 * l_poly + alpha2 * l_prosody.
Tensor global_loss(const Tensor& l_poly, const Tensor& l_prosody, double alpha1,
                   double alpha2);

/// Argmax over the admissible class subset; ties break to the lowest index.
int predict_polyphone(std::span<const double> logits_row,
                      const std::vector<int>& admissible);

// ---- linear-chain CRF ----------------------------------------------------------

/// log P(labels | emissions) = path score - log partition, computed with the
/// forward algorithm in log space. Differentiable in emissions and all
/// potentials.
Tensor crf_log_likelihood(const Tensor& emissions, const Tensor& transitions,
                          const Tensor& start, const Tensor& end,
                          const std::vector<int>& labels);

/// Max-score path. Ties break toward the lower label index at the latest
/// differing position.
std::vector<int> crf_viterbi(const Tensor& emissions, const Tensor& transitions,
                             const Tensor& start, const Tensor& end);

}  // namespace ttsfe
