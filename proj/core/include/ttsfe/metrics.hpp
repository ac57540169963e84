#pragma once

#include <string>
#include <vector>

#include "ttsfe/prosody.hpp"

namespace ttsfe {

/// Thrown when a metric is undefined on the given input (e.g. accuracy over
/// zero polyphone positions) or inputs are misaligned.
class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Predicted vs. gold pronunciations of one sentence, aligned over its
/// polyphone positions only.
struct PolyEvalSentence {
  std::vector<std::string> gold;
  std::vector<std::string> pred;
};

/// Correct polyphone predictions / polyphone positions, in percent.
double polyphone_accuracy(const std::vector<PolyEvalSentence>& sentences);

/// Percentage of sentences whose every polyphone is correct.
double sentence_accuracy(const std::vector<PolyEvalSentence>& sentences);

struct LevelF1 {
  double precision = 0.0, recall = 0.0, f1 = 0.0;  // percent
  std::size_t gold = 0, predicted = 0, correct = 0;
};

struct ProsodyF1 {
  LevelF1 pw, pph, iph;
};

/// Boundary-position F1 per level, micro-averaged over all sentences. The
/// sentence-final position is excluded. Zero-denominator precision/recall
/// and zero P+R both resolve to 0.
ProsodyF1 prosody_f1(const std::vector<std::vector<ProsodyLabel>>& pred,
                     const std::vector<std::vector<ProsodyLabel>>& gold);

struct EvalReport {
  bool has_poly = false;
  double poly_acc = 0.0, sent_acc = 0.0;
  std::size_t poly_total = 0, poly_correct = 0;
  std::size_t sentences = 0, sentences_correct = 0;

  bool has_prosody = false;
  ProsodyF1 prosody;
  std::size_t prosody_sentences = 0;

  /// key=value block for machines.
  std::string machine_text() const;
  /// Small aligned table for humans.
  std::string human_text() const;
};

}  // namespace ttsfe
