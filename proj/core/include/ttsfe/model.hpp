#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ttsfe/corpus.hpp"
#include "ttsfe/encoder.hpp"
#include "ttsfe/heads.hpp"
#include "ttsfe/metrics.hpp"

namespace ttsfe {

/// The unified front-end model: one shared character encoder with a
/// pronunciation-class head and a break-label head attached in parallel.
/// Character vocabulary and pronunciation-class space travel with the model
/// so inference needs no side files.
struct FrontendModel {
  EncoderParams encoder;
  HeadParams poly_head;
  HeadParams prosody_head;
  CharVocab vocab;
  PronClassMap classes;

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  void set_trainable(bool flag);
  FrontendModel clone() const;
};

struct HeadSettings {
  HeadKind kind = HeadKind::kMlp;
  std::size_t hidden_size = 64;
  bool prosody_crf = false;
};

FrontendModel build_model(const EncoderConfig& encoder_config,
                          const HeadSettings& heads, const CharVocab& vocab,
                          const PronClassMap& classes, std::uint64_t seed);

/// Attaches freshly initialized heads to an existing encoder (the
/// student-finetune entry point).
FrontendModel attach_heads(EncoderParams encoder, const HeadSettings& heads,
                           const CharVocab& vocab, const PronClassMap& classes,
                           std::uint64_t seed);

/// One inference pass: pronunciation class per polyphone position plus the
/// break-label sequence (Viterbi when the prosody head carries a CRF).
struct SentencePrediction {
  std::vector<int> poly_class;  // -1 at non-polyphone positions
  std::vector<ProsodyLabel> prosody;
};

SentencePrediction predict_sentence(FrontendModel& model,
                                    const std::vector<std::string>& chars);

/// Scores a test split; POLY sentences feed ACC / SENT ACC, PROSODY
/// sentences the three-level F1.
EvalReport evaluate_model(FrontendModel& model,
                          const std::vector<CorpusSentence>& sentences);

}  // namespace ttsfe
