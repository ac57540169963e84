#include "ttsfe/pipeline.hpp"

#include <sstream>

namespace ttsfe {

std::string Annotation::machine_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    os << chars[i] << '\t' << pronunciations[i] << '\t' << prosody_label_name(prosody[i])
       << '\n';
  }
  return os.str();
}

std::string Annotation::human_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    os << chars[i];
    if (prosody[i] != ProsodyLabel::kI) {
      os << '#' << static_cast<int>(prosody[i]);
    }
  }
  os << '\n';
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (i) os << ' ';
    os << pronunciations[i];
  }
  os << '\n';
  return os.str();
}

Annotation annotate(FrontendModel& model, const PronunciationLexicon& lexicon,
                    const std::string& text, bool restrict_to_admissible) {
  std::vector<std::string> chars = utf8_split(text);
  if (chars.empty()) throw DataError("annotate: empty input");

  // Every character must be pronounceable before any model work happens.
  std::string missing;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (!lexicon.contains(chars[i])) {
      if (!missing.empty()) missing += ", ";
      missing += "'" + chars[i] + "' at " + std::to_string(i);
    }
  }
  if (!missing.empty()) {
    throw AnnotationError("characters not in lexicon: " + missing);
  }

  TokenSeq tokens = tokenize_chars(chars, model.vocab);
  EncoderTrace trace = encode(model.encoder, tokens);
  const Tensor& features = trace.hidden_states.back();
  std::size_t t_len = chars.size();

  Annotation out;
  out.chars = chars;

  Tensor poly_logits = head_forward(model.poly_head, features, t_len);
  std::size_t c = model.classes.num_classes();
  std::vector<int> all_classes;
  if (!restrict_to_admissible) {
    for (std::size_t k = 0; k < c; ++k) all_classes.push_back(static_cast<int>(k));
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    const auto& prons = lexicon.pronunciations(chars[t]);
    if (prons.size() == 1) {
      out.pronunciations.push_back(prons[0]);
      continue;
    }
    auto row = poly_logits.data().subspan(t * c, c);
    const std::vector<int>& candidates =
        restrict_to_admissible ? model.classes.admissible(chars[t]) : all_classes;
    out.pronunciations.push_back(model.classes.pron_of(predict_polyphone(row, candidates)));
  }

  Tensor pros_logits = head_forward(model.prosody_head, features, t_len);
  if (model.prosody_head.config.crf) {
    for (int v : crf_viterbi(pros_logits, model.prosody_head.crf_transitions,
                             model.prosody_head.crf_start, model.prosody_head.crf_end)) {
      out.prosody.push_back(prosody_label_from_int(v));
    }
  } else {
    auto lv = pros_logits.data();
    for (std::size_t t = 0; t < t_len; ++t) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < kNumProsodyLabels; ++j) {
        if (lv[t * kNumProsodyLabels + j] > lv[t * kNumProsodyLabels + arg]) arg = j;
      }
      out.prosody.push_back(static_cast<ProsodyLabel>(arg));
    }
  }
  out.boundaries = decode_prosody(out.prosody);
  return out;
}

}  // namespace ttsfe
