#include "ttsfe/model.hpp"

#include <algorithm>

namespace ttsfe {

std::vector<Tensor> FrontendModel::parameters() {
  std::vector<Tensor> out = encoder.parameters();
  for (auto& t : poly_head.parameters()) out.push_back(t);
  for (auto& t : prosody_head.parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> FrontendModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [n, t] : encoder.named_parameters()) out.emplace_back("encoder." + n, t);
  for (auto& [n, t] : poly_head.named_parameters()) {
    out.emplace_back("poly_head." + n, t);
  }
  for (auto& [n, t] : prosody_head.named_parameters()) {
    out.emplace_back("prosody_head." + n, t);
  }
  return out;
}

void FrontendModel::set_trainable(bool flag) {
  encoder.set_trainable(flag);
  poly_head.set_trainable(flag);
  prosody_head.set_trainable(flag);
}

FrontendModel FrontendModel::clone() const {
  FrontendModel out;
  out.encoder = encoder.clone();
  out.poly_head = poly_head.clone();
  out.prosody_head = prosody_head.clone();
  out.vocab = vocab;
  out.classes = classes;
  return out;
}

FrontendModel build_model(const EncoderConfig& encoder_config, const HeadSettings& heads,
                          const CharVocab& vocab, const PronClassMap& classes,
                          std::uint64_t seed) {
  if (encoder_config.vocab_size != vocab.size()) {
    throw ConfigError("encoder vocab_size " + std::to_string(encoder_config.vocab_size) +
                      " does not match vocabulary size " + std::to_string(vocab.size()));
  }
  return attach_heads(init_params(encoder_config, seed), heads, vocab, classes, seed);
}

FrontendModel attach_heads(EncoderParams encoder, const HeadSettings& heads,
                           const CharVocab& vocab, const PronClassMap& classes,
                           std::uint64_t seed) {
  if (classes.num_classes() == 0) {
    throw ConfigError("attach_heads: empty pronunciation class space");
  }
  FrontendModel m;
  std::size_t d = encoder.config.hidden_size;
  m.encoder = std::move(encoder);
  m.poly_head = init_head(
      HeadConfig{heads.kind, d, heads.hidden_size, classes.num_classes(), false},
      seed ^ 0x706f6c79ULL);
  m.prosody_head = init_head(
      HeadConfig{heads.kind, d, heads.hidden_size, kNumProsodyLabels, heads.prosody_crf},
      seed ^ 0x70726f73ULL);
  m.vocab = vocab;
  m.classes = classes;
  return m;
}

SentencePrediction predict_sentence(FrontendModel& model,
                                    const std::vector<std::string>& chars) {
  TokenSeq tokens = tokenize_chars(chars, model.vocab);
  EncoderTrace trace = encode(model.encoder, tokens);
  const Tensor& features = trace.hidden_states.back();
  std::size_t t_len = chars.size();

  SentencePrediction out;
  out.poly_class.assign(t_len, -1);

  Tensor poly_logits = head_forward(model.poly_head, features, t_len);
  std::size_t c = model.classes.num_classes();
  for (std::size_t t = 0; t < t_len; ++t) {
    if (!model.classes.is_polyphonic(chars[t])) continue;
    auto row = poly_logits.data().subspan(t * c, c);
    out.poly_class[t] = predict_polyphone(row, model.classes.admissible(chars[t]));
  }

  Tensor pros_logits = head_forward(model.prosody_head, features, t_len);
  if (model.prosody_head.config.crf) {
    std::vector<int> path =
        crf_viterbi(pros_logits, model.prosody_head.crf_transitions,
                    model.prosody_head.crf_start, model.prosody_head.crf_end);
    for (int v : path) out.prosody.push_back(prosody_label_from_int(v));
  } else {
    auto lv = pros_logits.data();
    for (std::size_t t = 0; t < t_len; ++t) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < kNumProsodyLabels; ++j) {
        if (lv[t * kNumProsodyLabels + j] > lv[t * kNumProsodyLabels + arg]) arg = j;
      }
      out.prosody.push_back(prosody_label_from_int(static_cast<int>(arg)));
    }
  }
  return out;
}

EvalReport evaluate_model(FrontendModel& model,
                          const std::vector<CorpusSentence>& sentences) {
  std::vector<PolyEvalSentence> poly_eval;
  std::vector<std::vector<ProsodyLabel>> pros_pred, pros_gold;

  for (const auto& s : sentences) {
    if (s.task == TaskKind::kRaw) continue;
    SentencePrediction pred = predict_sentence(model, s.chars);
    if (s.task == TaskKind::kPoly) {
      PolyEvalSentence pe;
      for (const auto& [pos, gold_pron] : s.polyphones) {
        pe.gold.push_back(gold_pron);
        int cls = pred.poly_class.at(pos);
        pe.pred.push_back(cls >= 0 ? model.classes.pron_of(cls) : std::string("?"));
      }
      poly_eval.push_back(std::move(pe));
    } else {
      pros_pred.push_back(pred.prosody);
      pros_gold.push_back(s.prosody);
    }
  }

  EvalReport report;
  if (!poly_eval.empty()) {
    report.has_poly = true;
    report.poly_acc = polyphone_accuracy(poly_eval);
    report.sent_acc = sentence_accuracy(poly_eval);
    report.sentences = poly_eval.size();
    for (const auto& pe : poly_eval) {
      report.poly_total += pe.gold.size();
      bool all = true;
      for (std::size_t i = 0; i < pe.gold.size(); ++i) {
        if (pe.gold[i] == pe.pred[i]) {
          ++report.poly_correct;
        } else {
          all = false;
        }
      }
      if (all) ++report.sentences_correct;
    }
  }
  if (!pros_pred.empty()) {
    report.has_prosody = true;
    report.prosody = prosody_f1(pros_pred, pros_gold);
    report.prosody_sentences = pros_pred.size();
  }
  return report;
}

}  // namespace ttsfe
