#include "ttsfe/metrics.hpp"

#include <iomanip>
#include <sstream>

namespace ttsfe {

double polyphone_accuracy(const std::vector<PolyEvalSentence>& sentences) {
  std::size_t total = 0, correct = 0;
  for (const auto& s : sentences) {
    if (s.gold.size() != s.pred.size()) {
      throw MetricError("polyphone_accuracy: pred/gold misaligned (" +
                        std::to_string(s.pred.size()) + " vs " +
                        std::to_string(s.gold.size()) + ")");
    }
    total += s.gold.size();
    for (std::size_t i = 0; i < s.gold.size(); ++i) {
      if (s.gold[i] == s.pred[i]) ++correct;
    }
  }
  if (total == 0) {
    throw MetricError("polyphone_accuracy: no polyphone positions to score");
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

double sentence_accuracy(const std::vector<PolyEvalSentence>& sentences) {
  if (sentences.empty()) {
    throw MetricError("sentence_accuracy: no sentences to score");
  }
  std::size_t good = 0;
  for (const auto& s : sentences) {
    if (s.gold.size() != s.pred.size()) {
      throw MetricError("sentence_accuracy: pred/gold misaligned");
    }
    bool all = true;
    for (std::size_t i = 0; i < s.gold.size(); ++i) all = all && s.gold[i] == s.pred[i];
    if (all) ++good;
  }
  return 100.0 * static_cast<double>(good) / static_cast<double>(sentences.size());
}

namespace {

void tally_level(const std::set<std::size_t>& pred, const std::set<std::size_t>& gold,
                 std::size_t exclude_pos, LevelF1& acc) {
  for (std::size_t p : pred) {
    if (p == exclude_pos) continue;
    ++acc.predicted;
    if (gold.count(p)) ++acc.correct;
  }
  for (std::size_t g : gold) {
    if (g == exclude_pos) continue;
    ++acc.gold;
  }
}

void finish_level(LevelF1& l) {
  l.precision = l.predicted ? 100.0 * static_cast<double>(l.correct) /
                                  static_cast<double>(l.predicted)
                            : 0.0;
  l.recall = l.gold ? 100.0 * static_cast<double>(l.correct) / static_cast<double>(l.gold)
                    : 0.0;
  l.f1 = (l.precision + l.recall > 0.0)
             ? 2.0 * l.precision * l.recall / (l.precision + l.recall)
             : 0.0;
}

}  // namespace

ProsodyF1 prosody_f1(const std::vector<std::vector<ProsodyLabel>>& pred,
                     const std::vector<std::vector<ProsodyLabel>>& gold) {
  if (pred.size() != gold.size()) {
    throw MetricError("prosody_f1: " + std::to_string(pred.size()) + " predictions vs " +
                      std::to_string(gold.size()) + " references");
  }
  ProsodyF1 out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size()) {
      throw MetricError("prosody_f1: sentence " + std::to_string(i) +
                        " length mismatch (" + std::to_string(pred[i].size()) + " vs " +
                        std::to_string(gold[i].size()) + ")");
    }
    if (pred[i].empty()) continue;
    // The final break is a trivial prediction; it does not count.
    std::size_t final_pos = pred[i].size() - 1;
    BoundarySets p = decode_prosody(pred[i]);
    BoundarySets g = decode_prosody(gold[i]);
    tally_level(p.pw, g.pw, final_pos, out.pw);
    tally_level(p.pph, g.pph, final_pos, out.pph);
    tally_level(p.iph, g.iph, final_pos, out.iph);
  }
  finish_level(out.pw);
  finish_level(out.pph);
  finish_level(out.iph);
  return out;
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

}  // namespace

std::string EvalReport::machine_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  if (has_poly) {
    os << "poly_acc=" << poly_acc << '\n';
    os << "sent_acc=" << sent_acc << '\n';
    os << "poly_total=" << poly_total << '\n';
    os << "poly_correct=" << poly_correct << '\n';
    os << "poly_sentences=" << sentences << '\n';
    os << "poly_sentences_correct=" << sentences_correct << '\n';
  }
  if (has_prosody) {
    auto level = [&](const char* name, const LevelF1& l) {
      os << name << "_precision=" << l.precision << '\n';
      os << name << "_recall=" << l.recall << '\n';
      os << name << "_f1=" << l.f1 << '\n';
      os << name << "_gold=" << l.gold << '\n';
      os << name << "_predicted=" << l.predicted << '\n';
      os << name << "_correct=" << l.correct << '\n';
    };
    level("pw", prosody.pw);
    level("pph", prosody.pph);
    level("iph", prosody.iph);
    os << "prosody_sentences=" << prosody_sentences << '\n';
  }
  return os.str();
}

std::string EvalReport::human_text() const {
  std::ostringstream os;
  if (has_poly) {
    os << "polyphone disambiguation (" << sentences << " sentences, " << poly_total
       << " polyphones)\n";
    os << "  ACC       " << fmt(poly_acc) << '\n';
    os << "  SENT ACC  " << fmt(sent_acc) << '\n';
  }
  if (has_prosody) {
    os << "prosodic structure (" << prosody_sentences << " sentences)\n";
    os << "  level   P       R       F1\n";
    auto row = [&](const char* name, const LevelF1& l) {
      os << "  " << std::left << std::setw(8) << name << std::right << std::setw(6)
         << fmt(l.precision) << "  " << std::setw(6) << fmt(l.recall) << "  "
         << std::setw(6) << fmt(l.f1) << '\n';
    };
    row("PW", prosody.pw);
    row("PPH", prosody.pph);
    row("IPH", prosody.iph);
  }
  return os.str();
}

}  // namespace ttsfe
