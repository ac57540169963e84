#include "ttsfe/prosody.hpp"

namespace ttsfe {

const std::string& prosody_label_name(ProsodyLabel label) {
  static const std::string names[] = {"I", "B1", "B2", "B3"};
  return names[static_cast<int>(label)];
}

ProsodyLabel prosody_label_from_int(int v) {
  if (v < 0 || v >= static_cast<int>(kNumProsodyLabels)) {
    throw DataError("prosody label index " + std::to_string(v) + " outside [0, 4)");
  }
  return static_cast<ProsodyLabel>(v);
}

std::vector<ProsodyLabel> parse_prosody_labels(const std::string& text) {
  std::vector<ProsodyLabel> out;
  std::size_t i = 0;
  while (i < text.size()) {
    char ch = text[i];
    if (ch == 'I') {
      out.push_back(ProsodyLabel::kI);
      ++i;
    } else if (ch == 'B' && i + 1 < text.size() && text[i + 1] >= '1' &&
               text[i + 1] <= '3') {
      out.push_back(static_cast<ProsodyLabel>(text[i + 1] - '0'));
      i += 2;
    } else {
      throw DataError("bad prosody label string at offset " + std::to_string(i) + ": " +
                      text);
    }
  }
  return out;
}

std::string format_prosody_labels(const std::vector<ProsodyLabel>& labels) {
  std::string out;
  for (ProsodyLabel l : labels) out += prosody_label_name(l);
  return out;
}

BoundarySets decode_prosody(const std::vector<ProsodyLabel>& labels) {
  BoundarySets sets;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    switch (labels[i]) {
      case ProsodyLabel::kI:
        break;
      case ProsodyLabel::kB1:
        sets.pw.insert(i);
        break;
      case ProsodyLabel::kB2:
        sets.pw.insert(i);
        sets.pph.insert(i);
        break;
      case ProsodyLabel::kB3:
        sets.pw.insert(i);
        sets.pph.insert(i);
        sets.iph.insert(i);
        break;
    }
  }
  return sets;
}

std::vector<ProsodyLabel> encode_prosody(const BoundarySets& sets, std::size_t length) {
  std::vector<ProsodyLabel> out(length, ProsodyLabel::kI);
  for (std::size_t i : sets.pw) {
    if (i >= length) throw DataError("boundary position outside sequence");
    out[i] = ProsodyLabel::kB1;
  }
  for (std::size_t i : sets.pph) {
    if (!sets.pw.count(i)) throw DataError("PPH boundary not nested inside PW");
    out[i] = ProsodyLabel::kB2;
  }
  for (std::size_t i : sets.iph) {
    if (!sets.pph.count(i)) throw DataError("IPH boundary not nested inside PPH");
    out[i] = ProsodyLabel::kB3;
  }
  return out;
}

}  // namespace ttsfe
