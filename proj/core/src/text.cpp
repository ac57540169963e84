#include "ttsfe/text.hpp"

namespace ttsfe {

std::vector<std::string> utf8_split(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char lead = static_cast<unsigned char>(text[i]);
    std::size_t len;
    if (lead < 0x80) {
      len = 1;
    } else if ((lead >> 5) == 0x6) {
      len = 2;
    } else if ((lead >> 4) == 0xe) {
      len = 3;
    } else if ((lead >> 3) == 0x1e) {
      len = 4;
    } else {
      throw DataError("malformed UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) {
      throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) {
        throw DataError("malformed UTF-8 continuation at offset " + std::to_string(i + k));
      }
    }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
  return out;
}

CharVocab::CharVocab(std::vector<std::string> chars) : chars_(std::move(chars)) {
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    if (!index_.emplace(chars_[i], static_cast<int>(i) + 2).second) {
      throw DataError("duplicate vocabulary character '" + chars_[i] + "'");
    }
  }
}

int CharVocab::id_of(const std::string& ch) const {
  auto it = index_.find(ch);
  return it == index_.end() ? TokenSeq::kUnk : it->second;
}

const std::string& CharVocab::char_of(int id) const {
  static const std::string kPadStr = "<pad>";
  static const std::string kUnkStr = "<unk>";
  if (id == TokenSeq::kPad) return kPadStr;
  if (id == TokenSeq::kUnk) return kUnkStr;
  std::size_t i = static_cast<std::size_t>(id) - 2;
  if (id < 0 || i >= chars_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return chars_[i];
}

TokenSeq tokenize_chars(const std::vector<std::string>& chars, const CharVocab& vocab,
                        std::vector<std::size_t>* unk_positions) {
  if (chars.empty()) throw DataError("tokenize: empty input");
  TokenSeq seq;
  seq.ids.reserve(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    int id = vocab.id_of(chars[i]);
    if (id == TokenSeq::kUnk && unk_positions) unk_positions->push_back(i);
    seq.ids.push_back(id);
  }
  seq.length = seq.ids.size();
  return seq;
}

TokenSeq tokenize_chars(const std::string& text, const CharVocab& vocab,
                        std::vector<std::size_t>* unk_positions) {
  return tokenize_chars(utf8_split(text), vocab, unk_positions);
}

}  // namespace ttsfe
