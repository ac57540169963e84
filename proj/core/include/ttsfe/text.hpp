#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttsfe {

/// Thrown on malformed input data (bad UTF-8, corpus parse errors, missing
/// lexicon entries at inference time).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Splits UTF-8 text into one string per code point; rejects malformed bytes.
std::vector<std::string> utf8_split(const std::string& text);
std::string utf8_encode(char32_t code_point);

/// Token ids with an explicit valid prefix; trailing positions are padding.
/// Ids 0 and 1 are reserved for PAD and UNK.
struct TokenSeq {
  std::vector<int> ids;
  std::size_t length = 0;  // valid prefix, <= ids.size()

  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
};

/// Character inventory; id = position + 2 to leave room for PAD and UNK.
class CharVocab {
 public:
  CharVocab() = default;
  explicit CharVocab(std::vector<std::string> chars);

  std::size_t size() const { return chars_.size() + 2; }
  int id_of(const std::string& ch) const;  // TokenSeq::kUnk when absent
  bool contains(const std::string& ch) const { return index_.count(ch) > 0; }
  const std::string& char_of(int id) const;
  const std::vector<std::string>& chars() const { return chars_; }

  bool operator==(const CharVocab& o) const { return chars_ == o.chars_; }

 private:
  std::vector<std::string> chars_;
  std::map<std::string, int> index_;
};

/// One token per character; unknown characters map to UNK with their
/// positions reported through `unk_positions` when given.
TokenSeq tokenize_chars(const std::string& text, const CharVocab& vocab,
                        std::vector<std::size_t>* unk_positions = nullptr);
TokenSeq tokenize_chars(const std::vector<std::string>& chars, const CharVocab& vocab,
                        std::vector<std::size_t>* unk_positions = nullptr);

}  // namespace ttsfe
