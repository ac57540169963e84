#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ttsfe/text.hpp"

namespace ttsfe {

/// Per-character pronunciation sets. A character with exactly one
/// pronunciation is monophonic and resolved by lookup; two or more make it
/// polyphonic and subject to model prediction.
class PronunciationLexicon {
 public:
  PronunciationLexicon() = default;
  explicit PronunciationLexicon(std::map<std::string, std::vector<std::string>> entries);

  /// File format: UTF-8 lines "char<TAB>pron1[,pron2,...]", sorted by
  /// character; '#' starts a comment line.
  static PronunciationLexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool contains(const std::string& ch) const { return entries_.count(ch) > 0; }
  bool is_monophonic(const std::string& ch) const;
  bool is_polyphonic(const std::string& ch) const;
  const std::vector<std::string>& pronunciations(const std::string& ch) const;
  const std::map<std::string, std::vector<std::string>>& entries() const {
    return entries_;
  }
  /// The polyphonic subset, as consumed by PronClassMap::build.
  std::map<std::string, std::vector<std::string>> polyphonic_entries() const;

  bool operator==(const PronunciationLexicon&) const = default;

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

}  // namespace ttsfe
