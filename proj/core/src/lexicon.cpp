#include "ttsfe/lexicon.hpp"

#include <fstream>
#include <sstream>

namespace ttsfe {

PronunciationLexicon::PronunciationLexicon(
    std::map<std::string, std::vector<std::string>> entries)
    : entries_(std::move(entries)) {
  for (const auto& [ch, prons] : entries_) {
    if (prons.empty()) {
      throw DataError("lexicon entry '" + ch + "' has no pronunciations");
    }
  }
}

PronunciationLexicon PronunciationLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon file " + path.string());
  std::map<std::string, std::vector<std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected char<TAB>pronunciations");
    }
    std::string ch = line.substr(0, tab);
    std::vector<std::string> prons;
    std::stringstream rest(line.substr(tab + 1));
    std::string pron;
    while (std::getline(rest, pron, ',')) {
      if (!pron.empty()) prons.push_back(pron);
    }
    if (ch.empty() || prons.empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": empty character or pronunciation list");
    }
    if (!entries.emplace(ch, std::move(prons)).second) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": duplicate character '" + ch + "'");
    }
  }
  return PronunciationLexicon(std::move(entries));
}

void PronunciationLexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write lexicon file " + path.string());
  out << "# char<TAB>pron1[,pron2,...]\n";
  for (const auto& [ch, prons] : entries_) {
    out << ch << '\t';
    for (std::size_t i = 0; i < prons.size(); ++i) {
      if (i) out << ',';
      out << prons[i];
    }
    out << '\n';
  }
}

bool PronunciationLexicon::is_monophonic(const std::string& ch) const {
  return pronunciations(ch).size() == 1;
}

bool PronunciationLexicon::is_polyphonic(const std::string& ch) const {
  return pronunciations(ch).size() >= 2;
}

const std::vector<std::string>& PronunciationLexicon::pronunciations(
    const std::string& ch) const {
  auto it = entries_.find(ch);
  if (it == entries_.end()) {
    throw DataError("character '" + ch + "' not in lexicon");
  }
  return it->second;
}

std::map<std::string, std::vector<std::string>> PronunciationLexicon::polyphonic_entries()
    const {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [ch, prons] : entries_) {
    if (prons.size() >= 2) out.emplace(ch, prons);
  }
  return out;
}

}  // namespace ttsfe
