#include "ttsfe/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace ttsfe {

namespace {

// Self-contained draws so generated corpora do not depend on the standard
// library's distribution implementations.
std::size_t rand_range(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

bool rand_bernoulli(std::mt19937_64& rng, double p) {
  return (static_cast<double>(rng() >> 11) * 0x1.0p-53) < p;
}

const char* kPronOnsets[] = {"b", "p", "m", "f", "d", "t",  "n",  "l",  "g", "k",
                             "h", "j", "q", "x", "z", "c",  "s",  "zh", "ch", "sh"};
const char* kPronFinals[] = {"a",  "o",  "e",  "i",  "u",  "ai", "ei",
                             "ao", "ou", "an", "en", "ang", "ong"};

}  // namespace

const std::string& task_name(TaskKind task) {
  static const std::string names[] = {"POLY", "PROSODY", "RAW"};
  return names[static_cast<int>(task)];
}

TaskKind task_from_name(const std::string& name) {
  if (name == "POLY") return TaskKind::kPoly;
  if (name == "PROSODY") return TaskKind::kProsody;
  if (name == "RAW") return TaskKind::kRaw;
  throw DataError("unknown task tag '" + name + "'");
}

void SyntheticLangSpec::validate() const {
  if (n_symbols < 6) {
    throw ConfigError("language needs at least 6 symbols (two per structural role)");
  }
  if (n_polyphones > n_symbols) {
    throw ConfigError("more polyphones than symbols");
  }
  if (n_context_classes < 2) {
    throw ConfigError("pronunciation rules need at least 2 context classes");
  }
  if (word_len_min == 0 || word_len_min > word_len_max) {
    throw ConfigError("bad word length range");
  }
  if (words_per_phrase_min == 0 || words_per_phrase_min > words_per_phrase_max) {
    throw ConfigError("bad words-per-phrase range");
  }
  if (phrases_min == 0 || phrases_min > phrases_max) {
    throw ConfigError("bad phrases-per-sentence range");
  }
  if (punct_prob < 0.0 || punct_prob > 1.0) {
    throw ConfigError("punct_prob must be in [0, 1]");
  }
}

SyntheticLanguage SyntheticLanguage::build(const SyntheticLangSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + 1);

  SyntheticLanguage lang;
  lang.spec_ = spec;
  lang.punct_ = utf8_encode(U'，');  // full-width comma

  for (std::size_t i = 0; i < spec.n_symbols; ++i) {
    lang.symbols_.push_back(utf8_encode(static_cast<char32_t>(0x4E00 + i)));
  }

  // Pronunciation bank: onset+final+tone, shuffled once, consumed in order
  // so every pronunciation string is unique.
  std::vector<std::string> bank;
  for (const char* o : kPronOnsets) {
    for (const char* f : kPronFinals) {
      for (int tone = 1; tone <= 4; ++tone) {
        bank.push_back(std::string(o) + f + std::to_string(tone));
      }
    }
  }
  std::shuffle(bank.begin(), bank.end(), rng);
  std::size_t next_pron = 0;

  // Which symbols are polyphones: shuffle indices, take the first M.
  std::vector<std::size_t> order(spec.n_symbols);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> poly(spec.n_symbols, false);
  for (std::size_t i = 0; i < spec.n_polyphones; ++i) poly[order[i]] = true;

  // Structural roles: about half the inventory spells word interiors, a
  // third closes words, the rest closes phrases. A second shuffle keeps the
  // role assignment independent of which symbols are polyphonic.
  std::vector<std::size_t> role_order(spec.n_symbols);
  for (std::size_t i = 0; i < role_order.size(); ++i) role_order[i] = i;
  std::shuffle(role_order.begin(), role_order.end(), rng);
  std::size_t n_medial = spec.n_symbols / 2;
  std::size_t n_word_final = spec.n_symbols / 3;
  std::vector<SymbolRole> roles(spec.n_symbols, SymbolRole::kPhraseFinal);
  for (std::size_t i = 0; i < n_medial; ++i) {
    roles[role_order[i]] = SymbolRole::kMedial;
  }
  for (std::size_t i = n_medial; i < n_medial + n_word_final; ++i) {
    roles[role_order[i]] = SymbolRole::kWordFinal;
  }

  for (std::size_t i = 0; i < spec.n_symbols; ++i) {
    const std::string& ch = lang.symbols_[i];
    lang.class_of_[ch] = rand_range(rng, 0, spec.n_context_classes - 1);
    lang.polyphone_[ch] = poly[i];
    lang.role_[ch] = roles[i];
    switch (roles[i]) {
      case SymbolRole::kMedial:
        lang.medial_.push_back(ch);
        break;
      case SymbolRole::kWordFinal:
        lang.word_final_.push_back(ch);
        break;
      case SymbolRole::kPhraseFinal:
        lang.phrase_final_.push_back(ch);
        break;
    }
    std::size_t k = poly[i] ? rand_range(rng, 2, 3) : 1;
    for (std::size_t p = 0; p < k; ++p) lang.prons_[ch].push_back(bank.at(next_pron++));
  }
  lang.class_of_[lang.punct_] = 0;
  lang.polyphone_[lang.punct_] = false;
  lang.prons_[lang.punct_] = {"sp0"};
  return lang;
}

bool SyntheticLanguage::is_polyphone(const std::string& ch) const {
  auto it = polyphone_.find(ch);
  if (it == polyphone_.end()) throw DataError("unknown symbol '" + ch + "'");
  return it->second;
}

std::size_t SyntheticLanguage::context_class(const std::string& ch) const {
  auto it = class_of_.find(ch);
  if (it == class_of_.end()) throw DataError("unknown symbol '" + ch + "'");
  return it->second;
}

const std::vector<std::string>& SyntheticLanguage::pronunciations(
    const std::string& ch) const {
  auto it = prons_.find(ch);
  if (it == prons_.end()) throw DataError("unknown symbol '" + ch + "'");
  return it->second;
}

SymbolRole SyntheticLanguage::role(const std::string& ch) const {
  auto it = role_.find(ch);
  if (it == role_.end()) throw DataError("unknown symbol '" + ch + "'");
  return it->second;
}

const std::vector<std::string>& SyntheticLanguage::symbols_with_role(
    SymbolRole r) const {
  switch (r) {
    case SymbolRole::kMedial:
      return medial_;
    case SymbolRole::kWordFinal:
      return word_final_;
    default:
      return phrase_final_;
  }
}

ProsodyLabel SyntheticLanguage::rule_prosody_label(const std::vector<std::string>& chars,
                                                   std::size_t pos) const {
  const std::string& ch = chars.at(pos);
  if (ch == punct_) return ProsodyLabel::kB3;
  switch (role(ch)) {
    case SymbolRole::kMedial:
      return ProsodyLabel::kI;
    case SymbolRole::kWordFinal:
      return ProsodyLabel::kB1;
    case SymbolRole::kPhraseFinal:
      if (pos + 1 == chars.size()) return ProsodyLabel::kB3;  // sentence end
      if (chars[pos + 1] == punct_) return ProsodyLabel::kI;  // break follows the mark
      return ProsodyLabel::kB2;
  }
  return ProsodyLabel::kI;
}

std::string SyntheticLanguage::rule_pronunciation(const std::vector<std::string>& chars,
                                                  std::size_t pos) const {
  const auto& options = pronunciations(chars.at(pos));
  // Sentence-final position and punctuation neighbors count as class 0.
  std::size_t cls = 0;
  if (pos + 1 < chars.size() && chars[pos + 1] != punct_) {
    cls = context_class(chars[pos + 1]);
  }
  return options[cls % options.size()];
}

PronunciationLexicon SyntheticLanguage::lexicon() const {
  return PronunciationLexicon(prons_);
}

PronClassMap SyntheticLanguage::class_map() const {
  std::map<std::string, std::vector<std::string>> poly_entries;
  for (const auto& [ch, prons] : prons_) {
    if (prons.size() >= 2) poly_entries.emplace(ch, prons);
  }
  return PronClassMap::build(poly_entries);
}

CharVocab SyntheticLanguage::vocab() const {
  std::vector<std::string> chars = symbols_;
  chars.push_back(punct_);
  std::sort(chars.begin(), chars.end());
  return CharVocab(std::move(chars));
}

LabeledSentence sample_sentence(const SyntheticLanguage& lang, std::mt19937_64& rng,
                                bool require_polyphone) {
  const SyntheticLangSpec& spec = lang.spec();
  for (std::size_t attempt = 0;; ++attempt) {
    LabeledSentence s;
    std::size_t n_phrases = rand_range(rng, spec.phrases_min, spec.phrases_max);
    for (std::size_t ph = 0; ph < n_phrases; ++ph) {
      std::size_t n_words =
          rand_range(rng, spec.words_per_phrase_min, spec.words_per_phrase_max);
      for (std::size_t w = 0; w < n_words; ++w) {
        std::size_t len = rand_range(rng, spec.word_len_min, spec.word_len_max);
        for (std::size_t c = 0; c < len; ++c) {
          s.chars.push_back(lang.symbols()[rand_range(rng, 0, spec.n_symbols - 1)]);
          s.prosody.push_back(ProsodyLabel::kI);
        }
        s.prosody.back() = ProsodyLabel::kB1;
      }
      bool last_phrase = (ph + 1 == n_phrases);
      if (last_phrase) {
        s.prosody.back() = ProsodyLabel::kB3;  // sentence-final break
      } else if (rand_bernoulli(rng, spec.punct_prob)) {
        // The break moves behind the punctuation mark.
        s.prosody.back() = ProsodyLabel::kI;
        s.chars.push_back(lang.punct());
        s.prosody.push_back(ProsodyLabel::kB3);
      } else {
        s.prosody.back() = ProsodyLabel::kB2;
      }
    }

    bool has_poly = false;
    for (const auto& ch : s.chars) has_poly = has_poly || lang.is_polyphone(ch);
    if (require_polyphone && !has_poly) {
      if (attempt < 200) continue;
      // Practically unreachable; keeps the guarantee unconditional.
      std::size_t pos = rand_range(rng, 0, s.chars.size() - 1);
      while (s.chars[pos] == lang.punct()) pos = (pos + 1) % s.chars.size();
      std::size_t pick = rand_range(rng, 0, spec.n_symbols - 1);
      for (std::size_t i = 0; i < spec.n_symbols; ++i) {
        const auto& cand = lang.symbols()[(pick + i) % spec.n_symbols];
        if (lang.is_polyphone(cand)) {
          s.chars[pos] = cand;
          break;
        }
      }
    }

    for (std::size_t i = 0; i < s.chars.size(); ++i) {
      if (s.chars[i] != lang.punct() && lang.is_polyphone(s.chars[i])) {
        s.polyphones.emplace_back(i, lang.rule_pronunciation(s.chars, i));
      }
    }
    if (!require_polyphone || !s.polyphones.empty()) return s;
  }
}

CorpusSentence to_corpus_sentence(const LabeledSentence& s, TaskKind task) {
  CorpusSentence out;
  out.task = task;
  out.chars = s.chars;
  if (task == TaskKind::kPoly) out.polyphones = s.polyphones;
  if (task == TaskKind::kProsody) out.prosody = s.prosody;
  return out;
}

TrainingExample make_example(const CorpusSentence& sentence, const CharVocab& vocab,
                             const PronClassMap* classes) {
  TrainingExample ex;
  ex.task = sentence.task;
  ex.chars = sentence.chars;
  ex.tokens = tokenize_chars(sentence.chars, vocab);
  std::size_t t_len = sentence.chars.size();
  if (sentence.task == TaskKind::kPoly) {
    if (!classes) throw UsageError("make_example: POLY sentence needs a class map");
    ex.poly_targets.assign(t_len, -1);
    ex.poly_mask.assign(t_len, 0);
    for (const auto& [pos, pron] : sentence.polyphones) {
      if (pos >= t_len) {
        throw DataError("polyphone position " + std::to_string(pos) +
                        " outside sentence of length " + std::to_string(t_len));
      }
      ex.poly_targets[pos] = classes->class_of(sentence.chars[pos], pron);
      ex.poly_mask[pos] = 1;
    }
  } else if (sentence.task == TaskKind::kProsody) {
    if (sentence.prosody.size() != t_len) {
      throw DataError("prosody labels length " + std::to_string(sentence.prosody.size()) +
                      " does not match sentence length " + std::to_string(t_len));
    }
    for (ProsodyLabel l : sentence.prosody) {
      ex.prosody_labels.push_back(static_cast<int>(l));
    }
  }
  return ex;
}

void save_corpus(const std::filesystem::path& path,
                 const std::vector<CorpusSentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  for (const auto& s : sentences) {
    out << task_name(s.task) << '\t';
    for (const auto& ch : s.chars) out << ch;
    out << '\t';
    if (s.task == TaskKind::kPoly) {
      for (std::size_t i = 0; i < s.polyphones.size(); ++i) {
        if (i) out << ',';
        out << s.polyphones[i].first << ':' << s.polyphones[i].second;
      }
    } else if (s.task == TaskKind::kProsody) {
      out << format_prosody_labels(s.prosody);
    } else {
      out << '-';
    }
    out << '\n';
  }
}

std::vector<CorpusSentence> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::vector<CorpusSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto err = [&](const std::string& what) {
      return DataError(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw err("expected TASK<TAB>chars<TAB>labels");
    CorpusSentence s;
    s.task = task_from_name(line.substr(0, t1));
    s.chars = utf8_split(line.substr(t1 + 1, t2 - t1 - 1));
    if (s.chars.empty()) throw err("empty character sequence");
    std::string labels = line.substr(t2 + 1);
    if (s.task == TaskKind::kPoly) {
      if (labels.empty()) throw err("POLY line without labels");
      std::stringstream ls(labels);
      std::string item;
      while (std::getline(ls, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos) throw err("bad pos:pron item '" + item + "'");
        std::size_t pos = 0;
        try {
          pos = std::stoul(item.substr(0, colon));
        } catch (const std::exception&) {
          throw err("bad position in item '" + item + "'");
        }
        if (pos >= s.chars.size()) throw err("position out of range in '" + item + "'");
        s.polyphones.emplace_back(pos, item.substr(colon + 1));
      }
      if (s.polyphones.empty()) throw err("POLY line without polyphones");
    } else if (s.task == TaskKind::kProsody) {
      try {
        s.prosody = parse_prosody_labels(labels);
      } catch (const DataError& e) {
        throw err(e.what());
      }
      if (s.prosody.size() != s.chars.size()) {
        throw err("label count " + std::to_string(s.prosody.size()) +
                  " does not match character count " + std::to_string(s.chars.size()));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

GeneratedCorpus generate_corpus(const SyntheticLanguage& lang, std::size_t n_sentences,
                                TaskKind task, std::uint64_t seed,
                                const std::filesystem::path& out_prefix) {
  if (n_sentences == 0) throw ConfigError("generate_corpus: n_sentences must be > 0");
  if (task == TaskKind::kPoly && lang.spec().n_polyphones == 0) {
    throw ConfigError("generate_corpus: POLY task needs a language with polyphones");
  }
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 2);
  std::vector<CorpusSentence> sentences;
  sentences.reserve(n_sentences);
  for (std::size_t i = 0; i < n_sentences; ++i) {
    sentences.push_back(
        to_corpus_sentence(sample_sentence(lang, rng, task == TaskKind::kPoly), task));
  }
  GeneratedCorpus result;
  result.n_train = n_sentences * 9 / 10;
  result.n_test = n_sentences - result.n_train;
  result.train_path = out_prefix.string() + ".train.tsv";
  result.test_path = out_prefix.string() + ".test.tsv";
  save_corpus(result.train_path,
              {sentences.begin(), sentences.begin() + result.n_train});
  save_corpus(result.test_path, {sentences.begin() + result.n_train, sentences.end()});
  return result;
}

}  // namespace ttsfe
