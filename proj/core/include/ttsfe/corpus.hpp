#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ttsfe/heads.hpp"
#include "ttsfe/lexicon.hpp"
#include "ttsfe/prosody.hpp"
#include "ttsfe/text.hpp"

namespace ttsfe {

enum class TaskKind { kPoly, kProsody, kRaw };

const std::string& task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);

/// Parameters of the synthetic character language. `seed` fixes the language
/// structure itself (symbol inventory, pronunciations, context classes);
/// sentence sampling takes its own seed.
struct SyntheticLangSpec {
  std::size_t n_symbols = 60;
  std::size_t n_polyphones = 8;
  std::size_t n_context_classes = 3;
  std::size_t word_len_min = 1, word_len_max = 3;
  std::size_t words_per_phrase_min = 2, words_per_phrase_max = 3;
  std::size_t phrases_min = 2, phrases_max = 4;
  double punct_prob = 0.3;
  std::uint64_t seed = 7;

  void validate() const;
};

/// Structural slot a symbol may occupy. Words are spelled as medial symbols
/// closed by a final symbol, so the break structure is recoverable from the
/// characters alone.
enum class SymbolRole { kMedial, kWordFinal, kPhraseFinal };

/// A deterministic language. Two rule families make every label a function
/// of the visible text:
///  - pronunciation: a polyphone's reading is fixed by its right neighbor's
///    context class (window 1);
///  - prosody: symbols carry a structural role; word-final symbols take B1,
///    phrase-final symbols take B2 (or I right before punctuation, or B3 at
///    the sentence end), the punctuation mark takes B3, medial symbols I.
class SyntheticLanguage {
 public:
  static SyntheticLanguage build(const SyntheticLangSpec& spec);

  const SyntheticLangSpec& spec() const { return spec_; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& punct() const { return punct_; }
  bool is_polyphone(const std::string& ch) const;
  std::size_t context_class(const std::string& ch) const;
  SymbolRole role(const std::string& ch) const;
  const std::vector<std::string>& symbols_with_role(SymbolRole role) const;
  const std::vector<std::string>& pronunciations(const std::string& ch) const;

  /// Pronunciation-rule oracle: the reading of the polyphone at `pos` given
  /// its right neighbor.
  std::string rule_pronunciation(const std::vector<std::string>& chars,
                                 std::size_t pos) const;
  /// Prosody-rule oracle: the break label of position `pos`, rederived from
  /// the characters alone.
  ProsodyLabel rule_prosody_label(const std::vector<std::string>& chars,
                                  std::size_t pos) const;

  PronunciationLexicon lexicon() const;
  PronClassMap class_map() const;
  CharVocab vocab() const;

 private:
  SyntheticLangSpec spec_;
  std::vector<std::string> symbols_;
  std::string punct_;
  std::map<std::string, std::size_t> class_of_;
  std::map<std::string, std::vector<std::string>> prons_;
  std::map<std::string, bool> polyphone_;
  std::map<std::string, SymbolRole> role_;
  std::vector<std::string> medial_, word_final_, phrase_final_;
};

/// One generated sentence with its ground-truth annotations.
struct LabeledSentence {
  std::vector<std::string> chars;
  std::vector<ProsodyLabel> prosody;
  std::vector<std::pair<std::size_t, std::string>> polyphones;  // (pos, pron)
};

LabeledSentence sample_sentence(const SyntheticLanguage& lang, std::mt19937_64& rng,
                                bool require_polyphone);

/// A corpus line as stored on disk (labels for exactly one task).
struct CorpusSentence {
  TaskKind task = TaskKind::kRaw;
  std::vector<std::string> chars;
  std::vector<std::pair<std::size_t, std::string>> polyphones;  // task == kPoly
  std::vector<ProsodyLabel> prosody;                            // task == kProsody
};

/// The mixed-batch training unit: a token sequence plus exactly one task's
/// labels.
struct TrainingExample {
  TaskKind task = TaskKind::kRaw;
  std::vector<std::string> chars;
  TokenSeq tokens;
  std::vector<int> poly_targets;        // class ids at masked-in positions
  std::vector<std::uint8_t> poly_mask;  // marks polyphone positions
  std::vector<int> prosody_labels;
};

TrainingExample make_example(const CorpusSentence& sentence, const CharVocab& vocab,
                             const PronClassMap* classes);

// ---- corpus files -------------------------------------------------------------
// One sentence per line: "TASK<TAB>chars<TAB>labels". POLY labels are
// comma-separated "pos:pron" pairs, PROSODY labels a concatenated label
// string, RAW lines use "-". Blank lines are ignored.

void save_corpus(const std::filesystem::path& path,
                 const std::vector<CorpusSentence>& sentences);
std::vector<CorpusSentence> load_corpus(const std::filesystem::path& path);

struct GeneratedCorpus {
  std::filesystem::path train_path, test_path;
  std::size_t n_train = 0, n_test = 0;
};

/// Samples n sentences and writes <prefix>.train.tsv / <prefix>.test.tsv
/// split 9:1 by sentence count. Deterministic in (lang, task, seed, n).
GeneratedCorpus generate_corpus(const SyntheticLanguage& lang, std::size_t n_sentences,
                                TaskKind task, std::uint64_t seed,
                                const std::filesystem::path& out_prefix);

CorpusSentence to_corpus_sentence(const LabeledSentence& s, TaskKind task);

}  // namespace ttsfe
