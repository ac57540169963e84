#pragma once

#include <string>
#include <vector>

#include "ttsfe/lexicon.hpp"
#include "ttsfe/model.hpp"
#include "ttsfe/prosody.hpp"

namespace ttsfe {

/// Thrown when input characters are missing from the lexicon; the message
/// lists every offending character with its position.
class AnnotationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full front-end output for one sentence: per-character pronunciation and
/// break label, with the three boundary levels derived from the labels.
struct Annotation {
  std::vector<std::string> chars;
  std::vector<std::string> pronunciations;
  std::vector<ProsodyLabel> prosody;
  BoundarySets boundaries;

  /// One line per character: "char<TAB>pron<TAB>label".
  std::string machine_text() const;
  /// Inline rendering with #1/#2/#3 break markers after the characters.
  std::string human_text() const;
};

/// Monophonic characters resolve by lexicon lookup and never consult the
/// pronunciation head; polyphonic characters take the model's prediction
/// restricted to their admissible classes (or over all classes when
/// `restrict_to_admissible` is off, for fidelity experiments).
Annotation annotate(FrontendModel& model, const PronunciationLexicon& lexicon,
                    const std::string& text, bool restrict_to_admissible = true);

}  // namespace ttsfe
