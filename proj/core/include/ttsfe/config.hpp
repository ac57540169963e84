#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "ttsfe/corpus.hpp"
#include "ttsfe/distill.hpp"
#include "ttsfe/model.hpp"
#include "ttsfe/train.hpp"

namespace ttsfe {

/// All run settings as a flat key=value file. Unknown keys are rejected; the
/// fully-resolved value set (defaults filled in) is available for logging.
struct RunConfig {
  std::uint64_t seed = 42;
  EncoderConfig teacher;  // vocab_size is derived from the language, not a key
  EncoderConfig student;
  HeadSettings heads;
  TrainConfig train;
  DistillConfig general_distill;
  DistillConfig task_distill;
  SyntheticLangSpec synth;
  std::size_t max_seq_len = 64;

  std::filesystem::path poly_train, poly_test;
  std::filesystem::path prosody_train, prosody_test;
  std::filesystem::path unlabeled, lexicon;

  static RunConfig defaults();
  /// Lines "key = value"; '#' comments and blank lines ignored.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");

  /// Every key with its resolved value, sorted, one per line.
  std::string resolved_text() const;

  PipelineConfig pipeline_config(std::size_t vocab_size) const;
};

}  // namespace ttsfe
