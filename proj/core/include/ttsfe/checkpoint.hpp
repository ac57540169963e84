#pragma once

#include <filesystem>
#include <optional>

#include "ttsfe/model.hpp"
#include "ttsfe/serial.hpp"

namespace ttsfe {

/// Checkpoint container: a text header (format tag, config key=value lines,
/// vocabulary, pronunciation classes) followed by named tensors in the flat
/// binary tensor format. One file carries everything inference needs.
///
/// Encoder-only checkpoints (has_heads=0) are emitted by the distillation
/// stages; full checkpoints by finetuning.
struct CheckpointData {
  EncoderParams encoder;
  CharVocab vocab;
  PronClassMap classes;
  bool has_heads = false;
  HeadSettings head_settings;
  std::optional<HeadParams> poly_head;
  std::optional<HeadParams> prosody_head;
};

void save_checkpoint(const std::filesystem::path& path, FrontendModel& model,
                     const HeadSettings& head_settings);
void save_encoder_checkpoint(const std::filesystem::path& path, EncoderParams& encoder,
                             const CharVocab& vocab, const PronClassMap& classes);

CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a full model from a checkpoint that carries heads.
FrontendModel model_from_checkpoint(CheckpointData&& data);

}  // namespace ttsfe
