#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttsfe/encoder.hpp"
#include "ttsfe/train.hpp"

namespace ttsfe {

struct DistillConfig {
  /// 1-based teacher layer for each student layer; empty selects the
  /// uniform map m -> m * (L_T / L_S).
  std::vector<std::size_t> layer_map;
  bool include_embedding = true;  // also match the embedding-layer outputs
  bool pre_softmax = false;       // match raw attention scores instead
  double w_attn = 1.0, w_hidden = 1.0;
  std::size_t steps = 400;
  std::size_t batch_size = 4;
  AdamConfig adam;
  std::uint64_t seed = 42;
  double clip_norm = 1.0;
  /// Start the hidden-state projections at identity (square only).
  bool identity_init = false;
};

/// Uniform student->teacher layer assignment; requires divisibility unless
/// an explicit map is configured.
std::vector<std::size_t> layer_mapping(std::size_t student_layers,
                                       std::size_t teacher_layers);

/// (1/h) * sum over heads of MSE between [h x T x T] attention tensors,
/// restricted to the valid x valid block. Head counts must match.
Tensor attention_distill_loss(const Tensor& attn_student, const Tensor& attn_teacher,
                              std::size_t valid);

/// MSE(H_S . W_h, H_T) over the valid rows; W_h is [d_S x d_T], learnable.
Tensor hidden_distill_loss(const Tensor& hidden_student, const Tensor& hidden_teacher,
                           const Tensor& projection, std::size_t valid);

/// One projection per matched pair: index 0 serves the embedding-layer pair,
/// index m the m-th student layer. Projections are training scaffolding and
/// are not part of the student checkpoint.
struct DistillProjections {
  std::vector<Tensor> w;
  std::vector<Tensor> parameters() { return w; }
};

DistillProjections init_projections(std::size_t d_student, std::size_t d_teacher,
                                    std::size_t student_layers, bool identity_init,
                                    std::uint64_t seed);

/// Sum over student layers of the attention and projected-hidden losses
/// against the mapped teacher layers, plus the embedding pair when enabled.
Tensor distill_total_loss(const EncoderTrace& trace_student,
                          const EncoderTrace& trace_teacher,
                          DistillProjections& projections,
                          const std::vector<std::size_t>& layer_map,
                          const DistillConfig& config, std::size_t valid);

struct DistillStageResult {
  std::size_t steps = 0;
  double final_loss = 0.0;  // window-averaged over the last evaluations
};

/// Minimizes the total distillation loss over raw token sequences. The
/// teacher is used read-only (a frozen copy drives the forward passes).
DistillStageResult distill_encoder(const EncoderParams& teacher, EncoderParams& student,
                                   const std::vector<TokenSeq>& corpus,
                                   const DistillConfig& config);

// ---- four-step workflow ---------------------------------------------------------

struct PipelineConfig {
  EncoderConfig teacher_encoder;
  EncoderConfig student_encoder;
  HeadSettings heads;
  DistillConfig general_distill;   // step 1
  TrainConfig teacher_train;       // step 2
  DistillConfig task_distill;      // step 3
  TrainConfig student_train;       // step 4
  std::uint64_t seed = 42;
};

struct PipelineCorpora {
  std::vector<CorpusSentence> poly_train, poly_val;
  std::vector<CorpusSentence> prosody_train, prosody_val;
  std::vector<CorpusSentence> unlabeled;  // raw text for step 1
};

struct PipelineResult {
  FrontendModel teacher;  // finetuned, step 2
  FrontendModel student;  // distilled + finetuned, step 4
  EvalReport teacher_eval, student_eval;
  DistillStageResult general_stage, task_stage;
  double size_ratio = 0.0;  // count_params(student) / count_params(teacher)
  std::string report;
};

/// Step 1 general distillation -> step 2 teacher finetune -> step 3 task
/// distillation from the finetuned teacher -> step 4 student finetune.
/// `initial_teacher`, when given, seeds step 1 in place of a fresh init.
PipelineResult run_pipeline(const PipelineCorpora& corpora, const CharVocab& vocab,
                            const PronClassMap& classes, const PipelineConfig& config,
                            std::optional<EncoderParams> initial_teacher = {});

}  // namespace ttsfe
