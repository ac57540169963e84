#include "ttsfe/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace ttsfe {

std::vector<std::size_t> layer_mapping(std::size_t student_layers,
                                       std::size_t teacher_layers) {
  if (student_layers == 0 || teacher_layers == 0 || student_layers > teacher_layers) {
    throw ConfigError("layer_mapping: need 0 < student layers <= teacher layers, got " +
                      std::to_string(student_layers) + " and " +
                      std::to_string(teacher_layers));
  }
  if (teacher_layers % student_layers != 0) {
    throw ConfigError("layer_mapping: " + std::to_string(teacher_layers) +
                      " teacher layers not divisible by " +
                      std::to_string(student_layers) +
                      " student layers; configure an explicit map");
  }
  std::size_t stride = teacher_layers / student_layers;
  std::vector<std::size_t> map(student_layers);
  for (std::size_t m = 1; m <= student_layers; ++m) map[m - 1] = m * stride;
  return map;
}

namespace {

void validate_layer_map(const std::vector<std::size_t>& map, std::size_t student_layers,
                        std::size_t teacher_layers) {
  if (map.size() != student_layers) {
    throw ConfigError("layer map covers " + std::to_string(map.size()) +
                      " layers, student has " + std::to_string(student_layers));
  }
  std::size_t prev = 0;
  for (std::size_t g : map) {
    if (g <= prev || g > teacher_layers) {
      throw ConfigError("layer map must be strictly increasing into [1, " +
                        std::to_string(teacher_layers) + "]");
    }
    prev = g;
  }
}

}  // namespace

Tensor attention_distill_loss(const Tensor& attn_student, const Tensor& attn_teacher,
                              std::size_t valid) {
  if (attn_student.rank() != 3 || attn_teacher.rank() != 3) {
    throw ShapeError("attention_distill_loss: expected [h x T x T] tensors");
  }
  if (attn_student.shape()[0] != attn_teacher.shape()[0]) {
    throw ConfigError("attention distillation needs equal head counts, got " +
                      std::to_string(attn_student.shape()[0]) + " and " +
                      std::to_string(attn_teacher.shape()[0]));
  }
  if (attn_student.shape() != attn_teacher.shape()) {
    throw ShapeError("attention_distill_loss: shape mismatch " +
                     shape_str(attn_student.shape()) + " vs " +
                     shape_str(attn_teacher.shape()));
  }
  // Mean over the h valid x valid blocks == (1/h) sum of per-head MSEs.
  return mse(crop3(attn_student, valid, valid), crop3(attn_teacher, valid, valid));
}

Tensor hidden_distill_loss(const Tensor& hidden_student, const Tensor& hidden_teacher,
                           const Tensor& projection, std::size_t valid) {
  if (hidden_student.rank() != 2 || hidden_teacher.rank() != 2) {
    throw ShapeError("hidden_distill_loss: expected [T x d] tensors");
  }
  if (projection.shape() !=
      std::vector<std::size_t>{hidden_student.shape()[1], hidden_teacher.shape()[1]}) {
    throw ShapeError("hidden_distill_loss: projection shape " +
                     shape_str(projection.shape()) + " does not map " +
                     shape_str(hidden_student.shape()) + " onto " +
                     shape_str(hidden_teacher.shape()));
  }
  Tensor hs = slice_rows(hidden_student, 0, valid);
  Tensor ht = slice_rows(hidden_teacher, 0, valid);
  return mse(matmul(hs, projection), ht);
}

DistillProjections init_projections(std::size_t d_student, std::size_t d_teacher,
                                    std::size_t student_layers, bool identity_init,
                                    std::uint64_t seed) {
  if (identity_init && d_student != d_teacher) {
    throw ConfigError("identity projection init needs equal hidden sizes");
  }
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 5);
  std::normal_distribution<double> dist(0.0, 1.0);
  DistillProjections proj;
  for (std::size_t i = 0; i < student_layers + 1; ++i) {
    Tensor w = Tensor::zeros({d_student, d_teacher});
    auto data = w.mutable_data();
    if (identity_init) {
      for (std::size_t r = 0; r < d_student; ++r) data[r * d_teacher + r] = 1.0;
    } else {
      // Gram-Schmidt on random rows (d_student <= d_teacher in practice):
      // near-orthonormal rows keep the projected scale close to the input.
      std::vector<std::vector<double>> rows(d_student, std::vector<double>(d_teacher));
      for (auto& row : rows) {
        for (auto& v : row) v = dist(rng);
      }
      for (std::size_t r = 0; r < d_student; ++r) {
        for (std::size_t p = 0; p < r; ++p) {
          double dot = 0.0;
          for (std::size_t k = 0; k < d_teacher; ++k) dot += rows[r][k] * rows[p][k];
          for (std::size_t k = 0; k < d_teacher; ++k) rows[r][k] -= dot * rows[p][k];
        }
        double norm = 0.0;
        for (double v : rows[r]) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) norm = 1.0;
        for (auto& v : rows[r]) v /= norm;
      }
      for (std::size_t r = 0; r < d_student; ++r) {
        for (std::size_t k = 0; k < d_teacher; ++k) data[r * d_teacher + k] = rows[r][k];
      }
    }
    w.set_requires_grad(true);
    proj.w.push_back(std::move(w));
  }
  return proj;
}

Tensor distill_total_loss(const EncoderTrace& trace_student,
                          const EncoderTrace& trace_teacher,
                          DistillProjections& projections,
                          const std::vector<std::size_t>& layer_map,
                          const DistillConfig& config, std::size_t valid) {
  std::size_t student_layers = trace_student.attentions.size();
  std::size_t teacher_layers = trace_teacher.attentions.size();
  validate_layer_map(layer_map, student_layers, teacher_layers);
  if (projections.w.size() != student_layers + 1) {
    throw ConfigError("expected " + std::to_string(student_layers + 1) +
                      " projections, got " + std::to_string(projections.w.size()));
  }

  const auto& attn_s = config.pre_softmax ? trace_student.attention_scores
                                          : trace_student.attentions;
  const auto& attn_t = config.pre_softmax ? trace_teacher.attention_scores
                                          : trace_teacher.attentions;

  Tensor total = Tensor::scalar(0.0);
  if (config.include_embedding) {
    total = add(total, scale(hidden_distill_loss(trace_student.hidden_states[0],
                                                 trace_teacher.hidden_states[0],
                                                 projections.w[0], valid),
                             config.w_hidden));
  }
  for (std::size_t m = 1; m <= student_layers; ++m) {
    std::size_t g = layer_map[m - 1];
    total = add(total, scale(attention_distill_loss(attn_s[m - 1], attn_t[g - 1], valid),
                             config.w_attn));
    total = add(total, scale(hidden_distill_loss(trace_student.hidden_states[m],
                                                 trace_teacher.hidden_states[g],
                                                 projections.w[m], valid),
                             config.w_hidden));
  }
  return total;
}

DistillStageResult distill_encoder(const EncoderParams& teacher, EncoderParams& student,
                                   const std::vector<TokenSeq>& corpus,
                                   const DistillConfig& config) {
  if (corpus.empty()) throw ConfigError("distill_encoder: empty corpus");
  if (config.steps == 0) throw ConfigError("distill_encoder: steps must be > 0");

  // Frozen copy: forward passes build no graph and the caller's teacher is
  // untouched by construction.
  EncoderParams frozen = teacher.clone();
  frozen.set_trainable(false);

  std::vector<std::size_t> layer_map =
      config.layer_map.empty()
          ? layer_mapping(student.config.num_layers, frozen.config.num_layers)
          : config.layer_map;
  validate_layer_map(layer_map, student.config.num_layers, frozen.config.num_layers);
  if (student.config.num_heads != frozen.config.num_heads) {
    throw ConfigError("attention distillation needs equal head counts, got " +
                      std::to_string(student.config.num_heads) + " and " +
                      std::to_string(frozen.config.num_heads));
  }

  DistillProjections proj =
      init_projections(student.config.hidden_size, frozen.config.hidden_size,
                       student.config.num_layers, config.identity_init, config.seed);

  std::vector<Tensor> params = student.parameters();
  for (auto& w : proj.w) params.push_back(w);
  AdamState adam_state;
  adam_state.init(params);

  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL + 11);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  DistillStageResult result;
  result.steps = config.steps;
  double tail_sum = 0.0;
  std::size_t tail_n = 0;
  std::size_t tail_window = std::min<std::size_t>(20, config.steps);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    zero_grads(params);
    Tensor batch_loss = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const TokenSeq& tokens = corpus[order[cursor++]];
      EncoderTrace trace_t = encode(frozen, tokens);
      EncoderTrace trace_s = encode(student, tokens);
      batch_loss = add(batch_loss, distill_total_loss(trace_s, trace_t, proj, layer_map,
                                                      config, tokens.length));
    }
    batch_loss = scale(batch_loss, 1.0 / static_cast<double>(config.batch_size));
    backward(batch_loss);
    clip_grad_norm(params, config.clip_norm);
    adam_step(params, adam_state, config.adam);

    if (step + tail_window > config.steps) {
      tail_sum += batch_loss.item();
      ++tail_n;
    }
  }
  result.final_loss = tail_n ? tail_sum / static_cast<double>(tail_n) : 0.0;
  return result;
}

namespace {

std::vector<TokenSeq> raw_token_seqs(const std::vector<CorpusSentence>& sentences,
                                     const CharVocab& vocab) {
  std::vector<TokenSeq> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(tokenize_chars(s.chars, vocab));
  return out;
}

}  // namespace

PipelineResult run_pipeline(const PipelineCorpora& corpora, const CharVocab& vocab,
                            const PronClassMap& classes, const PipelineConfig& config,
                            std::optional<EncoderParams> initial_teacher) {
  using clock = std::chrono::steady_clock;
  auto elapsed_s = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  std::ostringstream report;
  report << std::fixed << std::setprecision(4);
  PipelineResult result;

  std::size_t teacher_count = count_params(config.teacher_encoder);
  std::size_t student_count = count_params(config.student_encoder);
  result.size_ratio =
      static_cast<double>(student_count) / static_cast<double>(teacher_count);

  // Step 1: general distillation on broad unlabeled text.
  auto t0 = clock::now();
  EncoderParams teacher_enc = initial_teacher
                                  ? std::move(*initial_teacher)
                                  : init_params(config.teacher_encoder, config.seed);
  if (teacher_enc.config != config.teacher_encoder) {
    throw ConfigError("initial teacher encoder does not match the configured teacher");
  }
  EncoderParams student_enc = init_params(config.student_encoder, config.seed + 1);
  result.general_stage =
      distill_encoder(teacher_enc, student_enc,
                      raw_token_seqs(corpora.unlabeled, vocab), config.general_distill);
  report << "step1 general_distill steps=" << result.general_stage.steps
         << " final_loss=" << result.general_stage.final_loss
         << " wall_s=" << elapsed_s(t0) << '\n';

  // Step 2: finetune the whole teacher front-end on the task corpora.
  t0 = clock::now();
  FrontendModel teacher_model =
      attach_heads(std::move(teacher_enc), config.heads, vocab, classes, config.seed + 2);
  TrainResult teacher_train =
      train(teacher_model, corpora.poly_train, corpora.prosody_train, corpora.poly_val,
            corpora.prosody_val, config.teacher_train);
  result.teacher = std::move(teacher_train.best_model);
  std::vector<CorpusSentence> val = corpora.poly_val;
  val.insert(val.end(), corpora.prosody_val.begin(), corpora.prosody_val.end());
  result.teacher_eval = evaluate_model(result.teacher, val);
  report << "step2 finetune_teacher steps=" << config.teacher_train.steps
         << " best_score=" << teacher_train.best_score
         << " val_acc=" << result.teacher_eval.poly_acc
         << " val_pph_f1=" << result.teacher_eval.prosody.pph.f1
         << " wall_s=" << elapsed_s(t0) << '\n';

  // Step 3: task distillation from the finetuned teacher on task-domain text.
  t0 = clock::now();
  std::vector<CorpusSentence> task_text = corpora.poly_train;
  task_text.insert(task_text.end(), corpora.prosody_train.begin(),
                   corpora.prosody_train.end());
  result.task_stage = distill_encoder(result.teacher.encoder, student_enc,
                                      raw_token_seqs(task_text, vocab),
                                      config.task_distill);
  report << "step3 task_distill steps=" << result.task_stage.steps
         << " final_loss=" << result.task_stage.final_loss << " wall_s=" << elapsed_s(t0)
         << '\n';

  // Step 4: finetune the distilled student with fresh heads.
  t0 = clock::now();
  FrontendModel student_model =
      attach_heads(std::move(student_enc), config.heads, vocab, classes, config.seed + 3);
  TrainResult student_train =
      train(student_model, corpora.poly_train, corpora.prosody_train, corpora.poly_val,
            corpora.prosody_val, config.student_train);
  result.student = std::move(student_train.best_model);
  result.student_eval = evaluate_model(result.student, val);
  report << "step4 finetune_student steps=" << config.student_train.steps
         << " best_score=" << student_train.best_score
         << " val_acc=" << result.student_eval.poly_acc
         << " val_pph_f1=" << result.student_eval.prosody.pph.f1
         << " wall_s=" << elapsed_s(t0) << '\n';

  report << "params teacher=" << teacher_count << " student=" << student_count
         << " size_ratio=" << result.size_ratio << '\n';
  result.report = report.str();
  return result;
}

}  // namespace ttsfe
