#include "ttsfe/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace ttsfe {

namespace {

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  return x;
}

TrainingExample pad_example(const TrainingExample& ex, std::size_t padded_len) {
  TrainingExample out = ex;
  out.tokens.ids.resize(padded_len, TokenSeq::kPad);
  if (out.task == TaskKind::kPoly) {
    out.poly_targets.resize(padded_len, -1);
    out.poly_mask.resize(padded_len, 0);
  }
  return out;
}

}  // namespace

BatchStream::BatchStream(std::vector<TrainingExample> poly,
                         std::vector<TrainingExample> prosody,
                         const TrainConfig& config)
    : poly_(std::move(poly)),
      prosody_(std::move(prosody)),
      poly_rng_(mix64(config.seed, 0xa11ce5ULL)),
      prosody_rng_(mix64(config.seed, 0xb0b5ULL)) {
  if (poly_.empty() || prosody_.empty()) {
    throw ConfigError("mixed batches need both corpora nonempty (got " +
                      std::to_string(poly_.size()) + " POLY, " +
                      std::to_string(prosody_.size()) + " PROSODY)");
  }
  if (config.batch_size < 2) {
    throw ConfigError("mixed batches need batch_size >= 2");
  }
  double ratio = config.mix_ratio;
  if (ratio <= 0.0) {
    ratio = static_cast<double>(poly_.size()) /
            static_cast<double>(poly_.size() + prosody_.size());
    ratio = std::clamp(ratio, 0.25, 0.75);
  }
  if (ratio >= 1.0) {
    throw ConfigError("mix_ratio must be in (0, 1)");
  }
  auto b = static_cast<double>(config.batch_size);
  n_poly_ = static_cast<std::size_t>(std::llround(b * ratio));
  n_poly_ = std::clamp<std::size_t>(n_poly_, 1, config.batch_size - 1);
  n_prosody_ = config.batch_size - n_poly_;
  std::shuffle(poly_.begin(), poly_.end(), poly_rng_);
  std::shuffle(prosody_.begin(), prosody_.end(), prosody_rng_);
}

MixedBatch BatchStream::next() {
  MixedBatch batch;
  auto draw = [](std::vector<TrainingExample>& pool, std::size_t& cursor,
                 std::mt19937_64& rng) -> const TrainingExample& {
    if (cursor == pool.size()) {
      std::shuffle(pool.begin(), pool.end(), rng);
      cursor = 0;
    }
    return pool[cursor++];
  };
  for (std::size_t i = 0; i < n_poly_; ++i) {
    batch.examples.push_back(draw(poly_, poly_cursor_, poly_rng_));
  }
  for (std::size_t i = 0; i < n_prosody_; ++i) {
    batch.examples.push_back(draw(prosody_, prosody_cursor_, prosody_rng_));
  }
  for (const auto& ex : batch.examples) {
    batch.padded_len = std::max(batch.padded_len, ex.tokens.ids.size());
  }
  for (auto& ex : batch.examples) ex = pad_example(ex, batch.padded_len);
  return batch;
}

namespace {

// Loss of one example on its own task; the other task contributes nothing.
Tensor example_loss(FrontendModel& model, const TrainingExample& ex,
                    const DropoutCtx& ctx) {
  EncoderTrace trace = encode(model.encoder, ex.tokens, ctx);
  const Tensor& features = trace.hidden_states.back();
  std::size_t valid = ex.tokens.length;

  if (ex.task == TaskKind::kPoly) {
    Tensor logits = head_forward(model.poly_head, features, valid);
    return polyphone_loss(logits, ex.poly_targets, ex.poly_mask);
  }
  if (ex.task != TaskKind::kProsody) {
    throw TrainError("unlabeled example in a training batch");
  }
  Tensor logits = head_forward(model.prosody_head, features, valid);
  if (model.prosody_head.config.crf) {
    Tensor emissions = slice_rows(logits, 0, valid);
    std::vector<int> labels(ex.prosody_labels.begin(),
                            ex.prosody_labels.begin() + static_cast<long>(valid));
    Tensor ll = crf_log_likelihood(emissions, model.prosody_head.crf_transitions,
                                   model.prosody_head.crf_start,
                                   model.prosody_head.crf_end, labels);
    // negative log-likelihood, normalized per character like the softmax path
    return scale(ll, -1.0 / static_cast<double>(valid));
  }
  std::vector<int> labels = ex.prosody_labels;
  labels.resize(ex.tokens.ids.size(), 0);
  std::vector<std::uint8_t> valid_mask(ex.tokens.ids.size(), 0);
  for (std::size_t t = 0; t < valid; ++t) valid_mask[t] = 1;
  return prosody_loss(logits, labels, valid_mask);
}

}  // namespace

StepReport train_step(FrontendModel& model, const MixedBatch& batch,
                      const TrainConfig& config, AdamState& adam_state,
                      std::size_t step_index) {
  if (batch.examples.empty()) throw TrainError("empty batch");
  std::vector<Tensor> params = model.parameters();
  zero_grads(params);

  std::vector<Tensor> poly_losses, prosody_losses;
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    const TrainingExample& ex = batch.examples[i];
    DropoutCtx ctx{true, mix64(config.seed, 0xd0d0ULL + i), step_index};
    Tensor loss;
    try {
      loss = example_loss(model, ex, ctx);
    } catch (const NumericError& e) {
      throw TrainError("non-finite loss at step " + std::to_string(step_index) +
                       ", batch example " + std::to_string(i) + ": " + e.what());
    }
    if (!std::isfinite(loss.item())) {
      throw TrainError("non-finite loss at step " + std::to_string(step_index) +
                       ", batch example " + std::to_string(i));
    }
    (ex.task == TaskKind::kPoly ? poly_losses : prosody_losses).push_back(loss);
  }

  auto task_mean = [](const std::vector<Tensor>& losses) {
    if (losses.empty()) return Tensor::scalar(0.0);
    Tensor total = losses[0];
    for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
    return scale(total, 1.0 / static_cast<double>(losses.size()));
  };
  Tensor l_poly = task_mean(poly_losses);
  Tensor l_prosody = task_mean(prosody_losses);
  Tensor l_global = global_loss(l_poly, l_prosody, config.alpha1, config.alpha2);

  backward(l_global);

  StepReport report;
  report.l_poly = l_poly.item();
  report.l_prosody = l_prosody.item();
  report.l_global = l_global.item();
  report.grad_norm = clip_grad_norm(params, config.clip_norm);
  adam_step(params, adam_state, config.adam);
  return report;
}

namespace {

std::vector<TrainingExample> to_examples(const std::vector<CorpusSentence>& sentences,
                                         const CharVocab& vocab,
                                         const PronClassMap& classes) {
  std::vector<TrainingExample> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(make_example(s, vocab, &classes));
  return out;
}

std::string log_line(std::size_t step, double l_poly, double l_prosody,
                     const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  os << step << '\t' << l_poly << '\t' << l_prosody << '\t' << r.poly_acc << '\t'
     << r.prosody.pw.f1 << '\t' << r.prosody.pph.f1 << '\t' << r.prosody.iph.f1 << '\n';
  return os.str();
}

}  // namespace

TrainResult train(FrontendModel& model, const std::vector<CorpusSentence>& poly_train,
                  const std::vector<CorpusSentence>& prosody_train,
                  const std::vector<CorpusSentence>& poly_val,
                  const std::vector<CorpusSentence>& prosody_val,
                  const TrainConfig& config) {
  if (config.steps == 0) throw ConfigError("train: steps must be > 0");
  BatchStream stream(to_examples(poly_train, model.vocab, model.classes),
                     to_examples(prosody_train, model.vocab, model.classes), config);

  std::vector<CorpusSentence> val;
  val.insert(val.end(), poly_val.begin(), poly_val.end());
  val.insert(val.end(), prosody_val.begin(), prosody_val.end());

  std::vector<Tensor> params = model.parameters();
  AdamState adam_state;
  adam_state.init(params);

  TrainResult result;
  result.best_score = -1.0;
  std::ostringstream log;
  double win_poly = 0.0, win_prosody = 0.0;
  std::size_t win_n = 0;

  for (std::size_t step = 1; step <= config.steps; ++step) {
    MixedBatch batch = stream.next();
    StepReport rep = train_step(model, batch, config, adam_state, step);
    win_poly += rep.l_poly;
    win_prosody += rep.l_prosody;
    ++win_n;

    if (step % config.eval_interval == 0 || step == config.steps) {
      EvalReport eval = evaluate_model(model, val);
      double score = 0.0;
      int parts = 0;
      if (eval.has_poly) {
        score += eval.poly_acc;
        ++parts;
      }
      if (eval.has_prosody) {
        score += eval.prosody.pph.f1;
        ++parts;
      }
      if (parts) score /= parts;
      log << log_line(step, win_poly / static_cast<double>(win_n),
                      win_prosody / static_cast<double>(win_n), eval);
      win_poly = win_prosody = 0.0;
      win_n = 0;
      if (score > result.best_score) {
        result.best_score = score;
        result.best_model = model.clone();
      }
      result.final_report = eval;
    }
  }
  result.metrics_log = log.str();
  return result;
}

}  // namespace ttsfe
