#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttsfe/corpus.hpp"
#include "ttsfe/model.hpp"
#include "ttsfe/optim.hpp"

namespace ttsfe {

/// Thrown when a training run must abort (non-finite loss, bad batch).
class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double alpha1 = 1.0, alpha2 = 1.0;
  std::size_t batch_size = 8;
  std::size_t steps = 1000;
  AdamConfig adam;
  std::uint64_t seed = 42;
  /// Fraction of each batch drawn from the POLY corpus; <= 0 derives it
  /// from the corpus size ratio, clamped to [0.25, 0.75].
  double mix_ratio = 0.0;
  std::size_t eval_interval = 200;
  double clip_norm = 1.0;
};

/// Examples padded to a common length; both tasks present in every batch.
struct MixedBatch {
  std::vector<TrainingExample> examples;
  std::size_t padded_len = 0;
};

/// Deterministic blended batch source over two disjointly-labeled corpora.
/// Each corpus is shuffled from the seed and recycled (reshuffled) when
/// exhausted, so the smaller corpus cycles within an epoch of the larger.
class BatchStream {
 public:
  BatchStream(std::vector<TrainingExample> poly, std::vector<TrainingExample> prosody,
              const TrainConfig& config);

  MixedBatch next();
  std::size_t poly_per_batch() const { return n_poly_; }
  std::size_t prosody_per_batch() const { return n_prosody_; }

 private:
  std::vector<TrainingExample> poly_, prosody_;
  std::size_t n_poly_ = 0, n_prosody_ = 0;
  std::size_t poly_cursor_ = 0, prosody_cursor_ = 0;
  std::mt19937_64 poly_rng_, prosody_rng_;
};

struct StepReport {
  double l_poly = 0.0, l_prosody = 0.0, l_global = 0.0;
  double grad_norm = 0.0;
};

/// Forward/backward/update over one mixed batch: examples contribute only
/// their own task's loss, the other component is zero for them, and the two
/// per-task means combine as alpha1 * L_poly + alpha2 * L_prosody.
StepReport train_step(FrontendModel& model, const MixedBatch& batch,
                      const TrainConfig& config, AdamState& adam_state,
                      std::size_t step_index);

struct TrainResult {
  FrontendModel best_model;
  double best_score = 0.0;  // mean of poly ACC and PPH F1 on validation
  std::string metrics_log;  // step<TAB>l_poly<TAB>l_prosody<TAB>val metrics
  EvalReport final_report;
};

/// Runs the blended-batch loop with periodic validation; keeps the
/// checkpoint that maximizes mean(poly ACC, PPH F1).
TrainResult train(FrontendModel& model, const std::vector<CorpusSentence>& poly_train,
                  const std::vector<CorpusSentence>& prosody_train,
                  const std::vector<CorpusSentence>& poly_val,
                  const std::vector<CorpusSentence>& prosody_val,
                  const TrainConfig& config);

}  // namespace ttsfe
