#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sentspan/model.hpp"
#include "sentspan/tokenizer.hpp"

namespace sentspan {

enum class LossCombination { mean, sum };
enum class StepMode { train, eval };

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 16;
  int max_epochs = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::optional<double> grad_clip_norm = 1.0;
  uint64_t seed = 7;
  LossCombination loss_combination = LossCombination::mean;

  void validate() const;  // throws BadConfig
};

struct LossResult {
  double loss_start = 0.0;
  double loss_end = 0.0;
  double total_loss = 0.0;
};

struct StepResult {
  double loss_start = 0.0;
  double loss_end = 0.0;
  double total_loss = 0.0;
  double mean_jaccard = 0.0;
};

/// Mean negative log-likelihood of the true start/end positions under the
/// per-position softmax of each side's logits, combined per `combination`.
/// Softmax runs over every position; masked positions contribute no mass
/// through the kMaskedLogit sentinel.
/// Throws PositionOutOfRange / PositionMasked.
LossResult span_cross_entropy(const std::vector<SpanLogits>& logits,
                              const std::vector<int>& starts,
                              const std::vector<int>& ends,
                              LossCombination combination);

struct TrainLogEvent {
  int epoch = 0;
  int batch = -1;  // -1 for per-epoch validation events
  double loss_start = 0.0;
  double loss_end = 0.0;
  double total_loss = 0.0;
  double mean_jaccard = 0.0;
  std::string split;  // "train" or "validation"
};

using TrainLog = std::vector<TrainLogEvent>;

/// Line-delimited JSON, one event per line.
void save_train_log(const std::string& path, const TrainLog& log);

struct TrainResult {
  TrainLog log;
  int best_epoch = -1;
};

/// Owns the parameters being trained plus the optimizer state (Adam moments,
/// step counter, dropout RNG). Eval-mode steps never mutate anything.
class Trainer {
 public:
  Trainer(Params params, TrainConfig config, const Vocab& vocab);

  /// One batch: forward, span loss, batch-mean Jaccard of decoded predicted
  /// spans against decoded targets; in train mode also backprop, gradient
  /// clip, and one Adam update.
  StepResult step(const std::vector<TokenizedExample>& batch, StepMode mode);

  /// Deterministic epoch loop: seeded shuffle, batches (last partial batch
  /// kept), train steps, then an eval pass over val_set. Keeps the
  /// parameters from the epoch with the best validation mean Jaccard (the
  /// final epoch when val_set is empty); params() holds them afterwards.
  /// `on_epoch(epoch, params, val_report_or_null)` runs after each epoch.
  using EpochCallback =
      std::function<void(int epoch, const Params& params, const StepResult* val)>;
  TrainResult train(const std::vector<TokenizedExample>& train_set,
                    const std::vector<TokenizedExample>& val_set,
                    const EpochCallback& on_epoch = nullptr);

  const Params& params() const { return params_; }
  const TrainConfig& config() const { return config_; }

 private:
  StepResult eval_pass(const std::vector<TokenizedExample>& dataset);
  void apply_gradients();

  Params params_;
  TrainConfig config_;
  const Vocab& vocab_;
  std::vector<double> grad_;
  std::vector<double> adam_m_, adam_v_;
  int64_t adam_step_ = 0;
  Rng dropout_rng_;
};

/// Compare the analytic gradient of the span loss against central finite
/// differences on a freshly initialized model. Checks every parameter when
/// the model has at most `exhaustive_limit` of them, otherwise a seeded
/// subsample of at least 200 spread over every segment. Returns the max of
/// |ga - gn| / max(1e-8, |ga| + |gn|).
double gradient_check(const ModelConfig& config,
                      const std::vector<TokenizedExample>& batch, double epsilon,
                      LossCombination combination = LossCombination::mean,
                      size_t exhaustive_limit = 4096);

}  // namespace sentspan
