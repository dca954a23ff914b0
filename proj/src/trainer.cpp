#include "sentspan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sentspan/errors.hpp"
#include "sentspan/evaluator.hpp"

namespace sentspan {

namespace {

constexpr uint64_t kEpochStride = 0x9E3779B97F4A7C15ULL;

double logsumexp(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - m);
  return m + std::log(acc);
}

double side_loss(const std::vector<double>& logits, int pos) {
  if (pos < 0 || pos >= static_cast<int>(logits.size())) {
    raise("PositionOutOfRange", "target position " + std::to_string(pos) +
                                    " outside sequence of length " +
                                    std::to_string(logits.size()));
  }
  if (logits[static_cast<size_t>(pos)] <= -5e8) {
    raise("PositionMasked",
          "target position " + std::to_string(pos) + " falls on a masked position");
  }
  return logsumexp(logits) - logits[static_cast<size_t>(pos)];
}

// d(side loss)/d(logits) scaled by w: w * (softmax(z) - onehot(pos)).
void side_loss_grad(const std::vector<double>& z, int pos, double w,
                    std::vector<double>& dz) {
  dz.resize(z.size());
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double denom = 0.0;
  for (double v : z) denom += std::exp(v - m);
  for (size_t i = 0; i < z.size(); ++i) dz[i] = w * std::exp(z[i] - m) / denom;
  dz[static_cast<size_t>(pos)] -= w;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) raise("BadConfig", "learning_rate must be positive");
  if (batch_size < 1) raise("BadConfig", "batch_size must be at least 1");
  if (max_epochs < 1) raise("BadConfig", "max_epochs must be at least 1");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    raise("BadConfig", "adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) raise("BadConfig", "adam_epsilon must be positive");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) {
    raise("BadConfig", "grad_clip_norm must be positive when set");
  }
}

LossResult span_cross_entropy(const std::vector<SpanLogits>& logits,
                              const std::vector<int>& starts, const std::vector<int>& ends,
                              LossCombination combination) {
  if (logits.empty()) raise("EmptyDataset", "span_cross_entropy needs at least one example");
  if (logits.size() != starts.size() || logits.size() != ends.size()) {
    raise("ShapeMismatch", "logits/starts/ends lists differ in length");
  }
  double ls = 0.0, le = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    ls += side_loss(logits[i].start_logits, starts[i]);
    le += side_loss(logits[i].end_logits, ends[i]);
  }
  const double n = static_cast<double>(logits.size());
  LossResult r;
  r.loss_start = ls / n;
  r.loss_end = le / n;
  r.total_loss = combination == LossCombination::mean ? 0.5 * (r.loss_start + r.loss_end)
                                                      : r.loss_start + r.loss_end;
  return r;
}

void save_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write train log: " + path);
  for (const auto& e : log) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["batch"] = e.batch;
    j["loss_start"] = e.loss_start;
    j["loss_end"] = e.loss_end;
    j["total_loss"] = e.total_loss;
    j["mean_jaccard"] = e.mean_jaccard;
    j["split"] = e.split;
    f << j.dump() << '\n';
  }
}

Trainer::Trainer(Params params, TrainConfig config, const Vocab& vocab)
    : params_(std::move(params)),
      config_(config),
      vocab_(vocab),
      dropout_rng_(config.seed ^ kEpochStride) {
  config_.validate();
  grad_.assign(params_.total_size(), 0.0);
  adam_m_.assign(params_.total_size(), 0.0);
  adam_v_.assign(params_.total_size(), 0.0);
}

StepResult Trainer::step(const std::vector<TokenizedExample>& batch, StepMode mode) {
  if (batch.empty()) raise("EmptyDataset", "step needs a non-empty batch");
  const bool training = mode == StepMode::train;
  const double n = static_cast<double>(batch.size());
  const double side_weight =
      (config_.loss_combination == LossCombination::mean ? 0.5 : 1.0) / n;

  if (training) std::fill(grad_.begin(), grad_.end(), 0.0);

  double ls = 0.0, le = 0.0, jac = 0.0;
  ForwardCache cache;
  SpanLogits dlogits;
  for (const auto& ex : batch) {
    SpanLogits logits = forward_cached(params_, ex.source_ids, ex.source_mask, cache,
                                       training ? &dropout_rng_ : nullptr);
    ls += side_loss(logits.start_logits, ex.start_position);
    le += side_loss(logits.end_logits, ex.end_position);

    SpanPrediction pred = decode_span(logits, ex.source_mask);
    TokenSequence span(ex.source_ids.begin() + pred.start,
                       ex.source_ids.begin() + pred.end + 1);
    jac += jaccard(decode(vocab_, span, true), decode(vocab_, ex.target_ids, true));

    if (training) {
      side_loss_grad(logits.start_logits, ex.start_position, side_weight,
                     dlogits.start_logits);
      side_loss_grad(logits.end_logits, ex.end_position, side_weight, dlogits.end_logits);
      backward(params_, cache, dlogits, grad_);
    }
  }
  if (training) apply_gradients();

  StepResult r;
  r.loss_start = ls / n;
  r.loss_end = le / n;
  r.total_loss = config_.loss_combination == LossCombination::mean
                     ? 0.5 * (r.loss_start + r.loss_end)
                     : r.loss_start + r.loss_end;
  r.mean_jaccard = jac / n;
  return r;
}

void Trainer::apply_gradients() {
  if (config_.grad_clip_norm) {
    double sq = 0.0;
    for (double g : grad_) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > *config_.grad_clip_norm) {
      const double s = *config_.grad_clip_norm / norm;
      for (double& g : grad_) g *= s;
    }
  }
  ++adam_step_;
  const double bc1 = 1.0 - std::pow(config_.adam_beta1, static_cast<double>(adam_step_));
  const double bc2 = 1.0 - std::pow(config_.adam_beta2, static_cast<double>(adam_step_));
  double* p = params_.data().data();
  for (size_t i = 0; i < grad_.size(); ++i) {
    adam_m_[i] = config_.adam_beta1 * adam_m_[i] + (1.0 - config_.adam_beta1) * grad_[i];
    adam_v_[i] = config_.adam_beta2 * adam_v_[i] + (1.0 - config_.adam_beta2) * grad_[i] * grad_[i];
    const double mhat = adam_m_[i] / bc1;
    const double vhat = adam_v_[i] / bc2;
    p[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.adam_epsilon);
  }
}

StepResult Trainer::eval_pass(const std::vector<TokenizedExample>& dataset) {
  double ls = 0.0, le = 0.0, jac = 0.0;
  ForwardCache cache;
  for (const auto& ex : dataset) {
    SpanLogits logits = forward_cached(params_, ex.source_ids, ex.source_mask, cache, nullptr);
    ls += side_loss(logits.start_logits, ex.start_position);
    le += side_loss(logits.end_logits, ex.end_position);
    SpanPrediction pred = decode_span(logits, ex.source_mask);
    TokenSequence span(ex.source_ids.begin() + pred.start,
                       ex.source_ids.begin() + pred.end + 1);
    jac += jaccard(decode(vocab_, span, true), decode(vocab_, ex.target_ids, true));
  }
  const double n = static_cast<double>(dataset.size());
  StepResult r;
  r.loss_start = ls / n;
  r.loss_end = le / n;
  r.total_loss = config_.loss_combination == LossCombination::mean
                     ? 0.5 * (r.loss_start + r.loss_end)
                     : r.loss_start + r.loss_end;
  r.mean_jaccard = jac / n;
  return r;
}

TrainResult Trainer::train(const std::vector<TokenizedExample>& train_set,
                           const std::vector<TokenizedExample>& val_set,
                           const EpochCallback& on_epoch) {
  if (train_set.empty()) raise("EmptyDataset", "training set is empty");

  TrainResult result;
  double best_jaccard = -1.0;
  std::vector<double> best_params;

  std::vector<size_t> order(train_set.size());
  for (int epoch = 0; epoch < config_.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(config_.seed + kEpochStride * static_cast<uint64_t>(epoch + 1));
    shuffle_rng.shuffle(order);

    const size_t bs = static_cast<size_t>(config_.batch_size);
    int batch_index = 0;
    for (size_t begin = 0; begin < order.size(); begin += bs, ++batch_index) {
      const size_t endi = std::min(begin + bs, order.size());
      std::vector<TokenizedExample> batch;
      batch.reserve(endi - begin);
      for (size_t k = begin; k < endi; ++k) batch.push_back(train_set[order[k]]);
      StepResult sr = step(batch, StepMode::train);
      result.log.push_back({epoch, batch_index, sr.loss_start, sr.loss_end, sr.total_loss,
                            sr.mean_jaccard, "train"});
    }

    if (!val_set.empty()) {
      StepResult vr = eval_pass(val_set);
      result.log.push_back(
          {epoch, -1, vr.loss_start, vr.loss_end, vr.total_loss, vr.mean_jaccard, "validation"});
      if (vr.mean_jaccard > best_jaccard) {
        best_jaccard = vr.mean_jaccard;
        best_params = params_.data();
        result.best_epoch = epoch;
      }
      if (on_epoch) on_epoch(epoch, params_, &vr);
    } else {
      result.best_epoch = epoch;
      if (on_epoch) on_epoch(epoch, params_, nullptr);
    }
  }

  if (!best_params.empty()) params_.data() = std::move(best_params);
  return result;
}

double gradient_check(const ModelConfig& config, const std::vector<TokenizedExample>& batch,
                      double epsilon, LossCombination combination, size_t exhaustive_limit) {
  if (batch.empty()) raise("EmptyDataset", "gradient_check needs a non-empty batch");
  Params params = Params::init(config);

  std::vector<int> starts, ends;
  for (const auto& ex : batch) {
    starts.push_back(ex.start_position);
    ends.push_back(ex.end_position);
  }

  auto loss_at = [&](const Params& p) {
    std::vector<SpanLogits> logits = forward_batch(p, batch);
    return span_cross_entropy(logits, starts, ends, combination).total_loss;
  };

  // Analytic gradient of total_loss over the batch.
  std::vector<double> grad(params.total_size(), 0.0);
  {
    const double side_weight =
        (combination == LossCombination::mean ? 0.5 : 1.0) / static_cast<double>(batch.size());
    ForwardCache cache;
    SpanLogits dlogits;
    for (const auto& ex : batch) {
      SpanLogits logits = forward_cached(params, ex.source_ids, ex.source_mask, cache, nullptr);
      side_loss_grad(logits.start_logits, ex.start_position, side_weight, dlogits.start_logits);
      side_loss_grad(logits.end_logits, ex.end_position, side_weight, dlogits.end_logits);
      backward(params, cache, dlogits, grad);
    }
  }

  // Pick the indices to probe: everything when small, otherwise a seeded
  // sample that still touches every segment.
  std::vector<size_t> indices;
  if (params.total_size() <= exhaustive_limit) {
    indices.resize(params.total_size());
    std::iota(indices.begin(), indices.end(), size_t{0});
  } else {
    Rng rng(config.seed ^ 0xC0FFEEULL);
    const size_t per_segment =
        std::max<size_t>(1, (200 + params.segments().size() - 1) / params.segments().size());
    for (const auto& seg : params.segments()) {
      for (size_t k = 0; k < per_segment && k < seg.size; ++k) {
        indices.push_back(seg.offset + rng.next_below(seg.size));
      }
    }
    while (indices.size() < 200) indices.push_back(rng.next_below(params.total_size()));
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  }

  double max_rel = 0.0;
  double* data = params.data().data();
  for (size_t idx : indices) {
    const double saved = data[idx];
    data[idx] = saved + epsilon;
    const double up = loss_at(params);
    data[idx] = saved - epsilon;
    const double down = loss_at(params);
    data[idx] = saved;
    const double gn = (up - down) / (2.0 * epsilon);
    const double ga = grad[idx];
    const double rel = std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace sentspan
