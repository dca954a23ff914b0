#include "sentspan/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "sentspan/errors.hpp"
#include "sentspan/spanprep.hpp"
#include "sentspan/text.hpp"
#include "sentspan/trainer.hpp"

namespace sentspan {

double jaccard(const std::string& a, const std::string& b) {
  std::set<std::string> wa, wb;
  for (const auto& w : text::split_whitespace(text::to_lower(a))) wa.insert(w);
  for (const auto& w : text::split_whitespace(text::to_lower(b))) wb.insert(w);
  if (wa.empty() && wb.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& w : wa) inter += wb.count(w);
  const size_t uni = wa.size() + wb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

SpanPrediction decode_span(const SpanLogits& logits, const std::vector<int>& mask,
                           std::optional<int> max_span_length) {
  const size_t L = mask.size();
  if (logits.start_logits.size() != L || logits.end_logits.size() != L) {
    raise("ShapeMismatch", "logit vectors and mask differ in length");
  }
  if (std::none_of(mask.begin(), mask.end(), [](int m) { return m != 0; })) {
    raise("AllMasked", "cannot decode a span from an all-masked sequence");
  }
  if (max_span_length && *max_span_length < 1) {
    raise("BadConfig", "max_span_length must be at least 1 when set");
  }
  const auto& s = logits.start_logits;
  const auto& e = logits.end_logits;

  SpanPrediction best;
  best.start = -1;
  double best_sum = 0.0;

  if (!max_span_length) {
    // One pass: track the earliest maximal start seen so far; strict
    // comparisons reproduce the smallest-i-then-smallest-j tie-break.
    int besti = -1;
    for (size_t j = 0; j < L; ++j) {
      if (mask[j] == 0) continue;
      if (besti < 0 || s[j] > s[static_cast<size_t>(besti)]) besti = static_cast<int>(j);
      const double sum = s[static_cast<size_t>(besti)] + e[j];
      if (best.start < 0 || sum > best_sum) {
        best_sum = sum;
        best.start = besti;
        best.end = static_cast<int>(j);
      }
    }
  } else {
    const int cap = *max_span_length;
    for (size_t i = 0; i < L; ++i) {
      if (mask[i] == 0) continue;
      for (size_t j = i; j < L && static_cast<int>(j - i) < cap; ++j) {
        if (mask[j] == 0) continue;
        const double sum = s[i] + e[j];
        if (best.start < 0 || sum > best_sum) {
          best_sum = sum;
          best.start = static_cast<int>(i);
          best.end = static_cast<int>(j);
        }
      }
    }
  }
  best.score = best_sum;
  return best;
}

std::string extract_answer(const Params& params, const Vocab& vocab,
                           const TokenizedExample& ex) {
  SpanLogits logits = forward(params, ex.source_ids, ex.source_mask);
  SpanPrediction pred = decode_span(logits, ex.source_mask);
  TokenSequence span(ex.source_ids.begin() + pred.start, ex.source_ids.begin() + pred.end + 1);
  return decode(vocab, span, true);
}

std::string extract_answer(const Params& params, const Vocab& vocab, Sentiment sentiment,
                           const std::string& raw_text) {
  if (text::trim(raw_text).empty()) {
    raise("EmptyText", "cannot extract a span from empty text");
  }
  const int max_len = params.config().max_source_length;
  TokenSequence ids = encode(vocab, format_source(sentiment, raw_text));
  if (static_cast<int>(ids.size()) > max_len) ids.resize(static_cast<size_t>(max_len));
  const size_t real = ids.size();
  ids.resize(static_cast<size_t>(max_len), Vocab::kPad);
  std::vector<int> mask(static_cast<size_t>(max_len), 0);
  std::fill(mask.begin(), mask.begin() + static_cast<long>(real), 1);

  SpanLogits logits = forward(params, ids, mask);
  SpanPrediction pred = decode_span(logits, mask);
  TokenSequence span(ids.begin() + pred.start, ids.begin() + pred.end + 1);
  return decode(vocab, span, true);
}

EvalReport evaluate(const Params& params, const Vocab& vocab,
                    const std::vector<TokenizedExample>& dataset, int batch_size) {
  if (dataset.empty()) raise("EmptyDataset", "evaluate needs a non-empty dataset");
  if (batch_size < 1) raise("BadConfig", "batch_size must be at least 1");

  EvalReport report;
  double sum_ls = 0.0, sum_le = 0.0, sum_jac = 0.0;
  for (size_t begin = 0; begin < dataset.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t endi = std::min(begin + static_cast<size_t>(batch_size), dataset.size());
    std::vector<TokenizedExample> chunk(dataset.begin() + static_cast<long>(begin),
                                        dataset.begin() + static_cast<long>(endi));
    std::vector<SpanLogits> logits = forward_batch(params, chunk);
    for (size_t k = 0; k < chunk.size(); ++k) {
      const auto& ex = chunk[k];
      LossResult lr = span_cross_entropy({logits[k]}, {ex.start_position}, {ex.end_position},
                                         LossCombination::mean);
      sum_ls += lr.loss_start;
      sum_le += lr.loss_end;

      SpanPrediction pred = decode_span(logits[k], ex.source_mask);
      TokenSequence span(ex.source_ids.begin() + pred.start,
                         ex.source_ids.begin() + pred.end + 1);
      PerExampleEval pe;
      pe.id = ex.id;
      pe.predicted_text = decode(vocab, span, true);
      pe.target_text = decode(vocab, ex.target_ids, true);
      pe.jaccard = jaccard(pe.predicted_text, pe.target_text);
      sum_jac += pe.jaccard;
      report.per_example.push_back(std::move(pe));
    }
  }
  const double n = static_cast<double>(dataset.size());
  report.loss_start = sum_ls / n;
  report.loss_end = sum_le / n;
  report.mean_jaccard = sum_jac / n;
  report.n_examples = static_cast<int>(dataset.size());
  return report;
}

void save_eval_report(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["loss_start"] = report.loss_start;
  j["loss_end"] = report.loss_end;
  j["mean_jaccard"] = report.mean_jaccard;
  j["n_examples"] = report.n_examples;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& pe : report.per_example) {
    per.push_back({{"id", pe.id},
                   {"predicted_text", pe.predicted_text},
                   {"target_text", pe.target_text},
                   {"jaccard", pe.jaccard}});
  }
  j["per_example"] = std::move(per);
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write eval report: " + path);
  f << j.dump(2) << '\n';
}

std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  size_t label_width = 0;
  for (const auto& [label, report] : rows) label_width = std::max(label_width, label.size());
  label_width = std::max(label_width, size_t{5});

  std::string out(label_width, ' ');
  char buf[128];
  std::snprintf(buf, sizeof(buf), "  %10s  %10s  %8s\n", "loss_end", "loss_start", "Jaccard");
  out += buf;
  for (const auto& [label, report] : rows) {
    out += label;
    out.append(label_width - label.size(), ' ');
    std::snprintf(buf, sizeof(buf), "  %10.4f  %10.4f  %8.4f\n", report.loss_end,
                  report.loss_start, report.mean_jaccard);
    out += buf;
  }
  return out;
}

}  // namespace sentspan
