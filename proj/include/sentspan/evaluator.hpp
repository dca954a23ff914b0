#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sentspan/model.hpp"
#include "sentspan/spanprep.hpp"
#include "sentspan/tokenizer.hpp"
#include "sentspan/trainer.hpp"

namespace sentspan {

struct SpanPrediction {
  int start = 0;
  int end = 0;
  double score = 0.0;     // start_logits[start] + end_logits[end]
  std::string text;       // filled by extract_answer, empty from decode_span
};

struct PerExampleEval {
  std::string id;
  std::string predicted_text;
  std::string target_text;
  double jaccard = 0.0;
};

struct EvalReport {
  double loss_start = 0.0;
  double loss_end = 0.0;
  double mean_jaccard = 0.0;
  int n_examples = 0;
  std::vector<PerExampleEval> per_example;
};

/// Word-set Jaccard similarity |A∩B| / |A∪B| over the lowercased,
/// whitespace-delimited words of each string. Both-empty returns 1.
double jaccard(const std::string& a, const std::string& b);

/// Greedy span decoding: argmax of start_logits[i] + end_logits[j] over all
/// unmasked pairs with i <= j, ties broken by smallest i then smallest j.
/// An optional cap restricts j - i. Throws AllMasked.
SpanPrediction decode_span(const SpanLogits& logits, const std::vector<int>& mask,
                           std::optional<int> max_span_length = std::nullopt);

/// forward -> decode_span -> decode the winning source slice with specials
/// skipped.
std::string extract_answer(const Params& params, const Vocab& vocab,
                           const TokenizedExample& ex);

/// Same, for raw text at prediction time: formats and encodes the prompt
/// first; no gold alignment involved.
std::string extract_answer(const Params& params, const Vocab& vocab,
                           Sentiment sentiment, const std::string& raw_text);

/// Eval-mode pass over the whole dataset: example-weighted start/end losses
/// plus per-example Jaccard of predicted span text against the decoded
/// target ids. mean_jaccard is exactly the mean of the per-example values,
/// and results do not depend on batch_size. Throws EmptyDataset.
EvalReport evaluate(const Params& params, const Vocab& vocab,
                    const std::vector<TokenizedExample>& dataset, int batch_size = 32);

void save_eval_report(const std::string& path, const EvalReport& report);

/// Plain-text metrics table, one row per (label, report):
/// columns loss_end, loss_start, Jaccard.
std::string format_eval_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace sentspan
