#pragma once

#include <string>
#include <vector>

#include "sentspan/corpus.hpp"
#include "sentspan/tokenizer.hpp"

namespace sentspan {

/// One model-ready example: padded source ids, attention mask, target ids,
/// and the gold start/end token positions inside the source sequence.
struct TokenizedExample {
  std::string id;
  TokenSequence source_ids;       // right-padded to max_source_length
  std::vector<int> source_mask;   // 1 = real token, 0 = padding
  TokenSequence target_ids;       // unpadded
  int start_position = 0;
  int end_position = 0;
  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
};

inline constexpr const char* kFlagCrossedSpan = "crossed_span";

/// "extract: {sentiment}</s><s>context: {text}"
std::string format_source(Sentiment sentiment, const std::string& text);

/// " {selected_text} </s>"
std::string format_target(const std::string& selected_text);

/// Index of the first token of the context text inside an encoded source
/// sequence for this sentiment: everything before it is the prompt scaffold
/// (computed from the encoded empty-context prompt, not a fixed offset).
int context_begin(const Vocab& vocab, Sentiment sentiment);

/// Scan target ids left to right, skipping special ids; the first one that
/// occurs in source_ids at an index >= context_begin yields that first
/// matching index, and the scan stops there. Starting the search at the
/// context region keeps prompt tokens (including the sentiment word) from
/// ever matching. Throws AlignmentFailed when no target id occurs.
int find_start(const TokenSequence& source_ids, const TokenSequence& target_ids,
               int context_begin);

/// Reverse counterpart of find_start: scan target ids right to left and
/// return the LAST index >= context_begin at which the first non-special
/// target id (from the back) occurs in source_ids.
int find_end(const TokenSequence& source_ids, const TokenSequence& target_ids,
             int context_begin);

/// Full preprocessing for one example: format, encode, pad, mask, and
/// recover gold start/end positions. If the two searches cross, the span is
/// swapped into order and flagged "crossed_span". Sources longer than
/// max_source_length are truncated at the end; a gold span falling outside
/// the kept region is an AlignmentFailed error.
TokenizedExample align(const Vocab& vocab, const RawExample& ex, int max_source_length);

/// Line-delimited JSON, one example per line, byte-stable across runs.
void save_prepared(const std::string& path, const std::vector<TokenizedExample>& examples);
std::vector<TokenizedExample> load_prepared(const std::string& path);

}  // namespace sentspan
