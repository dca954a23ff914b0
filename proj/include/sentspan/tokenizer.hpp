#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace sentspan {

using TokenSequence = std::vector<int>;

/// Word-level vocabulary with five reserved special tokens at fixed ids.
///
/// id 0 <s>      sequence begin
/// id 1 <pad>    padding
/// id 2 </s>     sequence end / prompt separator
/// id 3 <unk>    out-of-vocabulary word
/// id 4 <nl>     newline character
struct Vocab {
  static constexpr int kBos = 0;
  static constexpr int kPad = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNewline = 4;
  static constexpr int kNumSpecials = 5;

  /// Ids that carry no answer content. Alignment and decoding skip these;
  /// note <unk> is deliberately not in the set.
  static bool in_skip_set(int id) {
    return id == kBos || id == kEos || id == kPad || id == kNewline;
  }

  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }

  /// Content lookup; unknown words map to kUnk.
  int lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
  }
};

/// Build a vocabulary over the corpus: specials first, then the most
/// frequent word tokens, ties broken lexicographically, truncated to
/// max_size entries total. Deterministic for fixed input.
/// Throws VocabTooSmall when max_size < 16.
Vocab build_vocab(const std::vector<std::string>& corpus, int max_size);

/// [bos] + content ids + [eos]. The literal substrings "</s>" and "<s>"
/// map to the eos/bos ids so prompt separators become real special tokens;
/// newline characters map to the newline id. Never emits pad.
TokenSequence encode(const Vocab& vocab, const std::string& text);

/// Tokens joined with single spaces. With skip_specials, ids in the skip
/// set are omitted (unknown tokens still render as "<unk>").
/// Throws IdOutOfRange.
std::string decode(const Vocab& vocab, const TokenSequence& ids, bool skip_specials);

/// One token per line, line number == id, specials on the first five lines.
void save_vocab(const Vocab& vocab, const std::string& path);
Vocab load_vocab(const std::string& path);

}  // namespace sentspan
