#include "sentspan/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "sentspan/errors.hpp"

namespace sentspan {

namespace {

constexpr const char* kSpecialTokens[Vocab::kNumSpecials] = {
    "<s>", "<pad>", "</s>", "<unk>", "<nl>"};

constexpr const char* kEosMarker = "</s>";
constexpr const char* kBosMarker = "<s>";

inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

struct Piece {
  enum Kind { word, bos, eos, newline } kind;
  std::string token;  // set for word pieces only
};

// Single pass over the text: literal "</s>"/"<s>" markers and newline
// characters become special pieces, everything else goes through the
// word/punctuation splitter.
std::vector<Piece> segment(const std::string& text) {
  std::vector<Piece> pieces;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      pieces.push_back({Piece::word, word});
      word.clear();
    }
  };
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    if (text.compare(i, 4, kEosMarker) == 0) {
      flush();
      pieces.push_back({Piece::eos, {}});
      i += 4;
      continue;
    }
    if (text.compare(i, 3, kBosMarker) == 0) {
      flush();
      pieces.push_back({Piece::bos, {}});
      i += 3;
      continue;
    }
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '\n') {
      flush();
      pieces.push_back({Piece::newline, {}});
    } else if (is_space(c)) {
      flush();
    } else if (is_word_byte(c)) {
      word.push_back(static_cast<char>(std::isupper(c) ? std::tolower(c) : c));
    } else {
      flush();
      pieces.push_back({Piece::word, std::string(1, static_cast<char>(c))});
    }
    ++i;
  }
  flush();
  return pieces;
}

Vocab with_specials() {
  Vocab v;
  v.id_to_token.reserve(Vocab::kNumSpecials);
  for (int i = 0; i < Vocab::kNumSpecials; ++i) {
    v.id_to_token.emplace_back(kSpecialTokens[i]);
    v.token_to_id.emplace(kSpecialTokens[i], i);
  }
  return v;
}

}  // namespace

Vocab build_vocab(const std::vector<std::string>& corpus, int max_size) {
  if (max_size < 16) {
    raise("VocabTooSmall",
          "vocab max_size must be at least 16, got " + std::to_string(max_size));
  }
  // std::map keeps the tie-break scan deterministic.
  std::map<std::string, long long> freq;
  for (const auto& text : corpus) {
    for (const auto& piece : segment(text)) {
      if (piece.kind == Piece::word) ++freq[piece.token];
    }
  }
  std::vector<std::pair<std::string, long long>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocab v = with_specials();
  const size_t capacity = static_cast<size_t>(max_size) - Vocab::kNumSpecials;
  for (const auto& [token, count] : ordered) {
    if (v.id_to_token.size() - Vocab::kNumSpecials >= capacity) break;
    v.token_to_id.emplace(token, static_cast<int>(v.id_to_token.size()));
    v.id_to_token.push_back(token);
  }
  return v;
}

TokenSequence encode(const Vocab& vocab, const std::string& text) {
  TokenSequence ids;
  ids.push_back(Vocab::kBos);
  for (const auto& piece : segment(text)) {
    switch (piece.kind) {
      case Piece::word: ids.push_back(vocab.lookup(piece.token)); break;
      case Piece::bos: ids.push_back(Vocab::kBos); break;
      case Piece::eos: ids.push_back(Vocab::kEos); break;
      case Piece::newline: ids.push_back(Vocab::kNewline); break;
    }
  }
  ids.push_back(Vocab::kEos);
  return ids;
}

std::string decode(const Vocab& vocab, const TokenSequence& ids, bool skip_specials) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) {
      raise("IdOutOfRange", "token id " + std::to_string(id) +
                                " outside vocab of size " + std::to_string(vocab.size()));
    }
    if (skip_specials && Vocab::in_skip_set(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.id_to_token[static_cast<size_t>(id)];
  }
  return out;
}

void save_vocab(const Vocab& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write vocab file: " + path);
  for (const auto& token : vocab.id_to_token) f << token << '\n';
}

Vocab load_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot read vocab file: " + path);
  Vocab v;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      raise("ParseError", "empty token line " + std::to_string(v.id_to_token.size()) +
                              " in vocab file: " + path);
    }
    if (!v.token_to_id.emplace(line, static_cast<int>(v.id_to_token.size())).second) {
      raise("ParseError", "duplicate token '" + line + "' in vocab file: " + path);
    }
    v.id_to_token.push_back(line);
  }
  if (v.size() < Vocab::kNumSpecials) {
    raise("ParseError", "vocab file lacks the five special tokens: " + path);
  }
  for (int i = 0; i < Vocab::kNumSpecials; ++i) {
    if (v.id_to_token[static_cast<size_t>(i)] != kSpecialTokens[i]) {
      raise("ParseError", "vocab line " + std::to_string(i) + " must be '" +
                              kSpecialTokens[i] + "', got '" +
                              v.id_to_token[static_cast<size_t>(i)] + "'");
    }
  }
  return v;
}

}  // namespace sentspan
