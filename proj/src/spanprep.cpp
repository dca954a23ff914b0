#include "sentspan/spanprep.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "sentspan/errors.hpp"

namespace sentspan {

bool TokenizedExample::has_flag(const std::string& f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

std::string format_source(Sentiment sentiment, const std::string& text) {
  return "extract: " + to_string(sentiment) + "</s><s>context: " + text;
}

std::string format_target(const std::string& selected_text) {
  return " " + selected_text + " </s>";
}

int context_begin(const Vocab& vocab, Sentiment sentiment) {
  // The empty-context prompt encodes to [scaffold..., eos]; a real context's
  // first token lands exactly where that trailing eos sits.
  TokenSequence prompt = encode(vocab, format_source(sentiment, ""));
  return static_cast<int>(prompt.size()) - 1;
}

int find_start(const TokenSequence& source_ids, const TokenSequence& target_ids,
               int context_begin) {
  const int n = static_cast<int>(source_ids.size());
  for (int t : target_ids) {
    if (Vocab::in_skip_set(t)) continue;
    for (int i = std::max(context_begin, 0); i < n; ++i) {
      if (source_ids[static_cast<size_t>(i)] == t) return i;
    }
  }
  raise("AlignmentFailed", "no target token found in the context region");
}

int find_end(const TokenSequence& source_ids, const TokenSequence& target_ids,
             int context_begin) {
  const int n = static_cast<int>(source_ids.size());
  for (auto it = target_ids.rbegin(); it != target_ids.rend(); ++it) {
    const int t = *it;
    if (Vocab::in_skip_set(t)) continue;
    for (int i = n - 1; i >= std::max(context_begin, 0); --i) {
      if (source_ids[static_cast<size_t>(i)] == t) return i;
    }
  }
  raise("AlignmentFailed", "no target token found in the context region");
}

TokenizedExample align(const Vocab& vocab, const RawExample& ex, int max_source_length) {
  if (max_source_length < 1) raise("BadConfig", "max_source_length must be positive");

  TokenizedExample out;
  out.id = ex.id;
  TokenSequence source = encode(vocab, format_source(ex.sentiment, ex.text));
  out.target_ids = encode(vocab, format_target(ex.selected_text));
  const int cb = context_begin(vocab, ex.sentiment);

  int start = find_start(source, out.target_ids, cb);
  int end = find_end(source, out.target_ids, cb);
  if (end < start) {
    std::swap(start, end);
    out.flags.push_back(kFlagCrossedSpan);
  }

  if (static_cast<int>(source.size()) > max_source_length) {
    if (end >= max_source_length) {
      raise("AlignmentFailed", "span truncated: example " + ex.id + " needs " +
                                   std::to_string(end + 1) + " tokens, limit is " +
                                   std::to_string(max_source_length));
    }
    source.resize(static_cast<size_t>(max_source_length));
  }

  const size_t real = source.size();
  out.source_ids = std::move(source);
  out.source_ids.resize(static_cast<size_t>(max_source_length), Vocab::kPad);
  out.source_mask.assign(static_cast<size_t>(max_source_length), 0);
  std::fill(out.source_mask.begin(), out.source_mask.begin() + static_cast<long>(real), 1);
  out.start_position = start;
  out.end_position = end;
  return out;
}

void save_prepared(const std::string& path, const std::vector<TokenizedExample>& examples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write prepared file: " + path);
  for (const auto& ex : examples) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["source_ids"] = ex.source_ids;
    j["source_mask"] = ex.source_mask;
    j["target_ids"] = ex.target_ids;
    j["start_position"] = ex.start_position;
    j["end_position"] = ex.end_position;
    j["flags"] = ex.flags;
    f << j.dump() << '\n';
  }
}

std::vector<TokenizedExample> load_prepared(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot read prepared file: " + path);
  std::vector<TokenizedExample> examples;
  std::string line;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      raise("ParseError", "bad JSON on line " + std::to_string(lineno) + " of " + path);
    }
    try {
      TokenizedExample ex;
      ex.id = j.at("id").get<std::string>();
      ex.source_ids = j.at("source_ids").get<TokenSequence>();
      ex.source_mask = j.at("source_mask").get<std::vector<int>>();
      ex.target_ids = j.at("target_ids").get<TokenSequence>();
      ex.start_position = j.at("start_position").get<int>();
      ex.end_position = j.at("end_position").get<int>();
      ex.flags = j.at("flags").get<std::vector<std::string>>();
      if (ex.source_ids.size() != ex.source_mask.size()) {
        raise("ParseError", "source_ids/source_mask length mismatch on line " +
                                std::to_string(lineno) + " of " + path);
      }
      const int len = static_cast<int>(ex.source_ids.size());
      if (ex.start_position < 0 || ex.end_position < ex.start_position ||
          ex.end_position >= len) {
        raise("ParseError",
              "span positions out of range on line " + std::to_string(lineno) + " of " + path);
      }
      examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      raise("ParseError", "line " + std::to_string(lineno) + " of " + path + ": " + e.what());
    }
  }
  return examples;
}

}  // namespace sentspan
