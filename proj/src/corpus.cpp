#include "sentspan/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sentspan/errors.hpp"
#include "sentspan/rng.hpp"
#include "sentspan/text.hpp"

namespace sentspan {

std::string to_string(Sentiment s) {
  switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
    case Sentiment::unknown: return "unknown";
  }
  return "unknown";
}

Sentiment parse_sentiment(const std::string& raw) {
  const std::string s = text::to_lower(text::trim(raw));
  if (s == "positive") return Sentiment::positive;
  if (s == "negative") return Sentiment::negative;
  if (s == "neutral") return Sentiment::neutral;
  return Sentiment::unknown;
}

std::string to_string(Finding f) {
  switch (f) {
    case Finding::substring_violation: return "SubstringViolation";
    case Finding::empty_selected_text: return "EmptySelectedText";
    case Finding::unknown_sentiment: return "UnknownSentiment";
  }
  return "?";
}

namespace {

// RFC-4180: quoted fields may contain commas, newlines, and doubled quotes.
// A lone quote inside an unquoted field is taken literally; a file ending
// inside a quoted field is MalformedCsv.
std::vector<std::vector<std::string>> parse_csv(const std::string& content,
                                                const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_field = [&] {
    row.push_back(field);
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(row);
    row.clear();
  };

  const size_t n = content.size();
  size_t i = 0;
  while (i < n) {
    char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
    ++i;
  }
  if (in_quotes) raise("MalformedCsv", "unbalanced quotes in " + path);
  if (!field.empty() || field_started || !row.empty()) end_row();
  return rows;
}

int find_column(const std::vector<std::string>& header,
                const std::vector<std::string>& names) {
  for (size_t i = 0; i < header.size(); ++i) {
    std::string h = text::to_lower(text::trim(header[i]));
    for (const auto& name : names) {
      if (h == name) return static_cast<int>(i);
    }
  }
  return -1;
}

std::string field_at(const std::vector<std::string>& row, int col) {
  if (col < 0 || col >= static_cast<int>(row.size())) return {};
  return row[static_cast<size_t>(col)];
}

std::string quote_csv(const std::string& s) {
  bool needs = s.find_first_of(",\"\n\r") != std::string::npos ||
               (!s.empty() && (s.front() == ' ' || s.back() == ' '));
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

LoadResult load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot read csv file: " + path);
  std::stringstream buffer;
  buffer << f.rdbuf();
  const std::string content = buffer.str();
  if (text::trim(content).empty()) raise("EmptyFile", "csv file has no header row: " + path);

  auto rows = parse_csv(content, path);
  if (rows.empty()) raise("EmptyFile", "csv file has no header row: " + path);

  const auto& header = rows.front();
  const int col_text = find_column(header, {"text"});
  const int col_selected = find_column(header, {"selected_text", "selected text"});
  const int col_sentiment = find_column(header, {"sentiment"});
  const int col_id = find_column(header, {"textid", "id"});
  if (col_text < 0) raise("MissingColumn", "header lacks a 'text' column in " + path);
  if (col_sentiment < 0) raise("MissingColumn", "header lacks a 'sentiment' column in " + path);

  LoadResult result;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    RawExample ex;
    ex.text = field_at(row, col_text);
    if (text::trim(ex.text).empty()) {
      ++result.excluded_rows;
      continue;
    }
    ex.id = col_id >= 0 ? field_at(row, col_id) : std::to_string(r - 1);
    if (ex.id.empty()) ex.id = std::to_string(r - 1);
    ex.selected_text = field_at(row, col_selected);
    ex.sentiment_raw = field_at(row, col_sentiment);
    ex.sentiment = parse_sentiment(ex.sentiment_raw);
    result.examples.push_back(std::move(ex));
  }
  return result;
}

void save_csv(const std::string& path, const std::vector<RawExample>& examples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) raise("IoError", "cannot write csv file: " + path);
  f << "textID,text,selected_text,sentiment\n";
  for (const auto& ex : examples) {
    f << quote_csv(ex.id) << ',' << quote_csv(ex.text) << ','
      << quote_csv(ex.selected_text) << ','
      << quote_csv(ex.sentiment_raw.empty() ? to_string(ex.sentiment) : ex.sentiment_raw)
      << '\n';
  }
}

std::vector<Finding> validate_example(const RawExample& ex) {
  std::vector<Finding> findings;
  if (ex.sentiment == Sentiment::unknown) findings.push_back(Finding::unknown_sentiment);
  if (text::trim(ex.selected_text).empty()) {
    findings.push_back(Finding::empty_selected_text);
  } else {
    // Containment up to whitespace normalization.
    const std::string t = text::collapse_whitespace(ex.text);
    const std::string sel = text::collapse_whitespace(ex.selected_text);
    if (t.find(sel) == std::string::npos) findings.push_back(Finding::substring_violation);
  }
  return findings;
}

DatasetSplit split_dataset(const std::vector<RawExample>& examples,
                           const std::array<double, 3>& ratios, uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) raise("BadRatios", "split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) raise("BadRatios", "split ratios must sum to 1");

  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  // Largest-remainder apportionment keeps every part within one of ratio*N.
  const size_t n = examples.size();
  std::array<size_t, 3> sizes{};
  std::array<std::pair<double, int>, 3> remainders{};
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = ratios[static_cast<size_t>(i)] * static_cast<double>(n);
    sizes[static_cast<size_t>(i)] = static_cast<size_t>(std::floor(quota));
    assigned += sizes[static_cast<size_t>(i)];
    remainders[static_cast<size_t>(i)] = {quota - std::floor(quota), i};
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; k < n - assigned; ++k) {
    ++sizes[static_cast<size_t>(remainders[k % 3].second)];
  }

  DatasetSplit split;
  size_t pos = 0;
  auto take = [&](std::vector<RawExample>& dst, size_t count) {
    dst.reserve(count);
    for (size_t k = 0; k < count; ++k) dst.push_back(examples[order[pos++]]);
  };
  take(split.train, sizes[0]);
  take(split.validation, sizes[1]);
  take(split.test, sizes[2]);
  return split;
}

}  // namespace sentspan
