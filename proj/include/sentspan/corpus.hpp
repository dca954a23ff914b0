#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sentspan {

enum class Sentiment { positive, negative, neutral, unknown };

std::string to_string(Sentiment s);

/// Case-insensitive, whitespace-tolerant parse; anything unrecognized maps
/// to Sentiment::unknown (reported as a validation finding, never a crash).
Sentiment parse_sentiment(const std::string& raw);

/// One dataset row: a tweet, the annotated answer span, and the polarity
/// label conditioning the extraction.
struct RawExample {
  std::string id;
  std::string text;
  std::string selected_text;
  Sentiment sentiment = Sentiment::unknown;
  std::string sentiment_raw;
};

enum class Finding { substring_violation, empty_selected_text, unknown_sentiment };

std::string to_string(Finding f);

struct LoadResult {
  std::vector<RawExample> examples;
  int excluded_rows = 0;  // rows dropped for missing/empty text
};

/// Read a UTF-8, RFC-4180 CSV with a header row naming at least `text` and
/// `sentiment`. The selected-text column is optional and matches either
/// "selected_text" or "selected text"; an id column ("textID"/"id") is used
/// when present, otherwise ids are synthesized from the row index.
///
/// Throws Error codes: MissingColumn, MalformedCsv, EmptyFile.
LoadResult load_csv(const std::string& path);

/// Inverse of load_csv, RFC-4180 quoting. load(save(load(x))) is a fixed point.
void save_csv(const std::string& path, const std::vector<RawExample>& examples);

/// Data-quality findings for one example; empty means clean.
std::vector<Finding> validate_example(const RawExample& ex);

struct DatasetSplit {
  std::vector<RawExample> train;
  std::vector<RawExample> validation;
  std::vector<RawExample> test;
};

/// Seeded shuffle followed by a largest-remainder partition, so each part's
/// size differs from ratio*N by less than one. Throws BadRatios.
DatasetSplit split_dataset(const std::vector<RawExample>& examples,
                           const std::array<double, 3>& ratios, uint64_t seed);

}  // namespace sentspan
