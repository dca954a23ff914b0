#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sentspan/corpus.hpp"
#include "testutil.hpp"

using namespace sentspan;
using testutil::error_code;

TEST_CASE("the bundled csv loads with every field intact") {
  LoadResult r = load_csv(testutil::table1_csv());
  REQUIRE(r.examples.size() == 7);
  CHECK(r.excluded_rows == 0);

  const RawExample& first = r.examples[0];
  CHECK(first.id == "t1");
  CHECK(first.text == "Sooo SAD I will miss you here in San Diego!!!");
  CHECK(first.selected_text == "Sooo SAD");
  CHECK(first.sentiment == Sentiment::negative);

  // Sentiment labels parse case-insensitively.
  CHECK(r.examples[3].sentiment_raw == "Positive");
  CHECK(r.examples[3].sentiment == Sentiment::positive);

  // Quoted fields keep their embedded commas.
  CHECK(r.examples[5].text.find(", i reckon") != std::string::npos);
  CHECK(r.examples[5].selected_text == r.examples[5].text);

  for (const auto& ex : r.examples) CHECK(validate_example(ex).empty());
}

TEST_CASE("sentiment parsing tolerates case and padding") {
  CHECK(parse_sentiment("positive") == Sentiment::positive);
  CHECK(parse_sentiment(" Negative ") == Sentiment::negative);
  CHECK(parse_sentiment("NEUTRAL") == Sentiment::neutral);
  CHECK(parse_sentiment("meh") == Sentiment::unknown);
  CHECK(parse_sentiment("") == Sentiment::unknown);
  CHECK(to_string(Sentiment::positive) == "positive");
}

TEST_CASE("quoted csv fields carry commas, newlines, and doubled quotes") {
  const std::string dir = testutil::fresh_dir("csv");
  testutil::write_file(dir + "/quoted.csv",
                       "textID,text,selected_text,sentiment\n"
                       "a,\"one, two\nthree \"\"quoted\"\"\",one,neutral\n");
  LoadResult r = load_csv(dir + "/quoted.csv");
  REQUIRE(r.examples.size() == 1);
  CHECK(r.examples[0].text == "one, two\nthree \"quoted\"");
}

TEST_CASE("a lone quote inside an unquoted field stays literal") {
  const std::string dir = testutil::fresh_dir("csv");
  testutil::write_file(dir + "/lone.csv",
                       "textID,text,selected_text,sentiment\n"
                       "a,he said \"hi\" there,hi,neutral\n");
  LoadResult r = load_csv(dir + "/lone.csv");
  REQUIRE(r.examples.size() == 1);
  CHECK(r.examples[0].text == "he said \"hi\" there");
}

TEST_CASE("crlf line endings are stripped") {
  const std::string dir = testutil::fresh_dir("csv");
  testutil::write_file(dir + "/crlf.csv",
                       "textID,text,selected_text,sentiment\r\n"
                       "a,plain words,plain,neutral\r\n");
  LoadResult r = load_csv(dir + "/crlf.csv");
  REQUIRE(r.examples.size() == 1);
  CHECK(r.examples[0].text == "plain words");
  CHECK(r.examples[0].sentiment == Sentiment::neutral);
}

TEST_CASE("csv error reporting") {
  const std::string dir = testutil::fresh_dir("csv");

  CHECK(error_code([&] { load_csv(dir + "/nope.csv"); }) == "IoError");

  testutil::write_file(dir + "/empty.csv", "");
  CHECK(error_code([&] { load_csv(dir + "/empty.csv"); }) == "EmptyFile");

  testutil::write_file(dir + "/blank.csv", "  \n \n");
  CHECK(error_code([&] { load_csv(dir + "/blank.csv"); }) == "EmptyFile");

  testutil::write_file(dir + "/unbalanced.csv",
                       "textID,text,selected_text,sentiment\n"
                       "a,\"never closed,one,neutral\n");
  CHECK(error_code([&] { load_csv(dir + "/unbalanced.csv"); }) == "MalformedCsv");

  testutil::write_file(dir + "/nosent.csv", "textID,text,selected_text\na,b,c\n");
  CHECK(error_code([&] { load_csv(dir + "/nosent.csv"); }) == "MissingColumn");

  testutil::write_file(dir + "/notext.csv", "textID,selected_text,sentiment\na,b,c\n");
  CHECK(error_code([&] { load_csv(dir + "/notext.csv"); }) == "MissingColumn");

  // A header with zero data rows is valid and simply yields no examples.
  testutil::write_file(dir + "/headeronly.csv", "textID,text,selected_text,sentiment\n");
  CHECK(load_csv(dir + "/headeronly.csv").examples.empty());
}

TEST_CASE("column name variants and synthesized ids") {
  const std::string dir = testutil::fresh_dir("csv");
  testutil::write_file(dir + "/variant.csv",
                       "Sentiment,selected text,TEXT\n"
                       "negative,bad,a bad day\n"
                       "positive,good,a good day\n");
  LoadResult r = load_csv(dir + "/variant.csv");
  REQUIRE(r.examples.size() == 2);
  CHECK(r.examples[0].id == "0");
  CHECK(r.examples[1].id == "1");
  CHECK(r.examples[0].selected_text == "bad");
  CHECK(r.examples[1].sentiment == Sentiment::positive);

  // The selected-text column is optional.
  testutil::write_file(dir + "/nosel.csv", "id,text,sentiment\nk1,some words,neutral\n");
  LoadResult r2 = load_csv(dir + "/nosel.csv");
  REQUIRE(r2.examples.size() == 1);
  CHECK(r2.examples[0].id == "k1");
  CHECK(r2.examples[0].selected_text.empty());
}

TEST_CASE("rows without text are excluded and counted") {
  const std::string dir = testutil::fresh_dir("csv");
  testutil::write_file(dir + "/gaps.csv",
                       "textID,text,selected_text,sentiment\n"
                       "a,,x,neutral\n"
                       "b,  ,x,neutral\n"
                       "c,kept,kept,neutral\n");
  LoadResult r = load_csv(dir + "/gaps.csv");
  REQUIRE(r.examples.size() == 1);
  CHECK(r.examples[0].id == "c");
  CHECK(r.excluded_rows == 2);
}

TEST_CASE("save and load are mutually inverse") {
  std::vector<RawExample> original;
  RawExample a;
  a.id = "x1";
  a.text = "commas, \"quotes\", and\nnewlines";
  a.selected_text = "\"quotes\"";
  a.sentiment = Sentiment::negative;
  a.sentiment_raw = "negative";
  original.push_back(a);
  RawExample b;
  b.id = "x2";
  b.text = " leading and trailing spaces ";
  b.selected_text = "spaces";
  b.sentiment = Sentiment::neutral;
  b.sentiment_raw = "NEUTRAL";
  original.push_back(b);

  const std::string dir = testutil::fresh_dir("csv");
  save_csv(dir + "/round.csv", original);
  LoadResult r = load_csv(dir + "/round.csv");
  REQUIRE(r.examples.size() == original.size());
  for (size_t i = 0; i < original.size(); ++i) {
    CHECK(r.examples[i].id == original[i].id);
    CHECK(r.examples[i].text == original[i].text);
    CHECK(r.examples[i].selected_text == original[i].selected_text);
    CHECK(r.examples[i].sentiment_raw == original[i].sentiment_raw);
    CHECK(r.examples[i].sentiment == original[i].sentiment);
  }

  // Byte-level fixed point after one round.
  save_csv(dir + "/round2.csv", r.examples);
  CHECK(testutil::read_file(dir + "/round2.csv") == testutil::read_file(dir + "/round.csv"));
}

TEST_CASE("validation findings cover the three data defects") {
  RawExample ok;
  ok.text = "a  b c";
  ok.selected_text = "a b";  // containment is judged after whitespace collapsing
  ok.sentiment = Sentiment::neutral;
  CHECK(validate_example(ok).empty());

  RawExample bad_sent = ok;
  bad_sent.sentiment = Sentiment::unknown;
  auto f1 = validate_example(bad_sent);
  REQUIRE(f1.size() == 1);
  CHECK(to_string(f1[0]) == "UnknownSentiment");

  RawExample empty_sel = ok;
  empty_sel.selected_text = "   ";
  auto f2 = validate_example(empty_sel);
  REQUIRE(f2.size() == 1);
  CHECK(to_string(f2[0]) == "EmptySelectedText");

  RawExample not_sub = ok;
  not_sub.selected_text = "missing words";
  auto f3 = validate_example(not_sub);
  REQUIRE(f3.size() == 1);
  CHECK(to_string(f3[0]) == "SubstringViolation");

  RawExample both = not_sub;
  both.sentiment = Sentiment::unknown;
  CHECK(validate_example(both).size() == 2);
}

TEST_CASE("dataset splitting partitions without loss") {
  auto examples = testutil::synthetic_examples(100, 3);
  DatasetSplit s = split_dataset(examples, {0.8, 0.1, 0.1}, 42);
  CHECK(s.train.size() == 80);
  CHECK(s.validation.size() == 10);
  CHECK(s.test.size() == 10);

  std::map<std::string, int> counts;
  for (const auto& ex : examples) ++counts[ex.id];
  for (const auto& ex : s.train) --counts[ex.id];
  for (const auto& ex : s.validation) --counts[ex.id];
  for (const auto& ex : s.test) --counts[ex.id];
  for (const auto& [id, c] : counts) CHECK(c == 0);
}

TEST_CASE("splitting respects ratios within one example") {
  auto examples = testutil::synthetic_examples(10, 4);
  DatasetSplit s = split_dataset(examples, {0.7, 0.15, 0.15}, 1);
  CHECK(s.train.size() + s.validation.size() + s.test.size() == 10);
  CHECK(std::abs(static_cast<double>(s.train.size()) - 7.0) < 1.0);
  CHECK(std::abs(static_cast<double>(s.validation.size()) - 1.5) < 1.0);
  CHECK(std::abs(static_cast<double>(s.test.size()) - 1.5) < 1.0);
}

TEST_CASE("splitting is seeded and deterministic") {
  auto examples = testutil::synthetic_examples(30, 5);
  DatasetSplit a = split_dataset(examples, {0.5, 0.25, 0.25}, 7);
  DatasetSplit b = split_dataset(examples, {0.5, 0.25, 0.25}, 7);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);

  DatasetSplit c = split_dataset(examples, {0.5, 0.25, 0.25}, 8);
  bool any_difference = c.train.size() != a.train.size();
  for (size_t i = 0; !any_difference && i < a.train.size(); ++i) {
    any_difference = a.train[i].id != c.train[i].id;
  }
  CHECK(any_difference);
}

TEST_CASE("split ratio validation") {
  auto examples = testutil::synthetic_examples(4, 6);
  CHECK(error_code([&] { split_dataset(examples, {0.5, 0.5, 0.5}, 1); }) == "BadRatios");
  CHECK(error_code([&] { split_dataset(examples, {1.2, -0.2, 0.0}, 1); }) == "BadRatios");
  CHECK(error_code([&] { split_dataset(examples, {1.0, 0.0, 0.0}, 1); }) == "<no-throw>");
}
