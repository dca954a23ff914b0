#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "sentspan/rng.hpp"
#include "sentspan/text.hpp"
#include "sentspan/tokenizer.hpp"
#include "testutil.hpp"

using namespace sentspan;
using testutil::error_code;

namespace {

std::vector<std::string> sv(std::initializer_list<const char*> parts) {
  return {parts.begin(), parts.end()};
}

}  // namespace

TEST_CASE("word splitting lowercases and isolates punctuation") {
  CHECK(text::tokenize_words("Sooo SAD") == sv({"sooo", "sad"}));
  CHECK(text::tokenize_words("bullying me...") == sv({"bullying", "me", ".", ".", "."}));
  CHECK(text::tokenize_words("don't") == sv({"don", "'", "t"}));
  CHECK(text::tokenize_words("=P") == sv({"=", "p"}));
  CHECK(text::tokenize_words("2am feedings!") == sv({"2am", "feedings", "!"}));
  CHECK(text::tokenize_words("  spaced\tout \r\n") == sv({"spaced", "out"}));
  CHECK(text::tokenize_words("").empty());
  CHECK(text::tokenize_words(" \t ").empty());
}

TEST_CASE("multibyte sequences stay glued together") {
  CHECK(text::tokenize_words("caf\xC3\xA9 rocks") == sv({"caf\xC3\xA9", "rocks"}));
}

TEST_CASE("string helpers") {
  CHECK(text::normalize("I  love\tthis!") == "i love this !");
  CHECK(text::to_lower("AbC!") == "abc!");
  CHECK(text::trim("  a b  ") == "a b");
  CHECK(text::trim("") == "");
  CHECK(text::collapse_whitespace("  a \t b\n c ") == "a b c");
  CHECK(text::split_whitespace(" one  two ") == sv({"one", "two"}));
  CHECK(text::split_whitespace("").empty());
}

TEST_CASE("vocab reserves the first five ids for the special tokens") {
  Vocab v = build_vocab({"a b", "b c"}, 16);
  REQUIRE(v.size() == 8);
  CHECK(v.id_to_token[0] == "<s>");
  CHECK(v.id_to_token[1] == "<pad>");
  CHECK(v.id_to_token[2] == "</s>");
  CHECK(v.id_to_token[3] == "<unk>");
  CHECK(v.id_to_token[4] == "<nl>");
  // "b" is the most frequent content token, so it takes the first free id.
  CHECK(v.lookup("b") == 5);
  // "a" and "c" tie on frequency; the tie breaks alphabetically.
  CHECK(v.lookup("a") == 6);
  CHECK(v.lookup("c") == 7);
  CHECK(v.lookup("zzz") == Vocab::kUnk);
}

TEST_CASE("vocab construction is deterministic and size-capped") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 20; ++i) {
    std::string word = "w" + std::to_string(i);
    // w0 appears 20 times, w1 19 times, ...
    for (int k = 0; k < 20 - i; ++k) corpus.push_back(word);
  }
  Vocab a = build_vocab(corpus, 16);
  Vocab b = build_vocab(corpus, 16);
  CHECK(a.id_to_token == b.id_to_token);
  CHECK(a.size() == 16);
  CHECK(a.lookup("w0") == 5);
  CHECK(a.lookup("w10") == 15);
  CHECK(a.lookup("w11") == Vocab::kUnk);  // truncated away

  CHECK(build_vocab({}, 16).size() == Vocab::kNumSpecials);
  CHECK(error_code([] { build_vocab({"a"}, 15); }) == "VocabTooSmall");
}

TEST_CASE("special-token strings never collide with content ids") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> corpus;
    for (int s = 0; s < 10; ++s) {
      std::string sentence;
      for (int w = 0; w < 6; ++w) {
        sentence += "tok" + std::to_string(rng.next_below(30)) + " ";
      }
      corpus.push_back(sentence);
    }
    Vocab v = build_vocab(corpus, 64);
    for (int id = Vocab::kNumSpecials; id < v.size(); ++id) {
      const std::string& tok = v.id_to_token[static_cast<size_t>(id)];
      CHECK(tok != "<s>");
      CHECK(tok != "<pad>");
      CHECK(tok != "</s>");
      CHECK(tok != "<unk>");
      CHECK(tok != "<nl>");
    }
  }
}

TEST_CASE("encode wraps content in sequence markers") {
  Vocab v = build_vocab({"a b", "b c"}, 16);
  CHECK(encode(v, "") == TokenSequence{Vocab::kBos, Vocab::kEos});
  CHECK(encode(v, "a b") == TokenSequence{Vocab::kBos, 6, 5, Vocab::kEos});
  CHECK(encode(v, "b zzz") == TokenSequence{Vocab::kBos, 5, Vocab::kUnk, Vocab::kEos});
  CHECK(encode(v, "a\nb") == TokenSequence{Vocab::kBos, 6, Vocab::kNewline, 5, Vocab::kEos});
}

TEST_CASE("embedded separator markers become real special ids") {
  Vocab v = build_vocab({"x y"}, 16);
  const int x = v.lookup("x");
  const int y = v.lookup("y");
  CHECK(encode(v, "x</s><s>y") ==
        TokenSequence{Vocab::kBos, x, Vocab::kEos, Vocab::kBos, y, Vocab::kEos});
}

TEST_CASE("an encoded prompt keeps its separator structure") {
  const std::string prompt = "extract: positive</s><s>context: I love this movie!";
  Vocab v = build_vocab({prompt}, 64);
  TokenSequence ids = encode(v, prompt);
  REQUIRE(ids.size() == 14);
  CHECK(ids.front() == Vocab::kBos);
  CHECK(ids[4] == Vocab::kEos);
  CHECK(ids[5] == Vocab::kBos);
  CHECK(ids.back() == Vocab::kEos);
  CHECK(decode(v, ids, true) == "extract : positive context : i love this movie !");
  CHECK(std::count(ids.begin(), ids.end(), Vocab::kPad) == 0);
}

TEST_CASE("decode joins tokens and optionally hides specials") {
  Vocab v = build_vocab({"a b"}, 16);
  const int a = v.lookup("a");
  CHECK(decode(v, {Vocab::kBos, a, Vocab::kEos}, true) == "a");
  CHECK(decode(v, {Vocab::kBos, Vocab::kEos}, true) == "");
  CHECK(decode(v, {Vocab::kBos, a, Vocab::kEos}, false) == "<s> a </s>");
  // <unk> is content-bearing, so it survives the skip.
  CHECK(decode(v, {Vocab::kBos, Vocab::kUnk, Vocab::kEos}, true) == "<unk>");
  CHECK(error_code([&] { decode(v, {v.size()}, true); }) == "IdOutOfRange");
  CHECK(error_code([&] { decode(v, {-1}, true); }) == "IdOutOfRange");
}

TEST_CASE("encode and decode round-trip normalized in-vocab text") {
  std::vector<std::string> corpus = {"red green blue small large tiny quick slow ! ."};
  Vocab v = build_vocab(corpus, 64);
  std::vector<std::string> words = {"red",  "green", "blue", "small", "large",
                                    "tiny", "quick", "slow", "!",     "."};
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::string sentence;
    const int len = 1 + static_cast<int>(rng.next_below(8));
    for (int w = 0; w < len; ++w) {
      if (w) sentence += ' ';
      sentence += words[rng.next_below(words.size())];
    }
    TokenSequence ids = encode(v, sentence);
    CHECK(std::count(ids.begin(), ids.end(), Vocab::kPad) == 0);
    CHECK(decode(v, ids, true) == text::normalize(sentence));
  }
}

TEST_CASE("vocab files persist ids in order") {
  Vocab v = build_vocab({"hello world world"}, 16);
  const std::string dir = testutil::fresh_dir("vocab");
  save_vocab(v, dir + "/vocab.txt");
  Vocab loaded = load_vocab(dir + "/vocab.txt");
  CHECK(loaded.id_to_token == v.id_to_token);
  CHECK(loaded.lookup("world") == v.lookup("world"));

  CHECK(error_code([&] { load_vocab(dir + "/missing.txt"); }) == "IoError");

  testutil::write_file(dir + "/dup.txt", "<s>\n<pad>\n</s>\n<unk>\n<nl>\nfoo\nfoo\n");
  CHECK(error_code([&] { load_vocab(dir + "/dup.txt"); }) == "ParseError");

  testutil::write_file(dir + "/short.txt", "<s>\n<pad>\n");
  CHECK(error_code([&] { load_vocab(dir + "/short.txt"); }) == "ParseError");

  testutil::write_file(dir + "/wrong.txt", "<pad>\n<s>\n</s>\n<unk>\n<nl>\n");
  CHECK(error_code([&] { load_vocab(dir + "/wrong.txt"); }) == "ParseError");

  testutil::write_file(dir + "/hole.txt", "<s>\n<pad>\n</s>\n<unk>\n<nl>\nfoo\n\nbar\n");
  CHECK(error_code([&] { load_vocab(dir + "/hole.txt"); }) == "ParseError");
}
