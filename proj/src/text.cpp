#include "sentspan/text.hpp"

#include <cctype>

namespace sentspan::text {

namespace {

inline bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII alphanumerics and all non-ASCII bytes glue into word tokens.
inline bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize_words(const std::string& s) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : s) {
    if (is_space(c)) {
      flush();
    } else if (is_word_byte(c)) {
      word.push_back(static_cast<char>(std::isupper(c) ? std::tolower(c) : c));
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::string normalize(const std::string& s) {
  std::string out;
  for (const auto& tok : tokenize_words(s)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isupper(u)) c = static_cast<char>(std::tolower(u));
  }
  return out;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool in_space = true;  // swallows leading whitespace
  for (unsigned char c : s) {
    if (is_space(c)) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(static_cast<char>(c));
      in_space = false;
    }
  }
  return out;
}

std::vector<std::string> split_whitespace(const std::string& s) {
  std::vector<std::string> out;
  std::string word;
  for (unsigned char c : s) {
    if (is_space(c)) {
      if (!word.empty()) {
        out.push_back(word);
        word.clear();
      }
    } else {
      word.push_back(static_cast<char>(c));
    }
  }
  if (!word.empty()) out.push_back(word);
  return out;
}

}  // namespace sentspan::text
