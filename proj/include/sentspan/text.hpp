#pragma once

#include <string>
#include <vector>

namespace sentspan::text {

/// Lowercased word/punctuation tokens of a piece of text.
///
/// Runs of ASCII alphanumerics (plus any non-ASCII bytes, so multibyte
/// UTF-8 sequences stay glued together) form word tokens; ASCII letters are
/// lowercased. Every other printable character becomes its own single-char
/// token. Whitespace only separates.
std::vector<std::string> tokenize_words(const std::string& s);

/// tokenize_words joined with single spaces.
std::string normalize(const std::string& s);

std::string to_lower(const std::string& s);

std::string trim(const std::string& s);

/// Trim plus inner whitespace runs collapsed to a single space.
std::string collapse_whitespace(const std::string& s);

std::vector<std::string> split_whitespace(const std::string& s);

}  // namespace sentspan::text
