#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace visnli {

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view text);

// Case-folded tokens split on whitespace; every ASCII punctuation character
// becomes its own token.
std::vector<std::string> tokenize(std::string_view text);

// Like tokenize() but drops punctuation tokens.
std::vector<std::string> word_tokens(std::string_view text);

}  // namespace visnli
