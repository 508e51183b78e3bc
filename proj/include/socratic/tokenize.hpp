#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace socratic {

// Word-level tokenizer shared by the metric side and the policy model:
// lowercase, split on whitespace, every punctuation character becomes a
// standalone token. Deterministic and idempotent under re-joining with
// single spaces. Bytes outside ASCII are kept as-is inside word tokens.
std::vector<std::string> tokenize(std::string_view text);

// Tokens joined with single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace socratic
