#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace macrt {

// ---------------------------------------------------------------------------
// UTF-8 primitives. A "character" throughout this library is one Unicode
// scalar value. Invalid UTF-8 (overlong forms, surrogates, truncated
// sequences) is rejected with ContractViolation.
// ---------------------------------------------------------------------------

std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view scalars);
void append_utf8(std::string& out, char32_t scalar);

bool is_valid_utf8(std::string_view text) noexcept;

// Number of scalar values, never the byte length.
std::size_t scalar_count(std::string_view text);

// Scalar values at positions [start, end). Throws ContractViolation unless
// start <= end <= scalar_count(text).
std::string char_slice(std::string_view text, std::size_t start, std::size_t end);

// Simple one-to-one lowercase mapping for ASCII, Latin-1, Latin Extended-A,
// Greek and Cyrillic. Other scalars pass through unchanged.
char32_t lower_scalar(char32_t c) noexcept;
std::string to_lower(std::string_view text);

bool is_space_scalar(char32_t c) noexcept;
bool is_punct_scalar(char32_t c) noexcept;

// ---------------------------------------------------------------------------
// Prompt model
// ---------------------------------------------------------------------------

// One whitespace-delimited token. `text` is the token with leading and
// trailing punctuation detached into `prefix` / `suffix`.
struct Word {
  std::string text;
  std::size_t char_len = 0;
  std::string prefix;
  std::string suffix;

  std::string token() const { return prefix + text + suffix; }
};

Word make_word(std::string_view text);

struct SimilarityHit {
  std::string concept_label;
  double score = 0.0;

  bool operator==(const SimilarityHit&) const = default;
};

// Why a word position was flagged. Both rules may fire on the same word.
struct SensitiveMark {
  std::size_t index = 0;
  bool blacklist = false;
  std::optional<SimilarityHit> similarity;

  bool operator==(const SensitiveMark&) const = default;
};

// Immutable tokenized prompt. `separators()` holds the whitespace runs around
// the words (size words+1) so that render() reproduces raw() byte for byte.
class Prompt {
 public:
  Prompt() : separators_(1) {}

  const std::string& raw() const noexcept { return raw_; }
  const std::vector<Word>& words() const noexcept { return words_; }
  const std::vector<std::string>& separators() const noexcept { return separators_; }
  const std::vector<SensitiveMark>& sensitive() const noexcept { return sensitive_; }
  std::vector<std::size_t> sensitive_indices() const;

  // Returns a copy carrying the given marks. Indices must be valid word
  // positions, strictly increasing.
  Prompt with_sensitive(std::vector<SensitiveMark> marks) const;

  std::string render() const;

 private:
  friend Prompt tokenize(std::string_view raw);

  std::string raw_;
  std::vector<Word> words_;
  std::vector<std::string> separators_;
  std::vector<SensitiveMark> sensitive_;
};

// Splits on whitespace into maximal non-whitespace runs. Empty or all-space
// input yields no words.
Prompt tokenize(std::string_view raw);

std::string char_slice(const Word& word, std::size_t start, std::size_t end);

// A prompt with some of its words replaced. `removed` lists positions whose
// substitute was empty and were therefore dropped from `rendered`.
struct AdversarialPrompt {
  Prompt base;
  std::vector<std::pair<std::size_t, std::string>> substitutes;
  std::string rendered;
  std::vector<std::size_t> removed;
};

}  // namespace macrt
