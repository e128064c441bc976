#pragma once

#include <string>
#include <utility>
#include <vector>

#include "steerlab/example.hpp"
#include "steerlab/vocab.hpp"

namespace steerlab {

// Token-level view of one model input: the question (when present) followed by
// the context sentences, each framed as [CLS] ... [SEP].
struct TokenizedInput {
  std::vector<int> token_ids;
  std::vector<bool> digit_mask;  // true at single-digit tokens
  // One entry per context sentence, aligned with Example::sentences.
  std::vector<int> sentence_cls_positions;
  // Inclusive token ranges [CLS]..[SEP] per context sentence.
  std::vector<std::pair<int, int>> sentence_token_ranges;
  int question_cls_position = -1;  // -1 when there is no question
  // True on the question's word tokens (not on its [CLS]/[SEP] framing).
  std::vector<bool> question_token_mask;

  int n() const { return static_cast<int>(token_ids.size()); }
  bool has_question() const { return question_cls_position >= 0; }
  // Index of the context sentence containing token position p, or -1.
  int sentence_of_token(int p) const;
};

class Tokenizer {
 public:
  Tokenizer(const Vocabulary* vocab, int max_tokens) : vocab_(vocab), max_tokens_(max_tokens) {}

  // Splits text into surface tokens: numerals become single-digit tokens
  // (thousands separators stripped, decimal point kept as its own token),
  // words split on whitespace, other punctuation split off per character.
  static std::vector<std::string> split_surface(const std::string& text);

  // Frames each sentence as [CLS] ... [SEP]; a nonempty question becomes the
  // leading sentence and has its word tokens flagged. Throws on empty input,
  // unknown tokens and inputs longer than max_tokens (no silent truncation).
  TokenizedInput encode(const std::vector<std::string>& sentences, const std::string& question) const;
  TokenizedInput encode(const Example& e) const { return encode(e.sentences, e.question); }

  // Inverse rendering: adjacent digit/point tokens are concatenated, words
  // joined with single spaces.
  std::string detokenize(const std::vector<int>& ids, int begin, int end) const;

  const Vocabulary& vocab() const { return *vocab_; }
  int max_tokens() const { return max_tokens_; }

 private:
  const Vocabulary* vocab_;
  int max_tokens_;
};

// Registers every surface token of the given examples (sentences, questions
// and span answers) into the vocabulary.
void collect_vocabulary(const std::vector<Example>& examples, Vocabulary& vocab);

}  // namespace steerlab
