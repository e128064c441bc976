#include "steerlab/tokenizer.hpp"

#include <cctype>
#include <stdexcept>

namespace steerlab {

namespace {

bool is_digit_char(char c) { return c >= '0' && c <= '9'; }

// Drops thousands separators: a comma with digits on both sides carries no
// value once numbers are spelled digit by digit.
std::string strip_digit_separators(const std::string& word) {
  std::string out;
  out.reserve(word.size());
  for (size_t i = 0; i < word.size(); ++i) {
    if (word[i] == ',' && i > 0 && i + 1 < word.size() && is_digit_char(word[i - 1]) &&
        is_digit_char(word[i + 1])) {
      continue;
    }
    out.push_back(word[i]);
  }
  return out;
}

}  // namespace

int TokenizedInput::sentence_of_token(int p) const {
  for (size_t s = 0; s < sentence_token_ranges.size(); ++s) {
    if (p >= sentence_token_ranges[s].first && p <= sentence_token_ranges[s].second)
      return static_cast<int>(s);
  }
  return -1;
}

std::vector<std::string> Tokenizer::split_surface(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    const std::string word = strip_digit_separators(text.substr(i, j - i));
    i = j;
    size_t k = 0;
    while (k < word.size()) {
      const char c = word[k];
      if (is_digit_char(c)) {
        out.emplace_back(1, c);
        ++k;
      } else if (c == '.' && k > 0 && k + 1 < word.size() && is_digit_char(word[k - 1]) &&
                 is_digit_char(word[k + 1])) {
        out.emplace_back(1, c);  // decimal point
        ++k;
      } else if (std::isalpha(static_cast<unsigned char>(c))) {
        size_t e = k;
        while (e < word.size() && (std::isalpha(static_cast<unsigned char>(word[e])) || word[e] == '\'')) ++e;
        out.emplace_back(word.substr(k, e - k));
        k = e;
      } else {
        out.emplace_back(1, c);  // punctuation, one token per character
        ++k;
      }
    }
  }
  return out;
}

TokenizedInput Tokenizer::encode(const std::vector<std::string>& sentences, const std::string& question) const {
  if (sentences.empty() && question.empty())
    throw std::invalid_argument("Tokenizer::encode: empty input");

  TokenizedInput out;
  auto push = [&](int id, bool is_question_word) {
    out.token_ids.push_back(id);
    out.digit_mask.push_back(Vocabulary::is_digit_id(id));
    out.question_token_mask.push_back(is_question_word);
  };

  auto push_sentence = [&](const std::string& text, bool is_question) {
    const int cls_pos = static_cast<int>(out.token_ids.size());
    push(Vocabulary::kCls, false);
    for (const auto& tok : split_surface(text)) push(vocab_->id(tok), is_question);
    push(Vocabulary::kSep, false);
    return cls_pos;
  };

  if (!question.empty()) out.question_cls_position = push_sentence(question, true);
  for (const auto& s : sentences) {
    const int cls = static_cast<int>(out.token_ids.size());
    push_sentence(s, false);
    out.sentence_cls_positions.push_back(cls);
    out.sentence_token_ranges.emplace_back(cls, static_cast<int>(out.token_ids.size()) - 1);
  }

  if (out.n() > max_tokens_) {
    throw std::length_error("input of " + std::to_string(out.n()) + " tokens exceeds the limit of " +
                            std::to_string(max_tokens_));
  }
  return out;
}

std::string Tokenizer::detokenize(const std::vector<int>& ids, int begin, int end) const {
  std::string out;
  bool prev_numeric = false;
  for (int p = begin; p < end; ++p) {
    const int id = ids[static_cast<size_t>(p)];
    const bool numeric = Vocabulary::is_digit_id(id) || id == Vocabulary::kDot;
    const std::string& tok = vocab_->token(id);
    if (!out.empty() && !(numeric && prev_numeric)) out += " ";
    out += tok;
    prev_numeric = numeric;
  }
  return out;
}

void collect_vocabulary(const std::vector<Example>& examples, Vocabulary& vocab) {
  auto collect = [&vocab](const std::string& text) {
    for (const auto& tok : Tokenizer::split_surface(text)) vocab.add(tok);
  };
  for (const auto& e : examples) {
    for (const auto& s : e.sentences) collect(s);
    if (!e.question.empty()) collect(e.question);
    for (const auto& s : e.answer.spans) collect(s);
  }
}

}  // namespace steerlab
