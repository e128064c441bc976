#include "steerlab/vocab.hpp"

#include <stdexcept>

namespace steerlab {

Vocabulary::Vocabulary() {
  const char* specials[] = {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[BOS]", "[EOS]"};
  for (const char* s : specials) add(s);
  for (int d = 0; d < 10; ++d) add(std::string(1, static_cast<char>('0' + d)));
  add(".");
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw std::out_of_range("token not in vocabulary: '" + token + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  if (tokens.size() < static_cast<size_t>(v.size()))
    throw std::invalid_argument("vocabulary payload shorter than the reserved prefix");
  for (int i = 0; i < v.size(); ++i) {
    if (tokens[static_cast<size_t>(i)] != v.tokens_[static_cast<size_t>(i)])
      throw std::invalid_argument("vocabulary payload does not start with the reserved tokens");
  }
  for (size_t i = static_cast<size_t>(v.size()); i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

}  // namespace steerlab
