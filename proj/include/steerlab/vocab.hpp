#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace steerlab {

// Token <-> id maps with reserved special tokens. Every digit character is a
// token of its own so numbers are spelled digit by digit.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kMask = 3;
  static constexpr int kBos = 4;
  static constexpr int kEos = 5;
  static constexpr int kDigit0 = 6;  // ids 6..15 are digits 0..9
  static constexpr int kDot = 16;    // decimal point

  Vocabulary();

  int add(const std::string& token);  // returns existing id if present
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  int id(const std::string& token) const;  // throws on unknown token
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  static bool is_digit_id(int id) { return id >= kDigit0 && id < kDigit0 + 10; }
  static int digit_id(int value) { return kDigit0 + value; }
  static int digit_value(int id) { return id - kDigit0; }

  const std::vector<std::string>& tokens() const { return tokens_; }
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace steerlab
