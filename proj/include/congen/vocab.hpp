#ifndef CONGEN_VOCAB_HPP
#define CONGEN_VOCAB_HPP

#include <string>
#include <unordered_map>
#include <vector>

namespace congen {

// Token <-> id bijection with a fixed block of reserved ids. Reserved
// surface forms are never produced by tokenization; add() rejects them.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kNull = 2;
  static constexpr int kStop = 3;
  static constexpr int kSlotEnd = 4;
  static constexpr int kUnk = 5;
  static constexpr int kBos = 6;
  static constexpr int kEos = 7;
  static constexpr int kReservedCount = 8;

  Vocabulary();

  int add(const std::string& token);
  // kUnk for tokens not present
  int id(const std::string& token) const;
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<int> ids(const std::vector<std::string>& tokens) const;

  // tokens after the reserved block, in id order
  std::vector<std::string> user_tokens() const;
  static Vocabulary from_tokens(const std::vector<std::string>& user_tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace congen

#endif  // CONGEN_VOCAB_HPP
