#include "congen/vocab.hpp"

#include <stdexcept>

namespace congen {

namespace {
const char* kReserved[] = {"<pad>", "<cls>", "<null>", "<stop>",
                           "<slot-end>", "<unk>", "<bos>", "<eos>"};
}

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) {
    index_[r] = static_cast<int>(tokens_.size());
    tokens_.push_back(r);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) {
    if (it->second < kReservedCount) {
      throw std::runtime_error("token collides with reserved symbol: " + token);
    }
    return it->second;
  }
  const int id = static_cast<int>(tokens_.size());
  index_[token] = id;
  tokens_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[id];
}

std::vector<int> Vocabulary::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::user_tokens() const {
  return {tokens_.begin() + kReservedCount, tokens_.end()};
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& user_tokens) {
  Vocabulary v;
  for (const auto& t : user_tokens) v.add(t);
  return v;
}

}  // namespace congen
