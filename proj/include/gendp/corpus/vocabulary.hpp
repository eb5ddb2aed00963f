#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/error.hpp"

namespace gendp {

enum ReservedToken : std::size_t { kPad = 0, kUnk = 1, kSos = 2, kEosBelief = 3, kEosAction = 4 };
inline constexpr std::size_t kNumReserved = 5;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kSosToken = "<sos>";
inline constexpr const char* kEosBeliefToken = "<eos_b>";
inline constexpr const char* kEosActionToken = "<eos_a>";

// Shared token inventory for utterances, beliefs and actions. Ids 0..4 are
// the reserved markers; the rest follow descending train frequency with
// lexicographic tie-breaks.
class Vocabulary {
 public:
  Vocabulary() {
    for (const char* t : {kPadToken, kUnkToken, kSosToken, kEosBeliefToken, kEosActionToken}) append(t);
  }

  static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts, std::size_t max_size = 0) {
    std::vector<std::pair<std::string, std::size_t>> items;
    for (const auto& [tok, n] : counts) {
      if (is_reserved(tok)) continue;
      items.emplace_back(tok, n);
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
    Vocabulary v;
    for (const auto& [tok, n] : items) {
      if (max_size && v.size() >= max_size) break;
      v.append(tok);
    }
    return v;
  }

  static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary v;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i < kNumReserved) {
        if (tokens[i] != v.tokens_[i]) throw VocabError("vocabulary must start with the reserved tokens");
        continue;
      }
      if (v.ids_.count(tokens[i])) throw VocabError("duplicate vocabulary token '" + tokens[i] + "'");
      v.append(tokens[i]);
    }
    return v;
  }

  static bool is_reserved(const std::string& tok) {
    return tok == kPadToken || tok == kUnkToken || tok == kSosToken || tok == kEosBeliefToken ||
           tok == kEosActionToken;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  bool contains(const std::string& tok) const { return ids_.count(tok) > 0; }

  // Unseen tokens map to <unk>.
  std::size_t id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }

  std::vector<std::size_t> ids(const std::vector<std::string>& toks) const {
    std::vector<std::size_t> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  const std::string& token(std::size_t id) const {
    if (id >= tokens_.size()) throw VocabError("token id " + std::to_string(id) + " out of range");
    return tokens_[id];
  }

  std::vector<std::string> tokens(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(token(i));
    return out;
  }

  const std::vector<std::string>& all_tokens() const noexcept { return tokens_; }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  void append(const std::string& tok) {
    ids_.emplace(tok, tokens_.size());
    tokens_.push_back(tok);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace gendp
