#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/action.hpp"
#include "gendp/corpus/corpus.hpp"
#include "gendp/kb.hpp"

namespace gendp {

inline constexpr const char* kDefaultTemplateKey = "<default>";
inline constexpr const char* kDefaultSurface = "i am sorry , could you please rephrase that ?";
inline constexpr std::string_view kPlaceholderSuffix = "_slot";

struct Template {
  std::string key;      // action_key of the canonical action, or <default>
  std::string surface;  // space-separated tokens with <slot>_slot placeholders
};

inline bool is_placeholder(const std::string& tok) {
  return tok.size() > kPlaceholderSuffix.size() && tok.ends_with(kPlaceholderSuffix);
}

inline std::string placeholder_slot(const std::string& tok) {
  return tok.substr(0, tok.size() - kPlaceholderSuffix.size());
}

// Placeholders in `surface` that are not value tokens of the key.
inline std::vector<std::string> missing_placeholders(const Template& t) {
  std::set<std::string> values;
  for (const auto& tok : tokenize(t.key)) values.insert(tok);
  std::vector<std::string> out;
  for (const auto& tok : tokenize(t.surface))
    if (is_placeholder(tok) && !values.count(tok)) out.push_back(tok);
  return out;
}

class TemplateBank {
 public:
  TemplateBank() { by_key_[kDefaultTemplateKey] = kDefaultSurface; }

  // Most frequent delexicalized gold response per gold action key; ties go
  // to the lexicographically smallest surface. Surfaces that mention a
  // placeholder absent from the key are skipped when any valid one exists.
  static TemplateBank build(const Corpus& train) {
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    for (const auto& d : train.dialogues)
      for (const auto& t : d.turns) ++counts[t.gold_response_template_id][join(t.gold_response)];
    TemplateBank bank;
    for (const auto& [key, surfaces] : counts) {
      const std::string* best = nullptr;
      std::size_t best_n = 0;
      bool best_valid = false;
      for (const auto& [surface, n] : surfaces) {
        bool valid = missing_placeholders({key, surface}).empty();
        if (!best || (valid && !best_valid) || (valid == best_valid && n > best_n)) {
          best = &surface;
          best_n = n;
          best_valid = valid;
        }
      }
      bank.by_key_[key] = *best;
    }
    return bank;
  }

  static TemplateBank from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("template bank must be a JSON array of {key, surface}", 0);
    TemplateBank bank;
    bank.merge(j);
    return bank;
  }

  // Entries replace existing ones with the same key.
  void merge(const nlohmann::json& j) {
    for (const auto& e : j) {
      Template t{e.at("key").get<std::string>(), join(tokenize(e.at("surface").get<std::string>()))};
      if (t.key != kDefaultTemplateKey) t.key = join(tokenize(t.key));
      by_key_[t.key] = t.surface;
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [k, s] : by_key_) out.push_back({{"key", k}, {"surface", s}});
    return out;
  }

  std::size_t size() const { return by_key_.size(); }
  bool contains(const std::string& key) const { return by_key_.count(key) > 0; }
  Template default_template() const { return {kDefaultTemplateKey, by_key_.at(kDefaultTemplateKey)}; }

  std::vector<Template> templates() const {
    std::vector<Template> out;
    for (const auto& [k, s] : by_key_) out.push_back({k, s});
    return out;
  }

  // Exact canonical key, else the key sharing the longest prefix of
  // compatible act items (closest length, then smallest key), else default.
  // An item is compatible when acts agree and any slot/value the candidate
  // carries agrees; act-only candidates thus match parameterized keys.
  Template select(const DialogueAction& action, const Lexicon& lexicon) const {
    auto canon = canonicalize(action);
    const std::string key = action_key(canon);
    if (auto it = by_key_.find(key); it != by_key_.end()) return {key, it->second};

    const Template* best = nullptr;
    std::size_t best_prefix = 0, best_gap = 0;
    std::vector<Template> all = templates();
    for (const auto& t : all) {
      if (t.key == kDefaultTemplateKey) continue;
      std::vector<std::string> toks = tokenize(t.key);
      toks.emplace_back(kEosActionToken);
      const auto items = deserialize_action(toks, lexicon).action.items;
      std::size_t prefix = 0;
      while (prefix < items.size() && prefix < canon.items.size() && compatible(canon.items[prefix], items[prefix])) ++prefix;
      if (prefix == 0) continue;
      const std::size_t gap = items.size() > canon.items.size() ? items.size() - canon.items.size()
                                                                : canon.items.size() - items.size();
      if (!best || prefix > best_prefix || (prefix == best_prefix && gap < best_gap)) {
        best = &t;
        best_prefix = prefix;
        best_gap = gap;
      }
    }
    if (best) return *best;
    return default_template();
  }

  Template select(const std::vector<std::string>& action_tokens, const Lexicon& lexicon) const {
    return select(deserialize_action(action_tokens, lexicon).action, lexicon);
  }

  // Keys of gold actions the bank cannot answer exactly.
  std::vector<std::string> missing_keys(const Corpus& corpus) const {
    std::set<std::string> out;
    for (const auto& d : corpus.dialogues)
      for (const auto& t : d.turns)
        if (!by_key_.count(t.gold_response_template_id)) out.insert(t.gold_response_template_id);
    return {out.begin(), out.end()};
  }

 private:
  static bool compatible(const ActItem& cand, const ActItem& key) {
    if (cand.act != key.act) return false;
    if (!cand.slot.empty() && cand.slot != key.slot) return false;
    if (!cand.value.empty() && cand.value != key.value) return false;
    return true;
  }

  std::map<std::string, std::string> by_key_;
};

struct Lexicalized {
  std::string text;
  bool unresolved = false;  // some placeholder had no value to fill
};

// Fills every <slot>_slot from the first matched record.
inline Lexicalized lexicalize(const std::string& surface, const QueryResult& result) {
  Lexicalized out;
  std::vector<std::string> toks = tokenize(surface);
  for (auto& tok : toks) {
    if (!is_placeholder(tok)) continue;
    if (result.records.empty()) {
      out.unresolved = true;
      continue;
    }
    const auto& rec = result.records.front();
    auto it = rec.find(placeholder_slot(tok));
    if (it == rec.end()) {
      out.unresolved = true;
      continue;
    }
    tok = it->second;
  }
  out.text = join(toks);
  return out;
}

// Joins tokens for display, attaching punctuation to the previous word.
inline std::string detokenize(const std::string& text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    const bool punct = tok.size() == 1 && std::string(",.?!;:").find(tok[0]) != std::string::npos;
    if (!out.empty() && !punct) out += ' ';
    out += tok;
  }
  return out;
}

}  // namespace gendp
