#pragma once

#include <algorithm>
#include <compare>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gendp/corpus/tokenize.hpp"
#include "gendp/corpus/vocabulary.hpp"
#include "gendp/error.hpp"

namespace gendp {

// One act with an optional (slot, value) parameter, e.g. offer(name=name_slot).
struct ActItem {
  std::string act;
  std::string slot;
  std::string value;

  auto operator<=>(const ActItem&) const = default;

  void validate() const {
    if (act.empty()) throw Error("act item has an empty act label");
    if (!value.empty() && slot.empty()) throw Error("act item '" + act + "' has a value without a slot");
  }
};

struct DialogueAction {
  std::vector<ActItem> items;

  bool operator==(const DialogueAction&) const = default;
  bool empty() const noexcept { return items.empty(); }
};

// Act labels and slot names seen in gold actions.
struct Lexicon {
  std::set<std::string> acts;
  std::set<std::string> slots;

  bool is_act(const std::string& tok) const { return acts.count(tok) > 0; }
};

inline DialogueAction canonicalize(DialogueAction a) {
  std::sort(a.items.begin(), a.items.end());
  return a;
}

// Canonical order (act, slot, value), one [act, slot?, value?] group per
// item, terminated by <eos_a>.
inline std::vector<std::string> serialize_action(const DialogueAction& action) {
  auto canon = canonicalize(action);
  std::vector<std::string> out;
  for (const auto& item : canon.items) {
    item.validate();
    out.push_back(item.act);
    if (!item.slot.empty()) out.push_back(item.slot);
    if (!item.value.empty()) out.push_back(item.value);
  }
  out.emplace_back(kEosActionToken);
  return out;
}

// Space-joined serialization without the terminator; the template-bank key.
inline std::string action_key(const DialogueAction& action) {
  auto toks = serialize_action(action);
  toks.pop_back();
  return join(toks);
}

struct ParsedAction {
  DialogueAction action;
  bool well_formed = true;
};

// Greedy inverse of serialize_action: an act-lexicon token opens an item, the
// next one or two non-act tokens fill slot and value. Stray tokens and a
// missing terminator clear `well_formed`; the order of items is kept as decoded.
inline ParsedAction deserialize_action(const std::vector<std::string>& tokens, const Lexicon& lexicon) {
  ParsedAction out;
  bool terminated = false;
  ActItem* current = nullptr;
  for (const auto& tok : tokens) {
    if (tok == kEosActionToken) {
      terminated = true;
      break;
    }
    if (Vocabulary::is_reserved(tok)) {
      out.well_formed = false;
      continue;
    }
    if (lexicon.is_act(tok)) {
      out.action.items.push_back({tok, "", ""});
      current = &out.action.items.back();
    } else if (current && current->slot.empty()) {
      current->slot = tok;
    } else if (current && current->value.empty()) {
      current->value = tok;
    } else {
      out.well_formed = false;
    }
  }
  if (!terminated) out.well_formed = false;
  return out;
}

struct BeliefState {
  std::vector<std::string> tokens;

  bool operator==(const BeliefState&) const = default;
  bool empty() const noexcept { return tokens.empty(); }
};

// Drops duplicates, keeping first-mention order.
inline BeliefState canonicalize(BeliefState b) {
  std::vector<std::string> out;
  for (auto& t : b.tokens) {
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
  }
  return {std::move(out)};
}

inline std::vector<std::string> serialize_belief(const BeliefState& belief) {
  auto out = canonicalize(belief).tokens;
  out.emplace_back(kEosBeliefToken);
  return out;
}

inline BeliefState deserialize_belief(const std::vector<std::string>& tokens) {
  BeliefState b;
  for (const auto& t : tokens) {
    if (t == kEosBeliefToken) break;
    if (Vocabulary::is_reserved(t)) continue;
    b.tokens.push_back(t);
  }
  return canonicalize(std::move(b));
}

}  // namespace gendp
