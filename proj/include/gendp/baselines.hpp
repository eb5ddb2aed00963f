#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/corpus.hpp"
#include "gendp/model/gdp.hpp"

namespace gendp {

// Label inventories of the classification heads. Acts and slots are sorted;
// valued_acts lists acts whose slotted items carry a <slot>_slot value in
// most training occurrences (e.g. inform, offer but not request).
struct BaselineLabels {
  std::vector<std::string> acts;
  std::vector<std::string> slots;
  std::set<std::string> valued_acts;

  static BaselineLabels from_corpus(const Corpus& train, const Lexicon& lexicon) {
    BaselineLabels l;
    l.acts.assign(lexicon.acts.begin(), lexicon.acts.end());
    l.slots.assign(lexicon.slots.begin(), lexicon.slots.end());
    std::map<std::string, std::pair<std::size_t, std::size_t>> votes;  // act -> (with value, without)
    for (const auto& d : train.dialogues)
      for (const auto& t : d.turns)
        for (const auto& it : t.gold_action.items)
          if (!it.slot.empty()) ++(it.value.empty() ? votes[it.act].second : votes[it.act].first);
    for (const auto& [act, v] : votes)
      if (v.first > v.second) l.valued_acts.insert(act);
    return l;
  }

  std::optional<std::size_t> act_index(const std::string& a) const {
    auto it = std::lower_bound(acts.begin(), acts.end(), a);
    if (it == acts.end() || *it != a) return std::nullopt;
    return static_cast<std::size_t>(it - acts.begin());
  }
  std::optional<std::size_t> slot_index(const std::string& s) const {
    auto it = std::lower_bound(slots.begin(), slots.end(), s);
    if (it == slots.end() || *it != s) return std::nullopt;
    return static_cast<std::size_t>(it - slots.begin());
  }

  nlohmann::json to_json() const {
    return {{"acts", acts}, {"slots", slots}, {"valued_acts", std::vector<std::string>(valued_acts.begin(), valued_acts.end())}};
  }
  static BaselineLabels from_json(const nlohmann::json& j) {
    BaselineLabels l;
    l.acts = j.at("acts").get<std::vector<std::string>>();
    l.slots = j.at("slots").get<std::vector<std::string>>();
    for (const auto& a : j.at("valued_acts")) l.valued_acts.insert(a.get<std::string>());
    return l;
  }
};

// -log σ(x) for y=1, -log(1-σ(x)) for y=0, through a stable 2-way softmax.
template <typename T>
Var<T> binary_cross_entropy(Var<T> logit, bool positive) {
  auto& tape = *logit.tape;
  auto pair = concat(std::vector<Var<T>>{tape.constant({1}, {T(0)}), logit});
  return cross_entropy(softmax(pair), positive ? 1 : 0);
}

// ---------------------------------------------------------------------------
// E2ECM: independent sigmoid per act, no parameters.

template <typename T>
Var<T> e2ecm_logits(Tape<T>& tape, GdpParams<T>& p, Var<T> features) {
  return matmul(features, tape.param(p.e2ecm_w)) + tape.param(p.e2ecm_b);
}

// Acts scoring at or above the threshold, as bare (parameterless) items.
inline DialogueAction e2ecm_predict(std::span<const double> scores, const BaselineLabels& labels,
                                    double threshold = 0.5) {
  DialogueAction out;
  for (std::size_t i = 0; i < labels.acts.size() && i < scores.size(); ++i)
    if (scores[i] >= threshold) out.items.push_back({labels.acts[i], "", ""});
  return canonicalize(out);
}

template <typename T>
std::vector<double> sigmoid_scores(Var<T> logits) {
  std::vector<double> s;
  for (auto x : logits.value()) {
    const double v = static_cast<double>(x);
    s.push_back(v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)));
  }
  return s;
}

template <typename T>
Var<T> e2ecm_loss(Tape<T>& tape, GdpParams<T>& p, Var<T> features, const DialogueAction& gold,
                  const BaselineLabels& labels) {
  auto logits = e2ecm_logits(tape, p, features);
  std::set<std::string> present;
  for (const auto& it : gold.items) present.insert(it.act);
  std::optional<Var<T>> loss;
  for (std::size_t i = 0; i < labels.acts.size(); ++i) {
    auto l = binary_cross_entropy(pick(logits, i), present.count(labels.acts[i]) > 0);
    loss = loss ? *loss + l : l;
  }
  return *loss;
}

// ---------------------------------------------------------------------------
// CDM: one act, one slot, per-slot presence gates.

template <typename T>
struct CdmOutputs {
  Var<T> act_logits, slot_logits, presence_logits;
};

template <typename T>
CdmOutputs<T> cdm_logits(Tape<T>& tape, GdpParams<T>& p, Var<T> features) {
  return {matmul(features, tape.param(p.cdm_act_w)) + tape.param(p.cdm_act_b),
          matmul(features, tape.param(p.cdm_slot_w)) + tape.param(p.cdm_slot_b),
          matmul(features, tape.param(p.cdm_presence_w)) + tape.param(p.cdm_presence_b)};
}

inline ActItem cdm_compose(std::size_t act, std::size_t slot, double presence, const BaselineLabels& labels,
                           double threshold = 0.5) {
  ActItem item{labels.acts.at(act), "", ""};
  if (presence >= threshold) {
    item.slot = labels.slots.at(slot);
    if (labels.valued_acts.count(item.act)) item.value = item.slot + "_slot";
  }
  return item;
}

template <typename T>
DialogueAction cdm_predict(const CdmOutputs<T>& out, const BaselineLabels& labels, double threshold = 0.5) {
  const auto act = argmax_lowest(out.act_logits.value());
  const auto slot = argmax_lowest(out.slot_logits.value());
  const auto presence = sigmoid_scores(out.presence_logits);
  return DialogueAction{{cdm_compose(act, slot, presence.at(slot), labels, threshold)}};
}

// Supervision is the first canonical gold item; presence(s) is 1 iff s is
// that item's slot.
template <typename T>
Var<T> cdm_loss(Tape<T>& tape, GdpParams<T>& p, Var<T> features, const DialogueAction& gold,
                const BaselineLabels& labels) {
  auto out = cdm_logits(tape, p, features);
  auto canon = canonicalize(gold);
  std::optional<std::size_t> act, slot;
  if (!canon.empty()) {
    act = labels.act_index(canon.items.front().act);
    if (!canon.items.front().slot.empty()) slot = labels.slot_index(canon.items.front().slot);
  }
  std::optional<Var<T>> loss;
  auto add = [&](Var<T> l) { loss = loss ? *loss + l : l; };
  if (act) add(cross_entropy(softmax(out.act_logits), *act));
  if (slot) add(cross_entropy(softmax(out.slot_logits), *slot));
  for (std::size_t s = 0; s < labels.slots.size(); ++s) add(binary_cross_entropy(pick(out.presence_logits, s), slot && *slot == s));
  return *loss;
}

}  // namespace gendp
