#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/agent.hpp"
#include "gendp/corpus/corpus.hpp"

namespace gendp {

inline void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(std::string(what) + ": " + std::to_string(a) + " predictions for " + std::to_string(b) + " references");
  if (a == 0) throw Error(std::string(what) + ": no turns");
}

// Fraction of turns whose canonical belief equals gold exactly.
inline double bpra(const std::vector<BeliefState>& predicted, const std::vector<BeliefState>& gold) {
  check_aligned(predicted.size(), gold.size(), "bpra");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += canonicalize(predicted[i]) == canonicalize(gold[i]);
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

// Fraction of turns whose action token sequence equals gold token for token.
inline double apra(const std::vector<std::vector<std::string>>& predicted,
                   const std::vector<std::vector<std::string>>& gold) {
  check_aligned(predicted.size(), gold.size(), "apra");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

// Corpus BLEU-4 with uniform weights and brevity penalty. Clipped n-gram
// counts are pooled over all turns; an order n >= 2 without any match uses
// 1 / (candidate n-grams + 1) in place of zero.
inline double bleu(const std::vector<std::vector<std::string>>& candidates,
                   const std::vector<std::vector<std::string>>& references, std::size_t max_n = 4) {
  check_aligned(candidates.size(), references.size(), "bleu");
  std::vector<double> match(max_n + 1, 0), total(max_n + 1, 0);
  double cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    const auto& r = references[i];
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> ref_counts, cand_counts;
      for (std::size_t j = 0; j + n <= r.size(); ++j) ++ref_counts[{r.begin() + j, r.begin() + j + n}];
      for (std::size_t j = 0; j + n <= c.size(); ++j) ++cand_counts[{c.begin() + j, c.begin() + j + n}];
      for (const auto& [g, k] : cand_counts) {
        auto it = ref_counts.find(g);
        match[n] += std::min(k, it == ref_counts.end() ? 0 : it->second);
        total[n] += k;
      }
    }
  }
  if (cand_len == 0 || match[1] == 0) return 0.0;
  double log_p = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const double p = match[n] > 0 ? match[n] / total[n] : 1.0 / (total[n] + 1.0);
    log_p += std::log(p) / static_cast<double>(max_n);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_p);
}

struct TurnRecord {
  std::size_t dialogue = 0, turn = 0;
  std::string gold_belief, predicted_belief;
  std::string gold_action, predicted_action;
  std::string gold_response, response_delex, response;
};

struct EvalReport {
  std::string model;
  std::string split;
  std::size_t turns = 0;
  double bpra = 0, apra = 0, bleu = 0, bleu_lexicalized = 0;
  double time_full = 0, time_dp = 0;  // mean seconds per turn
  std::map<std::string, std::size_t> parameters;
  std::size_t total_parameters = 0;
  std::size_t malformed_actions = 0;
  std::size_t parameterized_actions = 0;  // turns whose action has any slot
  std::size_t max_acts_per_turn = 0;
  std::vector<TurnRecord> records;

  nlohmann::json to_json(bool with_timings = false, bool with_records = false) const {
    nlohmann::json j = {{"model", model},
                        {"split", split},
                        {"turns", turns},
                        {"bpra", bpra},
                        {"apra", apra},
                        {"bleu", bleu},
                        {"bleu_lexicalized", bleu_lexicalized},
                        {"parameters", parameters},
                        {"total_parameters", total_parameters},
                        {"malformed_actions", malformed_actions},
                        {"parameterized_actions", parameterized_actions},
                        {"max_acts_per_turn", max_acts_per_turn}};
    if (with_timings) j["timings"] = {{"time_full", time_full}, {"time_dp", time_dp}};
    if (with_records) {
      auto& arr = j["records"] = nlohmann::json::array();
      for (const auto& r : records)
        arr.push_back({{"dialogue", r.dialogue},
                       {"turn", r.turn},
                       {"gold_belief", r.gold_belief},
                       {"predicted_belief", r.predicted_belief},
                       {"gold_action", r.gold_action},
                       {"predicted_action", r.predicted_action},
                       {"gold_response", r.gold_response},
                       {"response_delex", r.response_delex},
                       {"response", r.response}});
    }
    return j;
  }
};

inline std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %12s %12s %12s\n", "Model", "BPRA", "APRA", "BLEU", "Time_full",
                "Time_DP", "Params");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-8s %8.4f %8.4f %8.4f %11.3fms %11.3fms %12zu\n", r.model.c_str(), r.bpra, r.apra,
                  r.bleu, r.time_full * 1e3, r.time_dp * 1e3, r.total_parameters);
    out << line;
  }
  return out.str();
}

// Runs the agent over every dialogue. C_{t-1} is the agent's own previous
// belief; R_{t-1} and U_t come from the corpus.
template <typename T>
EvalReport evaluate(const Agent<T>& agent, const Corpus& corpus, PolicyKind policy) {
  EvalReport rep;
  rep.model = policy_name(policy);
  rep.split = corpus.split;
  for (auto g : policy_groups(policy)) {
    rep.parameters[group_name(g)] = agent.params.parameter_count(g);
    rep.total_parameters += agent.params.parameter_count(g);
  }
  std::vector<BeliefState> pb, gb;
  std::vector<std::vector<std::string>> pa, ga, cand, ref, cand_lex, ref_lex;
  for (std::size_t d = 0; d < corpus.dialogues.size(); ++d) {
    BeliefState prev;
    for (std::size_t t = 0; t < corpus.dialogues[d].turns.size(); ++t) {
      const auto& turn = corpus.dialogues[d].turns[t];
      auto pred = agent.predict({prev.tokens, turn.system_response_prev, turn.user_utterance}, policy);
      prev = pred.belief;
      pb.push_back(pred.belief);
      gb.push_back(turn.gold_belief);
      pa.push_back(pred.action_tokens);
      ga.push_back(serialize_action(turn.gold_action));
      cand.push_back(tokenize(pred.response_delex));
      ref.push_back(turn.gold_response);
      cand_lex.push_back(tokenize(pred.response));
      ref_lex.push_back(tokenize(
          lexicalize(join(turn.gold_response), query(agent.kb, turn.gold_belief, agent.ontology)).text));
      rep.time_full += pred.seconds_full;
      rep.time_dp += pred.seconds_policy;
      rep.malformed_actions += !pred.well_formed;
      bool param = false;
      for (const auto& it : pred.action.items) param = param || !it.slot.empty();
      rep.parameterized_actions += param;
      rep.max_acts_per_turn = std::max(rep.max_acts_per_turn, pred.action.items.size());
      rep.records.push_back({d, t, join(turn.gold_belief.tokens), join(pred.belief.tokens), join(ga.back()),
                             join(pa.back()), join(turn.gold_response), pred.response_delex, pred.response});
    }
  }
  rep.turns = gb.size();
  rep.bpra = bpra(pb, gb);
  rep.apra = apra(pa, ga);
  rep.bleu = bleu(cand, ref);
  rep.bleu_lexicalized = bleu(cand_lex, ref_lex);
  rep.time_full /= static_cast<double>(rep.turns);
  rep.time_dp /= static_cast<double>(rep.turns);
  return rep;
}

}  // namespace gendp
