#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "gendp/baselines.hpp"
#include "gendp/kb.hpp"
#include "gendp/model/gdp.hpp"
#include "gendp/nlg.hpp"

namespace gendp {

enum class PolicyKind { kGdp, kE2ecm, kCdm };

inline const char* policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::kGdp: return "gdp";
    case PolicyKind::kE2ecm: return "e2ecm";
    case PolicyKind::kCdm: return "cdm";
  }
  return "?";
}

inline PolicyKind parse_policy(const std::string& s) {
  if (s == "gdp") return PolicyKind::kGdp;
  if (s == "e2ecm") return PolicyKind::kE2ecm;
  if (s == "cdm") return PolicyKind::kCdm;
  throw Error("unknown policy '" + s + "' (expected gdp, e2ecm or cdm)");
}

// Parameter groups a policy uses; encoder and tracker are always shared.
inline std::vector<ParamGroup> policy_groups(PolicyKind k) {
  switch (k) {
    case PolicyKind::kGdp: return {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kPolicy};
    case PolicyKind::kE2ecm: return {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kE2ecm};
    case PolicyKind::kCdm: return {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kCdm};
  }
  return {};
}

// The three inputs of a turn: C_{t-1}, R_{t-1} and U_t, all as tokens.
struct TurnInput {
  std::vector<std::string> belief_prev;
  std::vector<std::string> response_prev;
  std::vector<std::string> user;
};

// Encoder + greedy tracker + KB lookup; shared by every policy maker.
template <typename T>
struct Perception {
  EncodeOutput<T> enc;
  TrackerOutput<T> trk;
  BeliefState belief;
  QueryResult result;
  std::vector<T> k;
};

inline BeliefState belief_from_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
  BeliefState b;
  for (auto id : ids) {
    if (id == kEosBelief) break;
    if (id < kNumReserved) continue;
    b.tokens.push_back(vocab.token(id));
  }
  return canonicalize(b);
}

// Encoder input ids; an all-empty turn becomes a single <unk>.
inline std::vector<std::size_t> turn_ids(const Vocabulary& vocab, const TurnInput& in) {
  auto ids = context_ids(vocab, in.belief_prev, in.response_prev, in.user);
  if (ids.empty()) ids.push_back(kUnk);
  return ids;
}

template <typename T>
Perception<T> perceive_ids(Tape<T>& tape, GdpParams<T>& p, const Vocabulary& vocab, const std::vector<std::size_t>& ids,
                           const KnowledgeBase& kb, const Ontology& ontology) {
  Perception<T> out{encode_context(tape, p, ids), {}, {}, {}, {}};
  out.trk = track_state(tape, p, out.enc);
  out.belief = belief_from_ids(out.trk.tokens, vocab);
  out.result = query(kb, out.belief, ontology);
  out.k = encode_count<T>(out.result.count, p.config.kb_dims);
  return out;
}

template <typename T>
Perception<T> perceive(Tape<T>& tape, GdpParams<T>& p, const Vocabulary& vocab, const TurnInput& in,
                       const KnowledgeBase& kb, const Ontology& ontology) {
  return perceive_ids(tape, p, vocab, turn_ids(vocab, in), kb, ontology);
}

struct TurnPrediction {
  BeliefState belief;                      // C_t
  std::size_t kb_count = 0;
  std::size_t kb_bucket = 0;               // index of the hot entry of k_t
  std::vector<std::string> action_tokens;  // A_t as emitted (baselines: serialized)
  DialogueAction action;
  bool well_formed = true;
  std::string template_key;
  std::string response_delex;
  std::string response;  // lexicalized
  bool unresolved = false;
  double seconds_full = 0;
  double seconds_policy = 0;
};

// A trained model plus everything needed to turn its output into a reply.
template <typename T>
struct Agent {
  GdpParams<T>& params;
  const Vocabulary& vocab;
  const Lexicon& lexicon;
  const BaselineLabels& labels;
  const KnowledgeBase& kb;
  const Ontology& ontology;
  const TemplateBank& templates;
  double threshold = 0.5;

  TurnPrediction predict(const TurnInput& in, PolicyKind policy) const {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    Tape<T> tape(false);
    auto per = perceive(tape, params, vocab, in, kb, ontology);

    TurnPrediction out;
    out.belief = per.belief;
    out.kb_count = per.result.count;
    out.kb_bucket = count_bucket(per.result.count, params.config.kb_dims);

    const auto t1 = clock::now();
    switch (policy) {
      case PolicyKind::kGdp: {
        auto ctx = make_policy_context(tape, params, per.enc, per.trk, per.k);
        auto ids = greedy_decode_action(tape, params, ctx, policy_initial_hidden(tape, params, per.enc),
                                        params.config.max_action_len);
        out.action_tokens = vocab.tokens(ids);
        auto parsed = deserialize_action(out.action_tokens, lexicon);
        out.action = parsed.action;
        out.well_formed = parsed.well_formed;
        break;
      }
      case PolicyKind::kE2ecm: {
        auto f = baseline_features(tape, per.enc, per.trk, per.k);
        out.action = e2ecm_predict(sigmoid_scores(e2ecm_logits(tape, params, f)), labels, threshold);
        out.action_tokens = serialize_action(out.action);
        break;
      }
      case PolicyKind::kCdm: {
        auto f = baseline_features(tape, per.enc, per.trk, per.k);
        out.action = cdm_predict(cdm_logits(tape, params, f), labels, threshold);
        out.action_tokens = serialize_action(out.action);
        break;
      }
    }
    const auto t2 = clock::now();

    auto tmpl = templates.select(out.action, lexicon);
    out.template_key = tmpl.key;
    out.response_delex = tmpl.surface;
    auto lex = lexicalize(tmpl.surface, per.result);
    out.response = lex.text;
    out.unresolved = lex.unresolved;
    const auto t3 = clock::now();
    out.seconds_policy = std::chrono::duration<double>(t2 - t1).count();
    out.seconds_full = std::chrono::duration<double>(t3 - t0).count();
    return out;
  }
};

}  // namespace gendp
