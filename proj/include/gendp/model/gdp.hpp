#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/vocabulary.hpp"
#include "gendp/kb.hpp"
#include "gendp/model/attention.hpp"
#include "gendp/numerics/checkpoint.hpp"
#include "gendp/numerics/gru.hpp"
#include "gendp/numerics/ops.hpp"
#include "gendp/numerics/rng.hpp"

namespace gendp {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_emb = 300;
  std::size_t d_enc = 350;     // encoder and tracker hidden size
  std::size_t d_policy = 150;  // policy decoder hidden size
  std::size_t d_attn = 150;
  std::size_t kb_dims = kKbCountDims;
  std::size_t max_belief_len = 10;
  std::size_t max_action_len = 30;
  std::size_t n_acts = 1;   // baseline head arity
  std::size_t n_slots = 1;

  // Width of the baseline classifier input [encoder final; tracker final; k_t].
  std::size_t baseline_features() const { return 2 * d_enc + d_enc + kb_dims; }
  // Width of the policy projection input [h^p, k_t, c_u, c_d].
  std::size_t policy_features() const { return d_policy + kb_dims + 2 * d_enc; }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"d_emb", c.d_emb},       {"d_enc", c.d_enc},
       {"d_policy", c.d_policy},     {"d_attn", c.d_attn},     {"kb_dims", c.kb_dims},
       {"max_belief_len", c.max_belief_len}, {"max_action_len", c.max_action_len},
       {"n_acts", c.n_acts},         {"n_slots", c.n_slots}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.d_emb = j.value("d_emb", d.d_emb);
  c.d_enc = j.value("d_enc", d.d_enc);
  c.d_policy = j.value("d_policy", d.d_policy);
  c.d_attn = j.value("d_attn", d.d_attn);
  c.kb_dims = j.value("kb_dims", d.kb_dims);
  c.max_belief_len = j.value("max_belief_len", d.max_belief_len);
  c.max_action_len = j.value("max_action_len", d.max_action_len);
  c.n_acts = j.value("n_acts", d.n_acts);
  c.n_slots = j.value("n_slots", d.n_slots);
}

enum class ParamGroup { kEncoder, kTracker, kPolicy, kE2ecm, kCdm };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kTracker: return "tracker";
    case ParamGroup::kPolicy: return "policy";
    case ParamGroup::kE2ecm: return "e2ecm";
    case ParamGroup::kCdm: return "cdm";
  }
  return "?";
}

inline constexpr ParamGroup kAllGroups[] = {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kPolicy,
                                            ParamGroup::kE2ecm, ParamGroup::kCdm};

// All learned tensors: utterance encoder, belief tracker, generative policy
// maker, and the two classification heads that share encoder and tracker.
template <typename T>
struct GdpParams {
  ModelConfig config;

  // encoder
  Tensor<T> embedding;  // [V x d_emb], shared by every decoder input
  GruParams<T> enc_forward, enc_backward;
  // tracker
  Tensor<T> tracker_init_w, tracker_init_b;
  GruParams<T> tracker_gru;
  AttentionParams<T> tracker_attn;
  Tensor<T> tracker_out_w, tracker_out_b;
  // policy maker
  Tensor<T> policy_init_w, policy_init_b;
  GruParams<T> policy_gru;
  AttentionParams<T> policy_attn_utterance, policy_attn_belief;
  Tensor<T> policy_out;  // O: [policy_features x V]
  // E2ECM: one sigmoid per act
  Tensor<T> e2ecm_w, e2ecm_b;
  // CDM: act softmax, slot softmax, per-slot presence sigmoids
  Tensor<T> cdm_act_w, cdm_act_b, cdm_slot_w, cdm_slot_b, cdm_presence_w, cdm_presence_b;

  explicit GdpParams(const ModelConfig& c) : config(c) {
    if (c.vocab_size <= kNumReserved) throw ShapeError("model vocabulary must contain non-reserved tokens");
    const auto V = c.vocab_size, E = c.d_enc, P = c.d_policy, A = c.d_attn, D = c.d_emb;
    const auto F = c.baseline_features();
    const auto acts = std::max<std::size_t>(1, c.n_acts), slots = std::max<std::size_t>(1, c.n_slots);
    auto w = [](Shape s) { return Tensor<T>(std::move(s), T(0), true); };
    embedding = w({V, D});
    enc_forward = GruParams<T>(D, E);
    enc_backward = GruParams<T>(D, E);
    tracker_init_w = w({2 * E, E});
    tracker_init_b = w({E});
    tracker_gru = GruParams<T>(D, E);
    tracker_attn = AttentionParams<T>(E, E, A);
    tracker_out_w = w({2 * E, V});
    tracker_out_b = w({V});
    policy_init_w = w({2 * E, P});
    policy_init_b = w({P});
    policy_gru = GruParams<T>(D, P);
    policy_attn_utterance = AttentionParams<T>(P, E, A);
    policy_attn_belief = AttentionParams<T>(P, E, A);
    policy_out = w({c.policy_features(), V});
    e2ecm_w = w({F, acts});
    e2ecm_b = w({acts});
    cdm_act_w = w({F, acts});
    cdm_act_b = w({acts});
    cdm_slot_w = w({F, slots});
    cdm_slot_b = w({slots});
    cdm_presence_w = w({F, slots});
    cdm_presence_b = w({slots});
  }

  GdpParams(const GdpParams&) = delete;
  GdpParams& operator=(const GdpParams&) = delete;

  std::vector<NamedTensor<T>> named(ParamGroup g) {
    std::vector<NamedTensor<T>> out;
    switch (g) {
      case ParamGroup::kEncoder:
        out.push_back({"encoder.embedding", &embedding});
        enc_forward.append_named("encoder.forward", out);
        enc_backward.append_named("encoder.backward", out);
        break;
      case ParamGroup::kTracker:
        out.push_back({"tracker.init_w", &tracker_init_w});
        out.push_back({"tracker.init_b", &tracker_init_b});
        tracker_gru.append_named("tracker.gru", out);
        tracker_attn.append_named("tracker.attn", out);
        out.push_back({"tracker.out_w", &tracker_out_w});
        out.push_back({"tracker.out_b", &tracker_out_b});
        break;
      case ParamGroup::kPolicy:
        out.push_back({"policy.init_w", &policy_init_w});
        out.push_back({"policy.init_b", &policy_init_b});
        policy_gru.append_named("policy.gru", out);
        policy_attn_utterance.append_named("policy.attn_u", out);
        policy_attn_belief.append_named("policy.attn_d", out);
        out.push_back({"policy.out", &policy_out});
        break;
      case ParamGroup::kE2ecm:
        out.push_back({"e2ecm.w", &e2ecm_w});
        out.push_back({"e2ecm.b", &e2ecm_b});
        break;
      case ParamGroup::kCdm:
        out.push_back({"cdm.act_w", &cdm_act_w});
        out.push_back({"cdm.act_b", &cdm_act_b});
        out.push_back({"cdm.slot_w", &cdm_slot_w});
        out.push_back({"cdm.slot_b", &cdm_slot_b});
        out.push_back({"cdm.presence_w", &cdm_presence_w});
        out.push_back({"cdm.presence_b", &cdm_presence_b});
        break;
    }
    return out;
  }

  std::vector<NamedTensor<T>> named_all() {
    std::vector<NamedTensor<T>> out;
    for (auto g : kAllGroups) {
      auto part = named(g);
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }

  std::vector<Tensor<T>*> tensors(const std::vector<ParamGroup>& groups) {
    std::vector<Tensor<T>*> out;
    for (auto g : groups)
      for (auto& nt : named(g)) out.push_back(nt.tensor);
    return out;
  }

  std::size_t parameter_count(ParamGroup g) {
    std::size_t n = 0;
    for (auto& nt : named(g)) n += nt.tensor->size();
    return n;
  }

  void set_trainable(ParamGroup g, bool trainable) {
    for (auto& nt : named(g)) nt.tensor->requires_grad = trainable;
  }

  void zero_grad() {
    for (auto& nt : named_all()) nt.tensor->zero_grad();
  }

  // Weights uniform(-0.08, 0.08), biases zero.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& nt : named_all()) {
      const bool is_bias = nt.tensor->rank() == 1 && nt.name.find(".v") == std::string::npos;
      for (auto& x : nt.tensor->data) x = is_bias ? T(0) : static_cast<T>(rng.uniform(-0.08, 0.08));
    }
  }

  void copy_from(GdpParams& other) {
    auto dst = named_all();
    auto src = other.named_all();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].tensor->data = src[i].tensor->data;
  }

  std::vector<std::vector<T>> snapshot() {
    std::vector<std::vector<T>> out;
    for (auto& nt : named_all()) out.push_back(nt.tensor->data);
    return out;
  }

  void restore(const std::vector<std::vector<T>>& snap) {
    auto all = named_all();
    for (std::size_t i = 0; i < all.size(); ++i) all[i].tensor->data = snap[i];
  }
};

// ---------------------------------------------------------------------------
// Utterance encoder

template <typename T>
struct EncodeOutput {
  std::vector<Var<T>> states;  // H_u: forward + backward state per position
  Var<T> state_matrix;         // H_u stacked, [n x d_enc]
  Var<T> final_state;          // [last forward; first backward], 2*d_enc
  std::size_t length() const { return states.size(); }
};

// Concatenation [C_{t-1}, R_{t-1}, U_t] as token ids.
inline std::vector<std::size_t> context_ids(const Vocabulary& vocab, const std::vector<std::string>& belief_prev,
                                            const std::vector<std::string>& response_prev,
                                            const std::vector<std::string>& user) {
  std::vector<std::size_t> ids;
  ids.reserve(belief_prev.size() + response_prev.size() + user.size());
  for (const auto* part : {&belief_prev, &response_prev, &user})
    for (const auto& tok : *part) ids.push_back(vocab.id(tok));
  return ids;
}

template <typename T>
EncodeOutput<T> encode_context(Tape<T>& tape, GdpParams<T>& p, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw Error("encode_context: empty input sequence");
  const std::size_t n = ids.size(), E = p.config.d_enc;
  auto x = gather_rows(tape.param(p.embedding), ids);
  auto fwd_in = add_rowwise(matmul(x, tape.param(p.enc_forward.w_input)), tape.param(p.enc_forward.bias));
  auto bwd_in = add_rowwise(matmul(x, tape.param(p.enc_backward.w_input)), tape.param(p.enc_backward.bias));

  const auto zero = tape.constant({E}, std::vector<T>(E, T(0)));
  std::vector<Var<T>> fwd(n), bwd(n);
  Var<T> h = zero;
  for (std::size_t i = 0; i < n; ++i) fwd[i] = h = gru_step(row(fwd_in, i), h, p.enc_forward);
  h = zero;
  for (std::size_t i = n; i-- > 0;) bwd[i] = h = gru_step(row(bwd_in, i), h, p.enc_backward);

  EncodeOutput<T> out;
  out.states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.states.push_back(fwd[i] + bwd[i]);
  out.state_matrix = stack_rows(out.states);
  out.final_state = concat(std::vector<Var<T>>{fwd[n - 1], bwd[0]});
  return out;
}

// ---------------------------------------------------------------------------
// Generative belief tracker

template <typename T>
struct TrackerOutput {
  std::vector<std::size_t> tokens;  // gold (teacher forcing) or decoded, including <eos_b> when emitted
  std::vector<Var<T>> states;       // H_d
  Var<T> state_matrix;              // [m x d_enc]
  std::vector<Var<T>> distributions;
  std::optional<Var<T>> loss;       // summed cross-entropy, teacher forcing only
};

inline std::size_t argmax_lowest(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}
inline std::size_t argmax_lowest(std::span<const float> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// With `gold`, decodes under teacher forcing and accumulates the loss up to
// the first <pad>; otherwise decodes greedily until <eos_b> or max_belief_len.
template <typename T>
TrackerOutput<T> track_state(Tape<T>& tape, GdpParams<T>& p, const EncodeOutput<T>& enc,
                             const std::vector<std::size_t>* gold = nullptr) {
  TrackerOutput<T> out;
  auto keys = prepare_keys(enc.state_matrix, p.tracker_attn);
  auto embedding = tape.param(p.embedding);
  auto out_w = tape.param(p.tracker_out_w);
  auto out_b = tape.param(p.tracker_out_b);
  Var<T> h = matmul(enc.final_state, tape.param(p.tracker_init_w)) + tape.param(p.tracker_init_b);
  std::size_t prev = kSos;
  const std::size_t limit = gold ? gold->size() : p.config.max_belief_len;
  for (std::size_t i = 0; i < limit; ++i) {
    if (gold && (*gold)[i] == kPad) break;
    auto ctx = attend(h, keys, p.tracker_attn);
    h = gru_cell(row(embedding, prev), h, p.tracker_gru);
    auto dist = softmax(matmul(concat(std::vector<Var<T>>{h, ctx.context}), out_w) + out_b);
    out.states.push_back(h);
    out.distributions.push_back(dist);
    std::size_t next;
    if (gold) {
      next = (*gold)[i];
      auto ce = cross_entropy(dist, next);
      out.loss = out.loss ? *out.loss + ce : ce;
    } else {
      next = argmax_lowest(dist.value());
    }
    out.tokens.push_back(next);
    prev = next;
    if (!gold && next == kEosBelief) break;
  }
  if (out.states.empty()) throw Error("track_state: no decoding steps");
  out.state_matrix = stack_rows(out.states);
  return out;
}

// ---------------------------------------------------------------------------
// Generative policy maker

template <typename T>
struct PolicyContext {
  AttentionKeys<T> utterance;  // over H_u
  AttentionKeys<T> belief;     // over H_d
  Var<T> kb;                   // k_t
};

template <typename T>
struct PolicyStep {
  Var<T> distribution;
  Var<T> hidden;
  Var<T> context_utterance;  // c_u
  Var<T> context_belief;     // c_d
  Var<T> weights_utterance;
  Var<T> weights_belief;
};

template <typename T>
void validate_kb_vector(const std::vector<T>& k, std::size_t dims) {
  std::size_t ones = 0;
  bool ok = k.size() == dims;
  for (auto x : k) {
    if (x == T(1)) ++ones;
    else if (x != T(0)) ok = false;
  }
  if (!ok || ones != 1) throw ShapeError("k_t must be a " + std::to_string(dims) + "-dim one-hot vector");
}

template <typename T>
PolicyContext<T> make_policy_context(Tape<T>& tape, GdpParams<T>& p, const EncodeOutput<T>& enc,
                                     const TrackerOutput<T>& trk, const std::vector<T>& kb_onehot) {
  validate_kb_vector(kb_onehot, p.config.kb_dims);
  return {prepare_keys(enc.state_matrix, p.policy_attn_utterance), prepare_keys(trk.state_matrix, p.policy_attn_belief),
          tape.constant({kb_onehot.size()}, kb_onehot)};
}

template <typename T>
Var<T> policy_initial_hidden(Tape<T>& tape, GdpParams<T>& p, const EncodeOutput<T>& enc) {
  return matmul(enc.final_state, tape.param(p.policy_init_w)) + tape.param(p.policy_init_b);
}

// One decoder step: attention heads read the previous hidden state, the GRU
// consumes e(y_{i-1}), and O projects [h_i, k_t, c_u, c_d] to the vocabulary.
template <typename T>
PolicyStep<T> decode_policy_step(Tape<T>& tape, GdpParams<T>& p, const PolicyContext<T>& ctx, std::size_t prev_token,
                                 Var<T> prev_hidden) {
  auto cu = attend(prev_hidden, ctx.utterance, p.policy_attn_utterance);
  auto cd = attend(prev_hidden, ctx.belief, p.policy_attn_belief);
  auto h = gru_cell(row(tape.param(p.embedding), prev_token), prev_hidden, p.policy_gru);
  auto features = concat(std::vector<Var<T>>{h, ctx.kb, cu.context, cd.context});
  auto dist = softmax(matmul(features, tape.param(p.policy_out)));
  return {dist, h, cu.context, cd.context, cu.weights, cd.weights};
}

// Iterated argmax from <sos>; stops after <eos_a> or max_len tokens.
template <typename T>
std::vector<std::size_t> greedy_decode_action(Tape<T>& tape, GdpParams<T>& p, const PolicyContext<T>& ctx,
                                              Var<T> initial_hidden, std::size_t max_len) {
  std::vector<std::size_t> out;
  std::size_t prev = kSos;
  Var<T> h = initial_hidden;
  while (out.size() < max_len) {
    auto step = decode_policy_step(tape, p, ctx, prev, h);
    prev = argmax_lowest(step.distribution.value());
    h = step.hidden;
    out.push_back(prev);
    if (prev == kEosAction) break;
  }
  return out;
}

// Summed cross-entropy of a gold action sequence (stops at the first <pad>).
template <typename T>
Var<T> policy_teacher_forced_loss(Tape<T>& tape, GdpParams<T>& p, const PolicyContext<T>& ctx, Var<T> initial_hidden,
                                  const std::vector<std::size_t>& gold) {
  std::optional<Var<T>> loss;
  std::size_t prev = kSos;
  Var<T> h = initial_hidden;
  for (auto target : gold) {
    if (target == kPad) break;
    auto step = decode_policy_step(tape, p, ctx, prev, h);
    auto ce = cross_entropy(step.distribution, target);
    loss = loss ? *loss + ce : ce;
    h = step.hidden;
    prev = target;
  }
  if (!loss) throw Error("policy loss: empty gold sequence");
  return *loss;
}

// [encoder final; tracker final; k_t], shared input of both baselines.
template <typename T>
Var<T> baseline_features(Tape<T>& tape, const EncodeOutput<T>& enc, const TrackerOutput<T>& trk,
                         const std::vector<T>& kb_onehot) {
  return concat(std::vector<Var<T>>{enc.final_state, trk.states.back(), tape.constant({kb_onehot.size()}, kb_onehot)});
}

}  // namespace gendp
