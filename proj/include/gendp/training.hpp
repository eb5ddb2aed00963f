#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/agent.hpp"
#include "gendp/baselines.hpp"
#include "gendp/numerics/adam.hpp"

namespace gendp {

struct RewardSpec {
  double full_correct = 2.0;
  double act_only_correct = 1.0;
  double wrong = -5.0;
  double decay = 0.8;  // λ
  std::size_t rollouts = 5;
};

struct TrainConfig {
  double lr_supervised = 1e-3;
  double lr_rl = 1e-4;
  double weight_decay = 1e-3;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 20;
  std::size_t patience = 3;
  std::size_t rl_epochs = 5;
  std::size_t rl_max_turns = 0;  // per RL epoch; 0 uses the whole train split
  std::size_t head_epochs = 10;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lr_supervised > 0) || !(lr_rl > 0)) throw Error("learning rates must be positive");
    if (weight_decay < 0) throw Error("weight decay must be non-negative");
    if (patience < 1) throw Error("patience must be at least 1");
    if (batch_size < 1) throw Error("batch size must be at least 1");
  }
};

// One turn in id form. The encoder input uses the gold previous belief.
struct Example {
  std::vector<std::size_t> context;
  std::vector<std::size_t> belief;  // serialized gold C_t with <eos_b>
  std::vector<std::size_t> action;  // serialized gold A_t with <eos_a>
  DialogueAction gold_action;
  std::size_t kb_count = 0;
};

inline std::vector<Example> make_examples(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<Example> out;
  for (const auto& d : corpus.dialogues)
    for (const auto& t : d.turns)
      out.push_back({turn_ids(vocab, {t.belief_prev.tokens, t.system_response_prev, t.user_utterance}),
                     vocab.ids(serialize_belief(t.gold_belief)), vocab.ids(serialize_action(t.gold_action)),
                     canonicalize(t.gold_action), t.kb_count});
  return out;
}

// ---------------------------------------------------------------------------
// Supervised objective

// Tracker plus policy cross-entropy of one turn under teacher forcing, k_t
// from the gold KB count.
template <typename T>
Var<T> turn_loss(Tape<T>& tape, GdpParams<T>& p, const Example& ex) {
  auto enc = encode_context(tape, p, ex.context);
  auto trk = track_state(tape, p, enc, &ex.belief);
  auto ctx = make_policy_context(tape, p, enc, trk, encode_count<T>(ex.kb_count, p.config.kb_dims));
  auto pol = policy_teacher_forced_loss(tape, p, ctx, policy_initial_hidden(tape, p, enc), ex.action);
  return *trk.loss + pol;
}

// Mean over the batch of the summed token cross-entropies.
template <typename T>
Var<T> supervised_loss(Tape<T>& tape, GdpParams<T>& p, std::span<const Example* const> batch) {
  if (batch.empty()) throw Error("supervised_loss: empty batch");
  std::optional<Var<T>> total;
  for (const auto* ex : batch) {
    auto l = turn_loss(tape, p, *ex);
    total = total ? *total + l : l;
  }
  return scale(*total, T(1) / static_cast<T>(batch.size()));
}

template <typename T>
double mean_loss(GdpParams<T>& p, const std::vector<Example>& examples) {
  double total = 0;
  for (const auto& ex : examples) {
    Tape<T> tape(false);
    total += static_cast<double>(turn_loss(tape, p, ex).item());
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

// Patience counter over a loss that should decrease.
struct EarlyStopping {
  std::size_t patience = 1;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;

  // Returns true when `loss` is a new best.
  bool update(std::size_t epoch, double loss) {
    if (loss < best) {
      best = loss;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }
  bool should_stop() const { return since_best >= patience; }
};

struct CurvePoint {
  std::size_t epoch = 0;
  double train_value = 0;  // mean train loss, or mean reward for RL
  double dev_value = 0;    // dev loss, or 0 for RL
  double dev_apra = 0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

inline std::string curve_csv(const std::vector<CurvePoint>& curve, bool rl) {
  std::string out = rl ? "epoch,mean_reward,dev_apra\n" : "epoch,train_loss,dev_loss,dev_apra\n";
  char line[128];
  for (const auto& c : curve) {
    if (rl) std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", c.epoch, c.train_value, c.dev_apra);
    else std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f\n", c.epoch, c.train_value, c.dev_value, c.dev_apra);
    out += line;
  }
  return out;
}

using DevMetric = std::function<double()>;
using EpochHook = std::function<void(const CurvePoint&)>;

inline std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  return order;
}

// Encoder, tracker and policy maker trained jointly; dev loss drives early
// stopping and the best-dev parameters are left in `p`.
template <typename T>
TrainResult train_supervised(GdpParams<T>& p, const std::vector<Example>& train, const std::vector<Example>& dev,
                             const TrainConfig& cfg, const DevMetric& dev_apra = {}, const EpochHook& hook = {}) {
  cfg.validate();
  if (train.empty()) throw Error("train_supervised: empty train split");
  if (dev.empty()) throw Error("train_supervised: empty dev split");
  for (auto g : {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kPolicy}) p.set_trainable(g, true);
  Adam<T> opt(p.tensors({ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kPolicy}),
              {cfg.lr_supervised, 0.9, 0.999, 1e-8, cfg.weight_decay});

  TrainResult res;
  EarlyStopping stop{cfg.patience};
  auto best = p.snapshot();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffled_order(train.size(), derive_seed({cfg.seed, epoch, 0x5u}));
    double train_total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(&train[order[i]]);
      Tape<T> tape;
      p.zero_grad();
      auto loss = supervised_loss<T>(tape, p, batch);
      const double v = static_cast<double>(loss.item());
      if (!std::isfinite(v))
        throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch) + " at example " +
                           std::to_string(start));
      train_total += v * static_cast<double>(batch.size());
      tape.backward(loss);
      opt.step();
    }
    CurvePoint pt{epoch, train_total / static_cast<double>(train.size()), mean_loss(p, dev), 0.0};
    if (!std::isfinite(pt.dev_value)) throw NumericError("training diverged: non-finite dev loss in epoch " + std::to_string(epoch));
    if (dev_apra) pt.dev_apra = dev_apra();
    res.curve.push_back(pt);
    if (hook) hook(pt);
    if (stop.update(epoch, pt.dev_value)) best = p.snapshot();
    if (stop.should_stop()) {
      res.stopped_early = true;
      break;
    }
  }
  p.restore(best);
  p.zero_grad();
  res.best_epoch = stop.best_epoch;
  return res;
}

// ---------------------------------------------------------------------------
// Reward and REINFORCE

inline double reward(const ParsedAction& decoded, const DialogueAction& gold, const RewardSpec& spec = {}) {
  if (!decoded.well_formed) return spec.wrong;
  const auto d = canonicalize(decoded.action), g = canonicalize(gold);
  if (d == g) return spec.full_correct;
  std::vector<std::string> da, ga;
  for (const auto& it : d.items) da.push_back(it.act);
  for (const auto& it : g.items) ga.push_back(it.act);
  std::sort(da.begin(), da.end());
  std::sort(ga.begin(), ga.end());
  return da == ga ? spec.act_only_correct : spec.wrong;
}

template <typename T>
std::size_t sample_index(std::span<const T> probs, Rng& rng) {
  const double u = rng.uniform();
  double c = 0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= T(0)) continue;
    c += static_cast<double>(probs[i]);
    last = i;
    if (u < c) return i;
  }
  return last;
}

// Samples a continuation of `prefix` (whose last token was emitted with
// decoder state `hidden`) until <eos_a> or max_len tokens.
template <typename T>
std::vector<std::size_t> rollout(Tape<T>& tape, GdpParams<T>& p, const PolicyContext<T>& ctx,
                                 std::vector<std::size_t> prefix, Var<T> hidden, std::size_t max_len, Rng& rng) {
  while (prefix.size() < max_len && (prefix.empty() || prefix.back() != kEosAction)) {
    auto step = decode_policy_step(tape, p, ctx, prefix.empty() ? kSos : prefix.back(), hidden);
    prefix.push_back(sample_index<T>(step.distribution.value(), rng));
    hidden = step.hidden;
  }
  return prefix;
}

struct RewardContext {
  const Vocabulary& vocab;
  const Lexicon& lexicon;
  const RewardSpec& spec;
};

inline double sequence_reward(const std::vector<std::size_t>& ids, const DialogueAction& gold, const RewardContext& rc) {
  return reward(deserialize_action(rc.vocab.tokens(ids), rc.lexicon), gold, rc.spec);
}

// r(y_j) = λ^(T-j) · mean reward of N sampled completions of y_1..y_j; the
// final position is scored exactly. `hiddens[j]` is the decoder state that
// emitted y_{j+1}. Rollout n of position j draws from
// derive_seed({seed, j, n}).
template <typename T>
std::vector<double> estimate_step_rewards(Tape<T>& tape, GdpParams<T>& p, const PolicyContext<T>& ctx,
                                          const std::vector<std::size_t>& sequence,
                                          const std::vector<std::vector<T>>& hiddens, const DialogueAction& gold,
                                          const RewardContext& rc, std::uint64_t seed) {
  const std::size_t T_len = sequence.size();
  if (T_len == 0 || hiddens.size() != T_len) throw Error("estimate_step_rewards: sequence/hidden mismatch");
  if (rc.spec.rollouts == 0) throw Error("estimate_step_rewards: rollouts must be positive");
  std::vector<double> r(T_len);
  r[T_len - 1] = sequence_reward(sequence, gold, rc);
  for (std::size_t j = 0; j + 1 < T_len; ++j) {
    std::vector<std::size_t> prefix(sequence.begin(), sequence.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    auto h = tape.constant({hiddens[j].size()}, hiddens[j]);
    double total = 0;
    for (std::size_t n = 0; n < rc.spec.rollouts; ++n) {
      Rng rng(derive_seed({seed, j, n}));
      total += sequence_reward(rollout(tape, p, ctx, prefix, h, p.config.max_action_len, rng), gold, rc);
    }
    r[j] = std::pow(rc.spec.decay, static_cast<double>(T_len - 1 - j)) * total / static_cast<double>(rc.spec.rollouts);
  }
  return r;
}

// -(1/T) Σ_j r_j log π(y_j); its gradient is the REINFORCE estimator.
template <typename T>
Var<T> reinforce_surrogate(const std::vector<Var<T>>& distributions, const std::vector<std::size_t>& tokens,
                           const std::vector<double>& rewards) {
  if (distributions.empty() || distributions.size() != tokens.size() || tokens.size() != rewards.size())
    throw Error("reinforce_surrogate: mismatched lengths");
  std::optional<Var<T>> total;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    auto term = scale(cross_entropy(distributions[j], tokens[j]), static_cast<T>(rewards[j]));
    total = total ? *total + term : term;
  }
  return scale(*total, T(1) / static_cast<T>(tokens.size()));
}

struct RlEnvironment {
  const Vocabulary& vocab;
  const Lexicon& lexicon;
  const KnowledgeBase& kb;
  const Ontology& ontology;
  RewardSpec spec;
};

template <typename T>
struct RlSample {
  std::vector<std::size_t> tokens;
  double reward = 0;
};

// Samples A_t from the policy on `tape` and returns the surrogate loss of
// that sample. k_t comes from the tracker's own decoded belief.
template <typename T>
std::pair<Var<T>, RlSample<T>> reinforce_turn(Tape<T>& tape, GdpParams<T>& p, const Example& ex,
                                              const RlEnvironment& env, std::uint64_t seed) {
  auto per = perceive_ids(tape, p, env.vocab, ex.context, env.kb, env.ontology);
  auto ctx = make_policy_context(tape, p, per.enc, per.trk, per.k);
  Var<T> h = policy_initial_hidden(tape, p, per.enc);
  Rng rng(derive_seed({seed, 0xACu}));
  RlSample<T> sample;
  std::vector<Var<T>> dists;
  std::vector<std::vector<T>> hiddens;
  std::size_t prev = kSos;
  while (sample.tokens.size() < p.config.max_action_len && prev != kEosAction) {
    auto step = decode_policy_step(tape, p, ctx, prev, h);
    prev = sample_index<T>(step.distribution.value(), rng);
    h = step.hidden;
    dists.push_back(step.distribution);
    hiddens.emplace_back(step.hidden.value().begin(), step.hidden.value().end());
    sample.tokens.push_back(prev);
  }

  // Rollouts run on a scratch tape holding an identical forward pass.
  Tape<T> scratch(false);
  auto sper = perceive_ids(scratch, p, env.vocab, ex.context, env.kb, env.ontology);
  auto sctx = make_policy_context(scratch, p, sper.enc, sper.trk, sper.k);
  RewardContext rc{env.vocab, env.lexicon, env.spec};
  auto rewards = estimate_step_rewards(scratch, p, sctx, sample.tokens, hiddens, ex.gold_action, rc, seed);
  sample.reward = rewards.back();
  return {reinforce_surrogate(dists, sample.tokens, rewards), sample};
}

inline void assert_frozen_untouched(const std::vector<Tensor<float>*>& frozen) {
  for (const auto* t : frozen)
    for (auto g : t->grad)
      if (g != 0.0f) throw InternalError("gradient reached a frozen parameter");
}
inline void assert_frozen_untouched(const std::vector<Tensor<double>*>& frozen) {
  for (const auto* t : frozen)
    for (auto g : t->grad)
      if (g != 0.0) throw InternalError("gradient reached a frozen parameter");
}

// One policy-gradient step over a batch; returns the mean sequence reward.
template <typename T>
double reinforce_update(GdpParams<T>& p, std::span<const Example* const> batch, const RlEnvironment& env,
                        Adam<T>& opt, std::uint64_t seed) {
  if (batch.empty()) throw Error("reinforce_update: empty batch");
  const auto frozen = p.tensors({ParamGroup::kEncoder, ParamGroup::kTracker});
  for (auto* t : frozen)
    if (t->requires_grad) throw InternalError("reinforce_update: encoder/tracker must be frozen");
  Tape<T> tape;
  p.zero_grad();
  std::optional<Var<T>> total;
  double reward_sum = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    auto [loss, sample] = reinforce_turn(tape, p, *batch[b], env, derive_seed({seed, b}));
    reward_sum += sample.reward;
    total = total ? *total + loss : loss;
  }
  tape.backward(scale(*total, T(1) / static_cast<T>(batch.size())));
  assert_frozen_untouched(frozen);
  opt.step();
  return reward_sum / static_cast<double>(batch.size());
}

// Fine-tunes only the policy maker. The parameters with the best dev APRA
// (the starting point included) are left in `p`.
template <typename T>
TrainResult train_rl(GdpParams<T>& p, const std::vector<Example>& train, const RlEnvironment& env,
                     const TrainConfig& cfg, const DevMetric& dev_apra = {}, const EpochHook& hook = {}) {
  cfg.validate();
  TrainResult res;
  if (cfg.rl_epochs == 0) return res;
  if (train.empty()) throw Error("train_rl: empty train split");
  p.set_trainable(ParamGroup::kEncoder, false);
  p.set_trainable(ParamGroup::kTracker, false);
  p.set_trainable(ParamGroup::kPolicy, true);
  Adam<T> opt(p.tensors({ParamGroup::kPolicy}), {cfg.lr_rl, 0.9, 0.999, 1e-8, cfg.weight_decay});

  double best_apra = dev_apra ? dev_apra() : 0.0;
  res.curve.push_back({0, 0.0, 0.0, best_apra});
  auto best = p.snapshot();
  // A capped run uses the same turns every epoch so rewards stay comparable.
  auto subset = shuffled_order(train.size(), derive_seed({cfg.seed, 0x70u}));
  if (cfg.rl_max_turns > 0 && subset.size() > cfg.rl_max_turns) subset.resize(cfg.rl_max_turns);
  for (std::size_t epoch = 1; epoch <= cfg.rl_epochs; ++epoch) {
    auto order = subset;
    Rng(derive_seed({cfg.seed, epoch, 0x71u})).shuffle(order.begin(), order.end());
    double reward_total = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(&train[order[i]]);
      const double r = reinforce_update<T>(p, batch, env, opt, derive_seed({cfg.seed, epoch, start}));
      reward_total += r * static_cast<double>(batch.size());
    }
    CurvePoint pt{epoch, reward_total / static_cast<double>(order.size()), 0.0, dev_apra ? dev_apra() : 0.0};
    res.curve.push_back(pt);
    if (hook) hook(pt);
    if (pt.dev_apra > best_apra) {
      best_apra = pt.dev_apra;
      best = p.snapshot();
      res.best_epoch = epoch;
    }
  }
  p.restore(best);
  p.zero_grad();
  p.set_trainable(ParamGroup::kEncoder, true);
  p.set_trainable(ParamGroup::kTracker, true);
  return res;
}

// ---------------------------------------------------------------------------
// Baseline heads on frozen encoder/tracker features

template <typename T>
struct HeadExample {
  std::vector<T> features;
  DialogueAction gold;
};

// Features come from the same perception path evaluation uses.
template <typename T>
std::vector<HeadExample<T>> head_examples(GdpParams<T>& p, const std::vector<Example>& examples,
                                          const Vocabulary& vocab, const KnowledgeBase& kb, const Ontology& ontology) {
  std::vector<HeadExample<T>> out;
  for (const auto& ex : examples) {
    Tape<T> tape(false);
    auto per = perceive_ids(tape, p, vocab, ex.context, kb, ontology);
    auto f = baseline_features(tape, per.enc, per.trk, per.k);
    out.push_back({{f.value().begin(), f.value().end()}, ex.gold_action});
  }
  return out;
}

template <typename T>
void train_heads(GdpParams<T>& p, const std::vector<HeadExample<T>>& examples, const BaselineLabels& labels,
                 const TrainConfig& cfg) {
  if (examples.empty()) throw Error("train_heads: no examples");
  p.set_trainable(ParamGroup::kE2ecm, true);
  p.set_trainable(ParamGroup::kCdm, true);
  Adam<T> opt(p.tensors({ParamGroup::kE2ecm, ParamGroup::kCdm}),
              {cfg.lr_supervised, 0.9, 0.999, 1e-8, cfg.weight_decay});
  for (std::size_t epoch = 1; epoch <= cfg.head_epochs; ++epoch) {
    const auto order = shuffled_order(examples.size(), derive_seed({cfg.seed, epoch, 0xBAu}));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      Tape<T> tape;
      p.zero_grad();
      std::optional<Var<T>> total;
      std::size_t n = 0;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i, ++n) {
        const auto& ex = examples[order[i]];
        auto f = tape.constant({ex.features.size()}, ex.features);
        auto l = e2ecm_loss(tape, p, f, ex.gold, labels) + cdm_loss(tape, p, f, ex.gold, labels);
        total = total ? *total + l : l;
      }
      tape.backward(scale(*total, T(1) / static_cast<T>(n)));
      opt.step();
    }
  }
  p.zero_grad();
}

}  // namespace gendp
