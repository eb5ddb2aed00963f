#include <gtest/gtest.h>

#include <cmath>

#include "gendp/training.hpp"
#include "reference_model.hpp"

using namespace gendp;

namespace {

const std::string kDataDir = GENDP_TEST_DATA_DIR;

struct Fixture {
  LoadedCorpus loaded = load_corpus(kDataDir + "/two_dialogues.jsonl", VocabPolicy::build());
  KnowledgeBase kb = KnowledgeBase::from_json(nlohmann::json::parse(R"([
    {"name":"chez a","food":"french","pricerange":"cheap","area":"east","addr":"1 a st"},
    {"name":"chez b","food":"thai","pricerange":"cheap","area":"east","addr":"2 b st"},
    {"name":"chez c","food":"thai","pricerange":"cheap","area":"east","addr":"3 c st"}])"));
  Ontology ontology = Ontology::from_json(nlohmann::json::parse(
      R"({"french":"food","thai":"food","cheap":"pricerange","east":"area"})"));
  std::vector<Example> examples = make_examples(loaded.corpus, loaded.vocab);

  ModelConfig config() const {
    ModelConfig c;
    c.vocab_size = loaded.vocab.size();
    c.d_emb = 6;
    c.d_enc = 5;
    c.d_policy = 4;
    c.d_attn = 3;
    c.max_belief_len = 6;
    c.max_action_len = 8;
    c.n_acts = loaded.lexicon.acts.size();
    c.n_slots = loaded.lexicon.slots.size();
    return c;
  }
};

template <typename T>
bool bitwise_equal(const std::vector<std::vector<T>>& a, const std::vector<std::vector<T>>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].size() != b[i].size() || std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(T)) != 0) return false;
  return true;
}

std::vector<std::vector<double>> group_snapshot(GdpParams<double>& p, std::vector<ParamGroup> groups) {
  std::vector<std::vector<double>> out;
  for (auto* t : p.tensors(groups)) out.push_back(t->data);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reward scheme

TEST(Reward, ThreeConstructedCases) {
  DialogueAction gold{{{"offer", "name", "name_slot"}, {"inform", "addr", "addr_slot"}}};
  ParsedAction exact{gold, true};
  ParsedAction wrong_slot{{{{"offer", "name", "name_slot"}, {"inform", "phone", "phone_slot"}}}, true};
  ParsedAction missing_act{{{{"offer", "name", "name_slot"}}}, true};
  EXPECT_EQ(reward(exact, gold), 2.0);
  EXPECT_EQ(reward(wrong_slot, gold), 1.0);
  EXPECT_EQ(reward(missing_act, gold), -5.0);
  EXPECT_EQ(reward({gold, false}, gold), -5.0);
  // Order is irrelevant once canonicalized.
  ParsedAction reordered{{{{"inform", "addr", "addr_slot"}, {"offer", "name", "name_slot"}}}, true};
  EXPECT_EQ(reward(reordered, gold), 2.0);
}

// ---------------------------------------------------------------------------
// Supervised objective

TEST(SupervisedLoss, UniformModelIsLengthTimesLogV) {
  Fixture f;
  GdpParams<double> p(f.config());  // all-zero parameters give uniform distributions
  Tape<double> tape;
  std::vector<const Example*> batch{&f.examples[1], &f.examples[3]};
  auto loss = supervised_loss<double>(tape, p, batch);
  const double lnV = std::log(static_cast<double>(f.loaded.vocab.size()));
  const double expect = 0.5 * (static_cast<double>(f.examples[1].belief.size() + f.examples[1].action.size()) +
                               static_cast<double>(f.examples[3].belief.size() + f.examples[3].action.size())) * lnV;
  EXPECT_NEAR(loss.item(), expect, 1e-10);
}

TEST(SupervisedLoss, MatchesScalarOracle) {
  Fixture f;
  GdpParams<double> p(f.config());
  p.initialize(3);
  for (auto& nt : p.named_all())
    for (auto& v : nt.tensor->data) v *= 5.0;
  const auto& ex = f.examples[2];
  Tape<double> tape;
  std::vector<const Example*> batch{&ex};
  const double got = supervised_loss<double>(tape, p, batch).item();

  auto enc = reference::encode(p, ex.context);
  auto trk = reference::track_teacher_forced(p, enc, ex.belief);
  auto kb = encode_count<double>(ex.kb_count);
  const double want = trk.loss + reference::policy_teacher_forced_loss(p, enc, trk, kb, ex.action);
  EXPECT_NEAR(got, want, 1e-10);
}

TEST(EarlyStopping, PatienceTrace) {
  // Improves through epoch 3, then worsens monotonically.
  EarlyStopping s{2};
  const double losses[] = {5.0, 4.0, 3.0, 3.5, 4.0, 4.5};
  std::size_t stopped = 0;
  for (std::size_t e = 1; e <= 6; ++e) {
    s.update(e, losses[e - 1]);
    if (s.should_stop()) {
      stopped = e;
      break;
    }
  }
  EXPECT_EQ(stopped, 5u);
  EXPECT_EQ(s.best_epoch, 3u);
}

TEST(TrainSupervised, OneEpochCapGivesOneCurvePointAndIsDeterministic) {
  Fixture f;
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.batch_size = 2;
  cfg.seed = 11;
  GdpParams<double> a(f.config()), b(f.config());
  a.initialize(1);
  b.initialize(1);
  auto ra = train_supervised(a, f.examples, f.examples, cfg);
  auto rb = train_supervised(b, f.examples, f.examples, cfg);
  ASSERT_EQ(ra.curve.size(), 1u);
  EXPECT_EQ(ra.best_epoch, 1u);
  EXPECT_TRUE(bitwise_equal(a.snapshot(), b.snapshot()));
  EXPECT_EQ(ra.curve[0].dev_value, rb.curve[0].dev_value);
}

TEST(TrainSupervised, LossDecreasesOnTinyCorpus) {
  Fixture f;
  TrainConfig cfg;
  cfg.max_epochs = 25;
  cfg.batch_size = 2;
  cfg.lr_supervised = 0.02;
  cfg.weight_decay = 0;
  GdpParams<double> p(f.config());
  p.initialize(2);
  const double before = mean_loss(p, f.examples);
  auto res = train_supervised(p, f.examples, f.examples, cfg);
  EXPECT_LT(mean_loss(p, f.examples), 0.5 * before);
  EXPECT_EQ(mean_loss(p, f.examples), res.curve[res.best_epoch - 1].dev_value);
}

// ---------------------------------------------------------------------------
// Step rewards and REINFORCE

TEST(StepRewards, FinalPositionIsExactAndRolloutsMatchScriptedAverage) {
  Fixture f;
  GdpParams<double> p(f.config());
  p.initialize(9);
  for (auto& v : p.policy_out.data) v *= 30.0;  // sharpen so sequences end
  RewardSpec spec;
  RewardContext rc{f.loaded.vocab, f.loaded.lexicon, spec};
  const auto& ex = f.examples[1];

  Tape<double> tape(false);
  auto enc = encode_context(tape, p, ex.context);
  auto trk = track_state(tape, p, enc);
  auto ctx = make_policy_context(tape, p, enc, trk, encode_count<double>(2));
  // Scripted sequence: the gold action, with the decoder states along it.
  std::vector<std::vector<double>> hiddens;
  Var<double> h = policy_initial_hidden(tape, p, enc);
  std::size_t prev = kSos;
  for (auto y : ex.action) {
    h = decode_policy_step(tape, p, ctx, prev, h).hidden;
    hiddens.emplace_back(h.value().begin(), h.value().end());
    prev = y;
  }
  auto r = estimate_step_rewards(tape, p, ctx, ex.action, hiddens, ex.gold_action, rc, 77);
  ASSERT_EQ(r.size(), ex.action.size());
  EXPECT_EQ(r.back(), 2.0);

  // Independent re-run of the rollouts for every position.
  for (std::size_t j = 0; j + 1 < ex.action.size(); ++j) {
    double total = 0;
    for (std::size_t n = 0; n < spec.rollouts; ++n) {
      Rng rng(derive_seed({77, j, n}));
      std::vector<std::size_t> seq(ex.action.begin(), ex.action.begin() + static_cast<std::ptrdiff_t>(j) + 1);
      Var<double> hh = tape.constant({hiddens[j].size()}, hiddens[j]);
      while (seq.size() < p.config.max_action_len && seq.back() != kEosAction) {
        auto step = decode_policy_step(tape, p, ctx, seq.back(), hh);
        auto probs = step.distribution.value();
        double u = rng.uniform(), c = 0;
        std::size_t pick_id = probs.size() - 1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          c += probs[i];
          if (u < c) {
            pick_id = i;
            break;
          }
        }
        seq.push_back(pick_id);
        hh = step.hidden;
      }
      total += reward(deserialize_action(f.loaded.vocab.tokens(seq), f.loaded.lexicon), ex.gold_action, spec);
    }
    const double want = std::pow(0.8, static_cast<double>(ex.action.size() - 1 - j)) * total / 5.0;
    EXPECT_NEAR(r[j], want, 1e-10) << "position " << j;
  }
}

TEST(StepRewards, BoundedOverRandomModels) {
  Fixture f;
  RewardSpec spec;
  RewardContext rc{f.loaded.vocab, f.loaded.lexicon, spec};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GdpParams<double> p(f.config());
    p.initialize(seed);
    const auto& ex = f.examples[seed % f.examples.size()];
    Tape<double> tape(false);
    auto enc = encode_context(tape, p, ex.context);
    auto trk = track_state(tape, p, enc);
    auto ctx = make_policy_context(tape, p, enc, trk, encode_count<double>(1));
    Rng rng(seed);
    std::vector<std::vector<double>> hiddens;
    std::vector<std::size_t> seq;
    Var<double> h = policy_initial_hidden(tape, p, enc);
    while (seq.size() < 5) {
      auto step = decode_policy_step(tape, p, ctx, seq.empty() ? kSos : seq.back(), h);
      h = step.hidden;
      hiddens.emplace_back(h.value().begin(), h.value().end());
      seq.push_back(sample_index<double>(step.distribution.value(), rng));
    }
    for (double r : estimate_step_rewards(tape, p, ctx, seq, hiddens, ex.gold_action, rc, seed)) {
      EXPECT_GE(r, -5.0);
      EXPECT_LE(r, 2.0);
    }
  }
}

TEST(Reinforce, SurrogateGradientIsScoreFunction) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> theta({6}, 0.0, true);
    for (auto& v : theta.data) v = rng.uniform(-2, 2);
    const std::size_t y = rng.below(6);
    const double r = rng.uniform(-5, 2);
    Tape<double> tape;
    auto dist = softmax(tape.param(theta));
    auto loss = reinforce_surrogate<double>({dist}, {y}, {r});
    tape.backward(loss);
    // d/dθ of -r log softmax(θ)_y = r (p - e_y)
    for (std::size_t i = 0; i < 6; ++i) {
      const double analytic = r * (dist[i] - (i == y ? 1.0 : 0.0));
      EXPECT_NEAR(theta.grad[i], analytic, 1e-8);
    }
  }
}

TEST(Reinforce, OneStepBanditFavoursRewardedToken) {
  Tensor<double> theta({2}, 0.0, true);
  Adam<double> opt({&theta}, {0.01, 0.9, 0.999, 1e-8, 0.0});
  Rng rng(8);
  auto prob_a = [&] {
    Tape<double> t(false);
    return softmax(t.param(theta))[0];
  };
  double prev = prob_a();
  const double start = prev;
  for (int step = 0; step < 50; ++step) {
    Tape<double> tape;
    theta.zero_grad();
    auto dist = softmax(tape.param(theta));
    const auto tok = sample_index<double>(dist.value(), rng);
    const double r = tok == 0 ? 2.0 : -5.0;
    tape.backward(reinforce_surrogate<double>({dist}, {tok}, {r}));
    opt.step();
    const double now = prob_a();
    EXPECT_GT(now, prev) << "update " << step;
    prev = now;
  }
  EXPECT_GT(prev, start);
}

TEST(Reinforce, FrozenEncoderAndTrackerAreBitwiseUnchanged) {
  Fixture f;
  GdpParams<double> p(f.config());
  p.initialize(5);
  RlEnvironment env{f.loaded.vocab, f.loaded.lexicon, f.kb, f.ontology, {}};
  p.set_trainable(ParamGroup::kEncoder, false);
  p.set_trainable(ParamGroup::kTracker, false);
  Adam<double> opt(p.tensors({ParamGroup::kPolicy}), {1e-2, 0.9, 0.999, 1e-8, 1e-3});
  const auto frozen_before = group_snapshot(p, {ParamGroup::kEncoder, ParamGroup::kTracker});
  const auto policy_before = group_snapshot(p, {ParamGroup::kPolicy});
  std::vector<const Example*> batch{&f.examples[0], &f.examples[2]};
  for (std::uint64_t step = 0; step < 10; ++step) {
    double r = reinforce_update<double>(p, batch, env, opt, step);
    EXPECT_GE(r, -5.0);
    EXPECT_LE(r, 2.0);
  }
  EXPECT_TRUE(bitwise_equal(group_snapshot(p, {ParamGroup::kEncoder, ParamGroup::kTracker}), frozen_before));
  EXPECT_FALSE(bitwise_equal(group_snapshot(p, {ParamGroup::kPolicy}), policy_before));

  // Unfrozen encoder is a contract violation.
  p.set_trainable(ParamGroup::kEncoder, true);
  EXPECT_THROW(reinforce_update<double>(p, batch, env, opt, 99), InternalError);
}

TEST(Reinforce, ZeroRewardsLeaveParametersUnchanged) {
  Fixture f;
  GdpParams<double> p(f.config());
  p.initialize(6);
  RlEnvironment env{f.loaded.vocab, f.loaded.lexicon, f.kb, f.ontology, {0.0, 0.0, 0.0, 0.8, 3}};
  p.set_trainable(ParamGroup::kEncoder, false);
  p.set_trainable(ParamGroup::kTracker, false);
  Adam<double> opt(p.tensors({ParamGroup::kPolicy}), {1e-2, 0.9, 0.999, 1e-8, 0.0});
  const auto before = p.snapshot();
  std::vector<const Example*> batch{&f.examples[1]};
  for (std::uint64_t step = 0; step < 3; ++step) reinforce_update<double>(p, batch, env, opt, step);
  EXPECT_TRUE(bitwise_equal(p.snapshot(), before));
}

TEST(TrainRl, ZeroEpochsIsIdentity) {
  Fixture f;
  GdpParams<double> p(f.config());
  p.initialize(7);
  const auto before = p.snapshot();
  RlEnvironment env{f.loaded.vocab, f.loaded.lexicon, f.kb, f.ontology, {}};
  TrainConfig cfg;
  cfg.rl_epochs = 0;
  auto res = train_rl(p, f.examples, env, cfg);
  EXPECT_TRUE(res.curve.empty());
  EXPECT_TRUE(bitwise_equal(p.snapshot(), before));
}

TEST(TrainRl, DeterministicAndKeepsBestDevApra) {
  Fixture f;
  RlEnvironment env{f.loaded.vocab, f.loaded.lexicon, f.kb, f.ontology, {}};
  TrainConfig cfg;
  cfg.rl_epochs = 2;
  cfg.batch_size = 2;
  cfg.lr_rl = 1e-2;
  GdpParams<double> a(f.config()), b(f.config());
  a.initialize(8);
  b.initialize(8);
  const auto start = a.snapshot();
  // A metric that never improves keeps the starting parameters.
  auto ra = train_rl(a, f.examples, env, cfg, [] { return 0.5; });
  auto rb = train_rl(b, f.examples, env, cfg, [] { return 0.5; });
  ASSERT_EQ(ra.curve.size(), 3u);
  EXPECT_EQ(ra.best_epoch, 0u);
  EXPECT_TRUE(bitwise_equal(a.snapshot(), start));
  for (std::size_t i = 0; i < ra.curve.size(); ++i) EXPECT_EQ(ra.curve[i].train_value, rb.curve[i].train_value);
}

// ---------------------------------------------------------------------------
// Baseline heads

TEST(Heads, TrainingFitsTinyCorpusAndRespectsStructure) {
  Fixture f;
  auto cfg_model = f.config();
  cfg_model.d_enc = 8;
  GdpParams<double> p(cfg_model);
  p.initialize(12);
  for (auto& nt : p.named_all())
    for (auto& v : nt.tensor->data) v *= 6.0;
  auto labels = BaselineLabels::from_corpus(f.loaded.corpus, f.loaded.lexicon);
  auto hx = head_examples(p, f.examples, f.loaded.vocab, f.kb, f.ontology);
  const auto frozen = group_snapshot(p, {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kPolicy});
  TrainConfig cfg;
  cfg.head_epochs = 500;
  cfg.lr_supervised = 0.05;
  cfg.weight_decay = 0;
  train_heads(p, hx, labels, cfg);
  EXPECT_TRUE(bitwise_equal(group_snapshot(p, {ParamGroup::kEncoder, ParamGroup::kTracker, ParamGroup::kPolicy}), frozen));

  for (const auto& ex : hx) {
    Tape<double> tape(false);
    auto feat = tape.constant({ex.features.size()}, ex.features);
    auto e = e2ecm_predict(sigmoid_scores(e2ecm_logits(tape, p, feat)), labels);
    auto c = cdm_predict(cdm_logits(tape, p, feat), labels);
    for (const auto& it : e.items) EXPECT_TRUE(it.slot.empty());
    EXPECT_EQ(c.items.size(), 1u);
    // Heads fit the act sets and first items of this tiny corpus.
    std::set<std::string> gold_acts, got_acts;
    for (const auto& it : ex.gold.items) gold_acts.insert(it.act);
    for (const auto& it : e.items) got_acts.insert(it.act);
    EXPECT_EQ(got_acts, gold_acts);
    EXPECT_EQ(c.items[0], canonicalize(ex.gold).items.front());
  }
}
