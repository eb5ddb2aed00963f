#pragma once

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/agent.hpp"
#include "gendp/config.hpp"
#include "gendp/eval.hpp"
#include "gendp/numerics/checkpoint.hpp"
#include "gendp/training.hpp"

namespace gendp {

// A trained model with everything needed to run it: the checkpoint carries
// vocabulary, lexicon, KB, ontology and template bank so that evaluation
// and chat need no other inputs.
struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;
  Lexicon lexicon;
  BaselineLabels labels;
  KnowledgeBase kb;
  Ontology ontology;
  TemplateBank templates;
  nlohmann::json stages = nlohmann::json::object();  // what has been trained
  std::unique_ptr<GdpParams<float>> params;

  Agent<float> agent(double threshold = 0.5) const {
    return {*params, vocab, lexicon, labels, kb, ontology, templates, threshold};
  }

  nlohmann::json meta() const {
    nlohmann::json cfg;
    to_json(cfg, config);
    return {{"model", cfg},
            {"vocab", vocab.all_tokens()},
            {"lexicon", {{"acts", lexicon.acts}, {"slots", lexicon.slots}}},
            {"labels", labels.to_json()},
            {"kb", kb.to_json()},
            {"ontology", ontology.to_json()},
            {"templates", templates.to_json()},
            {"stages", stages}};
  }

  void save(const std::string& path, std::uint64_t seed) const {
    save_checkpoint<float>(path, params->named_all(), meta(), seed);
  }

  static ModelBundle load(const std::string& path) {
    const auto ck = load_checkpoint(path);
    const auto& m = ck.meta;
    ModelBundle b;
    try {
      from_json(m.at("model"), b.config);
      b.vocab = Vocabulary::from_tokens(m.at("vocab").get<std::vector<std::string>>());
      b.lexicon.acts = m.at("lexicon").at("acts").get<std::set<std::string>>();
      b.lexicon.slots = m.at("lexicon").at("slots").get<std::set<std::string>>();
      b.labels = BaselineLabels::from_json(m.at("labels"));
      b.kb = KnowledgeBase::from_json(m.at("kb"));
      b.ontology = Ontology::from_json(m.at("ontology"));
      b.templates = TemplateBank::from_json(m.at("templates"));
      b.stages = m.value("stages", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": checkpoint metadata incomplete: " + e.what(), 0);
    }
    if (b.vocab.size() != b.config.vocab_size) throw ShapeError(path + ": vocabulary does not match model size");
    b.params = std::make_unique<GdpParams<float>>(b.config);
    restore_tensors(ck, b.params->named_all());
    return b;
  }
};

struct Log {
  std::ostream* out = nullptr;
  template <typename... A>
  void operator()(const A&... parts) const {
    if (!out) return;
    ((*out) << ... << parts) << '\n';
    out->flush();
  }
};

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(std::string("missing ") + what + " path");
  if (!std::filesystem::exists(path)) throw Error(std::string(what) + " not found: " + path);
}

inline LoadedCorpus load_split(const std::string& path, const ModelBundle& b, const std::string& split) {
  require_file(path, (split + " corpus").c_str());
  return load_corpus(path, VocabPolicy::frozen(b.vocab, b.lexicon), split);
}

inline double dev_apra(const ModelBundle& b, const Corpus& dev, double threshold) {
  return evaluate(b.agent(threshold), dev, PolicyKind::kGdp).apra;
}

struct TrainOutcome {
  TrainResult supervised;
  std::size_t train_turns = 0, dev_turns = 0;
  double seconds = 0;
};

// Supervised GDP training followed by the two baseline heads on the frozen
// encoder/tracker. Leaves a ready-to-save bundle in `bundle`.
inline TrainOutcome train_model(const RunConfig& cfg, ModelBundle& bundle, const Log& log = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  require_file(cfg.paths.train, "train corpus");
  require_file(cfg.paths.dev, "dev corpus");
  require_file(cfg.paths.kb, "knowledge base");
  require_file(cfg.paths.ontology, "ontology");
  auto train = load_corpus(cfg.paths.train, VocabPolicy::build(cfg.max_vocab), "train");
  bundle.vocab = train.vocab;
  bundle.lexicon = train.lexicon;
  auto dev = load_split(cfg.paths.dev, bundle, "dev");
  bundle.kb = load_kb(cfg.paths.kb);
  bundle.ontology = load_ontology(cfg.paths.ontology);
  bundle.templates = TemplateBank::build(train.corpus);
  if (!cfg.paths.templates.empty()) bundle.templates.merge(read_json_file(cfg.paths.templates));
  bundle.labels = BaselineLabels::from_corpus(train.corpus, train.lexicon);
  bundle.config = cfg.model;
  bundle.config.vocab_size = bundle.vocab.size();
  bundle.config.n_acts = bundle.labels.acts.size();
  bundle.config.n_slots = bundle.labels.slots.size();
  bundle.params = std::make_unique<GdpParams<float>>(bundle.config);
  bundle.params->initialize(derive_seed({cfg.seed, 0x1417}));

  auto tc = cfg.training;
  tc.seed = cfg.seed;
  const auto train_ex = make_examples(train.corpus, bundle.vocab);
  const auto dev_ex = make_examples(dev.corpus, bundle.vocab);
  log("vocabulary ", bundle.vocab.size(), ", train turns ", train_ex.size(), ", dev turns ", dev_ex.size(),
      ", parameters ", bundle.params->parameter_count(ParamGroup::kEncoder) +
                           bundle.params->parameter_count(ParamGroup::kTracker) +
                           bundle.params->parameter_count(ParamGroup::kPolicy));
  TrainOutcome out;
  out.train_turns = train_ex.size();
  out.dev_turns = dev_ex.size();
  out.supervised = train_supervised<float>(
      *bundle.params, train_ex, dev_ex, tc, [&] { return dev_apra(bundle, dev.corpus, cfg.threshold); },
      [&](const CurvePoint& p) {
        log("epoch ", p.epoch, "  train_loss ", p.train_value, "  dev_loss ", p.dev_value, "  dev_APRA ", p.dev_apra);
      });
  log("best epoch ", out.supervised.best_epoch, out.supervised.stopped_early ? " (early stop)" : "");

  auto hx = head_examples(*bundle.params, train_ex, bundle.vocab, bundle.kb, bundle.ontology);
  train_heads(*bundle.params, hx, bundle.labels, tc);
  log("baseline heads trained for ", tc.head_epochs, " epochs");
  bundle.stages = {{"supervised", true}, {"heads", true}, {"rl", false}};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// REINFORCE fine-tuning of the policy maker of a loaded bundle.
inline TrainResult finetune_model(const RunConfig& cfg, ModelBundle& bundle, const Log& log = {}) {
  cfg.validate();
  auto train = load_split(cfg.paths.train, bundle, "train");
  auto dev = load_split(cfg.paths.dev, bundle, "dev");
  auto tc = cfg.training;
  tc.seed = cfg.seed;
  RlEnvironment env{bundle.vocab, bundle.lexicon, bundle.kb, bundle.ontology, cfg.reward};
  auto res = train_rl<float>(
      *bundle.params, make_examples(train.corpus, bundle.vocab), env, tc,
      [&] { return dev_apra(bundle, dev.corpus, cfg.threshold); },
      [&](const CurvePoint& p) { log("rl epoch ", p.epoch, "  mean_reward ", p.train_value, "  dev_APRA ", p.dev_apra); });
  bundle.stages["rl"] = true;
  return res;
}

inline std::vector<PolicyKind> parse_policies(const std::string& s) {
  if (s == "all") return {PolicyKind::kGdp, PolicyKind::kE2ecm, PolicyKind::kCdm};
  return {parse_policy(s)};
}

inline std::vector<EvalReport> evaluate_bundle(const ModelBundle& b, const Corpus& corpus,
                                               const std::vector<PolicyKind>& policies, double threshold) {
  std::vector<EvalReport> out;
  for (auto k : policies) out.push_back(evaluate(b.agent(threshold), corpus, k));
  return out;
}

inline nlohmann::json reports_json(const std::vector<EvalReport>& reports, bool timings, bool records) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(r.to_json(timings, records));
  return j;
}

}  // namespace gendp
