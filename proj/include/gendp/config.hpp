#pragma once

#include <cstdlib>
#include <string>

#include <nlohmann/json.hpp>

#include "gendp/kb.hpp"
#include "gendp/model/gdp.hpp"
#include "gendp/toy.hpp"
#include "gendp/training.hpp"

namespace gendp {

struct DataPaths {
  std::string train, dev, test, kb, ontology, templates;

  // Fills every unset path from a directory laid out like gen-data output.
  void from_dir(const std::string& dir) {
    auto set = [&](std::string& p, const char* file) {
      if (p.empty()) p = (std::filesystem::path(dir) / file).string();
    };
    set(train, "train.jsonl");
    set(dev, "dev.jsonl");
    set(test, "test.jsonl");
    set(kb, "kb.json");
    set(ontology, "ontology.json");
    if (templates.empty() && std::filesystem::exists(std::filesystem::path(dir) / "templates.json"))
      templates = (std::filesystem::path(dir) / "templates.json").string();
  }
};

// Everything a command needs. Defaults are the published hyperparameters.
struct RunConfig {
  ModelConfig model;
  TrainConfig training;
  RewardSpec reward;
  ToyDomainSpec toy;
  DataPaths paths;
  std::string checkpoint;
  std::string output;
  std::string curve;
  std::string report;
  std::string policy = "gdp";
  double threshold = 0.5;
  std::uint64_t seed = 1;
  std::size_t max_vocab = 0;  // 0 keeps every train token

  nlohmann::json to_json() const {
    nlohmann::json m;
    gendp::to_json(m, model);
    m.erase("vocab_size");
    m.erase("n_acts");
    m.erase("n_slots");
    return {{"model", m},
            {"training",
             {{"lr_supervised", training.lr_supervised},
              {"lr_rl", training.lr_rl},
              {"weight_decay", training.weight_decay},
              {"batch_size", training.batch_size},
              {"max_epochs", training.max_epochs},
              {"patience", training.patience},
              {"rl_epochs", training.rl_epochs},
              {"rl_max_turns", training.rl_max_turns},
              {"head_epochs", training.head_epochs}}},
            {"reward",
             {{"full_correct", reward.full_correct},
              {"act_only_correct", reward.act_only_correct},
              {"wrong", reward.wrong},
              {"decay", reward.decay},
              {"rollouts", reward.rollouts}}},
            {"toy", toy.to_json()},
            {"paths",
             {{"train", paths.train},
              {"dev", paths.dev},
              {"test", paths.test},
              {"kb", paths.kb},
              {"ontology", paths.ontology},
              {"templates", paths.templates}}},
            {"policy", policy},
            {"threshold", threshold},
            {"seed", seed},
            {"max_vocab", max_vocab}};
  }

  // Keys present in `j` override the current values; unknown keys are errors.
  void merge(const nlohmann::json& j) {
    static const std::set<std::string> top{"model", "training", "reward", "toy", "paths", "policy",
                                           "threshold", "seed", "max_vocab", "checkpoint", "output"};
    for (const auto& [k, v] : j.items())
      if (!top.count(k)) throw Error("config: unknown key '" + k + "'");
    if (j.contains("model")) {
      nlohmann::json cur;
      gendp::to_json(cur, model);
      cur.update(j.at("model"));
      gendp::from_json(cur, model);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      training.lr_supervised = t.value("lr_supervised", training.lr_supervised);
      training.lr_rl = t.value("lr_rl", training.lr_rl);
      training.weight_decay = t.value("weight_decay", training.weight_decay);
      training.batch_size = t.value("batch_size", training.batch_size);
      training.max_epochs = t.value("max_epochs", training.max_epochs);
      training.patience = t.value("patience", training.patience);
      training.rl_epochs = t.value("rl_epochs", training.rl_epochs);
      training.rl_max_turns = t.value("rl_max_turns", training.rl_max_turns);
      training.head_epochs = t.value("head_epochs", training.head_epochs);
    }
    if (j.contains("reward")) {
      const auto& r = j.at("reward");
      reward.full_correct = r.value("full_correct", reward.full_correct);
      reward.act_only_correct = r.value("act_only_correct", reward.act_only_correct);
      reward.wrong = r.value("wrong", reward.wrong);
      reward.decay = r.value("decay", reward.decay);
      reward.rollouts = r.value("rollouts", reward.rollouts);
    }
    if (j.contains("toy")) {
      auto cur = toy.to_json();
      cur.update(j.at("toy"));
      toy = ToyDomainSpec::from_json(cur);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      paths.train = p.value("train", paths.train);
      paths.dev = p.value("dev", paths.dev);
      paths.test = p.value("test", paths.test);
      paths.kb = p.value("kb", paths.kb);
      paths.ontology = p.value("ontology", paths.ontology);
      paths.templates = p.value("templates", paths.templates);
    }
    policy = j.value("policy", policy);
    threshold = j.value("threshold", threshold);
    seed = j.value("seed", seed);
    max_vocab = j.value("max_vocab", max_vocab);
    checkpoint = j.value("checkpoint", checkpoint);
    output = j.value("output", output);
  }

  void merge_file(const std::string& path) { merge(read_json_file(path)); }

  // GENDP_SEED replaces the seed taken from defaults or a config file.
  void apply_environment() {
    if (const char* s = std::getenv("GENDP_SEED"); s && *s) {
      try {
        seed = std::stoull(s);
      } catch (const std::exception&) {
        throw Error(std::string("GENDP_SEED is not an unsigned integer: ") + s);
      }
    }
  }

  void validate() const {
    training.validate();
    if (reward.rollouts == 0) throw Error("reward.rollouts must be positive");
    if (!(reward.decay > 0 && reward.decay <= 1)) throw Error("reward.decay must be in (0, 1]");
    if (model.d_emb == 0 || model.d_enc == 0 || model.d_policy == 0 || model.d_attn == 0)
      throw Error("model sizes must be positive");
    if (model.kb_dims < 2) throw Error("model.kb_dims must be at least 2");
    if (model.max_belief_len == 0 || model.max_action_len == 0) throw Error("decode caps must be positive");
  }
};

}  // namespace gendp
