// Generates a small toy restaurant domain, trains a small model and runs
// three turns of dialogue through it.

#include <filesystem>
#include <iostream>

#include "gendp/app.hpp"
#include "gendp/toy.hpp"

using namespace gendp;

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "quickstart_data";
  RunConfig cfg;
  cfg.toy.train_dialogues = 1000;
  cfg.toy.dev_dialogues = 100;
  cfg.toy.test_dialogues = 100;
  cfg.model.d_emb = 32;
  cfg.model.d_enc = 64;
  cfg.model.d_policy = 32;
  cfg.model.d_attn = 32;
  cfg.training.max_epochs = 10;
  cfg.training.head_epochs = 2;
  const auto data = generate_toy_data(cfg.toy, cfg.seed);
  write_toy_data(data, dir);
  cfg.paths.from_dir(dir.string());

  ModelBundle bundle;
  train_model(cfg, bundle, Log{&std::cerr});

  auto agent = bundle.agent();
  TurnInput in;
  // Ask for a restaurant that exists so the reply can be filled in.
  const auto& goal = data.kb.records.front();
  for (const std::string& user : {"i need a " + goal.at("pricerange") + " restaurant that serves " + goal.at("food") + " food",
                                   "in the " + goal.at("area"), std::string("what is the address ?")}) {
    in.user = tokenize(user);
    auto pred = agent.predict(in, PolicyKind::kGdp);
    std::cout << "user>   " << user << "\n"
              << "belief: " << join(pred.belief.tokens) << "\n"
              << "action: " << join(pred.action_tokens) << "\n"
              << "system> " << detokenize(pred.response) << "\n";
    in.belief_prev = pred.belief.tokens;
    in.response_prev = tokenize(pred.response_delex);
  }
}
