// gendp command-line front end.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "gendp/app.hpp"
#include "gendp/dstc2.hpp"

using namespace gendp;

namespace {

// Bad invocation: reported with exit status 2.
struct UsageError : Error {
  using Error::Error;
};

void need_path(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError("missing " + what + " path");
  if (!std::filesystem::exists(path)) throw UsageError(what + " not found: " + path);
}

void write_file(const std::string& path, const std::string& text) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Error("cannot write " + path);
}

// Flags only override what the user actually passed.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  nlohmann::json patch = nlohmann::json::object();

  template <typename V>
  void add(CLI::App* cmd, const std::string& flag, const std::string& section, const std::string& key,
           const std::string& help) {
    cmd->add_option_function<V>(
        flag, [this, section, key](const V& v) { patch[section][key] = v; }, help);
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config.empty()) {
      need_path(config, "config file");
      cfg.merge_file(config);
    }
    cfg.apply_environment();
    cfg.merge(patch);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option_function<std::uint64_t>("--seed", [&o](const std::uint64_t& s) { o.seed = s; }, "random seed");
}

void add_data(CLI::App* cmd, std::string& data_dir, DataPaths& p) {
  cmd->add_option("--data", data_dir, "directory with train/dev/test.jsonl, kb.json, ontology.json");
  cmd->add_option("--train", p.train, "train corpus (JSONL)");
  cmd->add_option("--dev", p.dev, "dev corpus (JSONL)");
  cmd->add_option("--test", p.test, "test corpus (JSONL)");
  cmd->add_option("--kb", p.kb, "knowledge base JSON");
  cmd->add_option("--ontology", p.ontology, "ontology JSON (value -> slot)");
  cmd->add_option("--templates", p.templates, "template overrides JSON");
}

void resolve_paths(RunConfig& cfg, const std::string& data_dir, const DataPaths& flags) {
  auto take = [](std::string& dst, const std::string& src) {
    if (!src.empty()) dst = src;
  };
  take(cfg.paths.train, flags.train);
  take(cfg.paths.dev, flags.dev);
  take(cfg.paths.test, flags.test);
  take(cfg.paths.kb, flags.kb);
  take(cfg.paths.ontology, flags.ontology);
  take(cfg.paths.templates, flags.templates);
  if (!data_dir.empty()) {
    if (!std::filesystem::is_directory(data_dir)) throw UsageError("data directory not found: " + data_dir);
    cfg.paths.from_dir(data_dir);
  }
}

void print_reports(const std::vector<EvalReport>& reports) { std::cout << format_table(reports); }

int run_chat(const ModelBundle& b, PolicyKind policy, double threshold, bool debug) {
  auto agent = b.agent(threshold);
  TurnInput in;
  std::cout << "gendp chat (" << policy_name(policy) << "). Empty line to skip, /reset to restart, Ctrl-D to quit.\n";
  std::string line;
  while (std::cout << "user> " << std::flush, std::getline(std::cin, line)) {
    if (line == "/reset") {
      in = {};
      std::cout << "(dialogue reset)\n";
      continue;
    }
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    in.user = tokenize(line);
    auto pred = agent.predict(in, policy);
    std::cout << "system> " << detokenize(pred.response) << "\n";
    if (debug) {
      std::cout << "  C_t: [" << join(pred.belief.tokens, ", ") << "]\n"
                << "  k_t: index " << pred.kb_bucket << " (" << pred.kb_count << " matching)\n"
                << "  A_t: " << join(pred.action_tokens) << (pred.well_formed ? "" : "  (malformed)") << "\n"
                << "  template: " << pred.template_key << (pred.unresolved ? "  (unfilled placeholders)" : "") << "\n";
    }
    in.belief_prev = pred.belief.tokens;
    in.response_prev = tokenize(pred.response_delex);
  }
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative dialogue policy: train, fine-tune, evaluate and chat"};
  app.require_subcommand(1);
  Overrides ov;
  Log log{&std::cerr};

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic restaurant domain");
  std::string gen_out;
  add_common(gen, ov);
  gen->add_option("--out", gen_out, "output directory")->required();
  ov.add<std::size_t>(gen, "--train-dialogues", "toy", "train_dialogues", "train dialogues");
  ov.add<std::size_t>(gen, "--dev-dialogues", "toy", "dev_dialogues", "dev dialogues");
  ov.add<std::size_t>(gen, "--test-dialogues", "toy", "test_dialogues", "test dialogues");
  ov.add<std::size_t>(gen, "--restaurants", "toy", "restaurants", "KB size");
  ov.add<double>(gen, "--multi-act-fraction", "toy", "multi_act_fraction", "target share of multi-act turns");

  // train
  auto* train = app.add_subcommand("train", "supervised training of GDP plus the baseline heads");
  std::string data_dir, curve, report;
  DataPaths flag_paths;
  std::string checkpoint;
  add_common(train, ov);
  add_data(train, data_dir, flag_paths);
  train->add_option("--checkpoint", checkpoint, "output checkpoint")->required();
  train->add_option("--curve", curve, "training curve CSV");
  train->add_option("--report", report, "dev evaluation report JSON");
  ov.add<std::size_t>(train, "--d-emb", "model", "d_emb", "embedding size");
  ov.add<std::size_t>(train, "--d-enc", "model", "d_enc", "encoder/tracker hidden size");
  ov.add<std::size_t>(train, "--d-policy", "model", "d_policy", "policy hidden size");
  ov.add<std::size_t>(train, "--d-attn", "model", "d_attn", "attention size");
  ov.add<std::size_t>(train, "--epochs", "training", "max_epochs", "maximum epochs");
  ov.add<std::size_t>(train, "--patience", "training", "patience", "early-stopping patience");
  ov.add<std::size_t>(train, "--batch-size", "training", "batch_size", "batch size");
  ov.add<std::size_t>(train, "--head-epochs", "training", "head_epochs", "baseline head epochs");
  ov.add<double>(train, "--lr", "training", "lr_supervised", "learning rate");
  ov.add<double>(train, "--weight-decay", "training", "weight_decay", "L2 weight decay");

  // finetune-rl
  auto* rl = app.add_subcommand("finetune-rl", "REINFORCE fine-tuning of the policy maker");
  std::string rl_out;
  add_common(rl, ov);
  add_data(rl, data_dir, flag_paths);
  rl->add_option("--checkpoint", checkpoint, "supervised checkpoint")->required();
  rl->add_option("--out", rl_out, "output checkpoint")->required();
  rl->add_option("--curve", curve, "reward curve CSV");
  ov.add<std::size_t>(rl, "--epochs", "training", "rl_epochs", "RL epochs");
  ov.add<std::size_t>(rl, "--max-turns", "training", "rl_max_turns", "train turns per epoch (0 = all)");
  ov.add<std::size_t>(rl, "--batch-size", "training", "batch_size", "batch size");
  ov.add<double>(rl, "--lr", "training", "lr_rl", "learning rate");
  ov.add<std::size_t>(rl, "--rollouts", "reward", "rollouts", "rollouts per step");
  ov.add<double>(rl, "--decay", "reward", "decay", "reward decay");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (BPRA, APRA, BLEU)");
  std::string corpus, policy_flag = "all";
  bool timings = false, records = false;
  double threshold = 0.5;
  ev->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  ev->add_option("--corpus", corpus, "corpus to evaluate (JSONL)")->required();
  ev->add_option("--policy", policy_flag, "gdp, e2ecm, cdm or all")
      ->check(CLI::IsMember({"gdp", "e2ecm", "cdm", "all"}));
  ev->add_option("--report", report, "report JSON");
  ev->add_flag("--timings", timings, "include timings in the report JSON");
  ev->add_flag("--records", records, "include per-turn records in the report JSON");
  ev->add_option("--threshold", threshold, "E2ECM/CDM decision threshold");

  // chat
  auto* chat = app.add_subcommand("chat", "interactive dialogue on stdin");
  std::string chat_policy = "gdp";
  bool debug = false;
  chat->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  chat->add_option("--policy", chat_policy, "gdp, e2ecm or cdm")->check(CLI::IsMember({"gdp", "e2ecm", "cdm"}));
  chat->add_flag("--debug", debug, "print C_t, k_t and A_t for every turn");
  chat->add_option("--threshold", threshold, "E2ECM/CDM decision threshold");

  // convert-dstc2
  auto* conv = app.add_subcommand("convert-dstc2", "convert DSTC2 session logs to the corpus format");
  Dstc2Options dopt;
  conv->add_option("--input", dopt.input, "DSTC2 data root")->required();
  conv->add_option("--out", dopt.output, "output directory")->required();
  conv->add_option("--kb", dopt.kb, "restaurant database JSON");
  conv->add_option("--train-list", dopt.train_list, "session list for train");
  conv->add_option("--dev-list", dopt.dev_list, "session list for dev");
  conv->add_option("--test-list", dopt.test_list, "session list for test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      auto cfg = ov.resolve();
      auto data = generate_toy_data(cfg.toy, cfg.seed);
      write_toy_data(data, gen_out);
      for (const auto& s : data.splits)
        std::cout << s.name << ": " << s.dialogues.size() << " dialogues, " << s.turns << " turns, multi-act fraction "
                  << s.multi_act_fraction() << "\n";
      std::cout << "kb: " << data.kb.records.size() << " restaurants, templates: " << data.templates.size() << "\n";
      return 0;
    }
    if (*train) {
      auto cfg = ov.resolve();
      resolve_paths(cfg, data_dir, flag_paths);
      need_path(cfg.paths.train, "train corpus");
      need_path(cfg.paths.dev, "dev corpus");
      need_path(cfg.paths.kb, "knowledge base");
      need_path(cfg.paths.ontology, "ontology");
      ModelBundle b;
      auto out = train_model(cfg, b, log);
      b.save(checkpoint, cfg.seed);
      write_file(curve, curve_csv(out.supervised.curve, false));
      auto dev = load_split(cfg.paths.dev, b, "dev");
      auto reports = evaluate_bundle(b, dev.corpus, parse_policies("all"), cfg.threshold);
      std::cout << "dev split, best epoch " << out.supervised.best_epoch << "\n";
      print_reports(reports);
      write_file(report, reports_json(reports, false, false).dump(2) + "\n");
      return 0;
    }
    if (*rl) {
      auto cfg = ov.resolve();
      resolve_paths(cfg, data_dir, flag_paths);
      need_path(checkpoint, "checkpoint");
      need_path(cfg.paths.train, "train corpus");
      need_path(cfg.paths.dev, "dev corpus");
      auto b = ModelBundle::load(checkpoint);
      auto res = finetune_model(cfg, b, log);
      b.save(rl_out, cfg.seed);
      write_file(curve, curve_csv(res.curve, true));
      auto dev = load_split(cfg.paths.dev, b, "dev");
      std::cout << "dev split, best RL epoch " << res.best_epoch << "\n";
      print_reports(evaluate_bundle(b, dev.corpus, {PolicyKind::kGdp}, cfg.threshold));
      return 0;
    }
    if (*ev) {
      need_path(checkpoint, "checkpoint");
      need_path(corpus, "corpus");
      auto b = ModelBundle::load(checkpoint);
      auto c = load_split(corpus, b, "eval");
      auto reports = evaluate_bundle(b, c.corpus, parse_policies(policy_flag), threshold);
      print_reports(reports);
      write_file(report, reports_json(reports, timings, records).dump(2) + "\n");
      return 0;
    }
    if (*chat) {
      need_path(checkpoint, "checkpoint");
      auto b = ModelBundle::load(checkpoint);
      return run_chat(b, parse_policy(chat_policy), threshold, debug);
    }
    if (*conv) {
      if (!std::filesystem::is_directory(dopt.input)) throw UsageError("input directory not found: " + dopt.input);
      auto sum = convert_dstc2(dopt);
      std::cout << "sessions " << sum.sessions << ", skipped " << sum.skipped << "\n";
      for (const auto& [split, n] : sum.dialogues) std::cout << split << ": " << n << " dialogues, " << sum.turns[split] << " turns\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
