#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/action.hpp"
#include "gendp/corpus/tokenize.hpp"
#include "gendp/corpus/vocabulary.hpp"
#include "gendp/error.hpp"

namespace gendp {

struct Turn {
  std::vector<std::string> user_utterance;        // U_t
  BeliefState gold_belief;                        // C_t
  DialogueAction gold_action;                     // A_t
  std::vector<std::string> gold_response;         // R_t, delexicalized tokens
  std::string gold_response_template_id;          // action_key(A_t)
  std::vector<std::string> system_response_prev;  // R_{t-1}
  BeliefState belief_prev;                        // C_{t-1}
  std::size_t kb_count = 0;
};

struct Dialogue {
  std::vector<Turn> turns;
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  std::string split = "train";

  std::size_t num_turns() const {
    std::size_t n = 0;
    for (const auto& d : dialogues) n += d.turns.size();
    return n;
  }
};

// Single-token form of a belief/value entry ("north american" -> north_american).
inline std::string as_token(std::string s) {
  for (auto& c : s) {
    if (c == ' ') c = '_';
    else c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return s;
}

inline Corpus parse_corpus(std::istream& in, const std::string& split = "train") {
  Corpus corpus;
  corpus.split = split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Dialogue dialogue;
    try {
      auto j = nlohmann::json::parse(line);
      const auto& turns = j.at("turns");
      if (!turns.is_array() || turns.empty()) throw ParseError("dialogue has no turns", lineno);
      for (const auto& jt : turns) {
        Turn t;
        t.user_utterance = tokenize(jt.at("user").get<std::string>());
        for (const auto& b : jt.value("belief", nlohmann::json::array())) t.gold_belief.tokens.push_back(as_token(b.get<std::string>()));
        t.gold_belief = canonicalize(std::move(t.gold_belief));
        for (const auto& ja : jt.value("action", nlohmann::json::array())) {
          if (!ja.is_array() || ja.empty() || ja.size() > 3) {
            throw ParseError("action items must be arrays of 1 to 3 strings", lineno);
          }
          ActItem item;
          item.act = as_token(ja[0].get<std::string>());
          if (ja.size() > 1) item.slot = as_token(ja[1].get<std::string>());
          if (ja.size() > 2) item.value = as_token(ja[2].get<std::string>());
          try {
            item.validate();
          } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
          }
          t.gold_action.items.push_back(std::move(item));
        }
        t.gold_action = canonicalize(std::move(t.gold_action));
        t.gold_response = tokenize(jt.value("response", std::string()));
        t.gold_response_template_id = action_key(t.gold_action);
        auto count = jt.value("kb_count", 0);
        if (count < 0) throw ParseError("kb_count must be non-negative", lineno);
        t.kb_count = static_cast<std::size_t>(count);
        if (!dialogue.turns.empty()) {
          t.system_response_prev = dialogue.turns.back().gold_response;
          t.belief_prev = dialogue.turns.back().gold_belief;
        }
        dialogue.turns.push_back(std::move(t));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed dialogue record: ") + e.what(), lineno);
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }
  if (corpus.dialogues.empty()) throw ParseError("corpus is empty", 0);
  return corpus;
}

inline Corpus read_corpus(const std::string& path, const std::string& split = "train") {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus: " + path);
  return parse_corpus(in, split);
}

inline std::map<std::string, std::size_t> token_counts(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus.dialogues) {
    for (const auto& t : d.turns) {
      for (const auto& w : t.user_utterance) ++counts[w];
      for (const auto& w : t.gold_belief.tokens) ++counts[w];
      for (const auto& w : serialize_action(t.gold_action)) ++counts[w];
      for (const auto& w : t.gold_response) ++counts[w];
    }
  }
  return counts;
}

inline Vocabulary build_vocab(const Corpus& train, std::size_t max_size = 0) {
  if (train.dialogues.empty()) throw Error("build_vocab: empty train split");
  return Vocabulary::from_counts(token_counts(train), max_size);
}

inline Lexicon build_lexicon(const Corpus& train) {
  Lexicon lex;
  for (const auto& d : train.dialogues)
    for (const auto& t : d.turns)
      for (const auto& item : t.gold_action.items) {
        lex.acts.insert(item.act);
        if (!item.slot.empty()) lex.slots.insert(item.slot);
      }
  return lex;
}

// Every gold act label must be known to a frozen lexicon.
inline void check_against_lexicon(const Corpus& corpus, const Lexicon& lexicon) {
  for (const auto& d : corpus.dialogues)
    for (const auto& t : d.turns)
      for (const auto& item : t.gold_action.items)
        if (!lexicon.is_act(item.act)) throw VocabError("unknown act label '" + item.act + "' under frozen vocabulary");
}

struct VocabPolicy {
  enum class Mode { kBuild, kFrozen };
  Mode mode = Mode::kBuild;
  std::optional<Vocabulary> vocab;
  std::optional<Lexicon> lexicon;
  std::size_t max_size = 0;

  static VocabPolicy build(std::size_t max_size = 0) { return {Mode::kBuild, std::nullopt, std::nullopt, max_size}; }
  static VocabPolicy frozen(Vocabulary v, Lexicon l) { return {Mode::kFrozen, std::move(v), std::move(l), 0}; }
};

struct LoadedCorpus {
  Corpus corpus;
  Vocabulary vocab;
  Lexicon lexicon;
};

inline LoadedCorpus load_corpus(const std::string& path, const VocabPolicy& policy,
                                const std::string& split = "train") {
  LoadedCorpus out{read_corpus(path, split), {}, {}};
  if (policy.mode == VocabPolicy::Mode::kBuild) {
    out.vocab = build_vocab(out.corpus, policy.max_size);
    out.lexicon = build_lexicon(out.corpus);
  } else {
    out.vocab = policy.vocab.value();
    out.lexicon = policy.lexicon.value();
    check_against_lexicon(out.corpus, out.lexicon);
  }
  return out;
}

}  // namespace gendp
