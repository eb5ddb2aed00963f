#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/corpus.hpp"
#include "gendp/kb.hpp"
#include "gendp/toy.hpp"

namespace gendp {

// Mapping from DSTC2 session directories (log.json + label.json) to the
// JSONL corpus:
//   user turn i      -> "user"     : label.turns[i].transcription
//   goal-labels      -> "belief"   : values in first-mention order, dontcare dropped
//   log.turns[i+1]   -> "action"   : dialog-acts; slot values become <slot>_slot,
//                                    request [slot, s] becomes [request, s]
//                    -> "response" : transcript with act values delexicalized
//   KB query         -> "kb_count"
// The final user turn has no system reply and is dropped.
struct Dstc2Options {
  std::string input;   // root searched recursively for session directories
  std::string output;  // directory for {train,dev,test}.jsonl, kb.json, ontology.json
  std::string kb;      // optional database JSON; otherwise built from offers
  std::string train_list, dev_list, test_list;  // optional flists, paths relative to input
};

struct Dstc2Summary {
  std::size_t sessions = 0;
  std::size_t skipped = 0;
  std::map<std::string, std::size_t> dialogues, turns;
};

namespace dstc2_detail {

// Replaces every occurrence of `value` (as a token run) by `placeholder`.
inline void replace_run(std::vector<std::string>& toks, const std::vector<std::string>& value, const std::string& placeholder) {
  if (value.empty()) return;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < toks.size();) {
    if (i + value.size() <= toks.size() && std::equal(value.begin(), value.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) {
      out.push_back(placeholder);
      i += value.size();
    } else {
      out.push_back(toks[i++]);
    }
  }
  toks = std::move(out);
}

struct SystemTurn {
  nlohmann::json action = nlohmann::json::array();
  std::string response;
  std::map<std::string, std::string> offered;  // name plus informed attributes
};

inline SystemTurn convert_system(const nlohmann::json& output) {
  SystemTurn st;
  std::vector<std::pair<std::vector<std::string>, std::string>> values;
  std::string offered_name;
  std::map<std::string, std::string> informed;
  for (const auto& da : output.value("dialog-acts", nlohmann::json::array())) {
    const auto act = as_token(da.at("act").get<std::string>());
    const auto slots = da.value("slots", nlohmann::json::array());
    if (slots.empty()) {
      st.action.push_back({act});
      continue;
    }
    for (const auto& sv : slots) {
      const auto slot = as_token(sv.at(0).get<std::string>());
      const std::string value = sv.size() > 1 && sv.at(1).is_string() ? sv.at(1).get<std::string>() : "";
      if (slot == "slot") {
        st.action.push_back({act, as_token(value)});
        continue;
      }
      st.action.push_back({act, slot, slot + "_slot"});
      if (!value.empty() && value != "dontcare") values.emplace_back(tokenize(value), slot + "_slot");
      if (act == "offer" && slot == "name") offered_name = value;
      else if (act == "inform" && !value.empty() && value != "dontcare") informed[slot] = value;
    }
  }
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  auto toks = tokenize(output.value("transcript", std::string()));
  for (const auto& [v, ph] : values) replace_run(toks, v, ph);
  st.response = join(toks);
  if (!offered_name.empty()) {
    st.offered = informed;
    st.offered["name"] = offered_name;
  }
  return st;
}

inline std::vector<std::string> read_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open session list: " + path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace dstc2_detail

inline Dstc2Summary convert_dstc2(const Dstc2Options& opt) {
  namespace fs = std::filesystem;
  using namespace dstc2_detail;
  if (opt.input.empty() || !fs::is_directory(opt.input)) throw Error("convert-dstc2: input directory not found: " + opt.input);
  if (opt.output.empty()) throw Error("convert-dstc2: missing output directory");

  // Session directory -> split.
  std::vector<std::pair<fs::path, std::string>> sessions;
  if (!opt.train_list.empty() || !opt.dev_list.empty() || !opt.test_list.empty()) {
    for (const auto& [list, split] : {std::pair{opt.train_list, "train"}, {opt.dev_list, "dev"}, {opt.test_list, "test"}})
      if (!list.empty())
        for (const auto& rel : read_list(list)) sessions.emplace_back(fs::path(opt.input) / rel, split);
  } else {
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(opt.input))
      if (e.is_regular_file() && e.path().filename() == "log.json" && fs::exists(e.path().parent_path() / "label.json"))
        found.push_back(e.path().parent_path());
    std::sort(found.begin(), found.end());
    for (std::size_t i = 0; i < found.size(); ++i) sessions.emplace_back(found[i], i % 5 < 3 ? "train" : (i % 5 == 3 ? "dev" : "test"));
  }
  if (sessions.empty()) throw Error("convert-dstc2: no sessions with log.json and label.json under " + opt.input);

  struct Pending {
    std::string split;
    std::vector<std::pair<nlohmann::json, BeliefState>> turns;
  };
  std::vector<Pending> pending;
  std::map<std::string, std::map<std::string, std::string>> offered;  // name -> attributes
  Ontology ontology;
  Dstc2Summary sum;
  for (const auto& [dir, split] : sessions) {
    ++sum.sessions;
    const auto log = read_json_file((dir / "log.json").string());
    const auto label = read_json_file((dir / "label.json").string());
    const auto& lt = log.at("turns");
    const auto& ut = label.at("turns");
    Pending p{split, {}};
    std::vector<std::pair<std::string, std::string>> belief;  // slot, value in first-mention order
    for (std::size_t i = 0; i < ut.size() && i + 1 < lt.size(); ++i) {
      const auto goals = ut[i].value("goal-labels", nlohmann::json::object());
      for (const auto& [slot, v] : goals.items()) {
        if (!v.is_string() || v.get<std::string>() == "dontcare") continue;
        const auto value = v.get<std::string>();
        ontology.value_to_slot[as_token(value)] = slot;
        auto it = std::find_if(belief.begin(), belief.end(), [&](const auto& b) { return b.first == slot; });
        if (it == belief.end()) belief.emplace_back(slot, value);
        else it->second = value;
      }
      auto st = convert_system(lt[i + 1].at("output"));
      if (!st.offered.empty()) {
        auto& rec = offered[st.offered["name"]];
        for (const auto& [k, v] : st.offered) rec[k] = v;
      }
      BeliefState b;
      for (const auto& [s, v] : belief) b.tokens.push_back(as_token(v));
      p.turns.push_back({{{"user", ut[i].value("transcription", std::string())},
                          {"belief", b.tokens},
                          {"action", st.action},
                          {"response", st.response}},
                         b});
    }
    if (p.turns.empty()) {
      ++sum.skipped;
      continue;
    }
    pending.push_back(std::move(p));
  }

  KnowledgeBase kb;
  if (!opt.kb.empty()) {
    kb = load_kb(opt.kb);
  } else {
    for (const auto& [name, rec] : offered) kb.records.push_back(KbRecord(rec.begin(), rec.end()));
  }
  for (const auto& rec : kb.records)
    for (const char* slot : {"food", "pricerange", "area"})
      if (auto it = rec.find(slot); it != rec.end() && !ontology.value_to_slot.count(as_token(it->second)))
        ontology.value_to_slot[as_token(it->second)] = slot;

  std::map<std::string, std::string> text;
  for (const char* s : {"train", "dev", "test"}) text[s];
  for (auto& p : pending) {
    nlohmann::json turns = nlohmann::json::array();
    for (auto& [turn, belief] : p.turns) {
      turn["kb_count"] = query(kb, belief, ontology).count;
      turns.push_back(std::move(turn));
    }
    text[p.split] += nlohmann::json{{"turns", turns}}.dump() + "\n";
    ++sum.dialogues[p.split];
    sum.turns[p.split] += p.turns.size();
  }
  fs::create_directories(opt.output);
  for (const auto& [split, t] : text) write_text(fs::path(opt.output) / (split + ".jsonl"), t);
  write_text(fs::path(opt.output) / "kb.json", kb.to_json().dump(1) + "\n");
  write_text(fs::path(opt.output) / "ontology.json", ontology.to_json().dump(1) + "\n");
  return sum;
}

}  // namespace gendp
