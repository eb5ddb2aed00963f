#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/corpus.hpp"
#include "gendp/kb.hpp"
#include "gendp/nlg.hpp"
#include "gendp/numerics/rng.hpp"

namespace gendp {

// Synthetic restaurant domain. Every dialogue walks: constraints (with
// system requests while more than one restaurant matches) -> offer ->
// follow-up questions -> goodbye.
struct ToyDomainSpec {
  std::size_t restaurants = 60;
  std::vector<std::string> foods{"british", "chinese", "french", "indian", "italian",
                                 "japanese", "korean", "spanish", "thai", "turkish"};
  std::vector<std::string> priceranges{"cheap", "moderate", "expensive"};
  std::vector<std::string> areas{"centre", "east", "north", "south", "west"};
  std::size_t train_dialogues = 1000;
  std::size_t dev_dialogues = 200;
  std::size_t test_dialogues = 200;
  double multi_act_fraction = 0.55;

  nlohmann::json to_json() const {
    return {{"restaurants", restaurants},         {"foods", foods},
            {"priceranges", priceranges},         {"areas", areas},
            {"train_dialogues", train_dialogues}, {"dev_dialogues", dev_dialogues},
            {"test_dialogues", test_dialogues},   {"multi_act_fraction", multi_act_fraction}};
  }
  static ToyDomainSpec from_json(const nlohmann::json& j) {
    ToyDomainSpec s;
    s.restaurants = j.value("restaurants", s.restaurants);
    s.foods = j.value("foods", s.foods);
    s.priceranges = j.value("priceranges", s.priceranges);
    s.areas = j.value("areas", s.areas);
    s.train_dialogues = j.value("train_dialogues", s.train_dialogues);
    s.dev_dialogues = j.value("dev_dialogues", s.dev_dialogues);
    s.test_dialogues = j.value("test_dialogues", s.test_dialogues);
    s.multi_act_fraction = j.value("multi_act_fraction", s.multi_act_fraction);
    return s;
  }
  void validate() const {
    if (restaurants == 0) throw Error("toy domain needs at least one restaurant");
    if (train_dialogues == 0 || dev_dialogues == 0 || test_dialogues == 0)
      throw Error("toy domain: every split needs at least one dialogue");
    if (foods.empty() || priceranges.empty() || areas.empty()) throw Error("toy domain: empty value inventory");
    if (!(multi_act_fraction >= 0.0 && multi_act_fraction <= 1.0)) throw Error("multi_act_fraction must be in [0, 1]");
  }
};

struct ToySplit {
  std::string name;
  std::vector<nlohmann::json> dialogues;  // corpus records
  std::size_t turns = 0;
  std::size_t multi_act_turns = 0;
  double multi_act_fraction() const { return turns ? static_cast<double>(multi_act_turns) / static_cast<double>(turns) : 0.0; }
};

struct ToyData {
  KnowledgeBase kb;
  Ontology ontology;
  std::vector<ToySplit> splits;  // train, dev, test
  TemplateBank templates;
};

namespace toy_detail {

inline const std::vector<std::string> kInformable{"food", "pricerange", "area"};

template <typename V>
const auto& pick(const V& v, Rng& rng) {
  return v[rng.below(v.size())];
}

inline std::string constraint_phrase(const std::map<std::string, std::string>& c, Rng& rng) {
  static const std::vector<std::string> openers{"i want", "i am looking for", "i need", "can you find me"};
  std::string s = pick(openers, rng) + " a";
  if (c.count("pricerange")) s += " " + c.at("pricerange");
  s += " restaurant";
  if (c.count("food")) s += rng.below(2) ? " serving " + c.at("food") + " food" : " that serves " + c.at("food") + " food";
  if (c.count("area")) s += rng.below(2) ? " in the " + c.at("area") + " part of town" : " in the " + c.at("area");
  return s;
}

inline std::string answer_phrase(const std::string& slot, const std::string& value, Rng& rng) {
  if (slot == "food") {
    static const std::vector<std::string> f{"{} food please", "i would like {} food", "{}", "how about {} food"};
    auto t = pick(f, rng);
    return t.replace(t.find("{}"), 2, value);
  }
  if (slot == "pricerange") {
    static const std::vector<std::string> f{"{} please", "something {}", "a {} one", "{} price range"};
    auto t = pick(f, rng);
    return t.replace(t.find("{}"), 2, value);
  }
  static const std::vector<std::string> f{"the {} please", "in the {}", "{} part of town", "{}"};
  auto t = pick(f, rng);
  return t.replace(t.find("{}"), 2, value);
}

inline std::string request_response(const std::string& slot, Rng& rng) {
  if (slot == "food") return rng.uniform() < 0.8 ? "what kind of food would you like ?" : "what type of food do you want ?";
  if (slot == "pricerange")
    return rng.uniform() < 0.8 ? "would you like something in the cheap , moderate , or expensive price range ?"
                               : "what price range are you looking for ?";
  return rng.uniform() < 0.8 ? "what part of town do you have in mind ?" : "which area would you like ?";
}

inline std::string offer_response(const std::vector<std::string>& informed, Rng& rng) {
  auto has = [&](const char* s) { return std::find(informed.begin(), informed.end(), s) != informed.end(); };
  std::string s = rng.uniform() < 0.8 ? "name_slot is a nice" : "how about name_slot , a";
  if (has("pricerange")) s += " pricerange_slot";
  s += " restaurant";
  if (has("food")) s += " serving food_slot food";
  if (has("area")) s += " in the area_slot of town";
  return s + (s.starts_with("how") ? " ?" : " .");
}

}  // namespace toy_detail

inline ToyData generate_toy_data(const ToyDomainSpec& spec, std::uint64_t seed) {
  using namespace toy_detail;
  spec.validate();
  ToyData data;
  Rng kb_rng(derive_seed({seed, 1}));
  static const std::vector<std::string> adjectives{"golden", "red", "silver", "lucky", "royal", "green", "little",
                                                   "grand", "old", "happy", "blue", "jade"};
  static const std::vector<std::string> nouns{"house", "dragon", "garden", "kitchen", "bistro", "palace", "table",
                                              "lantern", "oak", "spoon", "bell", "star"};
  static const std::vector<std::string> streets{"king", "regent", "mill", "bridge", "castle", "hills", "station"};
  std::set<std::string> used;
  for (std::size_t i = 0; i < spec.restaurants; ++i) {
    std::string name;
    do {
      name = "the " + pick(adjectives, kb_rng) + " " + pick(nouns, kb_rng);
      if (used.count(name)) name += " " + std::to_string(i);
    } while (used.count(name));
    used.insert(name);
    data.kb.records.push_back({{"name", name},
                               {"food", pick(spec.foods, kb_rng)},
                               {"pricerange", pick(spec.priceranges, kb_rng)},
                               {"area", pick(spec.areas, kb_rng)},
                               {"addr", std::to_string(1 + kb_rng.below(99)) + " " + pick(streets, kb_rng) + " street"},
                               {"phone", "01223 " + std::to_string(100000 + kb_rng.below(900000))}});
  }
  for (const auto& v : spec.foods) data.ontology.value_to_slot[as_token(v)] = "food";
  for (const auto& v : spec.priceranges) data.ontology.value_to_slot[as_token(v)] = "pricerange";
  for (const auto& v : spec.areas) data.ontology.value_to_slot[as_token(v)] = "area";

  const std::pair<const char*, std::size_t> sizes[] = {
      {"train", spec.train_dialogues}, {"dev", spec.dev_dialogues}, {"test", spec.test_dialogues}};
  std::uint64_t split_no = 0;
  for (const auto& [split, n] : sizes) {
    ToySplit out{split, {}, 0, 0};
    Rng rng(derive_seed({seed, 2, split_no++}));
    for (std::size_t d = 0; d < n; ++d) {
      const auto& goal = pick(data.kb.records, rng);
      nlohmann::json turns = nlohmann::json::array();
      std::size_t multi = 0;
      BeliefState belief;
      std::map<std::string, std::string> known;
      auto emit = [&](const std::string& user, const nlohmann::json& action, const std::string& response, bool is_multi) {
        auto count = query(data.kb, belief, data.ontology).count;
        turns.push_back({{"user", user}, {"belief", belief.tokens}, {"action", action}, {"response", response},
                         {"kb_count", count}});
        multi += is_multi;
      };

      // Opening constraints: a random non-empty subset of the goal's slots.
      std::vector<std::string> order = kInformable;
      rng.shuffle(order.begin(), order.end());
      const std::size_t given = 1 + rng.below(3);
      std::map<std::string, std::string> first;
      for (std::size_t i = 0; i < given; ++i) first[order[i]] = goal.at(order[i]);
      std::string user = constraint_phrase(first, rng);
      // Belief lists constraints in the order the utterance mentions them.
      for (const char* s : {"pricerange", "food", "area"})
        if (first.count(s)) {
          belief.tokens.push_back(as_token(first.at(s)));
          known[s] = first.at(s);
        }

      // Requests while the constraints are ambiguous.
      while (true) {
        const auto count = query(data.kb, belief, data.ontology).count;
        std::string missing;
        for (const auto& s : kInformable)
          if (!known.count(s)) {
            missing = s;
            break;
          }
        if (count <= 1 || missing.empty()) break;
        emit(user, nlohmann::json::array({nlohmann::json::array({"request", missing})}), request_response(missing, rng), false);
        user = answer_phrase(missing, goal.at(missing), rng);
        belief.tokens.push_back(as_token(goal.at(missing)));
        known[missing] = goal.at(missing);
      }

      // Offer with the constrained attributes.
      std::vector<std::string> informed;
      nlohmann::json offer = nlohmann::json::array({nlohmann::json::array({"offer", "name", "name_slot"})});
      for (const auto& s : kInformable)
        if (known.count(s)) {
          informed.push_back(s);
          offer.push_back({"inform", s, s + "_slot"});
        }
      emit(user, offer, offer_response(informed, rng), true);

      // Follow-ups steer the running multi-act fraction toward the target.
      std::size_t follow = rng.below(3);
      const double frac = static_cast<double>(out.multi_act_turns + multi + follow) /
                          static_cast<double>(out.turns + turns.size() + 1 + follow);
      if (frac < spec.multi_act_fraction - 0.005 && follow < 2) ++follow;
      else if (frac > spec.multi_act_fraction + 0.005 && follow > 0) --follow;
      static const std::vector<std::pair<std::string, std::vector<std::string>>> questions{
          {"what is the address ?", {"addr"}},
          {"could i have the phone number ?", {"phone"}},
          {"what is the address and phone number ?", {"addr", "phone"}},
          {"where is it ?", {"addr"}},
          {"what is their phone number ?", {"phone"}}};
      for (std::size_t f = 0; f < follow; ++f) {
        const auto& q = pick(questions, rng);
        nlohmann::json a = nlohmann::json::array({nlohmann::json::array({"offer", "name", "name_slot"})});
        for (const auto& s : q.second) a.push_back({"inform", s, s + "_slot"});
        std::string r;
        if (q.second.size() == 2) r = "name_slot is on addr_slot and their phone number is phone_slot .";
        else if (q.second[0] == "addr") r = rng.uniform() < 0.8 ? "sure , name_slot is on addr_slot ." : "name_slot is located at addr_slot .";
        else r = rng.uniform() < 0.8 ? "the phone number of name_slot is phone_slot ." : "you can reach name_slot at phone_slot .";
        emit(q.first, a, r, true);
      }
      static const std::vector<std::string> byes{"thank you goodbye", "thanks , bye", "that is all , thank you", "goodbye"};
      emit(pick(byes, rng), nlohmann::json::array({nlohmann::json::array({"bye"})}), "you are welcome , goodbye .", false);

      out.turns += turns.size();
      out.multi_act_turns += multi;
      out.dialogues.push_back({{"turns", turns}});
    }
    data.splits.push_back(std::move(out));
  }

  std::string train_text;
  for (const auto& d : data.splits[0].dialogues) train_text += d.dump() + "\n";
  std::istringstream in(train_text);
  data.templates = TemplateBank::build(parse_corpus(in));
  return data;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

// Writes {train,dev,test}.jsonl, kb.json, ontology.json and templates.json.
inline void write_toy_data(const ToyData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : data.splits) {
    std::string text;
    for (const auto& d : s.dialogues) text += d.dump() + "\n";
    write_text(dir / (s.name + ".jsonl"), text);
  }
  write_text(dir / "kb.json", data.kb.to_json().dump(1) + "\n");
  write_text(dir / "ontology.json", data.ontology.to_json().dump(1) + "\n");
  write_text(dir / "templates.json", data.templates.to_json().dump(1) + "\n");
}

}  // namespace gendp
