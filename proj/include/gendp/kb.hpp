#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gendp/corpus/action.hpp"
#include "gendp/corpus/corpus.hpp"
#include "gendp/error.hpp"

namespace gendp {

inline constexpr std::size_t kKbCountDims = 20;

using KbRecord = std::map<std::string, std::string>;

struct KnowledgeBase {
  std::vector<KbRecord> records;

  static KnowledgeBase from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("knowledge base must be a JSON array of records", 0);
    KnowledgeBase kb;
    std::set<std::string> names;
    for (const auto& jr : j) {
      KbRecord rec;
      for (const auto& [k, v] : jr.items()) rec[k] = v.is_string() ? v.get<std::string>() : v.dump();
      auto it = rec.find("name");
      if (it == rec.end()) throw ParseError("knowledge base record without a name", 0);
      if (!names.insert(it->second).second) throw ParseError("duplicate knowledge base name '" + it->second + "'", 0);
      kb.records.push_back(std::move(rec));
    }
    return kb;
  }

  nlohmann::json to_json() const { return records; }
};

// Maps a belief value token to the slot it constrains.
struct Ontology {
  std::map<std::string, std::string> value_to_slot;

  static Ontology from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("ontology must be a JSON object value -> slot", 0);
    Ontology o;
    for (const auto& [k, v] : j.items()) o.value_to_slot[as_token(k)] = v.get<std::string>();
    return o;
  }

  nlohmann::json to_json() const { return value_to_slot; }
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what(), 0);
  }
}

inline KnowledgeBase load_kb(const std::string& path) { return KnowledgeBase::from_json(read_json_file(path)); }
inline Ontology load_ontology(const std::string& path) { return Ontology::from_json(read_json_file(path)); }

struct QueryResult {
  std::vector<KbRecord> records;  // KB file order
  std::size_t count = 0;
};

// Records satisfying every belief constraint. An empty belief matches all;
// a token the ontology does not know matches nothing.
inline QueryResult query(const KnowledgeBase& kb, const BeliefState& belief, const Ontology& ontology) {
  std::vector<std::pair<std::string, std::string>> constraints;
  for (const auto& tok : belief.tokens) {
    auto it = ontology.value_to_slot.find(tok);
    if (it == ontology.value_to_slot.end()) return {};
    constraints.emplace_back(it->second, tok);
  }
  QueryResult out;
  for (const auto& rec : kb.records) {
    bool ok = std::all_of(constraints.begin(), constraints.end(), [&](const auto& c) {
      auto f = rec.find(c.first);
      return f != rec.end() && as_token(f->second) == c.second;
    });
    if (ok) out.records.push_back(rec);
  }
  out.count = out.records.size();
  return out;
}

// k_t: one-hot over kKbCountDims buckets, counts past the last bucket clamp.
template <typename T = double>
std::vector<T> encode_count(std::size_t count, std::size_t dims = kKbCountDims) {
  std::vector<T> k(dims, T(0));
  k[std::min(count, dims - 1)] = T(1);
  return k;
}

inline std::size_t count_bucket(std::size_t count, std::size_t dims = kKbCountDims) {
  return std::min(count, dims - 1);
}

}  // namespace gendp
