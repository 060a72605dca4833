// Copyright 2026 The VDEM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "vdem/symbolic.hpp"

namespace vdem {

using json = nlohmann::json;

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

inline json read_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline State state_from_json(const json& j) {
  if (j.is_string()) return parse_state(j.get<std::string>());
  std::vector<Atom> atoms;
  for (const auto& a : j) atoms.push_back(parse_atom(a.get<std::string>()));
  return State(std::move(atoms));
}

inline json state_to_json(const State& s) {
  json out = json::array();
  for (const auto& a : s) out.push_back(to_string(a));
  return out;
}

/// Vocabulary definition file:
///
///   {
///     "separators": {"eoa": "<eoa>", "ets": "<ets>", "eos": "<eos>"},
///     "sorts": [{"name": "object"}, {"name": "robot", "parent": "object",
///                "kind": "robot"}, ...],
///     "terms": [{"name": "robot_hand", "sort": "gripper"}, ...],
///     "predicates": [{"name": "On", "args": ["item", "object"]}, ...],
///     "tasks": [{"id": "bring_brush", "sentence": "bring the brush"}, ...]
///   }
inline Vocabulary vocabulary_from_json(const json& j) {
  try {
    Separators sep;
    if (j.contains("separators")) {
      const auto& s = j.at("separators");
      sep.eoa = s.value("eoa", sep.eoa);
      sep.ets = s.value("ets", sep.ets);
      sep.eos = s.value("eos", sep.eos);
    }
    auto parse_kind = [](const std::string& k) {
      if (k == "robot") return TermKind::robot;
      if (k == "world") return TermKind::world;
      throw VocabularyError("unknown kind " + k);
    };
    std::vector<Sort> sorts;
    for (const auto& s : j.at("sorts")) {
      Sort sort{s.at("name").get<std::string>(), std::nullopt, std::nullopt};
      if (s.contains("parent")) sort.parent = s.at("parent").get<std::string>();
      if (s.contains("kind")) sort.kind = parse_kind(s.at("kind"));
      sorts.push_back(std::move(sort));
    }
    std::vector<Term> terms;
    for (const auto& t : j.at("terms")) {
      Term term{t.at("name").get<std::string>(), t.at("sort").get<std::string>(),
                TermKind::world};
      terms.push_back(std::move(term));
    }
    std::vector<Predicate> preds;
    for (const auto& p : j.at("predicates")) {
      preds.push_back(Predicate{p.at("name").get<std::string>(),
                                p.at("args").get<std::vector<std::string>>(),
                                p.value("epistemic", false)});
    }
    std::vector<TaskSentence> tasks;
    if (j.contains("tasks"))
      for (const auto& t : j.at("tasks"))
        tasks.push_back(TaskSentence{t.at("id").get<std::string>(),
                                     split_words(t.at("sentence").get<std::string>())});

    // Term kinds come from the sort tree; an explicit "kind" must agree.
    Vocabulary probe(sorts, {}, {}, {}, sep);
    std::size_t i = 0;
    for (const auto& t : j.at("terms")) {
      if (!probe.find_sort(terms[i].sort))
        throw VocabularyError("term " + terms[i].name + " has unknown sort " +
                              terms[i].sort);
      terms[i].kind = probe.kind_of_sort(terms[i].sort);
      if (t.contains("kind") && parse_kind(t.at("kind")) != terms[i].kind)
        throw VocabularyError("term " + terms[i].name +
                              " kind contradicts its sort ancestry");
      ++i;
    }
    return Vocabulary(std::move(sorts), std::move(terms), std::move(preds),
                      std::move(tasks), std::move(sep));
  } catch (const json::exception& e) {
    throw VocabularyError(std::string("vocabulary file: ") + e.what());
  }
}

inline json vocabulary_to_json(const Vocabulary& v) {
  json j;
  j["separators"] = {{"eoa", v.separators().eoa},
                     {"ets", v.separators().ets},
                     {"eos", v.separators().eos}};
  j["sorts"] = json::array();
  for (const auto& s : v.sorts()) {
    json js = {{"name", s.name}};
    if (s.parent) js["parent"] = *s.parent;
    if (s.kind) js["kind"] = std::string(to_string(*s.kind));
    j["sorts"].push_back(js);
  }
  j["terms"] = json::array();
  for (const auto& t : v.terms())
    j["terms"].push_back({{"name", t.name}, {"sort", t.sort}});
  j["predicates"] = json::array();
  for (const auto& p : v.predicates()) {
    json jp = {{"name", p.name}, {"args", p.arg_sorts}};
    if (p.epistemic) jp["epistemic"] = true;
    j["predicates"].push_back(jp);
  }
  j["tasks"] = json::array();
  for (const auto& t : v.tasks()) {
    std::string sentence;
    for (const auto& w : t.words) sentence += (sentence.empty() ? "" : " ") + w;
    j["tasks"].push_back({{"id", t.id}, {"sentence", sentence}});
  }
  return j;
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  return vocabulary_from_json(read_json_file(path));
}

}  // namespace vdem
