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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vdem/pddl.hpp"
#include "vdem/planner.hpp"
#include "vdem/vocab_io.hpp"

namespace vdem {

/// Checks every problem against the shared vocabulary: objects must be
/// vocabulary terms of a compatible sort and every atom must be type-valid.
inline void check_entry_against_vocabulary(const PlanEntry& e,
                                           const Vocabulary& vocab) {
  for (const auto& t : e.domain->types)
    if (!vocab.find_sort(t.name))
      throw TypeError(e.name, "domain type " + t.name + " is not a vocabulary sort");
  for (const auto& o : e.problem.objects) {
    const Term* t = vocab.find_term(o.name);
    if (!t) throw TypeError(e.name, "object " + o.name + " is not a vocabulary term");
    if (vocab.find_sort(o.type) && !vocab.is_subsort(t->sort, o.type))
      throw TypeError(e.name, "object " + o.name + " is not a " + o.type);
  }
  for (const State* s : {&e.problem.init, &e.problem.goal})
    for (const auto& a : *s)
      if (auto why = vocab.type_violation(a); !why.empty())
        throw TypeError(to_string(a), why);
}

/// Library manifest:
///
///   {
///     "vocabulary": "vocab.json",
///     "entries": [{"name": "find_on", "domain": "pddl/domain.pddl",
///                  "problem": "pddl/find_on.pddl"}, ...],
///     "chains": [{"task": "bring_brush", "weight": 2,
///                 "start": ["VisionOn(robot)", ...],
///                 "goals": [["Detected(brush)", ...], ...]}, ...]
///   }
///
/// Relative paths resolve against the manifest's directory.
inline PlanLibrary load_library(const std::filesystem::path& manifest) {
  json j;
  try {
    j = read_json_file(manifest);
  } catch (const IoError& e) {
    throw LibraryLoadError(e.what());
  }
  const auto base = manifest.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  PlanLibrary lib;
  try {
    lib.vocabulary = std::make_shared<const Vocabulary>(
        load_vocabulary(resolve(j.at("vocabulary").get<std::string>())));
    std::map<std::string, std::shared_ptr<const pddl::PlanDomain>> domains;
    for (const auto& je : j.at("entries")) {
      std::string dpath = resolve(je.at("domain").get<std::string>()).string();
      auto& dom = domains[dpath];
      if (!dom)
        dom = std::make_shared<const pddl::PlanDomain>(
            pddl::parse_domain(read_text_file(dpath)));
      auto problem = pddl::parse_problem(
          read_text_file(resolve(je.at("problem").get<std::string>())), *dom);
      PlanEntry e(je.at("name").get<std::string>(), dom, std::move(problem));
      check_entry_against_vocabulary(e, *lib.vocabulary);
      lib.entries.push_back(std::move(e));
    }
    if (j.contains("chains")) {
      for (const auto& jc : j.at("chains")) {
        GoalChain c;
        c.task = jc.at("task").get<std::string>();
        if (!lib.vocabulary->find_task(c.task))
          throw LibraryLoadError("chain refers to unknown task " + c.task);
        c.weight = jc.value("weight", 1);
        c.start = state_from_json(jc.at("start"));
        for (const auto& g : jc.at("goals")) c.goals.push_back(state_from_json(g));
        for (const State* s : {&c.start})
          for (const auto& a : *s)
            if (auto why = lib.vocabulary->type_violation(a); !why.empty())
              throw TypeError(to_string(a), why);
        for (const auto& g : c.goals)
          for (const auto& a : g)
            if (auto why = lib.vocabulary->type_violation(a); !why.empty())
              throw TypeError(to_string(a), why);
        lib.chains.push_back(std::move(c));
      }
    }
  } catch (const json::exception& e) {
    throw LibraryLoadError(manifest.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw LibraryLoadError(e.what());
  }
  return lib;
}

struct Violation {
  std::string entry;
  std::string kind;
  std::string detail;
  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Reports ecological schemas whose effects change world facts, entries whose
/// solution uses more than one world action, entries the planner cannot solve,
/// and chain goals no entry can produce. Violations are data, never thrown.
inline std::vector<Violation> validate_library(const PlanLibrary& lib,
                                               const SearchOptions& opts = {}) {
  std::vector<Violation> out;
  const Vocabulary& vocab = *lib.vocabulary;

  std::vector<const pddl::PlanDomain*> seen;
  for (const auto& e : lib.entries) {
    const pddl::PlanDomain* d = e.domain.get();
    if (std::find(seen.begin(), seen.end(), d) != seen.end()) continue;
    seen.push_back(d);
    for (const auto& a : d->actions) {
      if (a.action_class != pddl::ActionClass::ecological) continue;
      auto kind_of = [&](const std::string& arg) {
        std::string type;
        if (pddl::is_variable(arg)) {
          for (const auto& p : a.parameters)
            if (p.name == arg) type = p.type;
        } else if (const Term* t = vocab.find_term(arg)) {
          return t->kind;
        } else if (auto ct = d->constant_type(arg)) {
          type = *ct;
        }
        return vocab.kind_of_sort(type);
      };
      auto touches_world = [&](const Atom& atom) {
        const Predicate* p = vocab.find_predicate(atom.predicate);
        if (p && p->epistemic) return false;
        for (const auto& arg : atom.args)
          if (kind_of(arg) == TermKind::robot) return false;
        return true;
      };
      for (const auto* list : {&a.add, &a.del})
        for (const auto& atom : *list)
          if (touches_world(atom))
            out.push_back({e.name, "ecological-touches-world",
                           a.name + " changes " + to_string(atom)});
    }
  }

  for (const auto& e : lib.entries) {
    try {
      SolvedPlan p = plan(e, opts);
      if (p.world_actions() > 1)
        out.push_back({e.name, "multiple-world-actions",
                       std::to_string(p.world_actions()) +
                           " world actions in the solution"});
    } catch (const Error& err) {
      out.push_back({e.name, "unsolvable", err.what()});
    }
  }

  for (const auto& c : lib.chains) {
    for (const auto& g : c.goals) {
      std::size_t best = 0;
      for (const auto& e : lib.entries)
        best = std::max(best, best_substitution(e, g, vocab).first);
      if (best != g.size())
        out.push_back({c.task, "unmatched-chain-goal",
                       "no entry produces " + to_string(g)});
    }
  }
  return out;
}

}  // namespace vdem
