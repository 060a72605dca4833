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

// Forward state-space search over grounded STRIPS tasks, and retrieval of
// the library entry that best explains a predicted goal state.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdem/errors.hpp"
#include "vdem/pddl.hpp"
#include "vdem/symbolic.hpp"

namespace vdem {

struct GroundAction {
  std::string name;
  std::vector<std::string> args;
  State precondition;
  State add;
  State del;
  pddl::ActionClass action_class = pddl::ActionClass::world;

  friend bool operator==(const GroundAction&, const GroundAction&) = default;
};

inline std::string to_string(const GroundAction& a) {
  std::string out = a.name + "(";
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (i) out += ", ";
    out += a.args[i];
  }
  return out + ")";
}

/// Closed world: every atom of the precondition must be present.
inline bool applicable(const State& s, const GroundAction& a) {
  return a.precondition.subset_of(s);
}

/// (s \ del) u add
inline State apply(const State& s, const GroundAction& a) {
  if (!applicable(s, a))
    throw NotApplicable(to_string(a) + " is not applicable");
  return set_union(set_difference(s, a.del), a.add);
}

namespace detail {

inline std::string substitute(const std::string& arg,
                              const std::map<std::string, std::string>& b) {
  auto it = b.find(arg);
  return it == b.end() ? arg : it->second;
}

inline Atom ground(const Atom& a, const std::map<std::string, std::string>& b) {
  Atom out(a.predicate, {});
  for (const auto& arg : a.args) out.args.push_back(substitute(arg, b));
  return out;
}

}  // namespace detail

/// All type-consistent groundings that satisfy their equality constraints,
/// sorted by (name, args). Groundings whose precondition needs a static atom
/// absent from the initial state are dropped.
inline std::vector<GroundAction> ground_actions(const pddl::PlanDomain& domain,
                                                const pddl::PlanProblem& problem) {
  std::vector<pddl::TypedName> universe = problem.objects;
  for (const auto& c : domain.constants)
    if (!problem.object_type(c.name)) universe.push_back(c);

  std::set<std::string> fluent;
  for (const auto& a : domain.actions) {
    for (const auto& atom : a.add) fluent.insert(atom.predicate);
    for (const auto& atom : a.del) fluent.insert(atom.predicate);
  }

  std::vector<GroundAction> out;
  for (const auto& schema : domain.actions) {
    std::vector<std::vector<std::string>> candidates;
    for (const auto& p : schema.parameters) {
      std::vector<std::string> c;
      for (const auto& o : universe)
        if (domain.is_subtype(o.type, p.type)) c.push_back(o.name);
      std::sort(c.begin(), c.end());
      candidates.push_back(std::move(c));
    }
    std::map<std::string, std::string> binding;
    std::vector<std::string> args(schema.parameters.size());
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
      if (i == schema.parameters.size()) {
        for (const auto& e : schema.equalities) {
          bool same = detail::substitute(e.lhs, binding) ==
                      detail::substitute(e.rhs, binding);
          if (same == e.negated) return;
        }
        GroundAction g;
        g.name = schema.name;
        g.args = args;
        g.action_class = schema.action_class;
        std::vector<Atom> pre, add, del;
        for (const auto& a : schema.precondition) {
          Atom ga = detail::ground(a, binding);
          if (!fluent.count(ga.predicate) && !problem.init.contains(ga)) return;
          pre.push_back(std::move(ga));
        }
        for (const auto& a : schema.add) add.push_back(detail::ground(a, binding));
        for (const auto& a : schema.del) del.push_back(detail::ground(a, binding));
        g.precondition = State(std::move(pre));
        g.add = State(std::move(add));
        g.del = State(std::move(del));
        out.push_back(std::move(g));
        return;
      }
      for (const auto& c : candidates[i]) {
        binding[schema.parameters[i].name] = c;
        args[i] = c;
        rec(i + 1);
      }
      binding.erase(schema.parameters[i].name);
    };
    rec(0);
  }
  std::sort(out.begin(), out.end(), [](const GroundAction& a, const GroundAction& b) {
    return std::tie(a.name, a.args) < std::tie(b.name, b.args);
  });
  return out;
}

struct SearchOptions {
  std::size_t budget = 2'000'000;  // node expansions
  bool heuristic = true;           // false: uniform-cost (breadth-first)
};

struct SolvedPlan {
  std::string entry;
  std::vector<GroundAction> steps;
  // What the monitor verifies around each step.
  std::vector<State> expected_pre;
  std::vector<State> expected_effect;
  std::size_t expansions = 0;

  std::size_t world_actions() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const GroundAction& a) {
          return a.action_class == pddl::ActionClass::world;
        }));
  }
};

namespace detail {

using PackedState = std::vector<std::uint32_t>;

struct PackedHash {
  std::size_t operator()(const PackedState& s) const {
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : s) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

struct PackedAction {
  PackedState pre, add, del;
};

class AtomTable {
 public:
  std::uint32_t id(const Atom& a) {
    auto [it, fresh] = ids_.emplace(a, static_cast<std::uint32_t>(ids_.size()));
    return it->second;
  }
  PackedState pack(const State& s) {
    PackedState out;
    for (const auto& a : s) out.push_back(id(a.without_time()));
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::map<Atom, std::uint32_t> ids_;
};

inline bool includes(const PackedState& big, const PackedState& small) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

inline PackedState successor(const PackedState& s, const PackedAction& a) {
  PackedState tmp;
  std::set_difference(s.begin(), s.end(), a.del.begin(), a.del.end(),
                      std::back_inserter(tmp));
  PackedState out;
  std::set_union(tmp.begin(), tmp.end(), a.add.begin(), a.add.end(),
                 std::back_inserter(out));
  return out;
}

inline std::size_t unsatisfied(const PackedState& s, const PackedState& goal) {
  std::size_t n = 0;
  for (auto g : goal)
    if (!std::binary_search(s.begin(), s.end(), g)) ++n;
  return n;
}

}  // namespace detail

/// Greedy best-first search with the goal-count heuristic, or breadth-first
/// search when the heuristic is disabled (optimal in step count).
inline SolvedPlan plan(const pddl::PlanDomain& domain,
                       const pddl::PlanProblem& problem,
                       const SearchOptions& opts = {}) {
  using namespace detail;
  std::vector<GroundAction> actions = ground_actions(domain, problem);
  AtomTable table;
  PackedState init = table.pack(problem.init);
  PackedState goal = table.pack(problem.goal);
  std::vector<PackedAction> packed;
  packed.reserve(actions.size());
  for (const auto& a : actions)
    packed.push_back({table.pack(a.precondition), table.pack(a.add),
                      table.pack(a.del)});

  struct Node {
    PackedState state;
    int parent;
    int action;
  };
  std::vector<Node> nodes;
  std::unordered_map<PackedState, int, PackedHash> seen;

  // (h, generation order) for best-first; generation order alone for BFS.
  using Key = std::pair<std::size_t, std::size_t>;
  std::priority_queue<std::pair<Key, int>, std::vector<std::pair<Key, int>>,
                      std::greater<>>
      open;
  std::size_t generated = 0;
  auto push = [&](PackedState s, int parent, int action) {
    auto [it, fresh] = seen.emplace(s, static_cast<int>(nodes.size()));
    if (!fresh) return;
    std::size_t h = opts.heuristic ? unsatisfied(s, goal) : 0;
    nodes.push_back({std::move(s), parent, action});
    open.push({{h, generated++}, it->second});
  };
  push(init, -1, -1);

  std::size_t expansions = 0;
  while (!open.empty()) {
    int idx = open.top().second;
    open.pop();
    if (includes(nodes[idx].state, goal)) {
      SolvedPlan out;
      out.expansions = expansions;
      std::vector<int> rev;
      for (int n = idx; nodes[n].parent >= 0; n = nodes[n].parent)
        rev.push_back(nodes[n].action);
      for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
        const GroundAction& a = actions[*it];
        out.steps.push_back(a);
        out.expected_pre.push_back(a.precondition);
        out.expected_effect.push_back(a.add);
      }
      return out;
    }
    if (expansions >= opts.budget) throw BudgetExceeded(expansions);
    ++expansions;
    const PackedState cur = nodes[idx].state;
    for (std::size_t a = 0; a < packed.size(); ++a) {
      if (!includes(cur, packed[a].pre)) continue;
      push(successor(cur, packed[a]), idx, static_cast<int>(a));
    }
  }
  throw NoPlan("search space of " + problem.name + " exhausted after " +
               std::to_string(expansions) + " expansions");
}

inline SolvedPlan plan(const PlanEntry& entry, const SearchOptions& opts = {}) {
  SolvedPlan p = plan(*entry.domain, entry.problem, opts);
  p.entry = entry.name;
  return p;
}

// Library retrieval -----------------------------------------------------------

struct MatchScore {
  std::size_t entry = 0;  // index into the library
  std::string entry_name;
  std::size_t overlap = 0;
  std::map<std::string, std::string> substitution;  // entry object -> term
};

/// Renames problem objects. Domain constants are never substituted.
inline PlanEntry instantiate(const PlanEntry& entry,
                             const std::map<std::string, std::string>& sigma) {
  if (sigma.empty()) return entry;
  auto rename = [&](const State& s) {
    std::vector<Atom> out;
    for (const auto& a : s) out.push_back(detail::ground(a, sigma));
    return State(std::move(out));
  };
  pddl::PlanProblem p = entry.problem;
  for (auto& o : p.objects) o.name = detail::substitute(o.name, sigma);
  p.init = rename(p.init);
  p.goal = rename(p.goal);
  return PlanEntry(entry.name, entry.domain, std::move(p));
}

namespace detail {

inline std::size_t overlap_under(const State& entry_goal, const State& g,
                                 const std::map<std::string, std::string>& sigma) {
  std::size_t n = 0;
  for (const auto& a : entry_goal)
    if (g.contains(ground(a, sigma))) ++n;
  return n;
}

}  // namespace detail

/// Best overlap achievable for one entry, with the substitution realizing it.
/// Substitutions are injective, respect the vocabulary sorts of the entry's
/// declared object types, and only target terms mentioned in `g`.
inline std::pair<std::size_t, std::map<std::string, std::string>> best_substitution(
    const PlanEntry& entry, const State& g, const Vocabulary& vocab) {
  State goal = g.without_time();
  std::vector<std::string> g_terms;
  for (const auto& a : goal)
    for (const auto& t : a.args) g_terms.push_back(t);
  std::sort(g_terms.begin(), g_terms.end());
  g_terms.erase(std::unique(g_terms.begin(), g_terms.end()), g_terms.end());

  std::vector<const pddl::TypedName*> movable;
  for (const auto& o : entry.problem.objects) {
    bool in_goal = std::any_of(entry.goal_state.begin(), entry.goal_state.end(),
                               [&](const Atom& a) {
                                 return std::find(a.args.begin(), a.args.end(),
                                                  o.name) != a.args.end();
                               });
    if (in_goal) movable.push_back(&o);
  }
  auto taken_by_problem = [&](const std::string& t) {
    if (entry.domain->constant_type(t)) return true;
    return entry.problem.object_type(t).has_value();
  };
  std::vector<std::vector<std::string>> options;
  for (const auto* o : movable) {
    std::vector<std::string> opt{o->name};
    for (const auto& t : g_terms) {
      if (t == o->name || taken_by_problem(t)) continue;
      const Term* term = vocab.find_term(t);
      if (!term) continue;
      if (vocab.find_sort(o->type) ? vocab.is_subsort(term->sort, o->type)
                                   : entry.domain->is_subtype(term->sort, o->type))
        opt.push_back(t);
    }
    options.push_back(std::move(opt));
  }

  std::map<std::string, std::string> sigma, best_sigma;
  std::set<std::string> used;
  std::size_t best = detail::overlap_under(entry.goal_state, goal, sigma);
  best_sigma = sigma;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == movable.size()) {
      std::size_t ov = detail::overlap_under(entry.goal_state, goal, sigma);
      if (ov > best) {
        best = ov;
        best_sigma = sigma;
      }
      return;
    }
    for (const auto& t : options[i]) {
      bool identity = t == movable[i]->name;
      if (!identity) {
        if (used.count(t)) continue;
        used.insert(t);
        sigma[movable[i]->name] = t;
      }
      rec(i + 1);
      if (!identity) {
        used.erase(t);
        sigma.erase(movable[i]->name);
      }
    }
  };
  rec(0);
  return {best, best_sigma};
}

inline MatchScore match_plan(const PlanLibrary& lib, const State& g) {
  if (lib.entries.empty()) throw EmptyLibrary();
  MatchScore best;
  bool found = false;
  for (std::size_t i = 0; i < lib.entries.size(); ++i) {
    auto [ov, sigma] = best_substitution(lib.entries[i], g, *lib.vocabulary);
    if (!found || ov > best.overlap) {
      best = MatchScore{i, lib.entries[i].name, ov, std::move(sigma)};
      found = true;
    }
  }
  if (best.overlap == 0) throw NoMatch();
  return best;
}

}  // namespace vdem
