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

#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "gen_tasks.hpp"
#include "test_util.hpp"
#include "vdem/planner.hpp"

namespace vdem {
namespace {

GroundAction act(std::string name, State pre, State add, State del) {
  GroundAction a;
  a.name = std::move(name);
  a.precondition = std::move(pre);
  a.add = std::move(add);
  a.del = std::move(del);
  return a;
}

TEST(Applicable, Basics) {
  State s{parse_atom("On(brush, ladder)"), parse_atom("Free(robot_hand)")};
  EXPECT_TRUE(applicable(s, act("noop", {}, {}, {})));
  EXPECT_TRUE(applicable(s, act("a", {parse_atom("On(brush, ladder)")}, {}, {})));
  EXPECT_FALSE(applicable(s, act("a", {parse_atom("On(brush, table)")}, {}, {})));
}

TEST(Apply, GraspTransition) {
  State s{parse_atom("At(robot, ladder)"), parse_atom("On(brush, ladder)"),
          parse_atom("Free(robot_hand)"), parse_atom("Detected(brush)")};
  auto grasp = act("grasp", s,
                   {parse_atom("Holding(robot_hand, brush)")},
                   {parse_atom("On(brush, ladder)"), parse_atom("Free(robot_hand)")});
  State next = apply(s, grasp);
  EXPECT_EQ(next, (State{parse_atom("At(robot, ladder)"), parse_atom("Detected(brush)"),
                         parse_atom("Holding(robot_hand, brush)")}));
  EXPECT_EQ(apply(s, act("noop", {}, {}, {})), s);
  EXPECT_THROW(apply(State{}, grasp), NotApplicable);
}

TEST(Apply, InversePairsRestoreTheState) {
  const auto& v = testing::shipped_vocab();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    State s = testing::random_state(v, rng, 10);
    State extra = testing::random_state(v, rng, 4);
    // a deletes a subset of s and adds atoms not in s; the inverse undoes it.
    State del(std::vector<Atom>(s.begin(), s.begin() + s.size() / 2));
    State add = set_difference(extra, s);
    auto a = act("a", del, add, del);
    auto inv = act("inv", add, del, add);
    EXPECT_EQ(apply(apply(s, a), inv), s);
  }
}

pddl::PlanDomain toy_domain() {
  return pddl::parse_domain(R"(
    (define (domain toy) (:requirements :strips :typing)
      (:types hand place thing)
      (:predicates (On ?o - thing ?p - place) (Free ?h - hand)
                   (Holding ?h - hand ?o - thing) (At ?h - hand ?p - place))
      (:action approach :parameters (?h - hand ?p - place) :class ecological
        :precondition (and) :effect (and (At ?h ?p)))
      (:action grasp :parameters (?h - hand ?o - thing ?p - place)
        :precondition (and (At ?h ?p) (On ?o ?p) (Free ?h))
        :effect (and (Holding ?h ?o) (not (On ?o ?p)) (not (Free ?h))))))");
}

TEST(Plan, ToyDomainMatchesBreadthFirstOracle) {
  auto d = toy_domain();
  auto p = pddl::parse_problem(R"(
    (define (problem pick) (:domain toy)
      (:objects hand - hand b - thing table shelf - place)
      (:init (On b table) (Free hand))
      (:goal (and (Holding hand b)))))", d);
  auto sol = plan(d, p);
  ASSERT_EQ(sol.steps.size(), 2u);
  EXPECT_EQ(to_string(sol.steps[0]), "approach(hand, table)");
  EXPECT_EQ(to_string(sol.steps[1]), "grasp(hand, b, table)");
  testing::GeneratedTask t{d, p};
  EXPECT_EQ(testing::bfs_oracle(t).length, 2u);
}

TEST(Plan, GoalAlreadyTrueAndUnreachable) {
  auto d = toy_domain();
  auto p = pddl::parse_problem(R"(
    (define (problem none) (:domain toy)
      (:objects hand - hand b - thing table - place)
      (:init (On b table) (Free hand))
      (:goal (and (On b table)))))", d);
  EXPECT_TRUE(plan(d, p).steps.empty());
  p.goal = State{parse_atom("Free(b)")};
  EXPECT_THROW(plan(d, p), NoPlan);
}

TEST(Plan, BudgetExceeded) {
  testing::GeneratedTask t;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    t = testing::generate_solvable_task(seed);
    auto o = testing::bfs_oracle(t);
    if (o.length && *o.length >= 2) break;
  }
  SearchOptions opts;
  opts.budget = 0;
  opts.heuristic = false;
  EXPECT_THROW(plan(t.domain, t.problem, opts), BudgetExceeded);
}

void expect_sound(const pddl::PlanProblem& p, const SolvedPlan& sol) {
  State s = p.init;
  for (const auto& a : sol.steps) s = apply(s, a);
  EXPECT_TRUE(p.goal.subset_of(s));
}

TEST(Plan, OracleEquivalenceOnGeneratedTasks) {
  int solvable = 0, unsolvable = 0;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    auto t = testing::generate_solvable_task(seed);
    auto oracle = testing::bfs_oracle(t);
    ASSERT_LE(oracle.reachable, 100000u);
    SearchOptions bfs;
    bfs.heuristic = false;
    if (!oracle.length) {
      EXPECT_THROW(plan(t.domain, t.problem, bfs), NoPlan);
      EXPECT_THROW(plan(t.domain, t.problem), NoPlan);
      ++unsolvable;
      continue;
    }
    ++solvable;
    auto optimal = plan(t.domain, t.problem, bfs);
    EXPECT_EQ(optimal.steps.size(), *oracle.length) << "seed " << seed;
    expect_sound(t.problem, optimal);
    auto greedy = plan(t.domain, t.problem);
    EXPECT_GE(greedy.steps.size(), *oracle.length);
    expect_sound(t.problem, greedy);
  }
  EXPECT_GT(solvable, 50);
  EXPECT_GT(unsolvable, 0);
}

TEST(Plan, Deterministic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto t = testing::generate_solvable_task(seed);
    try {
      auto a = plan(t.domain, t.problem);
      auto b = plan(t.domain, t.problem);
      ASSERT_EQ(a.steps.size(), b.steps.size());
      for (std::size_t i = 0; i < a.steps.size(); ++i) EXPECT_EQ(a.steps[i], b.steps[i]);
    } catch (const NoPlan&) {
    }
  }
}

TEST(Plan, ShippedEntriesAreSoundWithOneWorldAction) {
  const auto& lib = testing::shipped_library();
  for (const auto& e : lib.entries) {
    auto sol = plan(e);
    expect_sound(e.problem, sol);
    EXPECT_LE(sol.world_actions(), 1u) << e.name;
    ASSERT_EQ(sol.expected_pre.size(), sol.steps.size());
  }
  auto give = plan(*lib.find("give_to"));
  ASSERT_EQ(give.steps.size(), 2u);
  EXPECT_EQ(to_string(give.steps[1]), "handover(brush, technician, technician_hand)");
}

TEST(Match, ExactPartialAndEmpty) {
  const auto& lib = testing::shipped_library();
  auto g = lib.find("pick_from")->goal_state;
  auto m = match_plan(lib, g);
  EXPECT_EQ(m.entry_name, "pick_from");
  EXPECT_EQ(m.overlap, g.size());
  EXPECT_TRUE(m.substitution.empty());

  // The find_on entry is over (brush, ladder); table is substituted in.
  State table{parse_atom("Detected(brush)"), parse_atom("Detected(table)"),
              parse_atom("On(brush, table)")};
  m = match_plan(lib, table);
  EXPECT_EQ(m.entry_name, "find_on");
  EXPECT_EQ(m.overlap, 3u);
  EXPECT_EQ(m.substitution.at("ladder"), "table");
  auto inst = instantiate(lib.entries[m.entry], m.substitution);
  EXPECT_EQ(inst.goal_state, table);

  // two of three atoms
  State partial{parse_atom("Detected(technician)"), parse_atom("CloseTo(robot, technician)"),
                parse_atom("Holding(robot_hand, wrench)"), parse_atom("Clean(roller)")};
  m = match_plan(lib, partial);
  EXPECT_EQ(m.entry_name, "hold_near");
  EXPECT_EQ(m.overlap, 3u);

  // Ties go to library order: reach_person precedes hold_near.
  m = match_plan(lib, {parse_atom("Detected(technician)"),
                       parse_atom("CloseTo(robot, technician)")});
  EXPECT_EQ(m.entry_name, "reach_person");

  EXPECT_THROW(match_plan(PlanLibrary{}, table), EmptyLibrary);
  EXPECT_THROW(match_plan(lib, {parse_atom("HeadUp(robot_head)")}), NoMatch);
}

// Independent maximizer: every injective map of each entry's objects onto
// sort-compatible vocabulary terms, full enumeration.
std::pair<std::size_t, std::size_t> brute_force_match(const PlanLibrary& lib,
                                                      const State& g) {
  const auto& v = *lib.vocabulary;
  std::size_t best = 0, best_entry = 0;
  for (std::size_t e = 0; e < lib.entries.size(); ++e) {
    const auto& entry = lib.entries[e];
    std::vector<pddl::TypedName> objs;
    for (const auto& o : entry.problem.objects) {
      for (const auto& a : entry.goal_state)
        if (std::count(a.args.begin(), a.args.end(), o.name)) {
          objs.push_back(o);
          break;
        }
    }
    std::map<std::string, std::string> sigma;
    std::set<std::string> used;
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
      if (i == objs.size()) {
        std::size_t ov = 0;
        for (const auto& a : entry.goal_state) {
          Atom b = a;
          for (auto& x : b.args)
            if (sigma.count(x)) x = sigma[x];
          ov += g.contains(b);
        }
        if (ov > best) {
          best = ov;
          best_entry = e;
        }
        return;
      }
      for (const auto& t : v.terms()) {
        bool identity = t.name == objs[i].name;
        if (!identity) {
          if (entry.problem.object_type(t.name) || used.count(t.name) ||
              !v.is_subsort(t.sort, objs[i].type))
            continue;
        }
        sigma[objs[i].name] = t.name;
        used.insert(t.name);
        rec(i + 1);
        used.erase(t.name);
        sigma.erase(objs[i].name);
      }
    };
    rec(0);
  }
  return {best, best_entry};
}

TEST(Match, AgreesWithBruteForceOnRandomLibraries) {
  // Small vocabulary so the brute force stays cheap.
  std::vector<Sort> sorts{{"object", {}, {}}, {"thing", "object", {}}, {"place", "object", {}}};
  std::vector<Term> terms;
  for (int i = 0; i < 5; ++i) terms.push_back({"t" + std::to_string(i), "thing", TermKind::world});
  for (int i = 0; i < 4; ++i) terms.push_back({"p" + std::to_string(i), "place", TermKind::world});
  auto vocab = std::make_shared<const Vocabulary>(
      sorts, terms,
      std::vector<Predicate>{{"On", {"thing", "place"}}, {"Near", {"thing", "thing"}},
                             {"Lit", {"place"}}},
      std::vector<TaskSentence>{{"t", {"go"}}});
  auto domain = std::make_shared<const pddl::PlanDomain>(pddl::parse_domain(R"(
    (define (domain m) (:requirements :strips :typing)
      (:types thing place)
      (:predicates (On ?a - thing ?b - place) (Near ?a - thing ?b - thing) (Lit ?p - place)))
  )"));
  std::mt19937_64 rng(99);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto random_atom = [&](const std::vector<std::string>& things,
                         const std::vector<std::string>& places) {
    switch (pick(3)) {
      case 0: return Atom("On", {things[pick(things.size())], places[pick(places.size())]});
      case 1: return Atom("Near", {things[pick(things.size())], things[pick(things.size())]});
      default: return Atom("Lit", {places[pick(places.size())]});
    }
  };
  std::vector<std::string> all_things, all_places;
  for (const auto& t : terms) (t.sort == "thing" ? all_things : all_places).push_back(t.name);
  for (int trial = 0; trial < 200; ++trial) {
    PlanLibrary lib;
    lib.vocabulary = vocab;
    for (std::size_t e = 0, n = 1 + pick(20); e < n; ++e) {
      pddl::PlanProblem p;
      p.name = "e" + std::to_string(e);
      std::vector<std::string> things{all_things[pick(5)], all_things[pick(5)]};
      std::vector<std::string> places{all_places[pick(4)]};
      std::set<std::string> declared;
      for (auto& t : things) if (declared.insert(t).second) p.objects.push_back({t, "thing"});
      for (auto& t : places) if (declared.insert(t).second) p.objects.push_back({t, "place"});
      std::vector<Atom> goal;
      for (std::size_t k = 0, m = 1 + pick(5); k < m; ++k) goal.push_back(random_atom(things, places));
      p.goal = State(goal);
      lib.entries.emplace_back(p.name, domain, p);
    }
    std::vector<Atom> g;
    for (std::size_t k = 0, m = 1 + pick(5); k < m; ++k) g.push_back(random_atom(all_things, all_places));
    State gs(g);
    auto [best, best_entry] = brute_force_match(lib, gs);
    if (best == 0) {
      EXPECT_THROW(match_plan(lib, gs), NoMatch);
      continue;
    }
    auto m = match_plan(lib, gs);
    EXPECT_EQ(m.overlap, best) << "trial " << trial;
    EXPECT_EQ(m.entry, best_entry) << "trial " << trial;
    // The reported substitution realizes the reported overlap.
    auto inst = instantiate(lib.entries[m.entry], m.substitution);
    EXPECT_EQ(set_intersection(inst.goal_state, gs).size(), m.overlap);
  }
}

}  // namespace
}  // namespace vdem
