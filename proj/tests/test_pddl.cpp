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

#include <random>

#include "test_util.hpp"
#include "vdem/library.hpp"
#include "vdem/pddl.hpp"

namespace vdem {
namespace {

using namespace vdem::pddl;

const char* kSearchDomain = R"(
(define (domain tiny)
  (:requirements :strips :typing)
  (:types thing)
  (:predicates (Detected ?o - thing) (VisionOn))
  (:action search
    :parameters (?o - thing)
    :class ecological
    :precondition (and (VisionOn))
    :effect (and (Detected ?o))))
)";

TEST(ParseDomain, MinimalEcologicalSearch) {
  auto d = parse_domain(kSearchDomain);
  ASSERT_EQ(d.actions.size(), 1u);
  EXPECT_EQ(d.actions[0].name, "search");
  EXPECT_EQ(d.actions[0].action_class, ActionClass::ecological);
  EXPECT_EQ(d.actions[0].add.size(), 1u);
}

TEST(ParseDomain, ShippedDomain) {
  auto d = parse_domain(read_text_file(testing::data_dir() / "pddl/domain.pddl"));
  EXPECT_EQ(d.name, "assist");
  EXPECT_TRUE(d.is_subtype("tool", "world"));
  EXPECT_FALSE(d.is_subtype("gripper", "world"));
  ASSERT_NE(d.find_action("grasp"), nullptr);
  EXPECT_EQ(d.find_action("grasp")->equalities.size(), 1u);
  EXPECT_TRUE(d.find_action("grasp")->equalities[0].negated);
}

TEST(ParseDomain, UnsupportedFeatures) {
  auto with = [](const std::string& body) {
    return "(define (domain x) (:requirements :strips :typing) (:types t)\n"
           "(:predicates (P ?a - t) (Q ?a - t))\n" + body + ")";
  };
  EXPECT_THROW(parse_domain(with("(:durative-action a :parameters ())")),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain(with("(:functions (cost))")), UnsupportedFeature);
  EXPECT_THROW(parse_domain(with("(:action a :parameters (?x - t) "
                                 ":precondition (or (P ?x) (Q ?x)) :effect (P ?x))")),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain(with("(:action a :parameters (?x - t) "
                                 ":precondition (not (P ?x)) :effect (P ?x))")),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain(with("(:action a :parameters (?x - t) "
                                 ":precondition (P ?x) :effect (when (P ?x) (Q ?x)))")),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain(with("(:action a :parameters (?x - t) "
                                 ":precondition (forall (?y - t) (P ?y)) :effect (P ?x))")),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain("(define (domain x) (:requirements :adl))"),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain("(define (domain x) (:types (either a b)))"),
               UnsupportedFeature);
}

TEST(ParseDomain, DiagnosticsCarryPosition) {
  try {
    parse_domain("(define (domain x)\n  (:predicates (P ?a))\n  (:action a :parameters (x)))");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3);
    EXPECT_EQ(e.column, 27);
    EXPECT_EQ(e.expected, "a ?variable");
  }
  try {
    parse_domain("(define (domain x) (:types t) (:predicates (P ?a - t))\n"
                 "(:action a :parameters (?x - t) :precondition (P ?y) :effect (P ?x)))");
    FAIL();
  } catch (const TypeError&) {
  }
}

TEST(ParseProblem, GoalAndErrors) {
  auto d = parse_domain(read_text_file(testing::data_dir() / "pddl/domain.pddl"));
  auto p = parse_problem(R"(
    (define (problem look) (:domain assist)
      (:objects table - support)
      (:init)
      (:goal (and (At robot table)))))", d);
  EXPECT_TRUE(p.init.empty());
  ASSERT_EQ(p.goal.size(), 1u);
  EXPECT_EQ(to_string(*p.goal.begin()), "At(robot, table)");
  EXPECT_THROW(parse_problem(R"(
    (define (problem look) (:domain assist)
      (:objects table - support)
      (:init) (:goal (At robot shelf))))", d),
               TypeError);
  EXPECT_THROW(parse_problem(R"(
    (define (problem look) (:domain assist)
      (:objects table - support)
      (:init) (:goal (Holding table robot))))", d),
               TypeError);
}

// Random domains for the print/parse round trip.
PlanDomain random_domain(std::mt19937_64& rng) {
  auto pick = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  PlanDomain d;
  d.name = "gen" + std::to_string(pick(1000));
  d.requirements = {":strips", ":typing", ":equality"};
  std::vector<std::string> types{"object"};
  for (int i = 0, n = 1 + static_cast<int>(pick(4)); i < n; ++i) {
    std::string t = "ty" + std::to_string(i);
    d.types.push_back({t, types[pick(types.size())]});
    types.push_back(t);
  }
  for (int i = 0, n = static_cast<int>(pick(3)); i < n; ++i)
    d.constants.push_back({"k" + std::to_string(i), types[pick(types.size())]});
  for (int i = 0, n = 1 + static_cast<int>(pick(4)); i < n; ++i) {
    PredicateDecl p{"P" + std::to_string(i), {}};
    for (std::size_t k = 0, ar = 1 + pick(2); k < ar; ++k)
      p.params.push_back({"?a" + std::to_string(k), "object"});
    d.predicates.push_back(p);
  }
  for (int i = 0, n = 1 + static_cast<int>(pick(3)); i < n; ++i) {
    ActionSchema a;
    a.name = "act" + std::to_string(i);
    a.action_class = pick(2) ? ActionClass::world : ActionClass::ecological;
    for (std::size_t k = 0, np = 1 + pick(3); k < np; ++k)
      a.parameters.push_back({"?x" + std::to_string(k), types[pick(types.size())]});
    std::vector<std::string> args;
    for (const auto& p : a.parameters) args.push_back(p.name);
    for (const auto& c : d.constants) args.push_back(c.name);
    auto atom = [&] {
      const auto& p = d.predicates[pick(d.predicates.size())];
      Atom at(p.name, {});
      for (std::size_t k = 0; k < p.params.size(); ++k)
        at.args.push_back(args[pick(args.size())]);
      return at;
    };
    for (std::size_t k = 0, n2 = pick(3); k < n2; ++k) a.precondition.push_back(atom());
    for (std::size_t k = 0, n2 = pick(3); k < n2; ++k) {
      Atom x = atom();
      if (std::find(a.add.begin(), a.add.end(), x) == a.add.end()) a.add.push_back(x);
    }
    for (std::size_t k = 0, n2 = pick(2); k < n2; ++k) {
      Atom x = atom();
      if (std::find(a.add.begin(), a.add.end(), x) == a.add.end() &&
          std::find(a.del.begin(), a.del.end(), x) == a.del.end())
        a.del.push_back(x);
    }
    if (a.parameters.size() > 1 && pick(2))
      a.equalities.push_back({a.parameters[0].name, a.parameters[1].name, pick(2) == 1});
    d.actions.push_back(a);
  }
  return d;
}

TEST(RoundTrip, GeneratedDomainsAndProblems) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    PlanDomain d = random_domain(rng);
    std::string text = print_domain(d);
    PlanDomain again = parse_domain(text);
    ASSERT_EQ(again, d) << text;
    EXPECT_EQ(print_domain(again), text);

    PlanProblem p;
    p.name = "prob" + std::to_string(i);
    p.domain_name = d.name;
    for (std::size_t k = 0; k < d.types.size(); ++k)
      p.objects.push_back({"o" + std::to_string(k), d.types[k].name});
    std::vector<Atom> init;
    for (const auto& pred : d.predicates) {
      Atom a(pred.name, {});
      for (std::size_t k = 0; k < pred.params.size(); ++k)
        a.args.push_back(p.objects[(k + i) % p.objects.size()].name);
      init.push_back(a);
    }
    p.init = State(init);
    p.goal = State(std::vector<Atom>(init.begin(), init.begin() + 1));
    std::string ptext = print_problem(p);
    ASSERT_EQ(parse_problem(ptext, d), p) << ptext;
  }
}

TEST(RoundTrip, ShippedProblems) {
  const auto& lib = testing::shipped_library();
  for (const auto& e : lib.entries) {
    EXPECT_EQ(parse_domain(print_domain(*e.domain)), *e.domain);
    EXPECT_EQ(parse_problem(print_problem(e.problem), *e.domain), e.problem);
  }
}

TEST(Library, ShippedLibraryHasNoViolations) {
  const auto& lib = testing::shipped_library();
  EXPECT_EQ(lib.entries.size(), 7u);
  auto v = validate_library(lib);
  for (const auto& x : v) ADD_FAILURE() << x.entry << " " << x.kind << " " << x.detail;
}

TEST(Library, GoalsOfIsOrderStableAndPure) {
  const auto& lib = testing::shipped_library();
  auto g = goals_of(lib);
  ASSERT_EQ(g.size(), lib.entries.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], lib.entries[i].goal_state);
  EXPECT_EQ(goals_of(lib), g);
  EXPECT_TRUE(goals_of(PlanLibrary{}).empty());
}

PlanLibrary custom_library(const std::string& domain_text,
                           const std::string& problem_text) {
  PlanLibrary lib;
  lib.vocabulary = std::make_shared<const Vocabulary>(testing::shipped_vocab());
  auto d = std::make_shared<const PlanDomain>(parse_domain(domain_text));
  lib.entries.emplace_back("custom", d, parse_problem(problem_text, *d));
  return lib;
}

TEST(Library, TwoWorldActionsAreReported) {
  auto lib = custom_library(R"(
    (define (domain blocks) (:requirements :strips :typing)
      (:types item support - world world - object)
      (:predicates (On ?o - item ?s - world))
      (:action move :parameters (?o - item ?from - world ?to - world) :class world
        :precondition (and (On ?o ?from))
        :effect (and (On ?o ?to) (not (On ?o ?from))))))",
                            R"(
    (define (problem two) (:domain blocks)
      (:objects brush wrench - item floor table shelf - support)
      (:init (On brush floor) (On wrench floor))
      (:goal (and (On brush table) (On wrench shelf)))))");
  auto p = plan(lib.entries[0]);
  EXPECT_EQ(p.world_actions(), 2u);
  auto v = validate_library(lib);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "multiple-world-actions");
}

TEST(Library, EcologicalActionTouchingTheWorld) {
  auto lib = custom_library(R"(
    (define (domain bad) (:requirements :strips :typing)
      (:types item support - world world - object)
      (:predicates (On ?o - item ?s - world))
      (:action tidy :parameters () :class ecological
        :precondition (and)
        :effect (and (On brush table)))
      (:constants brush - item table - support)))",
                            R"(
    (define (problem p) (:domain bad) (:objects) (:init)
      (:goal (and (On brush table)))))");
  auto v = validate_library(lib);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, "ecological-touches-world");
}

TEST(Library, LoadErrors) {
  EXPECT_THROW(load_library("/nonexistent/library.json"), LibraryLoadError);
}

}  // namespace
}  // namespace vdem
