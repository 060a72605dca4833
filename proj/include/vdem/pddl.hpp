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

// PDDL subset: typed STRIPS domains with equality, propositional problems.
//
// Accepted requirements are :strips, :typing and :equality. Preconditions are
// conjunctions of positive atoms plus (possibly negated) equalities; effects
// are conjunctions of atoms and negated atoms. Each action carries a
// non-standard `:class world|ecological` annotation (default world).

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vdem/errors.hpp"
#include "vdem/symbolic.hpp"

namespace vdem::pddl {

inline const std::string kRootType = "object";

struct TypedName {
  std::string name;
  std::string type = kRootType;
  friend bool operator==(const TypedName&, const TypedName&) = default;
};

struct PredicateDecl {
  std::string name;
  std::vector<TypedName> params;
  friend bool operator==(const PredicateDecl&, const PredicateDecl&) = default;
};

struct Equality {
  std::string lhs;
  std::string rhs;
  bool negated = false;
  friend bool operator==(const Equality&, const Equality&) = default;
};

enum class ActionClass { world, ecological };

inline std::string_view to_string(ActionClass c) {
  return c == ActionClass::world ? "world" : "ecological";
}

inline bool is_variable(std::string_view s) {
  return !s.empty() && s.front() == '?';
}

/// Lifted action. Atom arguments are `?variables` or domain constants.
struct ActionSchema {
  std::string name;
  std::vector<TypedName> parameters;
  std::vector<Atom> precondition;
  std::vector<Equality> equalities;
  std::vector<Atom> add;
  std::vector<Atom> del;
  ActionClass action_class = ActionClass::world;
  friend bool operator==(const ActionSchema&, const ActionSchema&) = default;
};

struct PlanDomain {
  std::string name;
  std::vector<std::string> requirements;
  std::vector<TypedName> types;  // name - parent
  std::vector<TypedName> constants;
  std::vector<PredicateDecl> predicates;
  std::vector<ActionSchema> actions;

  friend bool operator==(const PlanDomain&, const PlanDomain&) = default;

  bool has_type(std::string_view t) const {
    if (t == kRootType) return true;
    return std::any_of(types.begin(), types.end(),
                       [&](const TypedName& n) { return n.name == t; });
  }

  std::optional<std::string> parent_type(std::string_view t) const {
    for (const auto& n : types)
      if (n.name == t) return n.type;
    return std::nullopt;
  }

  bool is_subtype(std::string_view child, std::string_view ancestor) const {
    std::string cur(child);
    for (std::size_t steps = 0; steps <= types.size() + 1; ++steps) {
      if (cur == ancestor) return true;
      if (cur == kRootType) return false;
      auto p = parent_type(cur);
      if (!p) return false;
      cur = *p;
    }
    return false;
  }

  const PredicateDecl* find_predicate(std::string_view name) const {
    for (const auto& p : predicates)
      if (p.name == name) return &p;
    return nullptr;
  }

  const ActionSchema* find_action(std::string_view name) const {
    for (const auto& a : actions)
      if (a.name == name) return &a;
    return nullptr;
  }

  std::optional<std::string> constant_type(std::string_view name) const {
    for (const auto& c : constants)
      if (c.name == name) return c.type;
    return std::nullopt;
  }
};

struct PlanProblem {
  std::string name;
  std::string domain_name;
  std::vector<TypedName> objects;
  State init;
  State goal;

  friend bool operator==(const PlanProblem&, const PlanProblem&) = default;

  std::optional<std::string> object_type(std::string_view name) const {
    for (const auto& o : objects)
      if (o.name == name) return o.type;
    return std::nullopt;
  }
};

// Lexer -----------------------------------------------------------------------

struct Token {
  enum Kind { lparen, rparen, name, end } kind = end;
  std::string text;
  int line = 1;
  int column = 1;
};

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&] {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
    ++i;
  };
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance();
    } else if (c == ';') {
      while (i < text.size() && text[i] != '\n') advance();
    } else if (c == '(' || c == ')') {
      out.push_back({c == '(' ? Token::lparen : Token::rparen,
                     std::string(1, c), line, col});
      advance();
    } else {
      Token t{Token::name, {}, line, col};
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i])) &&
             text[i] != '(' && text[i] != ')' && text[i] != ';') {
        t.text += text[i];
        advance();
      }
      out.push_back(std::move(t));
    }
  }
  out.push_back({Token::end, {}, line, col});
  return out;
}

// Parser ----------------------------------------------------------------------

namespace detail {

class Cursor {
 public:
  explicit Cursor(std::vector<Token> toks) : toks_(std::move(toks)) {}

  const Token& peek(std::size_t ahead = 0) const {
    return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  [[noreturn]] void fail(const std::string& expected) const {
    throw ParseError(peek().line, peek().column, expected);
  }
  void open() {
    if (peek().kind != Token::lparen) fail("'('");
    next();
  }
  void close() {
    if (peek().kind != Token::rparen) fail("')'");
    next();
  }
  std::string name(const std::string& what = "a name") {
    if (peek().kind != Token::name) fail(what);
    return next().text;
  }
  void keyword(std::string_view kw) {
    if (peek().kind != Token::name || peek().text != kw)
      fail("'" + std::string(kw) + "'");
    next();
  }
  bool at_close() const { return peek().kind == Token::rparen; }
  bool at_open() const { return peek().kind == Token::lparen; }

  // Skips a balanced expression.
  void skip() {
    if (!at_open()) {
      next();
      return;
    }
    int depth = 0;
    do {
      if (peek().kind == Token::end) fail("')'");
      if (peek().kind == Token::lparen) ++depth;
      if (peek().kind == Token::rparen) --depth;
      next();
    } while (depth > 0);
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// `a b - t c` until ')'.
inline std::vector<TypedName> typed_list(Cursor& cur, bool variables) {
  std::vector<TypedName> out;
  std::vector<std::string> pending;
  while (!cur.at_close()) {
    if (cur.at_open()) {
      cur.next();
      if (cur.peek().kind == Token::name && lower(cur.peek().text) == "either")
        throw UnsupportedFeature("either types");
      cur.fail("a name");
    }
    if (variables && cur.peek().kind == Token::name && cur.peek().text != "-" &&
        !is_variable(cur.peek().text))
      cur.fail("a ?variable");
    std::string n = cur.name();
    if (n == "-") {
      if (pending.empty()) cur.fail("a name before '-'");
      if (cur.at_open()) {
        cur.next();
        if (cur.peek().kind == Token::name && lower(cur.peek().text) == "either")
          throw UnsupportedFeature("either types");
        cur.fail("a type name");
      }
      std::string type = cur.name("a type name");
      for (auto& p : pending) out.push_back({std::move(p), type});
      pending.clear();
      continue;
    }
    pending.push_back(std::move(n));
  }
  for (auto& p : pending) out.push_back({std::move(p), kRootType});
  return out;
}

inline Atom parse_atom_body(Cursor& cur, std::string pred) {
  Atom a;
  a.predicate = std::move(pred);
  while (!cur.at_close()) a.args.push_back(cur.name("a term"));
  cur.close();
  return a;
}

// Precondition goal description. Assumes '(' already consumed.
inline void parse_condition(Cursor& cur, std::vector<Atom>& atoms,
                            std::vector<Equality>& eqs, bool allow_equality) {
  std::string head = cur.name("a predicate or connective");
  std::string lh = lower(head);
  if (lh == "and") {
    while (!cur.at_close()) {
      cur.open();
      parse_condition(cur, atoms, eqs, allow_equality);
    }
    cur.close();
    return;
  }
  if (lh == "or") throw UnsupportedFeature("disjunctive preconditions");
  if (lh == "imply") throw UnsupportedFeature("implications");
  if (lh == "forall" || lh == "exists")
    throw UnsupportedFeature("quantified preconditions");
  if (lh == "not") {
    cur.open();
    if (cur.peek().kind == Token::name && cur.peek().text == "=" &&
        allow_equality) {
      cur.next();
      Equality e{cur.name("a term"), cur.name("a term"), true};
      cur.close();
      cur.close();
      eqs.push_back(std::move(e));
      return;
    }
    throw UnsupportedFeature("negative preconditions");
  }
  if (head == "=") {
    if (!allow_equality) throw UnsupportedFeature("equality in this position");
    Equality e{cur.name("a term"), cur.name("a term"), false};
    cur.close();
    eqs.push_back(std::move(e));
    return;
  }
  atoms.push_back(parse_atom_body(cur, std::move(head)));
}

// Effect. Assumes '(' already consumed.
inline void parse_effect(Cursor& cur, std::vector<Atom>& add,
                         std::vector<Atom>& del) {
  std::string head = cur.name("an effect");
  std::string lh = lower(head);
  if (lh == "and") {
    while (!cur.at_close()) {
      cur.open();
      parse_effect(cur, add, del);
    }
    cur.close();
    return;
  }
  if (lh == "when") throw UnsupportedFeature("conditional effects");
  if (lh == "forall") throw UnsupportedFeature("universal effects");
  if (lh == "increase" || lh == "decrease" || lh == "assign" ||
      lh == "scale-up" || lh == "scale-down")
    throw UnsupportedFeature("numeric fluents");
  if (lh == "not") {
    cur.open();
    del.push_back(parse_atom_body(cur, cur.name("a predicate")));
    cur.close();
    return;
  }
  add.push_back(parse_atom_body(cur, std::move(head)));
}

inline void check_requirements(const std::vector<std::string>& reqs) {
  for (const auto& r : reqs) {
    std::string l = lower(r);
    if (l != ":strips" && l != ":typing" && l != ":equality")
      throw UnsupportedFeature(r);
  }
}

inline std::string arg_type(const PlanDomain& d, const ActionSchema& a,
                            const std::string& arg) {
  if (is_variable(arg)) {
    for (const auto& p : a.parameters)
      if (p.name == arg) return p.type;
    throw TypeError(a.name, "unbound variable " + arg);
  }
  if (auto t = d.constant_type(arg)) return *t;
  throw TypeError(a.name, "undeclared constant " + arg);
}

inline void check_schema_atom(const PlanDomain& d, const ActionSchema& a,
                              const Atom& atom) {
  const PredicateDecl* p = d.find_predicate(atom.predicate);
  if (!p) throw TypeError(to_string(atom), "undeclared predicate in " + a.name);
  if (p->params.size() != atom.args.size())
    throw TypeError(to_string(atom), "wrong arity in " + a.name);
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    std::string t = arg_type(d, a, atom.args[i]);
    if (!d.is_subtype(t, p->params[i].type))
      throw TypeError(to_string(atom), atom.args[i] + " - " + t + " is not a " +
                                           p->params[i].type);
  }
}

inline void check_domain(const PlanDomain& d) {
  for (const auto& t : d.types)
    if (!d.has_type(t.type))
      throw TypeError(t.name, "unknown parent type " + t.type);
  for (const auto& c : d.constants)
    if (!d.has_type(c.type))
      throw TypeError(c.name, "unknown type " + c.type);
  for (const auto& p : d.predicates)
    for (const auto& prm : p.params)
      if (!d.has_type(prm.type))
        throw TypeError(p.name, "unknown type " + prm.type);
  for (const auto& a : d.actions) {
    for (const auto& prm : a.parameters)
      if (!d.has_type(prm.type))
        throw TypeError(a.name, "unknown type " + prm.type);
    for (const auto& atom : a.precondition) check_schema_atom(d, a, atom);
    for (const auto& atom : a.add) check_schema_atom(d, a, atom);
    for (const auto& atom : a.del) check_schema_atom(d, a, atom);
    for (const auto& e : a.equalities) {
      arg_type(d, a, e.lhs);
      arg_type(d, a, e.rhs);
    }
    for (const auto& atom : a.add)
      if (std::find(a.del.begin(), a.del.end(), atom) != a.del.end())
        throw TypeError(to_string(atom), "both added and deleted by " + a.name);
  }
}

}  // namespace detail

inline PlanDomain parse_domain(std::string_view text) {
  using detail::lower;
  detail::Cursor cur(tokenize(text));
  PlanDomain d;
  cur.open();
  cur.keyword("define");
  cur.open();
  cur.keyword("domain");
  d.name = cur.name("a domain name");
  cur.close();
  while (!cur.at_close()) {
    cur.open();
    std::string section = lower(cur.name("a domain section"));
    if (section == ":requirements") {
      while (!cur.at_close()) d.requirements.push_back(cur.name());
      cur.close();
      detail::check_requirements(d.requirements);
    } else if (section == ":types") {
      d.types = detail::typed_list(cur, false);
      cur.close();
    } else if (section == ":constants") {
      d.constants = detail::typed_list(cur, false);
      cur.close();
    } else if (section == ":predicates") {
      while (!cur.at_close()) {
        cur.open();
        PredicateDecl p;
        p.name = cur.name("a predicate name");
        p.params = detail::typed_list(cur, true);
        cur.close();
        d.predicates.push_back(std::move(p));
      }
      cur.close();
    } else if (section == ":action") {
      ActionSchema a;
      a.name = cur.name("an action name");
      while (!cur.at_close()) {
        std::string key = lower(cur.name("an action keyword"));
        if (key == ":parameters") {
          cur.open();
          a.parameters = detail::typed_list(cur, true);
          cur.close();
        } else if (key == ":class") {
          std::string c = lower(cur.name("world or ecological"));
          if (c == "world") a.action_class = ActionClass::world;
          else if (c == "ecological") a.action_class = ActionClass::ecological;
          else cur.fail("world or ecological");
        } else if (key == ":precondition") {
          cur.open();
          if (cur.at_close()) cur.next();  // ()
          else detail::parse_condition(cur, a.precondition, a.equalities, true);
        } else if (key == ":effect") {
          cur.open();
          if (cur.at_close()) cur.next();
          else detail::parse_effect(cur, a.add, a.del);
        } else {
          cur.fail(":parameters, :class, :precondition or :effect");
        }
      }
      cur.close();
      d.actions.push_back(std::move(a));
    } else if (section == ":durative-action") {
      throw UnsupportedFeature(":durative-action");
    } else if (section == ":functions") {
      throw UnsupportedFeature(":functions");
    } else if (section == ":derived") {
      throw UnsupportedFeature(":derived");
    } else if (section == ":constraints") {
      throw UnsupportedFeature(":constraints");
    } else {
      throw ParseError(cur.peek().line, cur.peek().column,
                       "a domain section, got " + section);
    }
  }
  cur.close();
  if (cur.peek().kind != Token::end) cur.fail("end of input");
  detail::check_domain(d);
  return d;
}

inline std::string atom_context(const Atom& a) { return to_string(a); }

/// Type checks a ground atom against the domain and the problem objects.
inline void check_ground_atom(const PlanDomain& d,
                              const std::vector<TypedName>& objects,
                              const Atom& a) {
  const PredicateDecl* p = d.find_predicate(a.predicate);
  if (!p) throw TypeError(to_string(a), "undeclared predicate");
  if (p->params.size() != a.args.size())
    throw TypeError(to_string(a), "wrong arity");
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    const std::string& arg = a.args[i];
    if (is_variable(arg)) throw TypeError(to_string(a), "not ground");
    std::optional<std::string> type;
    for (const auto& o : objects)
      if (o.name == arg) type = o.type;
    if (!type) type = d.constant_type(arg);
    if (!type) throw TypeError(to_string(a), "undeclared object " + arg);
    if (!d.is_subtype(*type, p->params[i].type))
      throw TypeError(to_string(a), arg + " - " + *type + " is not a " +
                                        p->params[i].type);
  }
}

inline PlanProblem parse_problem(std::string_view text, const PlanDomain& domain) {
  using detail::lower;
  detail::Cursor cur(tokenize(text));
  PlanProblem pr;
  cur.open();
  cur.keyword("define");
  cur.open();
  cur.keyword("problem");
  pr.name = cur.name("a problem name");
  cur.close();
  while (!cur.at_close()) {
    cur.open();
    std::string section = lower(cur.name("a problem section"));
    if (section == ":domain") {
      pr.domain_name = cur.name("a domain name");
      cur.close();
    } else if (section == ":requirements") {
      std::vector<std::string> reqs;
      while (!cur.at_close()) reqs.push_back(cur.name());
      cur.close();
      detail::check_requirements(reqs);
    } else if (section == ":objects") {
      pr.objects = detail::typed_list(cur, false);
      cur.close();
    } else if (section == ":init") {
      std::vector<Atom> atoms;
      while (!cur.at_close()) {
        cur.open();
        std::string head = cur.name("an atom");
        if (lower(head) == "not" || head == "=")
          throw UnsupportedFeature("literals other than atoms in :init");
        atoms.push_back(detail::parse_atom_body(cur, std::move(head)));
      }
      cur.close();
      pr.init = State(std::move(atoms));
    } else if (section == ":goal") {
      std::vector<Atom> atoms;
      std::vector<Equality> eqs;
      cur.open();
      if (cur.at_close()) cur.next();
      else detail::parse_condition(cur, atoms, eqs, false);
      cur.close();
      pr.goal = State(std::move(atoms));
    } else if (section == ":metric") {
      throw UnsupportedFeature(":metric");
    } else {
      throw ParseError(cur.peek().line, cur.peek().column,
                       "a problem section, got " + section);
    }
  }
  cur.close();
  if (cur.peek().kind != Token::end) cur.fail("end of input");

  if (!pr.domain_name.empty() && pr.domain_name != domain.name)
    throw TypeError(pr.name, "refers to domain " + pr.domain_name + ", not " +
                                 domain.name);
  for (const auto& o : pr.objects)
    if (!domain.has_type(o.type))
      throw TypeError(o.name, "unknown type " + o.type);
  for (const auto& a : pr.init) check_ground_atom(domain, pr.objects, a);
  for (const auto& a : pr.goal) check_ground_atom(domain, pr.objects, a);
  return pr;
}

// Printer ---------------------------------------------------------------------

namespace detail {

inline std::string print_atom(const Atom& a) {
  std::string out = "(" + a.predicate;
  for (const auto& arg : a.args) out += " " + arg;
  return out + ")";
}

inline std::string print_typed(const std::vector<TypedName>& names) {
  std::string out;
  for (const auto& n : names) {
    if (!out.empty()) out += " ";
    out += n.name + " - " + n.type;
  }
  return out;
}

inline std::string print_conjunction(const std::vector<std::string>& parts) {
  if (parts.empty()) return "(and)";
  std::string out = "(and";
  for (const auto& p : parts) out += " " + p;
  return out + ")";
}

}  // namespace detail

inline std::string print_domain(const PlanDomain& d) {
  using namespace detail;
  std::ostringstream os;
  os << "(define (domain " << d.name << ")\n";
  if (!d.requirements.empty()) {
    os << "  (:requirements";
    for (const auto& r : d.requirements) os << " " << r;
    os << ")\n";
  }
  if (!d.types.empty()) os << "  (:types " << print_typed(d.types) << ")\n";
  if (!d.constants.empty())
    os << "  (:constants " << print_typed(d.constants) << ")\n";
  os << "  (:predicates";
  for (const auto& p : d.predicates) {
    os << "\n    (" << p.name;
    if (!p.params.empty()) os << " " << print_typed(p.params);
    os << ")";
  }
  os << ")\n";
  for (const auto& a : d.actions) {
    os << "  (:action " << a.name << "\n";
    os << "    :parameters (" << print_typed(a.parameters) << ")\n";
    os << "    :class " << to_string(a.action_class) << "\n";
    std::vector<std::string> pre;
    for (const auto& atom : a.precondition) pre.push_back(print_atom(atom));
    for (const auto& e : a.equalities) {
      std::string eq = "(= " + e.lhs + " " + e.rhs + ")";
      pre.push_back(e.negated ? "(not " + eq + ")" : eq);
    }
    os << "    :precondition " << print_conjunction(pre) << "\n";
    std::vector<std::string> eff;
    for (const auto& atom : a.add) eff.push_back(print_atom(atom));
    for (const auto& atom : a.del) eff.push_back("(not " + print_atom(atom) + ")");
    os << "    :effect " << print_conjunction(eff) << ")\n";
  }
  os << ")\n";
  return os.str();
}

inline std::string print_problem(const PlanProblem& p) {
  using namespace detail;
  std::ostringstream os;
  os << "(define (problem " << p.name << ")\n";
  if (!p.domain_name.empty()) os << "  (:domain " << p.domain_name << ")\n";
  os << "  (:objects " << print_typed(p.objects) << ")\n";
  os << "  (:init";
  for (const auto& a : p.init) os << "\n    " << print_atom(a);
  os << ")\n";
  std::vector<std::string> goal;
  for (const auto& a : p.goal) goal.push_back(print_atom(a));
  os << "  (:goal " << print_conjunction(goal) << "))\n";
  return os.str();
}

}  // namespace vdem::pddl

namespace vdem {

/// One plan of the library: a problem over a shared domain and its goal.
struct PlanEntry {
  std::string name;
  std::shared_ptr<const pddl::PlanDomain> domain;
  pddl::PlanProblem problem;
  State goal_state;  // cached copy of problem.goal

  PlanEntry() = default;
  PlanEntry(std::string n, std::shared_ptr<const pddl::PlanDomain> d,
            pddl::PlanProblem p)
      : name(std::move(n)), domain(std::move(d)), problem(std::move(p)),
        goal_state(problem.goal) {}
};

/// Ordered successor goals of one task, used to build predictor data.
struct GoalChain {
  std::string task;  // TaskSentence id
  State start;
  std::vector<State> goals;
  int weight = 1;
};

struct PlanLibrary {
  std::vector<PlanEntry> entries;
  std::shared_ptr<const Vocabulary> vocabulary;
  std::vector<GoalChain> chains;

  const PlanEntry* find(std::string_view name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

inline std::vector<State> goals_of(const PlanLibrary& lib) {
  std::vector<State> out;
  out.reserve(lib.entries.size());
  for (const auto& e : lib.entries) out.push_back(e.goal_state);
  return out;
}

}  // namespace vdem
