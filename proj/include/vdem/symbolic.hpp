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

// The robot language: sorts, terms, predicates, ground atoms, conjunctive
// states, task sentences and the vocabulary that indexes all of them.

#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vdem/errors.hpp"

namespace vdem {

enum class TermKind { world, robot };

inline std::string_view to_string(TermKind k) {
  return k == TermKind::robot ? "robot" : "world";
}

struct Sort {
  std::string name;
  std::optional<std::string> parent;
  // Marks the root of the world or robot partition. Descendants inherit it.
  std::optional<TermKind> kind;
};

struct Term {
  std::string name;
  std::string sort;
  TermKind kind = TermKind::world;
};

struct Predicate {
  std::string name;
  std::vector<std::string> arg_sorts;
  // Describes the robot's knowledge (Found, Detected) rather than the world.
  bool epistemic = false;

  std::size_t arity() const { return arg_sorts.size(); }
};

/// A ground literal R(v1, ..., vk) with an optional frame index.
struct Atom {
  std::string predicate;
  std::vector<std::string> args;
  std::optional<int> time;

  Atom() = default;
  Atom(std::string pred, std::vector<std::string> a,
       std::optional<int> t = std::nullopt)
      : predicate(std::move(pred)), args(std::move(a)), time(t) {}

  friend bool operator==(const Atom&, const Atom&) = default;
  friend auto operator<=>(const Atom& a, const Atom& b) {
    if (auto c = a.predicate <=> b.predicate; c != 0) return c;
    if (auto c = a.args <=> b.args; c != 0) return c;
    return a.time <=> b.time;
  }

  Atom without_time() const { return Atom(predicate, args); }
};

inline std::string to_string(const Atom& a) {
  std::string out = a.predicate + "(";
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (i) out += ", ";
    out += a.args[i];
  }
  out += ")";
  if (a.time) out += "@" + std::to_string(*a.time);
  return out;
}

inline std::ostream& operator<<(std::ostream& os, const Atom& a) {
  return os << to_string(a);
}

/// Conjunction of ground atoms kept sorted and duplicate free.
class State {
 public:
  using const_iterator = std::vector<Atom>::const_iterator;

  State() = default;
  State(std::initializer_list<Atom> atoms) : atoms_(atoms) { normalize(); }
  explicit State(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    normalize();
  }

  bool insert(const Atom& a) {
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), a);
    if (it != atoms_.end() && *it == a) return false;
    atoms_.insert(it, a);
    return true;
  }

  bool erase(const Atom& a) {
    auto it = std::lower_bound(atoms_.begin(), atoms_.end(), a);
    if (it == atoms_.end() || *it != a) return false;
    atoms_.erase(it);
    return true;
  }

  bool contains(const Atom& a) const {
    return std::binary_search(atoms_.begin(), atoms_.end(), a);
  }

  /// Every atom of this state holds in `other`.
  bool subset_of(const State& other) const {
    return std::includes(other.atoms_.begin(), other.atoms_.end(),
                         atoms_.begin(), atoms_.end());
  }

  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }
  const_iterator begin() const { return atoms_.begin(); }
  const_iterator end() const { return atoms_.end(); }
  const std::vector<Atom>& atoms() const { return atoms_; }

  State without_time() const {
    std::vector<Atom> out;
    out.reserve(atoms_.size());
    for (const auto& a : atoms_) out.push_back(a.without_time());
    return State(std::move(out));
  }

  friend bool operator==(const State&, const State&) = default;
  friend auto operator<=>(const State& a, const State& b) {
    return a.atoms_ <=> b.atoms_;
  }

 private:
  void normalize() {
    std::sort(atoms_.begin(), atoms_.end());
    atoms_.erase(std::unique(atoms_.begin(), atoms_.end()), atoms_.end());
  }

  std::vector<Atom> atoms_;
};

inline State set_union(const State& a, const State& b) {
  std::vector<Atom> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(),
                 std::back_inserter(out));
  return State(std::move(out));
}

inline State set_difference(const State& a, const State& b) {
  std::vector<Atom> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                      std::back_inserter(out));
  return State(std::move(out));
}

inline State set_intersection(const State& a, const State& b) {
  std::vector<Atom> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(out));
  return State(std::move(out));
}

inline std::string to_string(const State& s) {
  std::string out;
  for (const auto& a : s) {
    if (!out.empty()) out += " ";
    out += to_string(a);
  }
  return out;
}

inline std::ostream& operator<<(std::ostream& os, const State& s) {
  return os << "{" << to_string(s) << "}";
}

namespace detail {

inline bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
         c == '.';
}

inline void skip_space(std::string_view text, std::size_t& i) {
  while (i < text.size() &&
         (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == ';' ||
          text[i] == '&'))
    ++i;
}

inline std::string read_name(std::string_view text, std::size_t& i) {
  std::size_t start = i;
  while (i < text.size() && is_name_char(text[i])) ++i;
  if (start == i)
    throw AtomSyntaxError("expected a name at offset " + std::to_string(i) +
                          " in '" + std::string(text) + "'");
  return std::string(text.substr(start, i - start));
}

}  // namespace detail

/// Parses whitespace separated atoms written as `On(brush, ladder)` with an
/// optional `@t` frame suffix.
inline State parse_state(std::string_view text) {
  using namespace detail;
  std::vector<Atom> atoms;
  std::size_t i = 0;
  skip_space(text, i);
  while (i < text.size()) {
    Atom a;
    a.predicate = read_name(text, i);
    if (i >= text.size() || text[i] != '(')
      throw AtomSyntaxError("expected '(' after " + a.predicate);
    ++i;
    while (true) {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
      if (i < text.size() && text[i] == ')') {
        ++i;
        break;
      }
      a.args.push_back(read_name(text, i));
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])))
        ++i;
      if (i < text.size() && text[i] == ',') ++i;
      else if (i >= text.size() || text[i] != ')')
        throw AtomSyntaxError("expected ',' or ')' in atom " + a.predicate);
    }
    if (i < text.size() && text[i] == '@') {
      ++i;
      a.time = std::stoi(read_name(text, i));
    }
    atoms.push_back(std::move(a));
    skip_space(text, i);
  }
  return State(std::move(atoms));
}

inline Atom parse_atom(std::string_view text) {
  State s = parse_state(text);
  if (s.size() != 1) throw AtomSyntaxError("expected exactly one atom");
  return s.atoms().front();
}

struct TaskSentence {
  std::string id;
  std::vector<std::string> words;

  friend bool operator==(const TaskSentence&, const TaskSentence&) = default;
};

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

struct Separators {
  std::string eoa = "<eoa>";
  std::string ets = "<ets>";
  std::string eos = "<eos>";
};

/// The indexed language L u {T}. Immutable once constructed; the constructor
/// validates every invariant and builds the token bijection.
class Vocabulary {
 public:
  Vocabulary() = default;

  Vocabulary(std::vector<Sort> sorts, std::vector<Term> terms,
             std::vector<Predicate> predicates, std::vector<TaskSentence> tasks,
             Separators separators = {})
      : sorts_(std::move(sorts)),
        terms_(std::move(terms)),
        predicates_(std::move(predicates)),
        tasks_(std::move(tasks)),
        separators_(std::move(separators)) {
    build();
  }

  const std::vector<Sort>& sorts() const { return sorts_; }
  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<Predicate>& predicates() const { return predicates_; }
  const std::vector<TaskSentence>& tasks() const { return tasks_; }
  const Separators& separators() const { return separators_; }
  const std::string& root_sort() const { return sorts_[root_].name; }

  const Sort* find_sort(std::string_view name) const {
    auto it = sort_index_.find(std::string(name));
    return it == sort_index_.end() ? nullptr : &sorts_[it->second];
  }
  const Term* find_term(std::string_view name) const {
    auto it = term_index_.find(std::string(name));
    return it == term_index_.end() ? nullptr : &terms_[it->second];
  }
  const Predicate* find_predicate(std::string_view name) const {
    auto it = predicate_index_.find(std::string(name));
    return it == predicate_index_.end() ? nullptr : &predicates_[it->second];
  }
  const TaskSentence* find_task(std::string_view id) const {
    for (const auto& t : tasks_)
      if (t.id == id) return &t;
    return nullptr;
  }
  const TaskSentence* find_task_by_words(
      const std::vector<std::string>& words) const {
    for (const auto& t : tasks_)
      if (t.words == words) return &t;
    return nullptr;
  }

  /// True when `child` equals `ancestor` or descends from it.
  bool is_subsort(std::string_view child, std::string_view ancestor) const {
    const Sort* s = find_sort(child);
    while (s) {
      if (s->name == ancestor) return true;
      s = s->parent ? find_sort(*s->parent) : nullptr;
    }
    return false;
  }

  TermKind kind_of_sort(std::string_view sort) const {
    const Sort* s = find_sort(sort);
    while (s) {
      if (s->kind) return *s->kind;
      s = s->parent ? find_sort(*s->parent) : nullptr;
    }
    return TermKind::world;
  }

  std::vector<const Term*> terms_of_sort(std::string_view sort) const {
    std::vector<const Term*> out;
    for (const auto& t : terms_)
      if (is_subsort(t.sort, sort)) out.push_back(&t);
    return out;
  }

  /// Empty string when the atom is type-valid, otherwise the reason.
  std::string type_violation(const Atom& a) const {
    const Predicate* p = find_predicate(a.predicate);
    if (!p) return "unknown predicate " + a.predicate;
    if (p->arity() != a.args.size())
      return "arity " + std::to_string(a.args.size()) + " but " + p->name +
             " takes " + std::to_string(p->arity());
    for (std::size_t i = 0; i < a.args.size(); ++i) {
      const Term* t = find_term(a.args[i]);
      if (!t) return "unknown term " + a.args[i];
      if (!is_subsort(t->sort, p->arg_sorts[i]))
        return a.args[i] + " of sort " + t->sort + " is not a " +
               p->arg_sorts[i];
    }
    return {};
  }

  bool type_valid(const Atom& a) const { return type_violation(a).empty(); }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(id); }
  std::optional<int> token_id(std::string_view spelling) const {
    auto it = token_ids_.find(std::string(spelling));
    if (it == token_ids_.end()) return std::nullopt;
    return it->second;
  }
  int eoa() const { return 0; }
  int ets() const { return 1; }
  int eos() const { return 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the token table; checkpoints are bound to it.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : tokens_) {
      for (unsigned char c : t) {
        h ^= c;
        h *= 1099511628211ull;
      }
      h ^= 0xff;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  void build() {
    for (std::size_t i = 0; i < sorts_.size(); ++i) {
      if (!sort_index_.emplace(sorts_[i].name, i).second)
        throw VocabularyError("duplicate sort " + sorts_[i].name);
    }
    std::size_t roots = 0;
    for (std::size_t i = 0; i < sorts_.size(); ++i) {
      const Sort& s = sorts_[i];
      if (!s.parent) {
        root_ = i;
        ++roots;
        continue;
      }
      if (!sort_index_.count(*s.parent))
        throw VocabularyError("sort " + s.name + " has unknown parent " +
                              *s.parent);
      // Walk to the root; more steps than sorts means a cycle.
      const Sort* cur = &s;
      for (std::size_t steps = 0; cur->parent; ++steps) {
        if (steps > sorts_.size())
          throw VocabularyError("sort graph has a cycle through " + s.name);
        cur = &sorts_[sort_index_.at(*cur->parent)];
      }
    }
    if (roots != 1)
      throw VocabularyError("sort graph needs exactly one root, found " +
                            std::to_string(roots));

    for (std::size_t i = 0; i < terms_.size(); ++i) {
      Term& t = terms_[i];
      if (!sort_index_.count(t.sort))
        throw VocabularyError("term " + t.name + " has unknown sort " + t.sort);
      if (!term_index_.emplace(t.name, i).second)
        throw VocabularyError("duplicate term " + t.name);
    }
    for (const Term& t : terms_) {
      if (t.kind != kind_of_sort(t.sort))
        throw VocabularyError("term " + t.name + " kind " +
                              std::string(to_string(t.kind)) +
                              " contradicts its sort ancestry");
    }
    for (std::size_t i = 0; i < predicates_.size(); ++i) {
      const Predicate& p = predicates_[i];
      if (p.arity() < 1 || p.arity() > 2)
        throw VocabularyError("predicate " + p.name + " must be unary or binary");
      for (const auto& s : p.arg_sorts)
        if (!sort_index_.count(s))
          throw VocabularyError("predicate " + p.name + " uses unknown sort " +
                                s);
      if (!predicate_index_.emplace(p.name, i).second)
        throw VocabularyError("duplicate predicate " + p.name);
      if (term_index_.count(p.name))
        throw VocabularyError(p.name + " is both a predicate and a term");
    }
    for (const auto& t : tasks_)
      if (t.words.empty())
        throw VocabularyError("task " + t.id + " has an empty sentence");

    auto add = [&](const std::string& tok, bool must_be_new) {
      if (token_ids_.count(tok)) {
        if (must_be_new) throw VocabularyError("token " + tok + " is not unique");
        return;
      }
      token_ids_.emplace(tok, static_cast<int>(tokens_.size()));
      tokens_.push_back(tok);
    };
    add(separators_.eoa, true);
    add(separators_.ets, true);
    add(separators_.eos, true);
    for (const auto& p : predicates_) add(p.name, true);
    for (const auto& t : terms_) add(t.name, true);
    for (const auto& task : tasks_)
      for (const auto& w : task.words) {
        if (w == separators_.eoa || w == separators_.ets ||
            w == separators_.eos)
          throw VocabularyError("task " + task.id + " uses a separator token");
        add(w, false);
      }
  }

  std::vector<Sort> sorts_;
  std::vector<Term> terms_;
  std::vector<Predicate> predicates_;
  std::vector<TaskSentence> tasks_;
  Separators separators_;
  std::size_t root_ = 0;
  std::unordered_map<std::string, std::size_t> sort_index_;
  std::unordered_map<std::string, std::size_t> term_index_;
  std::unordered_map<std::string, std::size_t> predicate_index_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> token_ids_;
};

// Herbrand universe -----------------------------------------------------------

inline std::size_t herbrand_count(const Vocabulary& vocab) {
  std::size_t n = vocab.terms().size();
  std::size_t total = 0;
  for (const auto& p : vocab.predicates())
    total += p.arity() == 1 ? n : n * n;
  return total;
}

/// Every predicate applied to every arity-matching tuple of terms, before any
/// sort filtering. Returned in canonical order.
inline std::vector<Atom> herbrand_universe(const Vocabulary& vocab) {
  std::vector<Atom> out;
  out.reserve(herbrand_count(vocab));
  const auto& terms = vocab.terms();
  for (const auto& p : vocab.predicates()) {
    if (p.arity() == 1) {
      for (const auto& t : terms) out.emplace_back(p.name, std::vector{t.name});
    } else {
      for (const auto& a : terms)
        for (const auto& b : terms)
          out.emplace_back(p.name, std::vector{a.name, b.name});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<Atom> filter_by_types(std::span<const Atom> atoms,
                                         const Vocabulary& vocab) {
  std::vector<Atom> out;
  for (const auto& a : atoms)
    if (vocab.type_valid(a)) out.push_back(a);
  return out;
}

inline State filter_by_types(const State& s, const Vocabulary& vocab) {
  return State(filter_by_types(std::span<const Atom>(s.atoms()), vocab));
}

// Token encoding --------------------------------------------------------------

inline constexpr std::size_t kMaxStateAtoms = 17;

struct TokenSeq {
  std::vector<int> tokens;
  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

namespace detail {

inline int require_token(const Vocabulary& vocab, const std::string& spelling) {
  auto id = vocab.token_id(spelling);
  if (!id) throw VocabularyError("no token for '" + spelling + "'");
  return *id;
}

inline void append_atoms(const State& s, const Vocabulary& vocab,
                         std::vector<int>& out) {
  // State iteration order is already the canonical (predicate, args) order;
  // frame indices are not encoded.
  for (const auto& a : s) {
    out.push_back(require_token(vocab, a.predicate));
    for (const auto& arg : a.args) out.push_back(require_token(vocab, arg));
    out.push_back(vocab.eoa());
  }
}

}  // namespace detail

/// task words, <ets>, (pred args... <eoa>)*, <eos>
inline TokenSeq encode_state(const TaskSentence& task, const State& s,
                             const Vocabulary& vocab,
                             std::size_t max_atoms = kMaxStateAtoms) {
  if (s.size() > max_atoms) throw StateTooLong(s.size(), max_atoms);
  TokenSeq seq;
  for (const auto& w : task.words)
    seq.tokens.push_back(detail::require_token(vocab, w));
  seq.tokens.push_back(vocab.ets());
  detail::append_atoms(s.without_time(), vocab, seq.tokens);
  seq.tokens.push_back(vocab.eos());
  return seq;
}

/// Target side of a training pair: (pred args... <eoa>)*, <eos>
inline TokenSeq encode_goal(const State& s, const Vocabulary& vocab,
                            std::size_t max_atoms = kMaxStateAtoms) {
  if (s.size() > max_atoms) throw StateTooLong(s.size(), max_atoms);
  TokenSeq seq;
  detail::append_atoms(s.without_time(), vocab, seq.tokens);
  seq.tokens.push_back(vocab.eos());
  return seq;
}

enum class AtomOrder {
  canonical,  // atoms must be strictly increasing, as encode_state emits them
  any,        // any order, duplicates still rejected
};

/// Parses atom groups starting at `pos` up to and including <eos>.
inline State decode_atoms(std::span<const int> tokens, const Vocabulary& vocab,
                          std::size_t pos = 0,
                          AtomOrder order = AtomOrder::canonical,
                          std::size_t base_offset = 0) {
  std::vector<Atom> atoms;
  auto fail = [&](std::size_t at, const std::string& why) -> MalformedSequence {
    return MalformedSequence(base_offset + at, why);
  };
  auto check_id = [&](std::size_t at) {
    if (tokens[at] < 0 || static_cast<std::size_t>(tokens[at]) >= vocab.size())
      throw fail(at, "token id out of range");
  };
  while (true) {
    if (pos >= tokens.size()) throw fail(pos, "missing <eos>");
    check_id(pos);
    if (tokens[pos] == vocab.eos()) {
      ++pos;
      break;
    }
    const Predicate* p = vocab.find_predicate(vocab.token(tokens[pos]));
    if (!p) throw fail(pos, "expected a predicate, got " + vocab.token(tokens[pos]));
    Atom a;
    a.predicate = p->name;
    ++pos;
    for (std::size_t k = 0; k < p->arity(); ++k, ++pos) {
      if (pos >= tokens.size()) throw fail(pos, "truncated atom");
      check_id(pos);
      const Term* t = vocab.find_term(vocab.token(tokens[pos]));
      if (!t) throw fail(pos, "expected a term, got " + vocab.token(tokens[pos]));
      a.args.push_back(t->name);
    }
    if (pos >= tokens.size() || tokens[pos] != vocab.eoa())
      throw fail(pos, "expected <eoa>");
    if (auto why = vocab.type_violation(a); !why.empty())
      throw fail(pos, "ill-typed atom " + to_string(a) + ": " + why);
    if (!atoms.empty()) {
      if (order == AtomOrder::canonical && !(atoms.back() < a))
        throw fail(pos, "atoms out of canonical order");
      if (std::find(atoms.begin(), atoms.end(), a) != atoms.end())
        throw fail(pos, "duplicate atom " + to_string(a));
    }
    atoms.push_back(std::move(a));
    ++pos;
  }
  if (pos != tokens.size()) throw fail(pos, "tokens after <eos>");
  return State(std::move(atoms));
}

inline std::pair<TaskSentence, State> decode_state(
    const TokenSeq& seq, const Vocabulary& vocab,
    AtomOrder order = AtomOrder::canonical) {
  std::span<const int> toks(seq.tokens);
  std::size_t pos = 0;
  std::vector<std::string> words;
  while (pos < toks.size() && toks[pos] != vocab.ets()) {
    if (toks[pos] < 0 || static_cast<std::size_t>(toks[pos]) >= vocab.size())
      throw MalformedSequence(pos, "token id out of range");
    if (toks[pos] == vocab.eoa() || toks[pos] == vocab.eos())
      throw MalformedSequence(pos, "separator inside the task sentence");
    words.push_back(vocab.token(toks[pos]));
    ++pos;
  }
  if (pos >= toks.size()) throw MalformedSequence(pos, "missing <ets>");
  if (words.empty()) throw MalformedSequence(0, "empty task sentence");
  const TaskSentence* task = vocab.find_task_by_words(words);
  if (!task) throw MalformedSequence(0, "task sentence is not declared");
  State s = decode_atoms(toks, vocab, pos + 1, order);
  return {*task, std::move(s)};
}

inline std::string to_text(const TokenSeq& seq, const Vocabulary& vocab) {
  std::string out;
  for (int t : seq.tokens) {
    if (!out.empty()) out += ' ';
    out += vocab.token(t);
  }
  return out;
}

inline TokenSeq parse_token_text(std::string_view text,
                                 const Vocabulary& vocab) {
  TokenSeq seq;
  for (const auto& w : split_words(text)) {
    auto id = vocab.token_id(w);
    if (!id) throw MalformedSequence(seq.tokens.size(), "unknown token " + w);
    seq.tokens.push_back(*id);
  }
  return seq;
}

}  // namespace vdem
