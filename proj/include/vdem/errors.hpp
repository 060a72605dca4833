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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vdem {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// symbolic core ---------------------------------------------------------------

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class StateTooLong : public Error {
 public:
  StateTooLong(std::size_t atoms, std::size_t limit)
      : Error("state has " + std::to_string(atoms) + " atoms, limit is " +
              std::to_string(limit)),
        atoms(atoms),
        limit(limit) {}
  std::size_t atoms;
  std::size_t limit;
};

class MalformedSequence : public Error {
 public:
  MalformedSequence(std::size_t position, const std::string& what)
      : Error("malformed token sequence at position " +
              std::to_string(position) + ": " + what),
        position(position) {}
  std::size_t position;
};

class AtomSyntaxError : public Error {
 public:
  using Error::Error;
};

// pddl ------------------------------------------------------------------------

class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& expected)
      : Error(std::to_string(line) + ":" + std::to_string(column) +
              ": expected " + expected),
        line(line),
        column(column),
        expected(expected) {}
  int line;
  int column;
  std::string expected;
};

class UnsupportedFeature : public Error {
 public:
  explicit UnsupportedFeature(const std::string& feature)
      : Error("unsupported PDDL feature: " + feature), feature(feature) {}
  std::string feature;
};

class TypeError : public Error {
 public:
  TypeError(const std::string& atom, const std::string& reason)
      : Error("type error in " + atom + ": " + reason),
        atom(atom),
        reason(reason) {}
  std::string atom;
  std::string reason;
};

class LibraryLoadError : public Error {
 public:
  using Error::Error;
};

// planner ---------------------------------------------------------------------

class NotApplicable : public Error {
 public:
  using Error::Error;
};

class NoPlan : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  explicit BudgetExceeded(std::size_t expansions)
      : Error("search budget exceeded after " + std::to_string(expansions) +
              " expansions"),
        expansions(expansions) {}
  std::size_t expansions;
};

class EmptyLibrary : public Error {
 public:
  EmptyLibrary() : Error("plan library is empty") {}
};

class NoMatch : public Error {
 public:
  NoMatch() : Error("no library entry overlaps the requested goal") {}
};

// perception ------------------------------------------------------------------

class UnknownPredicate : public Error {
 public:
  explicit UnknownPredicate(const std::string& name)
      : Error("no grounding rule for predicate " + name), name(name) {}
  std::string name;
};

class NoForeground : public Error {
 public:
  NoForeground(double fraction)
      : Error("only " + std::to_string(fraction * 100.0) +
              "% of box pixels pass the foreground threshold"),
        fraction(fraction) {}
  double fraction;
};

class SceneError : public Error {
 public:
  using Error::Error;
};

// goalnet ---------------------------------------------------------------------

class IndexOutOfVocab : public Error {
 public:
  IndexOutOfVocab(int token, std::size_t vocab)
      : Error("token id " + std::to_string(token) + " outside vocabulary of " +
              std::to_string(vocab)) {}
};

class NoValidProposal : public Error {
 public:
  NoValidProposal() : Error("no beam entry decodes to a valid state") {}
};

class EmptyDataset : public Error {
 public:
  EmptyDataset() : Error("training set is empty") {}
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(int epoch, int batch)
      : Error("non-finite loss at epoch " + std::to_string(epoch) +
              ", batch " + std::to_string(batch)),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

class InsufficientBase : public Error {
 public:
  InsufficientBase() : Error("plan library yields no base training pairs") {}
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// harness ---------------------------------------------------------------------

class ScenarioLoadError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vdem
