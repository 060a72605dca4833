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

// Training (teacher forcing, cross-entropy, Adam), finite-difference gradient
// checking, training-set growth from the plan library, dataset files and
// accuracy-by-length evaluation.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vdem/errors.hpp"
#include "vdem/goalnet/model.hpp"
#include "vdem/pddl.hpp"
#include "vdem/symbolic.hpp"
#include "vdem/vocab_io.hpp"

namespace vdem::goalnet {

struct TrainingPair {
  std::string task;  // task id
  State input;
  State target;
  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

struct EncodedPair {
  TokenSeq input, target;
  std::size_t atoms = 0;
};

inline EncodedPair encode_pair(const TrainingPair& p, const Vocabulary& v,
                               std::size_t max_atoms = kMaxStateAtoms + 2) {
  const TaskSentence* t = v.find_task(p.task);
  if (!t) throw VocabularyError("unknown task " + p.task);
  return {encode_state(*t, p.input, v, max_atoms), encode_goal(p.target, v, max_atoms),
          p.input.size()};
}

// A single pair yields one optimizer step per epoch; this rate lets 100
// epochs converge (0.1 diverges, 0.02 stalls near 0.3).
inline constexpr double kOverfitLearningRate = 0.05;

struct Hyper {
  int batch = 5;
  int epochs = 100;
  double lr = 0.002;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip = 5.0;  // global gradient-norm clip; 0 disables
};

class Adam {
 public:
  Adam(std::size_t n, const Hyper& h) : h_(h), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::vector<double>& w, const std::vector<double>& g) {
    ++t_;
    const double c1 = 1 - std::pow(h_.beta1, t_), c2 = 1 - std::pow(h_.beta2, t_);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[i] = h_.beta1 * m_[i] + (1 - h_.beta1) * g[i];
      v_[i] = h_.beta2 * v_[i] + (1 - h_.beta2) * g[i] * g[i];
      w[i] -= h_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + h_.eps);
    }
  }

 private:
  Hyper h_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainResult {
  Params params;
  std::vector<double> loss_history;  // mean training loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Deterministic given the seed: initialization, per-epoch shuffles and the
/// in-order gradient reduction within each batch.
inline TrainResult train(const std::vector<TrainingPair>& pairs, const Vocabulary& vocab,
                         const GoalNetConfig& cfg, const Hyper& hyper, std::uint64_t seed,
                         const EpochCallback& on_epoch = {}) {
  if (pairs.empty()) throw EmptyDataset();
  if (hyper.batch < 1 || hyper.epochs < 0) throw Error("invalid training hyperparameters");
  std::vector<EncodedPair> data;
  data.reserve(pairs.size());
  for (const auto& p : pairs) data.push_back(encode_pair(p, vocab));
  TrainResult r{Params::for_vocabulary(cfg, vocab), {}};
  r.params.init_uniform(seed);
  Adam opt(r.params.size(), hyper);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::vector<std::size_t> order(data.size());
  std::vector<double> grad(r.params.size());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    int batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += hyper.batch, ++batch_index) {
      std::size_t e = std::min(order.size(), b + hyper.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0;
      for (std::size_t i = b; i < e; ++i) {
        const auto& d = data[order[i]];
        batch_loss += loss_and_grad(r.params, d.input, d.target, &grad);
      }
      if (!std::isfinite(batch_loss)) throw NonFiniteLoss(epoch, batch_index);
      const double inv = 1.0 / (e - b);
      double norm2 = 0;
      for (auto& g : grad) {
        g *= inv;
        norm2 += g * g;
      }
      if (hyper.clip > 0 && norm2 > hyper.clip * hyper.clip) {
        double s = hyper.clip / std::sqrt(norm2);
        for (auto& g : grad) g *= s;
      }
      opt.step(r.params.weights(), grad);
      total += batch_loss;
    }
    r.loss_history.push_back(total / data.size());
    if (on_epoch) on_epoch(epoch, r.loss_history.back());
  }
  return r;
}

// Gradient check -----------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0;
  std::map<std::string, double> by_group;
  int checked = 0;
};

/// Analytic gradient against central differences on sampled weights from
/// every parameter group. The relative error is |a - n| / max(|a|, |n|, floor)
/// so that entries whose true gradient is zero are compared absolutely.
inline GradCheckReport grad_check(const Params& params, const TrainingPair& sample,
                                  const Vocabulary& vocab, double eps = 1e-5,
                                  int per_group = 12, std::uint64_t seed = 1,
                                  GradMutation mutation = GradMutation::none,
                                  double floor = 1e-5) {
  EncodedPair d = encode_pair(sample, vocab);
  std::vector<double> grad(params.size(), 0.0);
  loss_and_grad(params, d.input, d.target, &grad, mutation);
  Params p = params;
  std::mt19937_64 rng(seed);
  GradCheckReport rep;
  // embedding rows of tokens that occur; other rows have zero gradient
  std::set<int> used(d.input.tokens.begin(), d.input.tokens.end());
  used.insert(d.target.tokens.begin(), d.target.tokens.end());
  used.insert(kEts);
  std::vector<int> used_rows(used.begin(), used.end());
  const auto& cfg = params.config();
  for (int g = 0; g < kGroupCount; ++g) {
    if (!cfg.attention && g >= kAttW1 && g <= kAttV) continue;  // unused
    const Group& grp = params.group(g);
    double worst = 0;
    for (int s = 0; s < per_group; ++s) {
      std::size_t idx;
      if (g == kEmbed) {
        int row = used_rows[std::uniform_int_distribution<std::size_t>(
            0, used_rows.size() - 1)(rng)];
        idx = grp.offset + static_cast<std::size_t>(row) * grp.cols +
              std::uniform_int_distribution<std::size_t>(0, grp.cols - 1)(rng);
      } else {
        idx = grp.offset +
              std::uniform_int_distribution<std::size_t>(0, grp.size() - 1)(rng);
      }
      double orig = p.weights()[idx];
      p.weights()[idx] = orig + eps;
      double lp = loss_and_grad(p, d.input, d.target, nullptr);
      p.weights()[idx] = orig - eps;
      double lm = loss_and_grad(p, d.input, d.target, nullptr);
      p.weights()[idx] = orig;
      double num = (lp - lm) / (2 * eps);
      double a = grad[idx];
      double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
      worst = std::max(worst, rel);
      ++rep.checked;
    }
    rep.by_group[grp.name] = worst;
    rep.max_rel_error = std::max(rep.max_rel_error, worst);
  }
  return rep;
}

// Training-set growth --------------------------------------------------------------

struct GrowOptions {
  std::size_t max_atoms = kMaxStateAtoms;  // input atoms after padding
  double substitution = 0.7;  // probability of a term substitution per pair
  bool vary_length = true;    // pad with distractors or subsample to 1..max
};

/// Consecutive-goal pairs of every chain: (task, start) -> g1 and
/// (task, g_i) -> g_{i+1}, each listed `weight` times.
inline std::vector<TrainingPair> base_pairs(const PlanLibrary& lib) {
  std::vector<TrainingPair> out;
  for (const auto& c : lib.chains) {
    if (c.goals.empty()) continue;
    for (int w = 0; w < std::max(1, c.weight); ++w) {
      out.push_back({c.task, c.start, c.goals[0]});
      for (std::size_t i = 0; i + 1 < c.goals.size(); ++i)
        out.push_back({c.task, c.goals[i], c.goals[i + 1]});
    }
  }
  return out;
}

namespace detail {

inline std::set<std::string> terms_in(const State& s) {
  std::set<std::string> t;
  for (const auto& a : s)
    for (const auto& x : a.args) t.insert(x);
  return t;
}

inline State rename(const State& s, const std::map<std::string, std::string>& m) {
  std::vector<Atom> out;
  for (const auto& a : s) {
    Atom b = a;
    for (auto& x : b.args)
      if (auto it = m.find(x); it != m.end()) x = it->second;
    out.push_back(std::move(b));
  }
  return State(std::move(out));
}

}  // namespace detail

/// Samples base pairs and augments them until `target` distinct pairs exist:
/// sort-preserving substitution of input constants (outside the task
/// sentence) consistently in input and target, then distractor atoms over
/// unrelated world terms, or a random subset of the input, so input lengths
/// cover 1..max_atoms. Base pairs come first, unaugmented.
inline std::vector<TrainingPair> grow_dataset(const PlanLibrary& lib, std::size_t target,
                                              std::uint64_t seed,
                                              const GrowOptions& opt = {}) {
  const Vocabulary& v = *lib.vocabulary;
  auto base = base_pairs(lib);
  if (base.empty()) throw InsufficientBase();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto pick = [&](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  static thread_local std::vector<Atom> universe;
  static thread_local std::uint64_t universe_hash = 0;
  if (universe_hash != v.hash() || universe.empty()) {
    universe = filter_by_types(herbrand_universe(v), v);
    universe_hash = v.hash();
  }
  auto distractor_ok = [&](const std::string& term, const std::set<std::string>& avoid) {
    const Term* t = v.find_term(term);
    return t && t->kind == TermKind::world && !v.is_subsort(t->sort, "agent") &&
           !v.is_subsort(t->sort, "hand") && !avoid.count(term);
  };

  std::vector<TrainingPair> out;
  std::set<std::string> seen;
  auto key = [](const TrainingPair& p) {
    return p.task + "|" + to_string(p.input) + "|" + to_string(p.target);
  };
  for (const auto& b : base) {
    if (out.size() >= target) break;
    if (seen.insert(key(b)).second) out.push_back(b);
  }
  std::size_t attempts = 0;
  const std::size_t max_attempts = 50 * target + 1000;
  while (out.size() < target && attempts++ < max_attempts) {
    TrainingPair p = base[pick(base.size())];
    const TaskSentence* task = v.find_task(p.task);
    std::set<std::string> words(task->words.begin(), task->words.end());
    if (U(rng) < opt.substitution) {
      auto in_terms = detail::terms_in(p.input);
      auto used = in_terms;
      for (const auto& t : detail::terms_in(p.target)) used.insert(t);
      std::map<std::string, std::string> m;
      for (const auto& t : in_terms) {
        const Term* term = v.find_term(t);
        if (!term || words.count(t) || term->kind == TermKind::robot) continue;
        if (U(rng) < 0.5) continue;
        std::vector<const Term*> cands;
        for (const auto& o : v.terms())
          if (o.sort == term->sort && !used.count(o.name) && !words.count(o.name))
            cands.push_back(&o);
        if (cands.empty()) continue;
        const Term* r = cands[pick(cands.size())];
        m[t] = r->name;
        used.insert(r->name);
      }
      p.input = detail::rename(p.input, m);
      p.target = detail::rename(p.target, m);
    }
    if (opt.vary_length) {
      std::size_t n = 1 + pick(opt.max_atoms);
      if (n < p.input.size()) {
        std::vector<Atom> atoms = p.input.atoms();
        std::shuffle(atoms.begin(), atoms.end(), rng);
        atoms.resize(n);
        p.input = State(std::move(atoms));
      } else {
        auto avoid = detail::terms_in(p.input);
        for (const auto& t : detail::terms_in(p.target)) avoid.insert(t);
        for (const auto& w : words) avoid.insert(w);
        int guard = 0;
        while (p.input.size() < n && guard++ < 10000) {
          const Atom& a = universe[pick(universe.size())];
          bool ok = std::all_of(a.args.begin(), a.args.end(), [&](const std::string& x) {
            return distractor_ok(x, avoid);
          });
          if (ok) p.input.insert(a);
        }
      }
    }
    bool valid = p.input.size() <= opt.max_atoms && p.target.size() <= opt.max_atoms;
    for (const State* s : {&p.input, &p.target})
      for (const auto& a : *s)
        if (!v.type_violation(a).empty()) valid = false;
    if (valid && seen.insert(key(p)).second) out.push_back(std::move(p));
  }
  return out;
}

// Dataset files ------------------------------------------------------------------

/// One record per line: task id, input TokenSeq text, target TokenSeq text,
/// separated by tabs.
inline std::string dataset_to_tsv(const std::vector<TrainingPair>& pairs,
                                  const Vocabulary& v) {
  std::string out;
  for (const auto& p : pairs) {
    EncodedPair e = encode_pair(p, v);
    out += p.task + "\t" + to_text(e.input, v) + "\t" + to_text(e.target, v) + "\n";
  }
  return out;
}

inline std::vector<TrainingPair> dataset_from_tsv(const std::string& text,
                                                  const Vocabulary& v) {
  std::vector<TrainingPair> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw IoError("dataset line " + std::to_string(lineno) + ": expected 3 fields");
    TrainingPair p;
    p.task = line.substr(0, t1);
    try {
      auto [task, input] =
          decode_state(parse_token_text(line.substr(t1 + 1, t2 - t1 - 1), v), v);
      if (task.id != p.task) throw IoError("task column does not match the sentence");
      p.input = input;
      p.target = decode_atoms(parse_token_text(line.substr(t2 + 1), v).tokens, v);
    } catch (const MalformedSequence& e) {
      throw IoError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  return out;
}

inline void save_dataset(const std::vector<TrainingPair>& pairs, const Vocabulary& v,
                         const std::filesystem::path& path) {
  write_text_file(path, dataset_to_tsv(pairs, v));
}

inline std::vector<TrainingPair> load_dataset(const std::filesystem::path& path,
                                              const Vocabulary& v) {
  return dataset_from_tsv(read_text_file(path), v);
}

// Evaluation ------------------------------------------------------------------------

struct CurvePoint {
  int n = 0, top1 = 0, top3 = 0;
  double acc1() const { return n ? double(top1) / n : 0; }
  double acc3() const { return n ? double(top3) / n : 0; }
};

/// Top-1 / top-3 accuracy by input atom count.
inline std::map<std::size_t, CurvePoint> evaluate_curve(const Params& P, const Vocabulary& v,
                                                        const std::vector<TrainingPair>& test,
                                                        int k = 3) {
  std::map<std::size_t, CurvePoint> curve;
  for (const auto& p : test) {
    auto& pt = curve[p.input.size()];
    ++pt.n;
    std::vector<GoalProposal> props;
    try {
      props = infer_topk(P, v, *v.find_task(p.task), p.input, k);
    } catch (const NoValidProposal&) {
      continue;
    }
    for (std::size_t r = 0; r < props.size(); ++r)
      if (props[r].goal == p.target) {
        if (r == 0) ++pt.top1;
        ++pt.top3;
        break;
      }
  }
  return curve;
}

}  // namespace vdem::goalnet
