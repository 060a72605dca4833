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

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "vdem/goalnet/train.hpp"

namespace vdem::goalnet {
namespace {

using testing::shipped_library;
using testing::shipped_vocab;

TrainingPair sample_pair(std::size_t i = 40) {
  GrowOptions o;
  o.max_atoms = 12;
  static const auto pairs = grow_dataset(shipped_library(), 200, 5, o);
  return pairs.at(i);
}

Params random_params(std::uint64_t seed, bool attention = true, double scale = 0.3) {
  GoalNetConfig cfg;
  cfg.attention = attention;
  Params p = Params::for_vocabulary(cfg, shipped_vocab());
  p.init_uniform(seed, scale);
  return p;
}

// Embedding and segments -----------------------------------------------------------

TEST(Embed, RowLookup) {
  Params p = random_params(1);
  const int brush = *shipped_vocab().token_id("brush");
  EncodedState e = embed(TokenSeq{{brush}}, p);
  ASSERT_EQ(e.x.size(), 1u);
  ASSERT_EQ(e.x[0].size(), 20u);
  for (int j = 0; j < 20; ++j) EXPECT_EQ(e.x[0][j], p.at(kEmbed)[brush * 20 + j]);
  EncodedState two = embed(TokenSeq{{brush, brush}}, p);
  EXPECT_EQ(two.x[0], two.x[1]);
  EXPECT_THROW(embed(TokenSeq{{brush, 100000}}, p), IndexOutOfVocab);
  EXPECT_THROW(embed(TokenSeq{{-1}}, p), IndexOutOfVocab);
}

TEST(Embed, SegmentsFollowSeparators) {
  const auto& v = shipped_vocab();
  Params p = random_params(1);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    State s = testing::random_state(v, rng, 17);
    const auto& task = v.tasks()[i % v.tasks().size()];
    TokenSeq seq = encode_state(task, s, v);
    EncodedState e = embed(seq, p);
    ASSERT_EQ(e.segments.size(), s.size() + 1);
    ASSERT_EQ(e.segments[0], std::make_pair(0, int(task.words.size())));
    // oracle: atom k spans its predicate and arguments
    int pos = int(task.words.size()) + 1;
    std::size_t k = 1;
    for (const auto& a : s) {
      int len = 1 + int(a.args.size());
      ASSERT_EQ(e.segments[k], std::make_pair(pos, pos + len));
      pos += len + 1;
      ++k;
    }
  }
  const int T = *v.token_id("bring"), On = *v.token_id("On"),
            b = *v.token_id("brush"), l = *v.token_id("ladder");
  TokenSeq s{{T, kEts, On, b, l, kEoa, On, l, b, kEoa, kEos}};
  EXPECT_EQ(embed(s, p).segments.size(), 3u);
}

// Attention ----------------------------------------------------------------------

EncoderPass manual_pass(const Params& p, std::vector<std::vector<double>> segs) {
  EncoderPass ep;
  ep.seg = std::move(segs);
  const auto& cfg = p.config();
  const std::size_t A = cfg.att, K2 = cfg.seg();
  ep.w1s.assign(ep.seg.size() * A, 0.0);
  for (std::size_t k = 0; k < ep.seg.size(); ++k)
    detail::gemv(p.at(kAttW1), A, K2, ep.seg[k].data(), ep.w1s.data() + k * A);
  ep.task_mean.assign(cfg.emb, 0.0);
  ep.seg_mean.assign(K2, 0.0);
  return ep;
}

TEST(Attend, ZeroWeightsAreUniform) {
  Params p = random_params(1);
  std::fill(p.at(kAttW1), p.at(kAttW1) + p.group(kAttV).offset - p.group(kAttW1).offset +
                              p.group(kAttV).size(),
            0.0);
  std::vector<std::vector<double>> segs(5, std::vector<double>(20));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N;
  for (auto& s : segs)
    for (auto& x : s) x = N(rng);
  EncoderPass ep = manual_pass(p, segs);
  DecoderStep st;
  st.q.assign(p.config().query(), 0.5);
  attend(p, ep, st);
  for (double w : st.p) EXPECT_NEAR(w, 0.2, 1e-15);
}

TEST(Attend, ClosedFormSoftmax) {
  Params p = random_params(1);
  for (int g : {kAttW1, kAttW2, kAttB, kAttV})
    std::fill(p.at(g), p.at(g) + p.group(g).size(), 0.0);
  p.at(kAttW1)[0] = 1.0;                    // row 0 reads component 0
  p.at(kAttV)[0] = 2.0 / std::tanh(1.0);    // score of the first segment is 2
  std::vector<double> s1(20, 0.0), s2(20, 0.0);
  s1[0] = 1.0;
  EncoderPass ep = manual_pass(p, {s1, s2});
  DecoderStep st;
  st.q.assign(p.config().query(), 0.0);
  attend(p, ep, st);
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(st.p[0], e2 / (1 + e2), 1e-12);
  EXPECT_NEAR(st.p[1], 1 / (1 + e2), 1e-12);
  EXPECT_NEAR(st.p[0], 0.8808, 1e-4);
  EXPECT_NEAR(st.ctx[0], st.p[0], 1e-15);
}

TEST(Attend, WeightsFormADistribution) {
  for (int seed = 0; seed < 1000; ++seed) {
    Params p = random_params(seed, true, 1.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0, 3);
    std::size_t K = 1 + seed % 19;
    std::vector<std::vector<double>> segs(K, std::vector<double>(20));
    for (auto& s : segs)
      for (auto& x : s) x = N(rng);
    EncoderPass ep = manual_pass(p, segs);
    DecoderStep st;
    st.q.assign(p.config().query(), 0.0);
    for (auto& x : st.q) x = N(rng);
    attend(p, ep, st);
    double sum = 0;
    for (double w : st.p) {
      ASSERT_GE(w, 0.0);
      sum += w;
    }
    ASSERT_NEAR(sum, 1.0, 1e-6);
  }
}

// Decoding -----------------------------------------------------------------------

TEST(Decode, LogProbsAreAdditiveAndNonPositive) {
  Params p = random_params(4);
  auto pair = sample_pair();
  auto e = encode_pair(pair, shipped_vocab());
  for (const auto& d : beam_decode(p, e.input, 6)) {
    double sum = 0;
    for (double lp : d.step_logp) {
      EXPECT_LE(lp, 0.0);
      sum += lp;
    }
    EXPECT_EQ(sum, d.logp);
    EXPECT_LE(d.seq.tokens.size(), 24u);
    if (!d.truncated) {
      EXPECT_EQ(d.seq.tokens.back(), kEos);
    }
  }
}

TEST(Decode, WidthOneIsGreedy) {
  for (int seed = 0; seed < 20; ++seed) {
    Params p = random_params(seed, seed % 2 == 0, 0.5);
    auto e = encode_pair(sample_pair(seed * 3), shipped_vocab());
    // reference greedy loop built directly on the decoder step
    EncoderPass ep = encode(p, e.input);
    std::vector<double> h = ep.h0, c(p.config().dec, 0.0);
    AtomTracker atoms;
    int prev = kEts;
    std::vector<int> out;
    for (int len = 0; len < 24; ++len) {
      DecoderStep st;
      decoder_step(p, ep, h, c, prev, atoms.last, st);
      int best = int(std::max_element(st.logp.begin(), st.logp.end()) - st.logp.begin());
      out.push_back(best);
      if (best == kEos) break;
      h = st.cell.h;
      c = st.cell.c;
      atoms.push(best);
      prev = best;
    }
    EXPECT_EQ(greedy_decode(p, e.input).seq.tokens, out);
  }
}

TEST(InferTopk, ProposalsAreDistinctSortedAndValid) {
  const auto& v = shipped_vocab();
  for (int seed = 0; seed < 10; ++seed) {
    Params p = random_params(seed, true, 0.5);
    auto pair = sample_pair(seed);
    std::vector<GoalProposal> props;
    try {
      props = infer_topk(p, v, *v.find_task(pair.task), pair.input, 3, 40);
    } catch (const NoValidProposal&) {
      continue;  // an untrained model may emit nothing well formed
    }
    for (std::size_t i = 0; i < props.size(); ++i) {
      EXPECT_EQ(props[i].rank, int(i) + 1);
      for (const auto& a : props[i].goal) EXPECT_EQ(v.type_violation(a), "");
      for (std::size_t j = 0; j < i; ++j) {
        EXPECT_NE(props[i].goal, props[j].goal);
        EXPECT_GE(props[j].log_prob, props[i].log_prob);
      }
    }
  }
}

TEST(InferTopk, NoValidProposalWhenNothingDecodes) {
  const auto& v = shipped_vocab();
  Params p = random_params(1);
  for (int g = 0; g < kGroupCount; ++g)
    std::fill(p.at(g), p.at(g) + p.group(g).size(), 0.0);
  p.at(kOutB)[kEoa] = 50;  // only ever emits <eoa>: never well formed
  auto pair = sample_pair();
  EXPECT_THROW(infer_topk(p, v, *v.find_task(pair.task), pair.input, 3), NoValidProposal);
}

// Gradients ------------------------------------------------------------------------

TEST(GradCheck, AnalyticMatchesFiniteDifferences) {
  for (bool attention : {true, false})
    for (int i = 0; i < 3; ++i) {
      Params p = random_params(10 + i, attention);
      auto rep = grad_check(p, sample_pair(20 + 17 * i), shipped_vocab(), 1e-5, 12, i);
      EXPECT_LT(rep.max_rel_error, 1e-4) << "attention " << attention;
      EXPECT_GE(rep.checked, 200);
    }
}

TEST(GradCheck, DetectsCorruptedAttentionGradient) {
  Params p = random_params(10);
  auto rep = grad_check(p, sample_pair(20), shipped_vocab(), 1e-5, 12, 0,
                        GradMutation::attention_softmax);
  EXPECT_GT(rep.max_rel_error, 1e-2);
  EXPECT_GT(rep.by_group.at("att.v"), 1e-2);
}

TEST(GradCheck, SymmetricWeightsGetEqualGradients) {
  const auto& v = shipped_vocab();
  Params p = random_params(1);
  std::fill(p.weights().begin(), p.weights().end(), 0.0);
  auto e = encode_pair(sample_pair(), v);
  std::vector<double> g(p.size(), 0.0);
  loss_and_grad(p, e.input, e.target, &g);
  std::set<int> in_target(e.target.tokens.begin(), e.target.tokens.end());
  std::vector<double> others;
  for (std::size_t t = 0; t < v.size(); ++t)
    if (!in_target.count(int(t))) others.push_back(g[p.group(kOutB).offset + t]);
  ASSERT_GT(others.size(), 2u);
  for (double x : others) EXPECT_EQ(x, others[0]);
  EXPECT_NEAR(others[0], 1.0 / v.size(), 1e-12);
}

// Training -------------------------------------------------------------------------

TEST(Train, OverfitsOnePair) {
  const auto& v = shipped_vocab();
  auto pair = sample_pair(60);
  Hyper h;
  h.epochs = 100;  // one pair, one batch: 100 optimizer steps in total
  h.lr = kOverfitLearningRate;
  auto r = train({pair}, v, GoalNetConfig{}, h, 3);
  ASSERT_EQ(r.loss_history.size(), 100u);
  EXPECT_LT(r.loss_history.back(), 1e-2);
  auto props = infer_topk(r.params, v, *v.find_task(pair.task), pair.input, 1);
  EXPECT_EQ(props[0].goal, pair.target);
  EXPECT_EQ(props[0].rank, 1);
}

TEST(Train, DeterministicGivenSeed) {
  GrowOptions o;
  o.max_atoms = 6;
  auto pairs = grow_dataset(shipped_library(), 40, 2, o);
  Hyper h;
  h.epochs = 3;
  auto a = train(pairs, shipped_vocab(), GoalNetConfig{}, h, 9);
  auto b = train(pairs, shipped_vocab(), GoalNetConfig{}, h, 9);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.params.weights(), b.params.weights());
  auto c = train(pairs, shipped_vocab(), GoalNetConfig{}, h, 10);
  EXPECT_NE(a.loss_history, c.loss_history);
}

TEST(Train, Errors) {
  EXPECT_THROW(train({}, shipped_vocab(), GoalNetConfig{}, Hyper{}, 1), EmptyDataset);
  Hyper h;
  h.epochs = 5;
  h.lr = 1e200;
  h.clip = 0;
  EXPECT_THROW(train({sample_pair()}, shipped_vocab(), GoalNetConfig{}, h, 1), NonFiniteLoss);
}

// Checkpoints ------------------------------------------------------------------------

TEST(Checkpoint, RoundTripAndVocabularyBinding) {
  const auto& v = shipped_vocab();
  Params p = random_params(5, false);
  Params back = checkpoint_from_json(json::parse(checkpoint_to_json(p).dump()), v);
  EXPECT_EQ(back.weights(), p.weights());
  EXPECT_EQ(back.config(), p.config());

  Vocabulary other(v.sorts(), v.terms(), v.predicates(), {{"t", {"do", "it"}}});
  EXPECT_THROW(checkpoint_from_json(checkpoint_to_json(p), other), CheckpointError);
  json j = checkpoint_to_json(p);
  j["weights"].erase(0);
  EXPECT_THROW(checkpoint_from_json(j, v), CheckpointError);
  j = checkpoint_to_json(p);
  j["config"]["dec"] = 8;
  EXPECT_THROW(checkpoint_from_json(j, v), CheckpointError);
  EXPECT_THROW(checkpoint_from_json(json{{"format", "x"}}, v), CheckpointError);
}

// Training set -----------------------------------------------------------------------

// Is `p` the base pair `b` under a sort-preserving injective renaming that
// fixes task words and robot terms? Tries every assignment.
bool renaming_of(const TrainingPair& b, const TrainingPair& p, const Vocabulary& v) {
  if (b.task != p.task || b.input.size() != p.input.size() ||
      b.target.size() != p.target.size())
    return false;
  const auto& words = v.find_task(b.task)->words;
  std::vector<std::string> from;
  for (const State* s : {&b.input, &b.target})
    for (const auto& a : *s)
      for (const auto& x : a.args)
        if (std::find(from.begin(), from.end(), x) == from.end()) from.push_back(x);
  std::vector<std::string> to_pool;
  for (const State* s : {&p.input, &p.target})
    for (const auto& a : *s)
      for (const auto& x : a.args)
        if (std::find(to_pool.begin(), to_pool.end(), x) == to_pool.end())
          to_pool.push_back(x);
  std::map<std::string, std::string> m;
  std::set<std::string> taken;
  std::function<bool(std::size_t)> rec = [&](std::size_t i) -> bool {
    if (i == from.size()) {
      auto ren = [&](const State& s) {
        std::vector<Atom> out;
        for (auto a : s) {
          for (auto& x : a.args) x = m.at(x);
          out.push_back(a);
        }
        return State(out);
      };
      return ren(b.input) == p.input && ren(b.target) == p.target;
    }
    const std::string& x = from[i];
    const Term* tx = v.find_term(x);
    bool fixed = std::find(words.begin(), words.end(), x) != words.end() ||
                 tx->kind == TermKind::robot;
    for (const auto& y : to_pool) {
      if (taken.count(y) || v.find_term(y)->sort != tx->sort) continue;
      if (fixed && y != x) continue;
      m[x] = y;
      taken.insert(y);
      if (rec(i + 1)) return true;
      taken.erase(y);
    }
    return false;
  };
  return rec(0);
}

TEST(GrowDataset, SubstitutionIsConsistent) {
  const auto& lib = shipped_library();
  GrowOptions o;
  o.vary_length = false;
  auto pairs = grow_dataset(lib, 200, 4, o);
  auto base = base_pairs(lib);
  int renamed = 0;
  for (const auto& p : pairs) {
    bool ok = false;
    for (const auto& b : base)
      if (renaming_of(b, p, *lib.vocabulary)) {
        ok = true;
        renamed += !(b == p);
        break;
      }
    EXPECT_TRUE(ok) << to_string(p.input) << " -> " << to_string(p.target);
  }
  EXPECT_GT(renamed, 100);
}

TEST(GrowDataset, EveryPairIsTypeValidAndEncodable) {
  const auto& lib = shipped_library();
  const auto& v = *lib.vocabulary;
  GrowOptions o;
  o.max_atoms = 19;
  auto pairs = grow_dataset(lib, 3000, 8, o);
  ASSERT_EQ(pairs.size(), 3000u);
  std::map<std::size_t, int> lengths;
  for (const auto& p : pairs) {
    for (const State* s : {&p.input, &p.target}) {
      std::vector<Atom> atoms(s->begin(), s->end());
      ASSERT_EQ(filter_by_types(atoms, v).size(), atoms.size());
    }
    ASSERT_NO_THROW(encode_pair(p, v));
    ++lengths[p.input.size()];
  }
  for (std::size_t n = 1; n <= 19; ++n) EXPECT_GT(lengths[n], 50) << n;
  EXPECT_EQ(lengths.rbegin()->first, 19u);
}

TEST(GrowDataset, FloorCaseAndErrors) {
  PlanLibrary lib;
  lib.vocabulary = shipped_library().vocabulary;
  lib.chains.push_back({"bring_brush",
                        parse_state("VisionOn(robot) Free(robot_hand)"),
                        {parse_state("Detected(brush) Detected(ladder) On(brush, ladder)"),
                         parse_state("At(robot, ladder) Holding(robot_hand, brush)")},
                        1});
  auto pairs = grow_dataset(lib, 2, 1);
  ASSERT_GE(pairs.size(), 1u);
  ASSERT_LE(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].input, lib.chains[0].start);
  EXPECT_EQ(pairs[0].target, lib.chains[0].goals[0]);
  if (pairs.size() == 2) {
    EXPECT_NE(pairs[1], pairs[0]);
  }
  lib.chains.clear();
  EXPECT_THROW(grow_dataset(lib, 10, 1), InsufficientBase);
}

TEST(GrowDataset, DeterministicAndFileRoundTrip) {
  const auto& lib = shipped_library();
  auto a = grow_dataset(lib, 500, 3);
  auto b = grow_dataset(lib, 500, 3);
  EXPECT_EQ(a, b);
  auto back = dataset_from_tsv(dataset_to_tsv(a, *lib.vocabulary), *lib.vocabulary);
  EXPECT_EQ(back, a);
  EXPECT_THROW(dataset_from_tsv("bring_brush\tbring the brush\n", *lib.vocabulary), IoError);
}

}  // namespace
}  // namespace vdem::goalnet
