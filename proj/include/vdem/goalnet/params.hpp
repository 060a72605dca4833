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

// Parameters of the next-goal predictor: one flat weight vector partitioned
// into named groups, seeded initialization and JSON checkpoints.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vdem/errors.hpp"
#include "vdem/symbolic.hpp"
#include "vdem/vocab_io.hpp"

namespace vdem::goalnet {

struct GoalNetConfig {
  int emb = 20;      // token embedding
  int enc = 10;      // per direction of the bidirectional encoder
  int summary = 10;  // unidirectional layer over segments
  int att = 16;      // hidden width of the scoring network
  int dec = 32;      // decoder state
  bool attention = true;  // false: context is the mean of the segments
  int max_len = 24;       // decoded tokens, <eos> included

  int seg() const { return 2 * enc; }
  int query() const { return 2 * emb + dec; }
  friend bool operator==(const GoalNetConfig&, const GoalNetConfig&) = default;
};

enum G : int {
  kEmbed,
  kEncFwdX, kEncFwdH, kEncFwdB,
  kEncBwdX, kEncBwdH, kEncBwdB,
  kTopX, kTopH, kTopB,
  kBridgeW, kBridgeB,
  kAttW1, kAttW2, kAttB, kAttV,
  kDecX, kDecH, kDecB,
  kOutW, kOutB,
  kGroupCount
};

struct Group {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

class Params {
 public:
  Params() = default;
  Params(const GoalNetConfig& cfg, std::size_t vocab_size, std::uint64_t vocab_hash)
      : cfg_(cfg), vocab_size_(vocab_size), vocab_hash_(vocab_hash) {
    const std::size_t V = vocab_size, E = cfg.emb, H = cfg.enc, S = cfg.summary,
                      A = cfg.att, D = cfg.dec, K = cfg.seg(), Q = cfg.query();
    auto add = [&](const char* name, std::size_t r, std::size_t c) {
      groups_.push_back({name, total_, r, c});
      total_ += r * c;
    };
    add("embed", V, E);
    add("enc_fwd.Wx", 4 * H, E);
    add("enc_fwd.Wh", 4 * H, H);
    add("enc_fwd.b", 4 * H, 1);
    add("enc_bwd.Wx", 4 * H, E);
    add("enc_bwd.Wh", 4 * H, H);
    add("enc_bwd.b", 4 * H, 1);
    add("top.Wx", 4 * S, K);
    add("top.Wh", 4 * S, S);
    add("top.b", 4 * S, 1);
    add("bridge.W", D, S);
    add("bridge.b", D, 1);
    add("att.W1", A, K);
    add("att.W2", A, Q);
    add("att.b", A, 1);
    add("att.v", A, 1);
    add("dec.Wx", 4 * D, E + K);
    add("dec.Wh", 4 * D, D);
    add("dec.b", 4 * D, 1);
    add("out.W", V, D + K);
    add("out.b", V, 1);
    w_.assign(total_, 0.0);
  }

  static Params for_vocabulary(const GoalNetConfig& cfg, const Vocabulary& v) {
    return Params(cfg, v.size(), v.hash());
  }

  void init_uniform(std::uint64_t seed, double scale = 0.08) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-scale, scale);
    for (auto& x : w_) x = U(rng);
  }

  const GoalNetConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }
  const std::vector<Group>& groups() const { return groups_; }
  const Group& group(int g) const { return groups_.at(g); }
  std::size_t size() const { return total_; }

  std::vector<double>& weights() { return w_; }
  const std::vector<double>& weights() const { return w_; }
  double* at(int g) { return w_.data() + groups_[g].offset; }
  const double* at(int g) const { return w_.data() + groups_[g].offset; }

  bool finite() const {
    for (double x : w_)
      if (!std::isfinite(x)) return false;
    return true;
  }

 private:
  GoalNetConfig cfg_;
  std::size_t vocab_size_ = 0;
  std::uint64_t vocab_hash_ = 0;
  std::vector<Group> groups_;
  std::size_t total_ = 0;
  std::vector<double> w_;
};

inline constexpr int kCheckpointVersion = 1;

inline json config_to_json(const GoalNetConfig& c) {
  return {{"emb", c.emb},         {"enc", c.enc}, {"summary", c.summary},
          {"att", c.att},         {"dec", c.dec}, {"attention", c.attention},
          {"max_len", c.max_len}};
}

inline GoalNetConfig config_from_json(const json& j) {
  GoalNetConfig c;
  c.emb = j.value("emb", c.emb);
  c.enc = j.value("enc", c.enc);
  c.summary = j.value("summary", c.summary);
  c.att = j.value("att", c.att);
  c.dec = j.value("dec", c.dec);
  c.attention = j.value("attention", c.attention);
  c.max_len = j.value("max_len", c.max_len);
  return c;
}

inline json checkpoint_to_json(const Params& p) {
  json groups = json::array();
  for (const auto& g : p.groups())
    groups.push_back({{"name", g.name}, {"rows", g.rows}, {"cols", g.cols}});
  return {{"format", "vdem-goalnet"},
          {"version", kCheckpointVersion},
          {"vocab_size", p.vocab_size()},
          {"vocab_hash", std::to_string(p.vocab_hash())},
          {"config", config_to_json(p.config())},
          {"groups", groups},
          {"weights", p.weights()}};
}

/// Refuses checkpoints written against a different vocabulary.
inline Params checkpoint_from_json(const json& j, const Vocabulary& vocab) {
  try {
    if (j.at("format") != "vdem-goalnet") throw CheckpointError("not a goalnet checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw CheckpointError("unsupported checkpoint version");
    if (j.at("vocab_hash").get<std::string>() != std::to_string(vocab.hash()) ||
        j.at("vocab_size").get<std::size_t>() != vocab.size())
      throw CheckpointError("checkpoint was trained on a different vocabulary");
    Params p = Params::for_vocabulary(config_from_json(j.at("config")), vocab);
    const auto& groups = j.at("groups");
    if (groups.size() != p.groups().size())
      throw CheckpointError("checkpoint has a different parameter layout");
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i].at("name") != p.groups()[i].name ||
          groups[i].at("rows").get<std::size_t>() != p.groups()[i].rows ||
          groups[i].at("cols").get<std::size_t>() != p.groups()[i].cols)
        throw CheckpointError("shape mismatch in group " + p.groups()[i].name);
    auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != p.size()) throw CheckpointError("weight count mismatch");
    p.weights() = std::move(w);
    if (!p.finite()) throw CheckpointError("checkpoint holds non-finite weights");
    return p;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Params& p, const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(p).dump() + "\n");
}

inline Params load_checkpoint(const std::filesystem::path& path, const Vocabulary& vocab) {
  return checkpoint_from_json(read_json_file(path), vocab);
}

}  // namespace vdem::goalnet
