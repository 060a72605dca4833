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

// Sequence-to-sequence next-goal predictor. A bidirectional LSTM reads the
// encoded (task, state) tokens; every atom and the task sentence become one
// segment (mean of the encoder outputs over its tokens). A unidirectional
// LSTM over the segments yields the summary that seeds the decoder. At each
// output step an additive scoring network weighs the segments against the
// previously produced atom, the task and the decoder state, and the
// expectation of the segments is the context fed to the decoder cell and to
// the output layer. Gradients are written out by hand.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vdem/errors.hpp"
#include "vdem/goalnet/params.hpp"
#include "vdem/symbolic.hpp"

namespace vdem::goalnet {

namespace detail {

using Vec = std::vector<double>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// y += W x, W is rows x cols row-major
inline void gemv(const double* W, std::size_t rows, std::size_t cols, const double* x,
                 double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = W + r * cols;
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += w[c] * x[c];
    y[r] += s;
  }
}

// dx += W^T dy
inline void gemv_t(const double* W, std::size_t rows, std::size_t cols, const double* dy,
                   double* dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* w = W + r * cols;
    const double d = dy[r];
    if (d == 0) continue;
    for (std::size_t c = 0; c < cols; ++c) dx[c] += w[c] * d;
  }
}

// dW += dy x^T
inline void outer(double* dW, std::size_t rows, std::size_t cols, const double* dy,
                  const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* w = dW + r * cols;
    const double d = dy[r];
    if (d == 0) continue;
    for (std::size_t c = 0; c < cols; ++c) w[c] += d * x[c];
  }
}

struct LstmStep {
  Vec x, hp, cp;
  Vec gates;  // activated i, f, g, o
  Vec c, tc, h;
};

struct LstmWeights {
  int wx, wh, b;  // group ids
};

inline void lstm_forward(const Params& P, LstmWeights g, std::size_t H, LstmStep& s) {
  const std::size_t X = s.x.size();
  s.gates.assign(4 * H, 0.0);
  const double* b = P.at(g.b);
  std::copy(b, b + 4 * H, s.gates.begin());
  gemv(P.at(g.wx), 4 * H, X, s.x.data(), s.gates.data());
  gemv(P.at(g.wh), 4 * H, H, s.hp.data(), s.gates.data());
  s.c.resize(H);
  s.tc.resize(H);
  s.h.resize(H);
  for (std::size_t k = 0; k < H; ++k) {
    double i = sigmoid(s.gates[k]), f = sigmoid(s.gates[H + k]),
           gg = std::tanh(s.gates[2 * H + k]), o = sigmoid(s.gates[3 * H + k]);
    s.gates[k] = i;
    s.gates[H + k] = f;
    s.gates[2 * H + k] = gg;
    s.gates[3 * H + k] = o;
    s.c[k] = f * s.cp[k] + i * gg;
    s.tc[k] = std::tanh(s.c[k]);
    s.h[k] = o * s.tc[k];
  }
}

// Accumulates weight gradients into G; dx is added to, dhp and dcp are set.
inline void lstm_backward(const Params& P, LstmWeights g, std::size_t H, const LstmStep& s,
                          const double* dh, const double* dc, double* G, double* dx,
                          Vec& dhp, Vec& dcp) {
  const std::size_t X = s.x.size();
  Vec dz(4 * H);
  dcp.assign(H, 0.0);
  for (std::size_t k = 0; k < H; ++k) {
    double i = s.gates[k], f = s.gates[H + k], gg = s.gates[2 * H + k],
           o = s.gates[3 * H + k];
    double dct = dc[k] + dh[k] * o * (1 - s.tc[k] * s.tc[k]);
    dz[k] = dct * gg * i * (1 - i);
    dz[H + k] = dct * s.cp[k] * f * (1 - f);
    dz[2 * H + k] = dct * i * (1 - gg * gg);
    dz[3 * H + k] = dh[k] * s.tc[k] * o * (1 - o);
    dcp[k] = dct * f;
  }
  const auto& gx = P.group(g.wx);
  const auto& gh = P.group(g.wh);
  const auto& gb = P.group(g.b);
  outer(G + gx.offset, 4 * H, X, dz.data(), s.x.data());
  outer(G + gh.offset, 4 * H, H, dz.data(), s.hp.data());
  for (std::size_t k = 0; k < 4 * H; ++k) G[gb.offset + k] += dz[k];
  gemv_t(P.at(g.wx), 4 * H, X, dz.data(), dx);
  dhp.assign(H, 0.0);
  gemv_t(P.at(g.wh), 4 * H, H, dz.data(), dhp.data());
}

}  // namespace detail

/// Input tokens with their embeddings and the segment partition: the task
/// sentence first, then one segment per atom (predicate and arguments).
struct EncodedState {
  std::vector<int> tokens;
  std::vector<std::vector<double>> x;
  std::vector<std::pair<int, int>> segments;  // [begin, end) token ranges
  std::size_t atoms() const { return segments.size() - 1; }
};

inline constexpr int kEoa = 0, kEts = 1, kEos = 2;  // fixed separator ids

inline void check_tokens(std::span<const int> tokens, std::size_t vocab) {
  for (int t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) throw IndexOutOfVocab(t, vocab);
}

/// Separator scan; tokens after <eos> are ignored.
inline std::vector<std::pair<int, int>> segment_bounds(std::span<const int> tokens) {
  std::vector<std::pair<int, int>> seg;
  int n = static_cast<int>(tokens.size());
  int ets = 0;
  while (ets < n && tokens[ets] != kEts) ++ets;
  seg.push_back({0, ets});
  int start = ets + 1;
  for (int i = ets + 1; i < n; ++i) {
    if (tokens[i] == kEoa) {
      seg.push_back({start, i});
      start = i + 1;
    } else if (tokens[i] == kEos) {
      break;
    }
  }
  return seg;
}

inline EncodedState embed(const TokenSeq& seq, const Params& P) {
  check_tokens(seq.tokens, P.vocab_size());
  EncodedState e;
  e.tokens = seq.tokens;
  const std::size_t E = P.config().emb;
  for (int t : seq.tokens) {
    const double* row = P.at(kEmbed) + static_cast<std::size_t>(t) * E;
    e.x.emplace_back(row, row + E);
  }
  e.segments = segment_bounds(seq.tokens);
  return e;
}

/// Encoder activations kept for the backward pass and for decoding.
struct EncoderPass {
  EncodedState in;
  std::vector<detail::LstmStep> fwd, bwd;  // indexed by token position
  std::vector<detail::Vec> seg;            // K x 2H
  std::vector<detail::LstmStep> top;       // K
  detail::Vec h0;                          // bridged decoder initial state
  detail::Vec w1s;                         // K x A, W1 s_k
  detail::Vec task_mean;                   // mean task-word embedding
  detail::Vec seg_mean;                    // mean segment
  std::vector<int> task_tokens;
};

inline EncoderPass encode(const Params& P, const TokenSeq& input) {
  using namespace detail;
  const auto& cfg = P.config();
  const std::size_t H = cfg.enc, S = cfg.summary, D = cfg.dec, E = cfg.emb,
                    K2 = cfg.seg(), A = cfg.att;
  EncoderPass ep;
  ep.in = embed(input, P);
  const std::size_t n = ep.in.tokens.size();
  ep.fwd.resize(n);
  ep.bwd.resize(n);
  Vec h(H, 0.0), c(H, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    auto& s = ep.fwd[t];
    s.x = ep.in.x[t];
    s.hp = h;
    s.cp = c;
    lstm_forward(P, {kEncFwdX, kEncFwdH, kEncFwdB}, H, s);
    h = s.h;
    c = s.c;
  }
  h.assign(H, 0.0);
  c.assign(H, 0.0);
  for (std::size_t t = n; t-- > 0;) {
    auto& s = ep.bwd[t];
    s.x = ep.in.x[t];
    s.hp = h;
    s.cp = c;
    lstm_forward(P, {kEncBwdX, kEncBwdH, kEncBwdB}, H, s);
    h = s.h;
    c = s.c;
  }
  const std::size_t K = ep.in.segments.size();
  ep.seg.assign(K, Vec(K2, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    auto [b, e] = ep.in.segments[k];
    if (e <= b) continue;  // empty task sentence: zero segment
    for (int t = b; t < e; ++t)
      for (std::size_t j = 0; j < H; ++j) {
        ep.seg[k][j] += ep.fwd[t].h[j];
        ep.seg[k][H + j] += ep.bwd[t].h[j];
      }
    for (auto& v : ep.seg[k]) v /= (e - b);
  }
  ep.top.resize(K);
  Vec hs(S, 0.0), cs(S, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    auto& s = ep.top[k];
    s.x = ep.seg[k];
    s.hp = hs;
    s.cp = cs;
    lstm_forward(P, {kTopX, kTopH, kTopB}, S, s);
    hs = s.h;
    cs = s.c;
  }
  ep.h0.assign(P.at(kBridgeB), P.at(kBridgeB) + D);
  gemv(P.at(kBridgeW), D, S, hs.data(), ep.h0.data());
  for (auto& v : ep.h0) v = std::tanh(v);

  ep.w1s.assign(K * A, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    gemv(P.at(kAttW1), A, K2, ep.seg[k].data(), ep.w1s.data() + k * A);
  ep.seg_mean.assign(K2, 0.0);
  for (const auto& s : ep.seg)
    for (std::size_t j = 0; j < K2; ++j) ep.seg_mean[j] += s[j] / K;
  auto [tb, te] = ep.in.segments[0];
  ep.task_mean.assign(E, 0.0);
  for (int t = tb; t < te; ++t) {
    ep.task_tokens.push_back(ep.in.tokens[t]);
    for (std::size_t j = 0; j < E; ++j) ep.task_mean[j] += ep.in.x[t][j] / (te - tb);
  }
  return ep;
}

/// Tokens of the most recently completed output atom.
struct AtomTracker {
  std::vector<int> last, current;
  void push(int token) {
    if (token == kEoa) {
      last = current;
      current.clear();
    } else if (token != kEts && token != kEos) {
      current.push_back(token);
    }
  }
};

struct DecoderStep {
  int prev = kEts;
  std::vector<int> prev_atom;
  detail::Vec q;  // [prev atom mean; task mean; h_prev]
  detail::Vec a;  // K x A tanh activations
  detail::Vec p;  // attention weights
  detail::Vec ctx;
  detail::LstmStep cell;
  detail::Vec logp;  // log-softmax over the vocabulary
};

/// Additive attention: scores v . tanh(W1 s_k + W2 q + b), softmax over k,
/// context = sum_k p_k s_k. Without attention the context is the mean segment.
inline void attend(const Params& P, const EncoderPass& ep, DecoderStep& st) {
  using namespace detail;
  const auto& cfg = P.config();
  const std::size_t K = ep.seg.size(), K2 = cfg.seg(), A = cfg.att;
  if (!cfg.attention) {
    st.p.assign(K, 1.0 / K);
    st.ctx = ep.seg_mean;
    return;
  }
  Vec w2q(P.at(kAttB), P.at(kAttB) + A);
  gemv(P.at(kAttW2), A, cfg.query(), st.q.data(), w2q.data());
  st.a.assign(K * A, 0.0);
  st.p.assign(K, 0.0);
  const double* v = P.at(kAttV);
  double mx = -1e300;
  for (std::size_t k = 0; k < K; ++k) {
    double e = 0;
    for (std::size_t j = 0; j < A; ++j) {
      double a = std::tanh(ep.w1s[k * A + j] + w2q[j]);
      st.a[k * A + j] = a;
      e += v[j] * a;
    }
    st.p[k] = e;
    mx = std::max(mx, e);
  }
  double z = 0;
  for (auto& x : st.p) z += (x = std::exp(x - mx));
  for (auto& x : st.p) x /= z;
  st.ctx.assign(K2, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < K2; ++j) st.ctx[j] += st.p[k] * ep.seg[k][j];
}

inline void decoder_step(const Params& P, const EncoderPass& ep, const detail::Vec& hp,
                         const detail::Vec& cp, int prev, const std::vector<int>& prev_atom,
                         DecoderStep& st) {
  using namespace detail;
  const auto& cfg = P.config();
  const std::size_t E = cfg.emb, D = cfg.dec, K2 = cfg.seg(), V = P.vocab_size();
  st.prev = prev;
  st.prev_atom = prev_atom;
  if (cfg.attention) {
    st.q.assign(cfg.query(), 0.0);
    for (int t : prev_atom) {
      const double* row = P.at(kEmbed) + static_cast<std::size_t>(t) * E;
      for (std::size_t j = 0; j < E; ++j) st.q[j] += row[j] / prev_atom.size();
    }
    std::copy(ep.task_mean.begin(), ep.task_mean.end(), st.q.begin() + E);
    std::copy(hp.begin(), hp.end(), st.q.begin() + 2 * E);
  }
  attend(P, ep, st);
  st.cell.x.assign(E + K2, 0.0);
  const double* row = P.at(kEmbed) + static_cast<std::size_t>(prev) * E;
  std::copy(row, row + E, st.cell.x.begin());
  std::copy(st.ctx.begin(), st.ctx.end(), st.cell.x.begin() + E);
  st.cell.hp = hp;
  st.cell.cp = cp;
  lstm_forward(P, {kDecX, kDecH, kDecB}, D, st.cell);
  Vec zc(D + K2);
  std::copy(st.cell.h.begin(), st.cell.h.end(), zc.begin());
  std::copy(st.ctx.begin(), st.ctx.end(), zc.begin() + D);
  st.logp.assign(P.at(kOutB), P.at(kOutB) + V);
  gemv(P.at(kOutW), V, D + K2, zc.data(), st.logp.data());
  double mx = *std::max_element(st.logp.begin(), st.logp.end());
  double z = 0;
  for (double l : st.logp) z += std::exp(l - mx);
  double lz = mx + std::log(z);
  for (auto& l : st.logp) l -= lz;
}

/// Deliberate gradient defects used to show that grad_check catches them.
enum class GradMutation { none, attention_softmax };

/// Mean per-token cross-entropy of the teacher-forced target. When grad is
/// given, the gradient is added to it.
inline double loss_and_grad(const Params& P, const TokenSeq& input, const TokenSeq& target,
                            std::vector<double>* grad,
                            GradMutation mutation = GradMutation::none) {
  using namespace detail;
  check_tokens(target.tokens, P.vocab_size());
  if (target.tokens.empty()) throw Error("empty target sequence");
  const auto& cfg = P.config();
  const std::size_t E = cfg.emb, D = cfg.dec, H = cfg.enc, S = cfg.summary, K2 = cfg.seg(),
                    A = cfg.att, V = P.vocab_size(), Q = cfg.query();
  EncoderPass ep = encode(P, input);
  const std::size_t T = target.tokens.size();
  std::vector<DecoderStep> steps(T);
  Vec h = ep.h0, c(D, 0.0);
  AtomTracker tracker;
  int prev = kEts;
  double loss = 0;
  for (std::size_t j = 0; j < T; ++j) {
    decoder_step(P, ep, h, c, prev, tracker.last, steps[j]);
    loss -= steps[j].logp[target.tokens[j]];
    h = steps[j].cell.h;
    c = steps[j].cell.c;
    prev = target.tokens[j];
    tracker.push(prev);
  }
  loss /= T;
  if (!grad) return loss;

  double* G = grad->data();
  const std::size_t K = ep.seg.size();
  std::vector<Vec> dseg(K, Vec(K2, 0.0));
  Vec dtask(E, 0.0);
  Vec dh_next(D, 0.0), dc_next(D, 0.0), dhp, dcp;
  const auto& gE = P.group(kEmbed);
  auto add_embed = [&](int tok, const double* d, double scale) {
    double* row = G + gE.offset + static_cast<std::size_t>(tok) * E;
    for (std::size_t j = 0; j < E; ++j) row[j] += d[j] * scale;
  };
  for (std::size_t j = T; j-- > 0;) {
    const DecoderStep& st = steps[j];
    Vec dl(V);
    for (std::size_t v = 0; v < V; ++v) dl[v] = std::exp(st.logp[v]) / T;
    dl[target.tokens[j]] -= 1.0 / T;
    Vec zc(D + K2);
    std::copy(st.cell.h.begin(), st.cell.h.end(), zc.begin());
    std::copy(st.ctx.begin(), st.ctx.end(), zc.begin() + D);
    outer(G + P.group(kOutW).offset, V, D + K2, dl.data(), zc.data());
    for (std::size_t v = 0; v < V; ++v) G[P.group(kOutB).offset + v] += dl[v];
    Vec dz(D + K2, 0.0);
    gemv_t(P.at(kOutW), V, D + K2, dl.data(), dz.data());
    Vec dh(D), dctx(dz.begin() + D, dz.end());
    for (std::size_t k = 0; k < D; ++k) dh[k] = dz[k] + dh_next[k];
    Vec dx(E + K2, 0.0);
    lstm_backward(P, {kDecX, kDecH, kDecB}, D, st.cell, dh.data(), dc_next.data(), G,
                  dx.data(), dhp, dcp);
    add_embed(st.prev, dx.data(), 1.0);
    for (std::size_t k = 0; k < K2; ++k) dctx[k] += dx[E + k];

    if (cfg.attention) {
      const double* v = P.at(kAttV);
      Vec dp(K, 0.0);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < K2; ++i) {
          dp[k] += dctx[i] * ep.seg[k][i];
          dseg[k][i] += st.p[k] * dctx[i];
        }
      double mean = 0;
      for (std::size_t k = 0; k < K; ++k) mean += st.p[k] * dp[k];
      Vec dpre_sum(A, 0.0), dpre(A);
      for (std::size_t k = 0; k < K; ++k) {
        double de = mutation == GradMutation::attention_softmax
                        ? st.p[k] * dp[k]
                        : st.p[k] * (dp[k] - mean);
        for (std::size_t i = 0; i < A; ++i) {
          double a = st.a[k * A + i];
          G[P.group(kAttV).offset + i] += de * a;
          dpre[i] = de * v[i] * (1 - a * a);
          dpre_sum[i] += dpre[i];
        }
        outer(G + P.group(kAttW1).offset, A, K2, dpre.data(), ep.seg[k].data());
        gemv_t(P.at(kAttW1), A, K2, dpre.data(), dseg[k].data());
      }
      outer(G + P.group(kAttW2).offset, A, Q, dpre_sum.data(), st.q.data());
      for (std::size_t i = 0; i < A; ++i) G[P.group(kAttB).offset + i] += dpre_sum[i];
      Vec dq(Q, 0.0);
      gemv_t(P.at(kAttW2), A, Q, dpre_sum.data(), dq.data());
      for (int t : st.prev_atom) add_embed(t, dq.data(), 1.0 / st.prev_atom.size());
      for (std::size_t i = 0; i < E; ++i) dtask[i] += dq[E + i];
      for (std::size_t i = 0; i < D; ++i) dhp[i] += dq[2 * E + i];
    } else {
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t i = 0; i < K2; ++i) dseg[k][i] += dctx[i] / K;
    }
    dh_next = dhp;
    dc_next = dcp;
  }

  for (int t : ep.task_tokens) add_embed(t, dtask.data(), 1.0 / ep.task_tokens.size());

  // bridge
  Vec dpre(D);
  for (std::size_t k = 0; k < D; ++k) dpre[k] = dh_next[k] * (1 - ep.h0[k] * ep.h0[k]);
  const Vec& summary = ep.top.back().h;
  outer(G + P.group(kBridgeW).offset, D, S, dpre.data(), summary.data());
  for (std::size_t k = 0; k < D; ++k) G[P.group(kBridgeB).offset + k] += dpre[k];
  Vec dsh(S, 0.0), dsc(S, 0.0);
  gemv_t(P.at(kBridgeW), D, S, dpre.data(), dsh.data());

  // summary layer over segments
  for (std::size_t k = K; k-- > 0;) {
    lstm_backward(P, {kTopX, kTopH, kTopB}, S, ep.top[k], dsh.data(), dsc.data(), G,
                  dseg[k].data(), dhp, dcp);
    dsh = dhp;
    dsc = dcp;
  }

  // segment means back to the encoder outputs
  const std::size_t n = ep.in.tokens.size();
  std::vector<Vec> dout(n, Vec(K2, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    auto [b, e] = ep.in.segments[k];
    for (int t = b; t < e; ++t)
      for (std::size_t i = 0; i < K2; ++i) dout[t][i] += dseg[k][i] / (e - b);
  }
  Vec dhc(H, 0.0), dcc(H, 0.0);
  for (std::size_t t = n; t-- > 0;) {
    Vec dh(H), dx(E, 0.0);
    for (std::size_t i = 0; i < H; ++i) dh[i] = dout[t][i] + dhc[i];
    lstm_backward(P, {kEncFwdX, kEncFwdH, kEncFwdB}, H, ep.fwd[t], dh.data(), dcc.data(),
                  G, dx.data(), dhp, dcp);
    add_embed(ep.in.tokens[t], dx.data(), 1.0);
    dhc = dhp;
    dcc = dcp;
  }
  dhc.assign(H, 0.0);
  dcc.assign(H, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    Vec dh(H), dx(E, 0.0);
    for (std::size_t i = 0; i < H; ++i) dh[i] = dout[t][H + i] + dhc[i];
    lstm_backward(P, {kEncBwdX, kEncBwdH, kEncBwdB}, H, ep.bwd[t], dh.data(), dcc.data(),
                  G, dx.data(), dhp, dcp);
    add_embed(ep.in.tokens[t], dx.data(), 1.0);
    dhc = dhp;
    dcc = dcp;
  }
  return loss;
}

// Decoding --------------------------------------------------------------------

struct Decoded {
  TokenSeq seq;  // <eos> included when the hypothesis finished
  std::vector<double> step_logp;
  double logp = 0;  // sum of step_logp, accumulated in order
  bool truncated = false;
};

/// Beam search over whole sequences. Each step keeps the best `width`
/// extensions; those ending in <eos> are finished. Stops once no live
/// hypothesis can beat the width-th finished one, or at max_len.
inline std::vector<Decoded> beam_decode(const Params& P, const TokenSeq& input, int width,
                                        int max_len = -1) {
  using namespace detail;
  if (width < 1) throw Error("beam width must be at least 1");
  if (max_len < 0) max_len = P.config().max_len;
  EncoderPass ep = encode(P, input);
  struct Hyp {
    Decoded d;
    Vec h, c;
    AtomTracker atoms;
    int prev = kEts;
  };
  std::vector<Hyp> live(1);
  live[0].h = ep.h0;
  live[0].c.assign(P.config().dec, 0.0);
  std::vector<Decoded> finished;
  const std::size_t V = P.vocab_size();
  DecoderStep st;
  for (int len = 0; len < max_len && !live.empty(); ++len) {
    struct Cand {
      double logp;
      std::size_t hyp;
      int tok;
    };
    std::vector<Cand> cands;
    std::vector<DecoderStep> stepped(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      decoder_step(P, ep, live[i].h, live[i].c, live[i].prev, live[i].atoms.last,
                   stepped[i]);
      for (std::size_t v = 0; v < V; ++v)
        cands.push_back({live[i].d.logp + stepped[i].logp[v], i, static_cast<int>(v)});
    }
    std::size_t keep = std::min<std::size_t>(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.logp != b.logp) return a.logp > b.logp;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.tok < b.tok;
                      });
    std::vector<Hyp> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Cand& cd = cands[k];
      Hyp h = live[cd.hyp];
      double lp = stepped[cd.hyp].logp[cd.tok];
      h.d.seq.tokens.push_back(cd.tok);
      h.d.step_logp.push_back(lp);
      h.d.logp += lp;
      if (cd.tok == kEos) {
        finished.push_back(std::move(h.d));
        continue;
      }
      h.h = stepped[cd.hyp].cell.h;
      h.c = stepped[cd.hyp].cell.c;
      h.atoms.push(cd.tok);
      h.prev = cd.tok;
      next.push_back(std::move(h));
    }
    live = std::move(next);
    if (finished.size() >= static_cast<std::size_t>(width)) {
      std::vector<double> f;
      for (const auto& d : finished) f.push_back(d.logp);
      std::nth_element(f.begin(), f.begin() + (width - 1), f.end(), std::greater<>());
      double best_live = -1e300;
      for (const auto& h : live) best_live = std::max(best_live, h.d.logp);
      if (best_live <= f[width - 1]) break;
    }
  }
  for (auto& h : live) {
    h.d.truncated = true;
    finished.push_back(std::move(h.d));
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Decoded& a, const Decoded& b) { return a.logp > b.logp; });
  return finished;
}

inline Decoded greedy_decode(const Params& P, const TokenSeq& input, int max_len = -1) {
  return beam_decode(P, input, 1, max_len).front();
}

struct GoalProposal {
  State goal;
  double log_prob = 0;
  int rank = 0;
  TokenSeq tokens;
};

/// The k most probable distinct well-formed goals. Beam entries that do not
/// decode to a type-valid state are skipped and the next entry takes their
/// place.
inline std::vector<GoalProposal> infer_topk(const Params& P, const Vocabulary& vocab,
                                            const TaskSentence& task, const State& s,
                                            int k = 3, int width = 0) {
  if (P.vocab_hash() != vocab.hash()) throw CheckpointError("parameters do not match vocabulary");
  if (k < 1) throw Error("k must be at least 1");
  if (width < k) width = std::max(k, 3 * k);
  TokenSeq input = encode_state(task, s, vocab, kMaxStateAtoms + 2);
  auto beams = beam_decode(P, input, width);
  std::vector<GoalProposal> out;
  for (const auto& b : beams) {
    if (b.truncated) continue;
    State g;
    try {
      g = decode_atoms(b.seq.tokens, vocab, 0, AtomOrder::any);
    } catch (const MalformedSequence&) {
      continue;
    }
    if (g.empty()) continue;
    bool dup = std::any_of(out.begin(), out.end(),
                           [&](const GoalProposal& p) { return p.goal == g; });
    if (dup) continue;
    out.push_back({g, b.logp, static_cast<int>(out.size()) + 1, b.seq});
    if (static_cast<int>(out.size()) == k) break;
  }
  if (out.empty()) throw NoValidProposal();
  return out;
}

}  // namespace vdem::goalnet
