#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dyck/alphabet.hpp"
#include "dyck/params.hpp"

namespace dyck {

struct LSTMConfig {
  int layers = 2;
  int hidden = 320;
  int embedding = 320;
  int n = 2;
  bool use_start_symbol = true;

  int input_vocab() const { return 2 * n + (use_start_symbol ? 1 : 0); }
  int output_vocab() const { return 2 * n; }
  int pad_id() const { return input_vocab(); }
  Alphabet alphabet() const { return Alphabet::make(n, use_start_symbol); }
};

// 4*(in*hidden + hidden*hidden + hidden) per layer, plus embeddings and the
// per-position head; the pad embedding row is excluded by convention.
inline int64_t count_params(const LSTMConfig& c) {
  int64_t total = int64_t(c.input_vocab()) * c.embedding;
  for (int l = 0; l < c.layers; ++l) {
    const int64_t in = l == 0 ? c.embedding : c.hidden;
    total += 4 * (in * c.hidden + int64_t(c.hidden) * c.hidden + c.hidden);
  }
  total += int64_t(c.hidden) * c.output_vocab() + c.output_vocab();
  return total;
}

inline ParamSet lstm_init(const LSTMConfig& c, Rng& rng) {
  ParamSet ps;
  const float emb_sigma = 1.0f / std::sqrt(static_cast<float>(c.embedding));
  ps.add("embed", Tensor::randn({c.input_vocab() + 1, c.embedding}, rng, 0.0, emb_sigma));
  auto uinit = [&rng](int fan_in, std::vector<int> shape) {
    const float b = 1.0f / std::sqrt(static_cast<float>(fan_in));
    return Tensor::randu(std::move(shape), rng, -b, b);
  };
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    const int in = l == 0 ? c.embedding : c.hidden;
    ps.add(p + "wx", uinit(in, {in, 4 * c.hidden}));
    ps.add(p + "wh", uinit(c.hidden, {c.hidden, 4 * c.hidden}));
    ps.add(p + "b", Tensor::zeros({4 * c.hidden}));
  }
  ps.add("head.w", uinit(c.hidden, {c.hidden, c.output_vocab()}));
  ps.add("head.b", Tensor::zeros({c.output_vocab()}));
  return ps;
}

struct LSTMOut {
  Var logits;  // [B, L, 2n]
};

// Unidirectional stacked LSTM; gate order in the fused matrices is
// (input, forget, cell, output). States start at zero.
inline LSTMOut lstm_forward_tape(Tape& tp, const LSTMConfig& c, const BoundParams& bp,
                                 const std::vector<int>& ids, int B, int L) {
  if (B <= 0 || L <= 0 || ids.size() != static_cast<size_t>(B) * L)
    throw EmptyInput("lstm_forward: B=" + std::to_string(B) + " L=" + std::to_string(L));
  for (int id : ids)
    if (id < 0 || id > c.pad_id())
      throw UnknownToken("token id " + std::to_string(id) + " outside input vocabulary");
  const int H = c.hidden;

  std::vector<Var> h(static_cast<size_t>(c.layers));
  std::vector<Var> cell(static_cast<size_t>(c.layers));
  for (int l = 0; l < c.layers; ++l) {
    h[static_cast<size_t>(l)] = tp.leaf(Tensor::zeros({B, H}));
    cell[static_cast<size_t>(l)] = tp.leaf(Tensor::zeros({B, H}));
  }

  std::vector<Var> step_logits;
  step_logits.reserve(static_cast<size_t>(L));
  for (int t = 0; t < L; ++t) {
    std::vector<int> ids_t(static_cast<size_t>(B));
    for (int b = 0; b < B; ++b) ids_t[static_cast<size_t>(b)] = ids[static_cast<size_t>(b) * L + t];
    Var x = tp.embedding_gather(bp["embed"], ids_t, {B});
    for (int l = 0; l < c.layers; ++l) {
      const std::string p = "l" + std::to_string(l) + ".";
      Var gates = tp.add(tp.linear(x, bp[p + "wx"], bp[p + "b"]),
                         tp.matmul(h[static_cast<size_t>(l)], bp[p + "wh"]));
      Var gi = tp.sigmoid(tp.slice_cols(gates, 0, H));
      Var gf = tp.sigmoid(tp.slice_cols(gates, H, 2 * H));
      Var gc = tp.tanh_(tp.slice_cols(gates, 2 * H, 3 * H));
      Var go = tp.sigmoid(tp.slice_cols(gates, 3 * H, 4 * H));
      Var c_new = tp.add(tp.mul(gf, cell[static_cast<size_t>(l)]), tp.mul(gi, gc));
      cell[static_cast<size_t>(l)] = c_new;
      h[static_cast<size_t>(l)] = tp.mul(go, tp.tanh_(c_new));
      x = h[static_cast<size_t>(l)];
    }
    step_logits.push_back(tp.linear(x, bp["head.w"], bp["head.b"]));
  }
  LSTMOut out;
  out.logits = tp.stack_time(step_logits);  // [B, L, 2n]
  return out;
}

// Single-sequence forward pass; `tokens` already carries T for + variants.
inline Tensor lstm_forward(const LSTMConfig& c, const ParamSet& ps,
                           const std::vector<TokenId>& tokens) {
  if (tokens.empty()) throw EmptyInput("lstm_forward: empty token sequence");
  Tape tp;
  BoundParams bp = bind_params(tp, ps, false);
  std::vector<int> ids(tokens.begin(), tokens.end());
  const int L = static_cast<int>(tokens.size());
  LSTMOut o = lstm_forward_tape(tp, c, bp, ids, 1, L);
  return Tensor::from({L, c.output_vocab()}, tp.value(o.logits).data);
}

}  // namespace dyck
