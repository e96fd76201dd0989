#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dyck/alphabet.hpp"
#include "dyck/params.hpp"

namespace dyck {

enum class PosEnc { none, learned, sinusoidal };

inline std::string to_string(PosEnc p) {
  switch (p) {
    case PosEnc::none: return "none";
    case PosEnc::learned: return "learned";
    case PosEnc::sinusoidal: return "sinusoidal";
  }
  return "none";
}
inline PosEnc pos_enc_from_string(const std::string& s) {
  if (s == "none") return PosEnc::none;
  if (s == "learned") return PosEnc::learned;
  if (s == "sinusoidal") return PosEnc::sinusoidal;
  throw Error("unknown positional encoding: " + s);
}

// Two-layer suffix-masked multi-head encoder. The +/- variants share this
// config and code path; the start-symbol flag only adds the T row to the
// embedding table (inputs are T-prepended by the batcher).
struct SAConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 256;
  int d_ff = 1024;
  int n = 2;
  bool use_start_symbol = true;
  PosEnc pos = PosEnc::none;
  int max_len = 160;  // learned/sinusoidal position-table capacity

  int head_dim() const {
    if (heads <= 0 || d_model % heads != 0)
      throw Error("SAConfig: d_model must be divisible by heads");
    return d_model / heads;
  }
  int input_vocab() const { return 2 * n + (use_start_symbol ? 1 : 0); }
  int output_vocab() const { return 2 * n; }
  int pad_id() const { return input_vocab(); }
  Alphabet alphabet() const { return Alphabet::make(n, use_start_symbol); }
};

// Exact parameter count; the pad embedding row is excluded by convention.
inline int64_t count_params(const SAConfig& c) {
  const int64_t d = c.d_model;
  int64_t total = int64_t(c.input_vocab()) * d;  // embeddings
  if (c.pos == PosEnc::learned) total += int64_t(c.max_len) * d;
  const int64_t per_layer = 4 * (d * d + d)                       // q,k,v,o projections
                            + 2 * d                               // ln1
                            + d * c.d_ff + c.d_ff + c.d_ff * d + d  // ffn
                            + 2 * d;                              // ln2
  total += int64_t(c.layers) * per_layer;
  total += d * c.output_vocab() + c.output_vocab();  // head
  return total;
}

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases,
// normal(0, 1/sqrt(d)) embeddings
inline ParamSet sa_init(const SAConfig& c, Rng& rng) {
  ParamSet ps;
  const int d = c.d_model;
  const float emb_sigma = 1.0f / std::sqrt(static_cast<float>(d));
  ps.add("embed", Tensor::randn({c.input_vocab() + 1, d}, rng, 0.0, emb_sigma));
  if (c.pos == PosEnc::learned)
    ps.add("pos", Tensor::randn({c.max_len, d}, rng, 0.0, emb_sigma));
  auto uinit = [&rng](int fan_in, std::vector<int> shape) {
    const float b = 1.0f / std::sqrt(static_cast<float>(fan_in));
    return Tensor::randu(std::move(shape), rng, -b, b);
  };
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      ps.add(p + w, uinit(d, {d, d}));
      ps.add(p + w[1] + std::string("_bias"), Tensor::zeros({d}));
    }
    ps.add(p + "ln1.g", Tensor::ones({d}));
    ps.add(p + "ln1.b", Tensor::zeros({d}));
    ps.add(p + "ffn.w1", uinit(d, {d, c.d_ff}));
    ps.add(p + "ffn.b1", Tensor::zeros({c.d_ff}));
    ps.add(p + "ffn.w2", uinit(c.d_ff, {c.d_ff, d}));
    ps.add(p + "ffn.b2", Tensor::zeros({d}));
    ps.add(p + "ln2.g", Tensor::ones({d}));
    ps.add(p + "ln2.b", Tensor::zeros({d}));
  }
  ps.add("head.w", uinit(d, {d, c.output_vocab()}));
  ps.add("head.b", Tensor::zeros({c.output_vocab()}));
  return ps;
}

inline Tensor causal_mask(int len) {
  Tensor m(std::vector<int>{len, len});
  for (int q = 0; q < len; ++q)
    for (int k = 0; k <= q; ++k) m.data[static_cast<size_t>(q) * len + k] = 1.0f;
  return m;
}

inline Tensor sinusoidal_table(int len, int d) {
  Tensor t(std::vector<int>{len, d});
  for (int p = 0; p < len; ++p)
    for (int i = 0; i < d; ++i) {
      const double angle = p / std::pow(10000.0, 2.0 * (i / 2) / d);
      t.data[static_cast<size_t>(p) * d + i] =
          static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  return t;
}

struct SAOut {
  Var logits;                    // [B, L, 2n]
  std::vector<Var> attention;    // per layer, [B, H, L, L]
  std::vector<Var> layer_input;  // per layer, [B, L, d]
};

// Per layer: suffix-masked multi-head attention -> residual add -> layer
// norm -> relu FFN -> residual add -> layer norm; linear head to 2n logits.
inline SAOut sa_forward_tape(Tape& tp, const SAConfig& c, const BoundParams& bp,
                             const std::vector<int>& ids, int B, int L) {
  if (B <= 0 || L <= 0 || ids.size() != static_cast<size_t>(B) * L)
    throw EmptyInput("sa_forward: B=" + std::to_string(B) + " L=" + std::to_string(L));
  for (int id : ids)
    if (id < 0 || id > c.pad_id())
      throw UnknownToken("token id " + std::to_string(id) + " outside input vocabulary");
  const int d = c.d_model, H = c.heads, dh = c.head_dim();

  Var x = tp.embedding_gather(bp["embed"], ids, {B, L});
  if (c.pos == PosEnc::learned) {
    if (L > c.max_len) throw Error("sequence longer than position table");
    std::vector<int> pos_ids(static_cast<size_t>(B) * L);
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < L; ++t) pos_ids[static_cast<size_t>(b) * L + t] = t;
    x = tp.add(x, tp.embedding_gather(bp["pos"], pos_ids, {B, L}));
  } else if (c.pos == PosEnc::sinusoidal) {
    Tensor table = sinusoidal_table(L, d);
    Tensor tiled(std::vector<int>{B, L, d});
    for (int b = 0; b < B; ++b)
      std::copy_n(table.data.begin(), static_cast<size_t>(L) * d,
                  tiled.data.begin() + static_cast<int64_t>(b) * L * d);
    x = tp.add(x, tp.leaf(std::move(tiled)));
  }

  const Tensor mask = causal_mask(L);
  const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));
  SAOut out;
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    out.layer_input.push_back(x);
    Var q = tp.linear(x, bp[p + "wq"], bp[p + "q_bias"]);
    Var k = tp.linear(x, bp[p + "wk"], bp[p + "k_bias"]);
    Var v = tp.linear(x, bp[p + "wv"], bp[p + "v_bias"]);
    Var qh = tp.swap_mid(tp.reshape(q, {B, L, H, dh}));  // [B,H,L,dh]
    Var kh = tp.swap_mid(tp.reshape(k, {B, L, H, dh}));
    Var vh = tp.swap_mid(tp.reshape(v, {B, L, H, dh}));
    Var scores = tp.matmul(qh, kh, false, true, inv_sqrt_dh);  // [B,H,L,L]
    Var attn = tp.softmax_masked(scores, mask);
    out.attention.push_back(attn);
    Var ctx = tp.reshape(tp.swap_mid(tp.matmul(attn, vh)), {B, L, d});
    Var attn_out = tp.linear(ctx, bp[p + "wo"], bp[p + "o_bias"]);
    x = tp.layer_norm(tp.add(x, attn_out), bp[p + "ln1.g"], bp[p + "ln1.b"]);
    Var f1 = tp.relu(tp.linear(x, bp[p + "ffn.w1"], bp[p + "ffn.b1"]));
    Var f2 = tp.linear(f1, bp[p + "ffn.w2"], bp[p + "ffn.b2"]);
    x = tp.layer_norm(tp.add(x, f2), bp[p + "ln2.g"], bp[p + "ln2.b"]);
  }
  out.logits = tp.linear(x, bp["head.w"], bp["head.b"]);
  return out;
}

// Per-layer attention maps plus the representations entering each
// attention sublayer, for one sequence.
struct AttentionTrace {
  struct Layer {
    std::vector<Tensor> attention;  // per head, [P, P]
    Tensor input;                   // [P, d]
  };
  std::vector<Layer> layers;
};

struct SAResult {
  Tensor logits;  // [P, 2n]
  AttentionTrace trace;
};

// Single-sequence forward pass; `tokens` already carries T for + variants.
inline SAResult sa_forward(const SAConfig& c, const ParamSet& ps,
                           const std::vector<TokenId>& tokens) {
  if (tokens.empty()) throw EmptyInput("sa_forward: empty token sequence");
  Tape tp;
  BoundParams bp = bind_params(tp, ps, false);
  std::vector<int> ids(tokens.begin(), tokens.end());
  const int L = static_cast<int>(tokens.size());
  SAOut o = sa_forward_tape(tp, c, bp, ids, 1, L);

  SAResult r;
  const Tensor& lg = tp.value(o.logits);
  r.logits = Tensor::from({L, c.output_vocab()}, lg.data);
  const int H = c.heads;
  for (int l = 0; l < c.layers; ++l) {
    AttentionTrace::Layer layer;
    const Tensor& a = tp.value(o.attention[static_cast<size_t>(l)]);  // [1,H,L,L]
    for (int h = 0; h < H; ++h) {
      Tensor head(std::vector<int>{L, L});
      std::copy_n(a.data.begin() + static_cast<int64_t>(h) * L * L,
                  static_cast<size_t>(L) * L, head.data.begin());
      layer.attention.push_back(std::move(head));
    }
    const Tensor& in = tp.value(o.layer_input[static_cast<size_t>(l)]);  // [1,L,d]
    layer.input = Tensor::from({L, c.d_model}, in.data);
    r.trace.layers.push_back(std::move(layer));
  }
  return r;
}

}  // namespace dyck
