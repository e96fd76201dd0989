#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/lstm.hpp"
#include "dyck/oracle.hpp"
#include "dyck/sa.hpp"

namespace dyck {

enum class ModelKind { SA, LSTM };

inline std::string to_string(ModelKind k) { return k == ModelKind::SA ? "sa" : "lstm"; }
inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "sa") return ModelKind::SA;
  if (s == "lstm") return ModelKind::LSTM;
  throw Error("unknown model kind: " + s);
}

struct ModelConfig {
  ModelKind kind = ModelKind::SA;
  SAConfig sa;
  LSTMConfig lstm;

  int n() const { return kind == ModelKind::SA ? sa.n : lstm.n; }
  bool use_start_symbol() const {
    return kind == ModelKind::SA ? sa.use_start_symbol : lstm.use_start_symbol;
  }
  void set_language(int n, bool start) {
    sa.n = n;
    lstm.n = n;
    sa.use_start_symbol = start;
    lstm.use_start_symbol = start;
  }
  int input_vocab() const { return kind == ModelKind::SA ? sa.input_vocab() : lstm.input_vocab(); }
  int output_vocab() const { return 2 * n(); }
  int pad_id() const { return input_vocab(); }
  Alphabet alphabet() const { return Alphabet::make(n(), use_start_symbol()); }

  nlohmann::json to_json() const {
    nlohmann::json js;
    js["kind"] = to_string(kind);
    js["sa"] = {{"layers", sa.layers},     {"heads", sa.heads},
                {"d_model", sa.d_model},   {"d_ff", sa.d_ff},
                {"n", sa.n},               {"use_start_symbol", sa.use_start_symbol},
                {"pos", to_string(sa.pos)}, {"max_len", sa.max_len}};
    js["lstm"] = {{"layers", lstm.layers},
                  {"hidden", lstm.hidden},
                  {"embedding", lstm.embedding},
                  {"n", lstm.n},
                  {"use_start_symbol", lstm.use_start_symbol}};
    return js;
  }

  static ModelConfig from_json(const nlohmann::json& js) {
    ModelConfig c;
    c.kind = model_kind_from_string(js.at("kind").get<std::string>());
    const auto& s = js.at("sa");
    c.sa.layers = s.at("layers").get<int>();
    c.sa.heads = s.at("heads").get<int>();
    c.sa.d_model = s.at("d_model").get<int>();
    c.sa.d_ff = s.at("d_ff").get<int>();
    c.sa.n = s.at("n").get<int>();
    c.sa.use_start_symbol = s.at("use_start_symbol").get<bool>();
    c.sa.pos = pos_enc_from_string(s.at("pos").get<std::string>());
    c.sa.max_len = s.at("max_len").get<int>();
    const auto& l = js.at("lstm");
    c.lstm.layers = l.at("layers").get<int>();
    c.lstm.hidden = l.at("hidden").get<int>();
    c.lstm.embedding = l.at("embedding").get<int>();
    c.lstm.n = l.at("n").get<int>();
    c.lstm.use_start_symbol = l.at("use_start_symbol").get<bool>();
    return c;
  }
};

inline int64_t count_params(const ModelConfig& c) {
  return c.kind == ModelKind::SA ? count_params(c.sa) : count_params(c.lstm);
}

inline ParamSet init_params(const ModelConfig& c, Rng& rng) {
  return c.kind == ModelKind::SA ? sa_init(c.sa, rng) : lstm_init(c.lstm, rng);
}

// bit i = 1 iff sigmoid(logit_i) > 0.5, i.e. logit_i > 0 (0 maps to unset)
inline std::vector<KHot> predict_sets(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeMismatch("predict_sets: expects [positions, labels]");
  const int P = logits.shape[0], C = logits.shape[1];
  std::vector<KHot> out(static_cast<size_t>(P), KHot(static_cast<size_t>(C), 0));
  for (int p = 0; p < P; ++p)
    for (int c = 0; c < C; ++c)
      out[static_cast<size_t>(p)][static_cast<size_t>(c)] =
          logits.data[static_cast<size_t>(p) * C + c] > 0.0f ? 1 : 0;
  return out;
}

// Single-sequence logits; prepends T for + variants when asked to.
inline Tensor model_forward(const ModelConfig& c, const ParamSet& ps,
                            const std::vector<TokenId>& tokens_with_prefix) {
  if (c.kind == ModelKind::SA) return sa_forward(c.sa, ps, tokens_with_prefix).logits;
  return lstm_forward(c.lstm, ps, tokens_with_prefix);
}

inline std::vector<TokenId> with_start_prefix(const ModelConfig& c,
                                              const std::vector<TokenId>& tokens) {
  if (!c.use_start_symbol()) return tokens;
  std::vector<TokenId> out;
  out.reserve(tokens.size() + 1);
  out.push_back(c.alphabet().start_id());
  out.insert(out.end(), tokens.begin(), tokens.end());
  return out;
}

}  // namespace dyck
