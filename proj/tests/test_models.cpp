#include <catch2/catch_amalgamated.hpp>

#include "dyck/batch.hpp"
#include "dyck/eval.hpp"
#include "dyck/model.hpp"
#include "dyck/optim.hpp"
#include "testutil.hpp"

using namespace dyck;

namespace {
SAConfig small_sa(int n = 2, bool start = true) {
  SAConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.n = n;
  c.use_start_symbol = start;
  return c;
}
LSTMConfig small_lstm(int n = 2, bool start = true) {
  LSTMConfig c;
  c.layers = 2;
  c.hidden = 12;
  c.embedding = 12;
  c.n = n;
  c.use_start_symbol = start;
  return c;
}
}  // namespace

TEST_CASE("sa_forward shapes and attention normalization") {
  const SAConfig cfg = small_sa();
  Rng rng(1);
  const ParamSet ps = sa_init(cfg, rng);
  const Alphabet a = cfg.alphabet();
  const auto tokens = a.encode("T([])");
  const SAResult r = sa_forward(cfg, ps, tokens);
  REQUIRE(r.logits.shape == std::vector<int>{5, 4});
  REQUIRE(r.trace.layers.size() == 2);
  for (const auto& layer : r.trace.layers) {
    REQUIRE(layer.attention.size() == 2);
    REQUIRE(layer.input.shape == std::vector<int>{5, 16});
    for (const auto& head : layer.attention) {
      for (int q = 0; q < 5; ++q) {
        double sum = 0;
        for (int k = 0; k < 5; ++k) {
          sum += head.at({q, k});
          if (k > q) CHECK(head.at({q, k}) == 0.0f);  // suffix mask
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-6));
      }
    }
  }
  CHECK_THROWS_AS(sa_forward(cfg, ps, {}), EmptyInput);
  CHECK_THROWS_AS(sa_forward(cfg, ps, std::vector<TokenId>{99}), UnknownToken);
}

TEST_CASE("zero attention projections give uniform attention over allowed keys") {
  const SAConfig cfg = small_sa();
  Rng rng(2);
  ParamSet ps = sa_init(cfg, rng);
  ps.get("l0.wq").fill(0.0f);
  ps.get("l0.wk").fill(0.0f);
  const Alphabet a = cfg.alphabet();
  const SAResult r = sa_forward(cfg, ps, a.encode("T(())"));
  const Tensor& head = r.trace.layers[0].attention[0];
  for (int q = 0; q < 5; ++q)
    for (int k = 0; k <= q; ++k)
      CHECK(head.at({q, k}) == Catch::Approx(1.0 / (q + 1)).margin(1e-6));
}

TEST_CASE("causality: perturbing token t changes logits only at positions >= t") {
  const Alphabet a2 = Alphabet::make(2, false);
  const auto base = a2.encode("(()[])");
  auto modified = base;
  modified[2] = a2.encode("[[]()]")[2];  // swap token type at position 2
  const int t = 2;

  SECTION("self-attention") {
    const SAConfig cfg = small_sa(2, false);
    Rng rng(3);
    const ParamSet ps = sa_init(cfg, rng);
    const Tensor l0 = sa_forward(cfg, ps, base).logits;
    const Tensor l1 = sa_forward(cfg, ps, modified).logits;
    for (int p = 0; p < t; ++p)
      for (int c = 0; c < 4; ++c) CHECK(l0.at({p, c}) == l1.at({p, c}));
    bool changed = false;
    for (int p = t; p < 6; ++p)
      for (int c = 0; c < 4; ++c) changed = changed || l0.at({p, c}) != l1.at({p, c});
    CHECK(changed);
  }
  SECTION("lstm") {
    const LSTMConfig cfg = small_lstm(2, false);
    Rng rng(4);
    const ParamSet ps = lstm_init(cfg, rng);
    const Tensor l0 = lstm_forward(cfg, ps, base);
    const Tensor l1 = lstm_forward(cfg, ps, modified);
    for (int p = 0; p < t; ++p)
      for (int c = 0; c < 4; ++c) CHECK(l0.at({p, c}) == l1.at({p, c}));
    bool changed = false;
    for (int p = t; p < 6; ++p)
      for (int c = 0; c < 4; ++c) changed = changed || l0.at({p, c}) != l1.at({p, c});
    CHECK(changed);
  }
}

TEST_CASE("parameter counts sit in the 1.6M band at defaults") {
  const SAConfig sa_def{};          // 2 layers, 4 heads, d=256, ff=1024, n=2, with T
  const LSTMConfig lstm_def{};      // 2 layers, 320 hidden, 320 embedding
  const int64_t sa_count = count_params(sa_def);
  const int64_t lstm_count = count_params(lstm_def);
  CHECK(sa_count >= 1520000);
  CHECK(sa_count <= 1680000);
  CHECK(lstm_count >= 1520000);
  CHECK(lstm_count <= 1680000);
  // matched capacity within 10%
  CHECK(double(std::max(sa_count, lstm_count)) / double(std::min(sa_count, lstm_count)) < 1.10);

  // analytic count equals the instantiated tensors minus the pad row
  Rng rng(5);
  const ParamSet sp = sa_init(sa_def, rng);
  CHECK(sp.total_elements() - sa_def.d_model == sa_count);
  const ParamSet lp = lstm_init(lstm_def, rng);
  CHECK(lp.total_elements() - lstm_def.embedding == lstm_count);

  // SA- drops exactly the T embedding row
  SAConfig minus = sa_def;
  minus.use_start_symbol = false;
  CHECK(count_params(sa_def) - count_params(minus) == sa_def.d_model);
}

TEST_CASE("degenerate zero-layer config counts embeddings plus head only") {
  SAConfig c;
  c.layers = 0;
  c.heads = 1;
  c.d_model = 1;
  c.d_ff = 1;
  c.n = 1;
  c.use_start_symbol = false;
  CHECK(count_params(c) == 2 * 1 + (1 * 2 + 2));  // 2 embedding rows, 1x2 head + bias
}

TEST_CASE("predict_sets thresholds at logit zero") {
  CHECK(predict_sets(Tensor::from({1, 4}, {3.0f, -3.0f, 0.1f, -0.1f}))[0] == KHot{1, 0, 1, 0});
  CHECK(predict_sets(Tensor::from({1, 4}, {0.0f, 0.0f, 0.0f, 0.0f}))[0] == KHot{0, 0, 0, 0});
  Rng rng(6);
  const Tensor logits = Tensor::randu({7, 4}, rng, -2.0f, 2.0f);
  const auto rows = predict_sets(logits);
  for (int p = 0; p < 7; ++p)
    for (int c = 0; c < 4; ++c) {
      const double sig = 1.0 / (1.0 + std::exp(-double(logits.at({p, c}))));
      CHECK(static_cast<int>(rows[size_t(p)][size_t(c)]) == (sig > 0.5 ? 1 : 0));
    }
}

TEST_CASE("zero-weight lstm keeps constant logits across positions") {
  const LSTMConfig cfg = small_lstm(1, false);
  ParamSet ps;
  Rng rng(7);
  ps = lstm_init(cfg, rng);
  for (auto& t : ps.tensors) t.fill(0.0f);
  const Alphabet a = cfg.alphabet();
  const Tensor logits = lstm_forward(cfg, ps, a.encode("(())"));
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < 2; ++c) CHECK(logits.at({p, c}) == logits.at({0, c}));
}

TEST_CASE("single-sequence overfit reaches accuracy 1.0") {
  const LSTMConfig cfg{};  // full-size model, one training sequence
  ModelConfig mc{ModelKind::LSTM, {}, cfg};
  mc.set_language(2, true);
  Rng rng(8);
  ParamSet ps = init_params(mc, rng);
  AdamState adam = AdamState::init(ps);
  const Alphabet bare = Alphabet::make(2, false);
  const DyckSample sample = annotate_targets(bare.encode("([()][])"), bare);
  const auto batches = make_batches({sample}, mc.alphabet(), 1, true, Rng(0), false);
  REQUIRE(batches.size() == 1);
  bool solved = false;
  for (int step = 0; step < 100 && !solved; ++step) {
    Tape tp;
    BoundParams bp = bind_params(tp, ps, true);
    Var logits = batch_forward(tp, mc, bp, batches[0]);
    Var flat = tp.reshape(logits, {batches[0].B * batches[0].L, mc.output_vocab()});
    BceResult loss = bce_with_logits(tp, flat, batches[0].targets, batches[0].row_mask);
    tp.backward(loss.node);
    adam_step(ps, collect_grads(tp, bp), adam, 1e-2);
    const auto pred = predict_sets(
        Tensor::from({batches[0].L, mc.output_vocab()}, tp.value(flat).data));
    solved = !failure_position(std::vector<KHot>(pred.begin(), pred.end()), sample, 2, true)
                  .has_value();
  }
  CHECK(solved);
}
