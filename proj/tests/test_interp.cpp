#include <catch2/catch_amalgamated.hpp>

#include "dyck/compat.hpp"
#include "dyck/sampler.hpp"
#include "dyck/interp.hpp"
#include "testutil.hpp"

using namespace dyck;

namespace {
SAConfig tiny_cfg(int n = 2) {
  SAConfig c;
  c.layers = 2;
  c.heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.n = n;
  c.use_start_symbol = true;
  return c;
}
}  // namespace

TEST_CASE("cosine_map symmetry, diagonal, range") {
  const SAConfig cfg = tiny_cfg();
  Rng rng(71);
  const ParamSet ps = sa_init(cfg, rng);
  const Alphabet a = cfg.alphabet();
  const SAResult r = sa_forward(cfg, ps, a.encode("T([()])"));
  for (int layer : {1, 2}) {
    const SimilarityMap sm = cosine_map(r.trace, layer);
    const int P = sm.matrix.shape[0];
    REQUIRE(P == 7);
    for (int i = 0; i < P; ++i) {
      CHECK(sm.matrix.at({i, i}) == Catch::Approx(1.0).margin(1e-6));
      for (int j = 0; j < P; ++j) {
        CHECK(sm.matrix.at({i, j}) == Catch::Approx(sm.matrix.at({j, i})).margin(1e-6));
        CHECK(sm.matrix.at({i, j}) >= -1.0f - 1e-6f);
        CHECK(sm.matrix.at({i, j}) <= 1.0f + 1e-6f);
      }
    }
  }
  CHECK_THROWS_AS(cosine_map(r.trace, 3), MissingTrace);
  CHECK_THROWS_AS(cosine_map(r.trace, 0), MissingTrace);
}

TEST_CASE("layer-1 inputs are position-free embeddings") {
  // same token always maps to cosine exactly 1 at layer 1; an untrained
  // model has no positional signal when pos encoding is none
  const SAConfig cfg = tiny_cfg(1);
  Rng rng(73);
  const ParamSet ps = sa_init(cfg, rng);
  const Alphabet a = cfg.alphabet();
  const SAResult r = sa_forward(cfg, ps, a.encode("T((("));
  const SimilarityMap sm = cosine_map(r.trace, 1);
  for (int i = 1; i < 4; ++i)
    for (int j = 1; j < 4; ++j)
      CHECK(sm.matrix.at({i, j}) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("orthogonal and zero representations") {
  AttentionTrace t;
  t.layers.resize(1);
  t.layers[0].input = Tensor::from({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  const SimilarityMap sm = cosine_map(t, 1);
  CHECK(sm.matrix.at({0, 1}) == Catch::Approx(0.0).margin(1e-7));

  AttentionTrace z;
  z.layers.resize(1);
  z.layers[0].input = Tensor::zeros({2, 2});
  CHECK_THROWS_AS(cosine_map(z, 1), ZeroVector);
}

TEST_CASE("export round-trip preserves shapes, normalization, compatibility") {
  const SAConfig cfg = tiny_cfg();
  Rng rng(79);
  const ParamSet ps = sa_init(cfg, rng);
  const Alphabet a = cfg.alphabet();
  const std::string dir = testutil::fresh_dir("interp");

  Rng word_rng(5);
  const Grammar g = default_grammar(2);
  int checked = 0;
  while (checked < 10) {
    const auto w = sample_word(g, word_rng);
    if (!w || w->empty() || w->size() > 20) continue;
    ++checked;
    std::vector<TokenId> toks = *w;
    toks.insert(toks.begin(), a.start_id());
    const SAResult r = sa_forward(cfg, ps, toks);
    const std::string path = dir + "/trace_" + std::to_string(checked) + ".json";
    export_trace(toks, r.trace, a, path);

    const nlohmann::json js = nlohmann::json::parse(read_file(path));
    const int P = static_cast<int>(toks.size());
    REQUIRE(js.at("tokens").size() == static_cast<size_t>(P));
    REQUIRE(js.at("layers").size() == 2);
    for (const auto& layer : js.at("layers")) {
      REQUIRE(layer.at("attention").size() == 2);  // heads
      for (const auto& head : layer.at("attention")) {
        REQUIRE(head.size() == static_cast<size_t>(P));
        for (const auto& row : head) {
          REQUIRE(row.size() == static_cast<size_t>(P));
          double sum = 0;
          for (const auto& v : row) sum += v.get<double>();
          CHECK(sum == Catch::Approx(1.0).margin(1e-5));
        }
      }
      REQUIRE(layer.at("input_cosine").size() == static_cast<size_t>(P));
    }

    // reloaded maps feed is_compatible_head with the same verdicts
    const AttentionTrace back = trace_from_json(js);
    for (int h = 0; h < 2; ++h)
      CHECK(is_compatible_head(toks, back.layers[1].attention[size_t(h)], a) ==
            is_compatible_head(toks, r.trace.layers[1].attention[size_t(h)], a));
    CHECK(sequence_compatibility(toks, back, CompatMode::AnyHeadSequence, a) ==
          sequence_compatibility(toks, r.trace, CompatMode::AnyHeadSequence, a));
  }
}

TEST_CASE("render_heatmap writes svg and rejects non-square input") {
  const std::string dir = testutil::fresh_dir("svg");
  render_heatmap(Tensor::from({2, 2}, {1, 0, 0, 1}), {"a", "b"}, dir + "/id.svg");
  const std::string svg = read_file(dir + "/id.svg");
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("version=\"1.1\"") != std::string::npos);
  // two dark diagonal cells (pure black at value 1)
  size_t black = 0, at = 0;
  while ((at = svg.find("#000000", at)) != std::string::npos) {
    ++black;
    at += 7;
  }
  CHECK(black == 2);

  HeatmapStyle div;
  div.diverging = true;
  render_heatmap(Tensor::from({2, 2}, {1, -1, -1, 1}), {"x", "y"}, dir + "/div.svg", div);
  const std::string dsvg = read_file(dir + "/div.svg");
  CHECK(dsvg.find("#ff0000") != std::string::npos);  // +1 in red
  CHECK(dsvg.find("#0000ff") != std::string::npos);  // -1 in blue

  CHECK_THROWS_AS(render_heatmap(Tensor::zeros({2, 3}), {}, dir + "/bad.svg"), ShapeMismatch);
}

TEST_CASE("round_sig keeps six significant digits") {
  CHECK(round_sig(0.123456789) == Catch::Approx(0.123457).epsilon(1e-9));
  CHECK(round_sig(1234567.0) == Catch::Approx(1234570.0).epsilon(1e-9));
  CHECK(round_sig(0.0) == 0.0);
}
