#include <catch2/catch_amalgamated.hpp>

#include "dyck/eval.hpp"
#include "testutil.hpp"

using namespace dyck;

namespace {
std::vector<DyckSample> word_samples(const std::vector<std::string>& words, int n) {
  const Alphabet a = Alphabet::make(n, false);
  std::vector<DyckSample> out;
  for (const auto& w : words) out.push_back(annotate_targets(a.encode(w), a));
  return out;
}

// oracle with specific k-hot rows flipped: flips[i] = (sample, row index in
// the predictor frame)
Predictor faulty_oracle(bool has_start, std::vector<std::pair<int, int>> flips) {
  return [has_start, flips](const std::vector<DyckSample>& samples) {
    auto rows = oracle_predictor(has_start)(samples);
    for (const auto& [s, r] : flips) rows[size_t(s)][size_t(r)][0] ^= 1;
    return rows;
  };
}
}  // namespace

TEST_CASE("oracle and anti-oracle accuracies bracket the range") {
  const auto samples = word_samples({"()", "(())", "()()", "(()())"}, 1);
  for (bool has_start : {false, true}) {
    const EvalReport good = evaluate(oracle_predictor(has_start), samples, 1, has_start);
    CHECK(good.seq_accuracy() == 1.0);
    CHECK(good.errors.empty());
    const EvalReport bad = evaluate(oracle_predictor(has_start, true), samples, 1, has_start);
    CHECK(bad.seq_accuracy() == 0.0);
    for (const auto& e : bad.errors) CHECK(e.f_p == 0);  // all-wrong fails at position 0
  }
}

TEST_CASE("failure_position: fault injection and the T-row convention") {
  const auto samples = word_samples({"(((())))(())"}, 1);  // 12 tokens
  // flip row 8 in the no-T frame: f_p = 7 with T (row t+1 maps to token t)
  {
    const auto pred = faulty_oracle(true, {{0, 8}})(samples);
    CHECK(failure_position(pred[0], samples[0], 1, true) == 7);
  }
  {
    const auto pred = faulty_oracle(false, {{0, 7}})(samples);
    CHECK(failure_position(pred[0], samples[0], 1, false) == 7);
  }
  // wrong T row alone still fails the sequence, at f_p = 0
  {
    const auto pred = faulty_oracle(true, {{0, 0}})(samples);
    CHECK(failure_position(pred[0], samples[0], 1, true) == 0);
  }
  // fully correct: no failure
  CHECK_FALSE(
      failure_position(oracle_predictor(false)(samples)[0], samples[0], 1, false).has_value());
}

TEST_CASE("accuracy_by_depth groups closers at the depth they close from") {
  const auto samples = word_samples({"(())"}, 1);
  // error injected at position 1 (row 1, no-T frame): operating depths are
  // [1,2,2,1], so depth 2 scores 1/2 and depth 1 stays perfect
  const EvalReport rep =
      evaluate(faulty_oracle(false, {{0, 1}}), samples, 1, false);
  CHECK(rep.by_depth.at(2).accuracy() == Catch::Approx(0.5));
  CHECK(rep.by_depth.at(1).accuracy() == Catch::Approx(1.0));
  CHECK(rep.errors.size() == 1);
  CHECK(rep.errors[0].f_p == 1);
  CHECK(rep.errors[0].d_p == 2);
}

TEST_CASE("error records carry d_h only for closers") {
  const auto samples = word_samples({"(())"}, 1);
  // fail at the final closer, position 3: d_h = 2
  {
    const EvalReport rep = evaluate(faulty_oracle(false, {{0, 3}}), samples, 1, false);
    REQUIRE(rep.errors.size() == 1);
    CHECK(rep.errors[0].f_p == 3);
    REQUIRE(rep.errors[0].d_h.has_value());
    CHECK(*rep.errors[0].d_h == 2);
  }
  // fail at an opener: d_h undefined
  {
    const EvalReport rep = evaluate(faulty_oracle(false, {{0, 0}}), samples, 1, false);
    REQUIRE(rep.errors.size() == 1);
    CHECK_FALSE(rep.errors[0].d_h.has_value());
  }
}

TEST_CASE("report invariants over a random mix of failures") {
  const auto samples =
      word_samples({"()", "(())", "()()", "((()))", "(()())", "()(())", "(((())))"}, 1);
  const EvalReport rep =
      evaluate(faulty_oracle(true, {{1, 2}, {4, 1}, {6, 5}}), samples, 1, true);
  // sequence accuracy complements the failure fraction
  CHECK(rep.total == 7);
  CHECK(rep.correct == 4);
  CHECK(rep.errors.size() == 3);
  CHECK(rep.seq_accuracy() == Catch::Approx(1.0 - 3.0 / 7.0));

  // depth-weighted accuracy equals overall position accuracy
  int64_t pos_total = 0, pos_correct = 0;
  for (const auto& [d, acc] : rep.by_depth) {
    pos_total += acc.total;
    pos_correct += acc.correct;
  }
  int64_t expect_total = 0;
  for (const auto& s : samples) expect_total += s.length;
  CHECK(pos_total == expect_total);
  CHECK(pos_correct == expect_total - 3);  // one wrong row per injected flip
}

TEST_CASE("csv artifacts") {
  const auto samples = word_samples({"(())", "()"}, 1);
  const EvalReport rep = evaluate(faulty_oracle(false, {{0, 3}}), samples, 1, false);
  const std::string dir = testutil::fresh_dir("evalcsv");
  write_band_csv({{"probe", rep}}, dir + "/accuracy_by_band.csv");
  write_depth_csv(rep, dir + "/accuracy_by_depth.csv");
  write_scatter_csv(rep, dir + "/error_scatter.csv");
  const std::string band = read_file(dir + "/accuracy_by_band.csv");
  CHECK(band.find("split,band_lo,band_hi,count,correct,seq_accuracy") == 0);
  CHECK(band.find("probe,2,4,2,1,0.500000") != std::string::npos);
  const std::string scatter = read_file(dir + "/error_scatter.csv");
  CHECK(scatter.find("seq_id,f_p,d_p,d_h") == 0);
  CHECK(scatter.find("0,3,1,2") != std::string::npos);

  // no failures: header-only scatter file
  const EvalReport clean = evaluate(oracle_predictor(false), samples, 1, false);
  write_scatter_csv(clean, dir + "/empty_scatter.csv");
  CHECK(read_file(dir + "/empty_scatter.csv") == "seq_id,f_p,d_p,d_h\n");
}

TEST_CASE("model predictor agrees with single-sequence forward") {
  SAConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.n = 2;
  cfg.use_start_symbol = true;
  Rng rng(12);
  const ParamSet ps = sa_init(cfg, rng);
  const ModelConfig mc{ModelKind::SA, cfg, {}};
  const auto samples = word_samples({"([])", "()", "[[]]()", "((()))[]"}, 2);
  const auto batched = model_predictor(mc, ps, 3)(samples);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto single =
        predict_sets(sa_forward(cfg, ps, with_start_prefix(mc, samples[i].tokens)).logits);
    REQUIRE(batched[i].size() == single.size());
    CHECK(batched[i] == std::vector<KHot>(single.begin(), single.end()));
  }
}

TEST_CASE("vocab mismatch is detected") {
  const auto samples = word_samples({"([])"}, 2);
  CHECK_THROWS_AS(evaluate(oracle_predictor(false), samples, 1, false), VocabMismatch);
}
