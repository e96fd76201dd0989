#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dyck/dataset.hpp"
#include "dyck/train.hpp"
#include "testutil.hpp"

using namespace dyck;
namespace fs = std::filesystem;

namespace {

// dataset shared by the training tests
struct TinyData {
  std::string dir;
  DatasetManifest manifest;
};
const TinyData& tiny_data() {
  static TinyData d = [] {
    TinyData t;
    t.dir = testutil::fresh_dir("train_data");
    t.manifest = build_splits(2, 77, {{"train", 80, 2, 16}, {"valid", 24, 2, 16}}, t.dir);
    return t;
  }();
  return d;
}

RunConfig tiny_run(const std::string& tag, ModelKind kind = ModelKind::SA) {
  RunConfig cfg;
  cfg.kind = kind;
  cfg.start_symbol = true;
  cfg.manifest = (fs::path(tiny_data().dir) / "manifest.json").string();
  cfg.batch_size = 16;
  cfg.max_epochs = 4;
  cfg.seed = 5;
  cfg.checkpoint_dir = testutil::fresh_dir("run_" + tag);
  cfg.eval_every = 1;
  cfg.schedule = {ScheduleMode::fixed, 1e-3, 1};
  cfg.sa = SAConfig{};
  cfg.sa.layers = 2;
  cfg.sa.heads = 2;
  cfg.sa.d_model = 16;
  cfg.sa.d_ff = 32;
  cfg.lstm = LSTMConfig{};
  cfg.lstm.hidden = 12;
  cfg.lstm.embedding = 12;
  return cfg;
}

}  // namespace

TEST_CASE("make_batches: T prepending and padding semantics") {
  const Alphabet a1 = Alphabet::make(1, true);
  const Alphabet bare = Alphabet::make(1, false);
  const DyckSample s = annotate_targets(bare.encode("()"), bare);

  const auto batches = make_batches({s}, a1, 4, true, Rng(1), false);
  REQUIRE(batches.size() == 1);
  const Batch& b = batches[0];
  CHECK(b.B == 1);
  CHECK(b.L == 3);
  CHECK(b.ids == std::vector<int>{a1.start_id(), a1.open_id(0), a1.close_id(0)});
  // targets: after T -> {(}, after ( -> {(,)}, after ) -> {(}
  CHECK(b.targets.to_vector() == std::vector<float>{1, 0, 1, 1, 1, 0});
  CHECK(b.mask == std::vector<uint8_t>{1, 1, 1});

  // without the flag there is no T anywhere
  const auto no_t = make_batches({s}, bare, 4, false, Rng(1), false);
  for (int id : no_t[0].ids) CHECK(id != 2);
  CHECK(no_t[0].L == 2);
}

TEST_CASE("make_batches: bucketing bounds padding and order is deterministic") {
  const Alphabet bare = Alphabet::make(2, false);
  std::vector<DyckSample> samples;
  Rng rng(9);
  const Grammar g = default_grammar(2);
  while (samples.size() < 60) {
    const auto w = sample_word(g, rng);
    if (w && !w->empty() && w->size() <= 40) samples.push_back(annotate_targets(*w, g.alphabet));
  }
  const Alphabet a = Alphabet::make(2, true);
  const auto batches = make_batches(samples, a, 8, true, Rng(4));
  size_t covered = 0;
  for (const auto& b : batches) {
    covered += static_cast<size_t>(b.B);
    int longest = 0;
    for (int r = 0; r < b.B; ++r) {
      int len = 0;
      while (len < b.L && b.mask[static_cast<size_t>(r) * b.L + len]) ++len;
      longest = std::max(longest, len);
      // padding never exceeds one bucket width
      CHECK(b.L - len < kLengthBucketWidth);
      // exactly one T per row, at position 0
      int t_count = 0;
      for (int p = 0; p < b.L; ++p)
        if (b.ids[static_cast<size_t>(r) * b.L + p] == a.start_id()) ++t_count;
      CHECK(t_count == 1);
      CHECK(b.ids[static_cast<size_t>(r) * b.L] == a.start_id());
    }
    CHECK(longest == b.L);
  }
  CHECK(covered == samples.size());

  // same seed, same batches; different seed, different order
  auto flat_ids = [](const std::vector<Batch>& bs) {
    std::vector<int> out;
    for (const auto& b : bs) out.insert(out.end(), b.ids.begin(), b.ids.end());
    return out;
  };
  CHECK(flat_ids(make_batches(samples, a, 8, true, Rng(4))) == flat_ids(batches));
  CHECK(flat_ids(make_batches(samples, a, 8, true, Rng(5))) != flat_ids(batches));
}

TEST_CASE("checkpoint round-trip is byte-identical") {
  const SAConfig cfg = [] {
    SAConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.n = 2;
    return c;
  }();
  Rng rng(3);
  ModelCheckpoint ck;
  ck.model = ModelConfig{ModelKind::SA, cfg, {}};
  ck.params = sa_init(cfg, rng);
  ck.opt = AdamState::init(ck.params);
  ck.opt.step = 17;
  ck.train.next_epoch = 3;
  ck.train.global_step = 17;
  ck.train.best_valid_acc = 0.5;
  ck.train.history = {{10, 0.25}, {17, 0.5}};
  ck.run_config = {{"note", "round-trip"}};

  const std::string dir = testutil::fresh_dir("ckpt");
  const std::string p1 = (fs::path(dir) / "a.ckpt").string();
  const std::string p2 = (fs::path(dir) / "b.ckpt").string();
  save_checkpoint(p1, ck);
  const ModelCheckpoint re = load_checkpoint(p1);
  CHECK(re.params.names == ck.params.names);
  for (size_t i = 0; i < re.params.size(); ++i)
    CHECK(re.params.tensors[i].data == ck.params.tensors[i].data);
  CHECK(re.opt.step == 17);
  CHECK(re.train.best_valid_acc == 0.5);
  CHECK(re.train.history == ck.train.history);
  save_checkpoint(p2, re);
  CHECK(read_file(p1) == read_file(p2));
}

TEST_CASE("checkpoint corruption is detected") {
  SAConfig cfg;
  cfg.layers = 1;
  cfg.heads = 1;
  cfg.d_model = 4;
  cfg.d_ff = 8;
  Rng rng(4);
  ModelCheckpoint ck;
  ck.model = ModelConfig{ModelKind::SA, cfg, {}};
  ck.params = sa_init(cfg, rng);
  ck.opt = AdamState::init(ck.params);
  const std::string dir = testutil::fresh_dir("ckpt_bad");
  const std::string path = (fs::path(dir) / "m.ckpt").string();
  save_checkpoint(path, ck);
  const std::string blob = read_file(path);

  SECTION("truncated payload") {
    write_file(path, blob.substr(0, blob.size() - 64));
    CHECK_THROWS_AS(load_checkpoint(path), CorruptPayload);
  }
  SECTION("version bump") {
    std::string bad = blob;
    bad[9] = 9;  // version lives after the 9-byte magic
    write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), VersionMismatch);
  }
  SECTION("bad magic") {
    std::string bad = blob;
    bad[0] = 'X';
    write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), CorruptPayload);
  }
  SECTION("flipped payload byte fails the digest") {
    std::string bad = blob;
    bad[bad.size() - 1] = static_cast<char>(bad[bad.size() - 1] ^ 0x5a);
    write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), CorruptPayload);
  }
  SECTION("aliased tensor offsets fail the overlap check") {
    // rewrite the header so two tensors share offset 0, keeping the digest valid
    const size_t prefix = 9 + 4 + 8;
    uint64_t hlen;
    std::memcpy(&hlen, blob.data() + 9 + 4, sizeof(hlen));
    nlohmann::json header = nlohmann::json::parse(blob.substr(prefix, hlen));
    header["tensors"][1]["offset"] = 0;
    const std::string head2 = header.dump();
    std::string bad;
    bad.append(blob.data(), 9 + 4);
    const uint64_t h2 = head2.size();
    bad.append(reinterpret_cast<const char*>(&h2), 8);
    bad += head2;
    bad += blob.substr(prefix + hlen);
    write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), CorruptPayload);
  }
}

TEST_CASE("train_run: determinism, monotone best, finite losses") {
  RunConfig cfg_a = tiny_run("det_a");
  RunConfig cfg_b = tiny_run("det_b");
  cfg_b.seed = cfg_a.seed;
  const TrainResult ra = train_run(cfg_a);
  const TrainResult rb = train_run(cfg_b);
  CHECK(read_file(ra.metrics_path) == read_file(rb.metrics_path));

  const ModelCheckpoint last = load_checkpoint(ra.last_path);
  double best = -1.0;
  for (const auto& [step, acc] : last.train.history) {
    best = std::max(best, acc);
    CHECK(acc >= 0.0);
  }
  CHECK(last.train.best_valid_acc == best);

  // metrics have finite losses and the declared header
  const std::string csv = read_file(ra.metrics_path);
  CHECK(csv.rfind("step,lr,train_loss,valid_seq_acc\n", 0) == 0);
  CHECK(csv.find("nan") == std::string::npos);
  CHECK(csv.find("inf") == std::string::npos);

  // a different seed changes the metrics
  RunConfig cfg_c = tiny_run("det_c");
  cfg_c.seed = cfg_a.seed + 1;
  const TrainResult rc = train_run(cfg_c);
  CHECK(read_file(rc.metrics_path) != read_file(ra.metrics_path));
}

TEST_CASE("train_run: resume reproduces the uninterrupted run") {
  RunConfig full = tiny_run("resume_full", ModelKind::LSTM);
  full.max_epochs = 4;
  const TrainResult rf = train_run(full);

  RunConfig half = tiny_run("resume_half", ModelKind::LSTM);
  half.seed = full.seed;
  half.max_epochs = 2;
  const TrainResult rh = train_run(half);
  RunConfig rest = half;
  rest.max_epochs = 4;
  const TrainResult rr = train_run(rest, rh.last_path);

  CHECK(read_file(rr.metrics_path) == read_file(rf.metrics_path));
  const ModelCheckpoint a = load_checkpoint(rf.last_path);
  const ModelCheckpoint b = load_checkpoint(rr.last_path);
  for (size_t i = 0; i < a.params.size(); ++i)
    CHECK(a.params.tensors[i].data == b.params.tensors[i].data);
}

TEST_CASE("train_run: divergence raises and keeps the last checkpoint") {
  RunConfig cfg = tiny_run("diverge");
  cfg.max_epochs = 1;
  const TrainResult ok = train_run(cfg);  // one sane epoch, so last.ckpt exists

  RunConfig bomb = cfg;
  bomb.max_epochs = 3;
  bomb.schedule = {ScheduleMode::fixed, 1e30, 1};  // overflows float32 in one step
  CHECK_THROWS_AS(train_run(bomb, ok.last_path), Diverged);
  CHECK_NOTHROW(load_checkpoint(ok.last_path));  // last good state still loads
}

TEST_CASE("train_run: tiny model memorizes a tiny split") {
  RunConfig cfg = tiny_run("memorize");
  cfg.max_epochs = 60;
  cfg.eval_every = 10;
  cfg.schedule = {ScheduleMode::fixed, 2e-3, 1};
  const TrainResult r = train_run(cfg);
  CHECK(r.best_valid_acc > 0.9);  // 2-16 length, n=2: learnable by the small model
}
