#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/batch.hpp"
#include "dyck/checkpoint.hpp"
#include "dyck/dataset.hpp"
#include "dyck/eval.hpp"
#include "dyck/optim.hpp"

namespace dyck {

struct RunConfig {
  ModelKind kind = ModelKind::SA;
  bool start_symbol = true;
  std::string manifest;  // dataset manifest.json
  std::string train_split = "train";
  std::string valid_split = "valid";
  int batch_size = 64;
  int max_epochs = 50;
  uint64_t seed = 1;
  std::string checkpoint_dir;
  int eval_every = 1;  // epochs between validation passes
  ScheduleConfig schedule;
  double clip_norm = 0.0;  // 0 disables clipping
  SAConfig sa;
  LSTMConfig lstm;

  nlohmann::json to_json() const {
    ModelConfig mc{kind, sa, lstm};
    nlohmann::json js = mc.to_json();
    js["start_symbol"] = start_symbol;
    js["manifest"] = manifest;
    js["train_split"] = train_split;
    js["valid_split"] = valid_split;
    js["batch_size"] = batch_size;
    js["max_epochs"] = max_epochs;
    js["seed"] = seed;
    js["checkpoint_dir"] = checkpoint_dir;
    js["eval_every"] = eval_every;
    js["schedule"] = schedule.to_json();
    js["clip_norm"] = clip_norm;
    return js;
  }

  static RunConfig from_json(const nlohmann::json& js) {
    RunConfig c;
    ModelConfig mc = ModelConfig::from_json(js);
    c.kind = mc.kind;
    c.sa = mc.sa;
    c.lstm = mc.lstm;
    c.start_symbol = js.at("start_symbol").get<bool>();
    c.manifest = js.at("manifest").get<std::string>();
    c.train_split = js.value("train_split", std::string("train"));
    c.valid_split = js.value("valid_split", std::string("valid"));
    c.batch_size = js.at("batch_size").get<int>();
    c.max_epochs = js.at("max_epochs").get<int>();
    c.seed = js.at("seed").get<uint64_t>();
    c.checkpoint_dir = js.at("checkpoint_dir").get<std::string>();
    c.eval_every = js.value("eval_every", 1);
    c.schedule = ScheduleConfig::from_json(js.at("schedule"));
    c.clip_norm = js.value("clip_norm", 0.0);
    if (c.batch_size < 1) throw Error("run config: batch_size must be >= 1");
    return c;
  }

  static RunConfig load(const std::string& path) {
    try {
      return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
  }

  // language fields (n, start flag) filled in from the dataset manifest
  ModelConfig model_config(int language_n) const {
    ModelConfig mc{kind, sa, lstm};
    mc.set_language(language_n, start_symbol);
    return mc;
  }
};

struct TrainResult {
  std::string best_path;
  std::string last_path;
  std::string metrics_path;
  double best_valid_acc = 0.0;
  double best_valid_loss = 0.0;
  int64_t steps = 0;
};

// Validation pass: batched forward, sequence accuracy plus mean loss.
inline std::pair<double, double> validate_split(const ModelConfig& mc, const ParamSet& ps,
                                                const std::vector<DyckSample>& valid,
                                                int batch_size) {
  const Alphabet a = mc.alphabet();
  auto batches = make_batches(valid, a, batch_size, mc.use_start_symbol(), Rng(0), false);
  int correct = 0;
  double loss_sum = 0.0, loss_count = 0.0;
  for (const auto& b : batches) {
    Tape tp;
    BoundParams bp = bind_params(tp, ps, false);
    Var logits = batch_forward(tp, mc, bp, b);
    Var flat = tp.reshape(logits, {b.B * b.L, mc.output_vocab()});
    const double count = std::count(b.mask.begin(), b.mask.end(), uint8_t(1));
    loss_sum += bce_with_logits(tp, flat, b.targets, b.row_mask).value * count;
    loss_count += count;
    const Tensor& lg = tp.value(flat);
    const int C = mc.output_vocab();
    for (int r = 0; r < b.B; ++r) {
      const DyckSample& s = valid[static_cast<size_t>(b.sample_idx[static_cast<size_t>(r)])];
      int real = 0;
      while (real < b.L && b.mask[static_cast<size_t>(r) * b.L + real]) ++real;
      Tensor rows = Tensor::zeros({real, C});
      std::copy_n(lg.data.begin() + (static_cast<int64_t>(r) * b.L) * C,
                  static_cast<size_t>(real) * C, rows.data.begin());
      const auto pred = predict_sets(rows);
      if (!failure_position(pred, s, mc.n(), mc.use_start_symbol())) ++correct;
    }
  }
  const double acc = valid.empty() ? 0.0 : double(correct) / double(valid.size());
  return {acc, loss_count > 0 ? loss_sum / loss_count : 0.0};
}

// Epoch loop: seeded shuffled batches, Adam on the masked BCE, periodic
// validation, best-checkpoint selection on validation sequence accuracy
// (ties broken by lower validation loss). Deterministic given the config
// seed and single-thread math.
inline TrainResult train_run(const RunConfig& cfg, const std::string& resume_from = "",
                             std::ostream* log = nullptr) {
  const DatasetManifest man = DatasetManifest::load(cfg.manifest);
  const std::string man_dir = std::filesystem::path(cfg.manifest).parent_path().string();
  const ModelConfig mc = cfg.model_config(man.language_n);
  const Alphabet a = mc.alphabet();

  const auto train_samples = load_split(man, cfg.train_split, man_dir);
  const auto valid_samples = load_split(man, cfg.valid_split, man_dir);

  ParamSet params;
  AdamState adam;
  TrainState state;
  if (!resume_from.empty()) {
    ModelCheckpoint ck = load_checkpoint(resume_from);
    if (ck.model.to_json() != mc.to_json())
      throw VocabMismatch("resume checkpoint model config differs from run config");
    params = std::move(ck.params);
    adam = std::move(ck.opt);
    state = std::move(ck.train);
  } else {
    Rng init_rng = Rng(cfg.seed).derive("init");
    params = init_params(mc, init_rng);
    adam = AdamState::init(params);
  }

  std::filesystem::create_directories(cfg.checkpoint_dir);
  const auto ck_path = [&](const char* name) {
    return (std::filesystem::path(cfg.checkpoint_dir) / name).string();
  };
  TrainResult res;
  res.best_path = ck_path("best.ckpt");
  res.last_path = ck_path("last.ckpt");
  res.metrics_path = ck_path("metrics.csv");

  const bool fresh = !std::filesystem::exists(res.metrics_path) || resume_from.empty();
  std::ofstream metrics(res.metrics_path,
                        fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw WriteError("cannot write " + res.metrics_path);
  if (fresh) metrics << "step,lr,train_loss,valid_seq_acc\n";

  auto snapshot = [&](int next_epoch) {
    ModelCheckpoint ck;
    ck.run_config = cfg.to_json();
    ck.model = mc;
    ck.params = params;
    ck.opt = adam;
    ck.train = state;
    ck.train.next_epoch = next_epoch;
    return ck;
  };

  double loss_accum = 0.0;
  int64_t loss_batches = 0;
  for (int epoch = state.next_epoch; epoch < cfg.max_epochs; ++epoch) {
    auto batches = make_batches(train_samples, a, cfg.batch_size, cfg.start_symbol,
                                Rng(cfg.seed).derive("epoch", static_cast<uint64_t>(epoch)));
    for (const auto& b : batches) {
      Tape tp;
      BoundParams bp = bind_params(tp, params, true);
      Var logits = batch_forward(tp, mc, bp, b);
      Var flat = tp.reshape(logits, {b.B * b.L, mc.output_vocab()});
      BceResult loss = bce_with_logits(tp, flat, b.targets, b.row_mask);
      if (!std::isfinite(loss.value))
        throw Diverged("non-finite loss at step " + std::to_string(adam.step + 1) +
                       "; last checkpoint retained");
      tp.backward(loss.node);
      auto grads = collect_grads(tp, bp);
      if (cfg.clip_norm > 0) clip_global_norm(grads, cfg.clip_norm);
      const double lr = lr_at(cfg.schedule, adam.step + 1);
      adam_step(params, grads, adam, lr);
      loss_accum += loss.value;
      ++loss_batches;
    }
    state.global_step = adam.step;

    const bool do_eval = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.max_epochs;
    if (!do_eval) continue;
    const auto [acc, vloss] = validate_split(mc, params, valid_samples, cfg.batch_size);
    state.history.emplace_back(adam.step, acc);
    const double mean_loss = loss_batches ? loss_accum / double(loss_batches) : 0.0;
    loss_accum = 0.0;
    loss_batches = 0;
    metrics << adam.step << "," << fmt_sig(lr_at(cfg.schedule, std::max<int64_t>(adam.step, 1)), 8)
            << "," << fmt_double(mean_loss, 6) << "," << fmt_double(acc, 6) << "\n";
    metrics.flush();
    if (log)
      (*log) << "epoch " << epoch + 1 << " step " << adam.step << " train_loss "
             << fmt_double(mean_loss, 4) << " valid_acc " << fmt_double(acc, 4) << std::endl;
    if (acc > state.best_valid_acc ||
        (acc == state.best_valid_acc && vloss < state.best_valid_loss)) {
      state.best_valid_acc = acc;
      state.best_valid_loss = vloss;
      save_checkpoint(res.best_path, snapshot(epoch + 1));
    }
    save_checkpoint(res.last_path, snapshot(epoch + 1));
  }
  res.best_valid_acc = state.best_valid_acc;
  res.best_valid_loss = state.best_valid_loss;
  res.steps = adam.step;
  return res;
}

}  // namespace dyck
