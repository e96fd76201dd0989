// Command-line front end: gen | train | eval | compat | inspect | params.
// Exit codes: 2 usage, 3 data, 4 training, 5 model/metric mismatch,
// 6 invalid input word.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "dyck/dyck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;
constexpr int kExitModelMismatch = 5;
constexpr int kExitInputWord = 6;

// Every subcommand drops a run.json beside its artifacts so any output can
// be regenerated from the recorded flags and seed.
void write_run_json(const std::string& dir, const std::string& command, const json& flags) {
  json js;
  js["tool"] = "dycklab";
  js["command"] = command;
  js["flags"] = flags;
  dyck::write_file((fs::path(dir) / "run.json").string(), js.dump(2) + "\n");
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

std::vector<std::pair<int, int>> parse_bands(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) {
        const auto colon = cur.find(':');
        if (colon == std::string::npos) throw CLI::ValidationError("--bands expects lo:hi pairs");
        out.emplace_back(std::stoi(cur.substr(0, colon)), std::stoi(cur.substr(colon + 1)));
      }
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return out;
}

int cmd_gen(int n, uint64_t seed, const std::string& out_dir, const std::string& counts_arg,
            const std::string& bands_arg) {
  std::vector<dyck::SplitSpec> specs = dyck::paper_splits();
  if (!bands_arg.empty()) {
    const auto bands = parse_bands(bands_arg);
    std::vector<int> counts(bands.size(), 1000);
    if (!counts_arg.empty()) {
      counts = parse_int_list(counts_arg);
      if (counts.size() != bands.size())
        throw CLI::ValidationError("--counts and --bands must have equal lengths");
    }
    specs.clear();
    static const char* kNames[4] = {"train", "valid", "test_a", "test_b"};
    for (size_t i = 0; i < bands.size(); ++i)
      specs.push_back({bands.size() == 4 ? kNames[i] : "split" + std::to_string(i),
                       counts[i], bands[i].first, bands[i].second});
  } else if (!counts_arg.empty()) {
    const auto counts = parse_int_list(counts_arg);
    if (counts.size() != specs.size())
      throw CLI::ValidationError("--counts expects 4 values for the default splits");
    for (size_t i = 0; i < counts.size(); ++i) specs[i].count = counts[i];
  }

  const dyck::DatasetManifest man = dyck::build_splits(n, seed, specs, out_dir);
  std::printf("wrote %s\n", (fs::path(out_dir) / "manifest.json").string().c_str());
  std::printf("%-8s %7s %9s %9s %8s %6s %10s\n", "split", "count", "band", "mean_len", "dups",
              "all_n", "sha256[:8]");
  for (const auto& ref : man.splits) {
    const auto samples = dyck::load_split(man, ref.spec.name, out_dir);
    const auto st = dyck::compute_stats(samples, n);
    dyck::write_stats_csv(st, out_dir, ref.spec.name);
    std::printf("%-8s %7d %4d-%-4d %9.2f %8d %6.3f %10s\n", ref.spec.name.c_str(), st.total,
                ref.spec.min_len, ref.spec.max_len, st.mean_length(), st.duplicate_count,
                st.frac_all_types(), ref.sha256.substr(0, 8).c_str());
  }
  write_run_json(out_dir, "gen",
                 {{"n", n}, {"seed", seed}, {"out", out_dir}, {"counts", counts_arg},
                  {"bands", bands_arg}});
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
  dyck::RunConfig cfg;
  try {
    cfg = dyck::RunConfig::load(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cannot load config %s: %s\n", config_path.c_str(), e.what());
    return kExitUsage;
  }
  try {
    const dyck::TrainResult res = dyck::train_run(cfg, resume, &std::cout);
    write_run_json(cfg.checkpoint_dir, "train", {{"config", config_path}, {"resume", resume}});
    std::printf("best_valid_seq_acc: %.6f\n", res.best_valid_acc);
    std::printf("best checkpoint: %s\n", res.best_path.c_str());
    return 0;
  } catch (const dyck::Diverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitTraining;
  } catch (const dyck::HashMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const dyck::TargetMismatch& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const dyck::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}

int cmd_eval(const std::string& ckpt_path, const std::vector<std::string>& split_paths,
             const std::string& out_dir, bool by_depth, bool errors, int bin_width,
             bool oracle, int batch_size) {
  fs::create_directories(out_dir);
  dyck::ModelCheckpoint ck;
  if (!oracle) {
    try {
      ck = dyck::load_checkpoint(ckpt_path);
    } catch (const dyck::Error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitData;
    }
  }
  std::vector<std::pair<std::string, dyck::EvalReport>> reports;
  json report_js;
  for (const auto& path : split_paths) {
    std::vector<dyck::DyckSample> samples;
    try {
      samples = dyck::SplitReader(path).read_all();
    } catch (const dyck::Error& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitData;
    }
    if (samples.empty()) {
      std::fprintf(stderr, "error: %s is empty\n", path.c_str());
      return kExitData;
    }
    const int split_n = static_cast<int>(samples[0].targets[0].size()) / 2;
    dyck::EvalOptions opts;
    opts.len_bin_width = bin_width;
    dyck::EvalReport rep;
    try {
      if (oracle) {
        rep = dyck::evaluate(dyck::oracle_predictor(false), samples, split_n, false, opts);
      } else {
        if (ck.model.n() != split_n)
          throw dyck::VocabMismatch("checkpoint n=" + std::to_string(ck.model.n()) +
                                    " but split " + path + " has n=" + std::to_string(split_n));
        rep = dyck::evaluate(dyck::model_predictor(ck.model, ck.params, batch_size), samples,
                             split_n, ck.model.use_start_symbol(), opts);
      }
    } catch (const dyck::VocabMismatch& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitModelMismatch;
    }
    const std::string name = fs::path(path).stem().string();
    if (by_depth)
      dyck::write_depth_csv(rep, (fs::path(out_dir) / (name + "_accuracy_by_depth.csv")).string());
    if (errors)
      dyck::write_scatter_csv(rep, (fs::path(out_dir) / (name + "_error_scatter.csv")).string());
    report_js[name] = rep.to_json();
    reports.emplace_back(name, std::move(rep));
  }
  dyck::write_band_csv(reports, (fs::path(out_dir) / "accuracy_by_band.csv").string());
  dyck::write_file((fs::path(out_dir) / "report.json").string(), report_js.dump(2) + "\n");
  write_run_json(out_dir, "eval",
                 {{"ckpt", ckpt_path}, {"splits", split_paths}, {"oracle", oracle},
                  {"bin_width", bin_width}});

  // Table-1 style row: bands across, sequence accuracy in percent.
  std::printf("%-12s", "band");
  for (const auto& [name, rep] : reports)
    std::printf(" %9s", (std::to_string(rep.band_lo) + "-" + std::to_string(rep.band_hi)).c_str());
  std::printf("\n%-12s", "seq_acc %");
  for (const auto& [name, rep] : reports) std::printf(" %9.2f", 100.0 * rep.seq_accuracy());
  std::printf("\n");
  return 0;
}

int cmd_compat(const std::string& ckpt_path, const std::string& split_path,
               const std::string& mode_str, int bin_width, const std::string& out_dir,
               const std::string& corr_report, int layer) {
  fs::create_directories(out_dir);
  dyck::ModelCheckpoint ck;
  try {
    ck = dyck::load_checkpoint(ckpt_path);
  } catch (const dyck::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  if (ck.model.kind != dyck::ModelKind::SA) {
    std::fprintf(stderr, "error: %s is not an attention model\n", ckpt_path.c_str());
    return kExitModelMismatch;
  }
  std::vector<dyck::DyckSample> samples;
  try {
    samples = dyck::SplitReader(split_path).read_all();
  } catch (const dyck::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  const int split_n = samples.empty() ? 0 : static_cast<int>(samples[0].targets[0].size()) / 2;
  if (split_n != ck.model.n()) {
    std::fprintf(stderr, "error: checkpoint n=%d but split has n=%d\n", ck.model.n(), split_n);
    return kExitModelMismatch;
  }
  const dyck::CompatMode mode = dyck::compat_mode_from_string(mode_str);
  const dyck::CompatReport rep =
      dyck::compatibility_curve(ck.model.sa, ck.params, samples, bin_width, layer - 1);
  dyck::write_compat_csv(rep, (fs::path(out_dir) / "compat_curve.csv").string());
  std::printf("sequences: %zu  compatible (%s mode): %.4f\n", rep.seq_bits.size(),
              mode_str.c_str(), rep.overall_frac(mode));
  write_run_json(out_dir, "compat",
                 {{"ckpt", ckpt_path}, {"split", split_path}, {"mode", mode_str},
                  {"bin_width", bin_width}, {"layer", layer}, {"corr", corr_report}});
  if (!corr_report.empty()) {
    try {
      const json js = json::parse(dyck::read_file(corr_report));
      std::vector<dyck::LenBin> acc_bins;
      // accept either a single report object or a map of split reports
      const json* src = js.contains("len_bins") ? &js : nullptr;
      if (!src)
        for (const auto& [k, v] : js.items())
          if (v.contains("len_bins")) {
            for (const auto& b : v.at("len_bins"))
              acc_bins.push_back({b.at("lo").get<int>(), b.at("hi").get<int>(),
                                  b.at("count").get<int>(), b.at("correct").get<int>()});
          }
      if (src)
        for (const auto& b : src->at("len_bins"))
          acc_bins.push_back({b.at("lo").get<int>(), b.at("hi").get<int>(),
                              b.at("count").get<int>(), b.at("correct").get<int>()});
      const double r = dyck::accuracy_compat_correlation(acc_bins, rep.bins, mode);
      std::printf("pearson_r: %.4f\n", r);
    } catch (const dyck::DegenerateSeries& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitModelMismatch;
    } catch (const json::exception& e) {
      std::fprintf(stderr, "error: cannot parse %s: %s\n", corr_report.c_str(), e.what());
      return kExitData;
    }
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& seq, const std::string& out_dir) {
  dyck::ModelCheckpoint ck;
  try {
    ck = dyck::load_checkpoint(ckpt_path);
  } catch (const dyck::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  if (ck.model.kind != dyck::ModelKind::SA) {
    std::fprintf(stderr, "error: %s is not an attention model\n", ckpt_path.c_str());
    return kExitModelMismatch;
  }
  const dyck::Alphabet bare = dyck::Alphabet::make(ck.model.n(), false);
  std::vector<dyck::TokenId> tokens;
  try {
    tokens = bare.encode(seq);
    dyck::annotate_targets(tokens, bare);  // validates the word
  } catch (const dyck::Error& e) {
    std::fprintf(stderr, "error: invalid word: %s\n", e.what());
    return kExitInputWord;
  }
  fs::create_directories(out_dir);
  const dyck::Alphabet model_a = ck.model.alphabet();
  std::vector<dyck::TokenId> input = tokens;
  if (ck.model.use_start_symbol()) input.insert(input.begin(), model_a.start_id());
  const dyck::SAResult r = dyck::sa_forward(ck.model.sa, ck.params, input);

  dyck::export_trace(input, r.trace, model_a, (fs::path(out_dir) / "trace.json").string());
  std::vector<std::string> labels;
  for (dyck::TokenId t : input) labels.push_back(model_a.glyph(t));
  for (size_t l = 0; l < r.trace.layers.size(); ++l) {
    for (size_t h = 0; h < r.trace.layers[l].attention.size(); ++h) {
      dyck::render_heatmap(
          r.trace.layers[l].attention[h], labels,
          (fs::path(out_dir) /
           ("layer" + std::to_string(l + 1) + "_head" + std::to_string(h + 1) + ".svg"))
              .string());
    }
    const dyck::SimilarityMap sm = dyck::cosine_map(r.trace, static_cast<int>(l + 1), labels);
    dyck::HeatmapStyle style;
    style.diverging = true;
    dyck::render_heatmap(sm.matrix, labels,
                         (fs::path(out_dir) / ("cosine_layer" + std::to_string(l + 1) + ".svg"))
                             .string(),
                         style);
  }
  write_run_json(out_dir, "inspect", {{"ckpt", ckpt_path}, {"seq", seq}});
  std::printf("wrote trace.json, %zu attention maps, %zu cosine maps to %s\n",
              r.trace.layers.size() * r.trace.layers[0].attention.size(),
              r.trace.layers.size(), out_dir.c_str());
  return 0;
}

int cmd_params(const std::string& config_path) {
  dyck::RunConfig cfg;
  try {
    cfg = dyck::RunConfig::load(config_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: cannot load config %s: %s\n", config_path.c_str(), e.what());
    return kExitUsage;
  }
  int language_n = cfg.kind == dyck::ModelKind::SA ? cfg.sa.n : cfg.lstm.n;
  if (!cfg.manifest.empty() && fs::exists(cfg.manifest))
    language_n = dyck::DatasetManifest::load(cfg.manifest).language_n;
  const dyck::ModelConfig mc = cfg.model_config(language_n);
  dyck::Rng rng(0);
  const dyck::ParamSet ps = dyck::init_params(mc, rng);
  std::printf("%-14s %-14s %12s\n", "tensor", "shape", "elements");
  for (size_t i = 0; i < ps.size(); ++i)
    std::printf("%-14s %-14s %12lld\n", ps.names[i].c_str(),
                dyck::shape_str(ps.tensors[i]).c_str(), (long long)ps.tensors[i].numel());
  const int64_t total = dyck::count_params(mc);
  std::printf("%-14s %-14s %12lld\n", "total", "(excl pad row)", (long long)total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dyck-n recognition laboratory"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate dataset splits");
  int gen_n = 2;
  uint64_t gen_seed = 1;
  std::string gen_out, gen_counts, gen_bands;
  gen->add_option("--n", gen_n, "bracket-pair count")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--counts", gen_counts, "comma-separated split sizes");
  gen->add_option("--bands", gen_bands, "comma-separated lo:hi length bands");

  // train
  auto* train = app.add_subcommand("train", "train a model from a run config");
  std::string train_config, train_resume;
  train->add_option("--config", train_config, "run config JSON")->required();
  train->add_option("--resume", train_resume, "checkpoint to resume from");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on splits");
  std::string eval_ckpt, eval_out = ".";
  std::vector<std::string> eval_splits;
  bool eval_by_depth = false, eval_errors = false, eval_oracle = false;
  int eval_bin_width = 5, eval_batch = 32;
  eval->add_option("--ckpt", eval_ckpt, "model checkpoint");
  eval->add_option("--split", eval_splits, "split JSONL file(s)")->required();
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--by-depth", eval_by_depth, "write accuracy-by-depth CSV");
  eval->add_flag("--errors", eval_errors, "write error scatter CSV");
  eval->add_flag("--oracle", eval_oracle, "evaluate the target oracle instead of a model");
  eval->add_option("--bin-width", eval_bin_width, "length bin width");
  eval->add_option("--batch-size", eval_batch, "evaluation batch size");

  // compat
  auto* compat = app.add_subcommand("compat", "attention/stack compatibility");
  std::string compat_ckpt, compat_split, compat_mode = "seq", compat_out = ".", compat_corr;
  int compat_bin_width = 5, compat_layer = 2;
  compat->add_option("--ckpt", compat_ckpt, "SA checkpoint")->required();
  compat->add_option("--split", compat_split, "split JSONL file")->required();
  compat->add_option("--mode", compat_mode, "seq or pos")
      ->check(CLI::IsMember({"seq", "pos"}));
  compat->add_option("--bin-width", compat_bin_width, "length bin width");
  compat->add_option("--out", compat_out, "output directory");
  compat->add_option("--corr", compat_corr, "eval report.json for Pearson correlation");
  compat->add_option("--layer", compat_layer, "attention layer to score (1-based)");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "trace and heatmaps for one sequence");
  std::string ins_ckpt, ins_seq, ins_out;
  inspect->add_option("--ckpt", ins_ckpt, "SA checkpoint")->required();
  inspect->add_option("--seq", ins_seq, "Dyck word, without T")->required();
  inspect->add_option("--out", ins_out, "output directory")->required();

  // params
  auto* params = app.add_subcommand("params", "parameter count table for a config");
  std::string params_config;
  params->add_option("--config", params_config, "run config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_n, gen_seed, gen_out, gen_counts, gen_bands);
    if (train->parsed()) return cmd_train(train_config, train_resume);
    if (eval->parsed()) {
      if (!eval_oracle && eval_ckpt.empty()) {
        std::fprintf(stderr, "error: --ckpt is required unless --oracle is given\n");
        return kExitUsage;
      }
      return cmd_eval(eval_ckpt, eval_splits, eval_out, eval_by_depth, eval_errors,
                      eval_bin_width, eval_oracle, eval_batch);
    }
    if (compat->parsed())
      return cmd_compat(compat_ckpt, compat_split, compat_mode, compat_bin_width, compat_out,
                        compat_corr, compat_layer);
    if (inspect->parsed()) return cmd_inspect(ins_ckpt, ins_seq, ins_out);
    if (params->parsed()) return cmd_params(params_config);
  } catch (const dyck::SamplingStalled& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const dyck::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
