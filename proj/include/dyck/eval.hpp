#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/batch.hpp"
#include "dyck/model.hpp"
#include "dyck/util.hpp"

namespace dyck {

// Prediction rows per sample, aligned with the model's position frame:
// length rows for - variants, length+1 (T row first) for + variants.
using Predictor =
    std::function<std::vector<std::vector<KHot>>(const std::vector<DyckSample>&)>;

inline Predictor model_predictor(const ModelConfig& cfg, const ParamSet& ps,
                                 int batch_size = 32) {
  return [cfg, &ps, batch_size](const std::vector<DyckSample>& samples) {
    const Alphabet a = cfg.alphabet();
    std::vector<std::vector<KHot>> out(samples.size());
    auto batches =
        make_batches(samples, a, batch_size, cfg.use_start_symbol(), Rng(0), /*shuffle=*/false);
    for (const auto& b : batches) {
      Tape tp;
      BoundParams bp = bind_params(tp, ps, false);
      Var logits = batch_forward(tp, cfg, bp, b);
      const Tensor& lg = tp.value(logits);  // [B, L, C]
      const int C = cfg.output_vocab();
      for (int r = 0; r < b.B; ++r) {
        int real = 0;
        while (real < b.L && b.mask[static_cast<size_t>(r) * b.L + real]) ++real;
        Tensor rows = Tensor::zeros({real, C});
        std::copy_n(lg.data.begin() + (static_cast<int64_t>(r) * b.L) * C,
                    static_cast<size_t>(real) * C, rows.data.begin());
        out[static_cast<size_t>(b.sample_idx[static_cast<size_t>(r)])] = predict_sets(rows);
      }
    }
    return out;
  };
}

// Emits each sample's targets as confident logits; thresholding recovers the
// targets exactly. `invert` flips every bit (the anti-oracle).
inline Predictor oracle_predictor(bool has_start, bool invert = false) {
  return [has_start, invert](const std::vector<DyckSample>& samples) {
    std::vector<std::vector<KHot>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
      std::vector<KHot> rows;
      if (has_start && !s.targets.empty()) {
        KHot t_row(s.targets[0].size(), invert ? 1 : 0);
        const int n = static_cast<int>(s.targets[0].size()) / 2;
        for (int i = 0; i < n; ++i) t_row[static_cast<size_t>(i)] = invert ? 0 : 1;
        rows.push_back(std::move(t_row));
      }
      for (const auto& t : s.targets) {
        KHot r = t;
        if (invert)
          for (auto& b : r) b = b ? 0 : 1;
        rows.push_back(std::move(r));
      }
      out.push_back(std::move(rows));
    }
    return out;
  };
}

// Expected rows in the predictor's frame.
inline std::vector<KHot> expected_rows(const DyckSample& s, int n, bool has_start) {
  std::vector<KHot> rows;
  rows.reserve(s.targets.size() + (has_start ? 1 : 0));
  if (has_start) {
    KHot t_row(static_cast<size_t>(2 * n), 0);
    for (int i = 0; i < n; ++i) t_row[static_cast<size_t>(i)] = 1;
    rows.push_back(std::move(t_row));
  }
  rows.insert(rows.end(), s.targets.begin(), s.targets.end());
  return rows;
}

// First mispredicted row mapped to token coordinates: the T row counts as
// position 0 so the +/- variants share one axis. nullopt when fully correct.
inline std::optional<int> failure_position(const std::vector<KHot>& predicted,
                                           const DyckSample& s, int n, bool has_start) {
  const auto expect = expected_rows(s, n, has_start);
  if (predicted.size() != expect.size())
    throw ShapeMismatch("failure_position: predicted " + std::to_string(predicted.size()) +
                        " rows, expected " + std::to_string(expect.size()));
  for (size_t r = 0; r < expect.size(); ++r)
    if (predicted[r] != expect[r])
      return std::max(0, static_cast<int>(r) - (has_start ? 1 : 0));
  return std::nullopt;
}

struct ErrorRecord {
  int seq_id = 0;
  int f_p = 0;
  int d_p = 0;
  std::optional<int> d_h;  // only when the failing token is a closer
};

struct LenBin {
  int lo = 0, hi = 0;
  int count = 0;
  int correct = 0;
  double accuracy() const { return count ? double(correct) / count : 0.0; }
};

struct DepthAcc {
  int64_t total = 0;
  int64_t correct = 0;
  double accuracy() const { return total ? double(correct) / total : 0.0; }
};

struct EvalReport {
  int total = 0;
  int correct = 0;
  int band_lo = 0, band_hi = 0;  // observed length range
  std::map<int, DepthAcc> by_depth;
  std::vector<LenBin> len_bins;
  std::vector<ErrorRecord> errors;

  double seq_accuracy() const { return total ? double(correct) / total : 0.0; }

  nlohmann::json to_json() const {
    nlohmann::json js;
    js["total"] = total;
    js["correct"] = correct;
    js["seq_accuracy"] = seq_accuracy();
    js["band_lo"] = band_lo;
    js["band_hi"] = band_hi;
    js["by_depth"] = nlohmann::json::array();
    for (const auto& [d, acc] : by_depth)
      js["by_depth"].push_back(
          {{"depth", d}, {"total", acc.total}, {"correct", acc.correct}, {"accuracy", acc.accuracy()}});
    js["len_bins"] = nlohmann::json::array();
    for (const auto& b : len_bins)
      js["len_bins"].push_back(
          {{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"correct", b.correct}, {"accuracy", b.accuracy()}});
    js["errors"] = nlohmann::json::array();
    for (const auto& e : errors) {
      nlohmann::json row = {{"seq_id", e.seq_id}, {"f_p", e.f_p}, {"d_p", e.d_p}};
      if (e.d_h) row["d_h"] = *e.d_h;
      js["errors"].push_back(std::move(row));
    }
    return js;
  }
};

struct EvalOptions {
  int len_bin_width = 5;
  bool collect_errors = true;
  bool by_depth = true;
};

// Depth a symbol operates at: opens sit at the depth they create, closes at
// the depth they close from (one above the post-pop profile value).
inline std::vector<int> operating_depths(const DyckSample& s, const Alphabet& a) {
  const std::vector<int> prof = depth_profile(s.tokens, a);
  std::vector<int> out(prof.size());
  for (size_t i = 0; i < prof.size(); ++i)
    out[i] = a.is_close(s.tokens[i]) ? prof[i] + 1 : prof[i];
  return out;
}

inline EvalReport evaluate(const Predictor& predict, const std::vector<DyckSample>& samples,
                           int n, bool has_start, const EvalOptions& opts = {}) {
  EvalReport rep;
  if (samples.empty()) return rep;
  const Alphabet a = Alphabet::make(n, false);
  const auto predictions = predict(samples);
  if (predictions.size() != samples.size())
    throw ShapeMismatch("evaluate: predictor returned wrong sample count");

  std::map<std::pair<int, int>, LenBin> bins;
  rep.band_lo = samples[0].length;
  rep.band_hi = samples[0].length;
  for (size_t i = 0; i < samples.size(); ++i) {
    const DyckSample& s = samples[i];
    if (static_cast<int>(s.targets.empty() ? 0 : s.targets[0].size()) != 2 * n)
      throw VocabMismatch("sample " + std::to_string(i) + " has target width " +
                          std::to_string(s.targets.empty() ? 0 : s.targets[0].size()) +
                          ", model expects " + std::to_string(2 * n));
    rep.band_lo = std::min(rep.band_lo, s.length);
    rep.band_hi = std::max(rep.band_hi, s.length);
    const auto& rows = predictions[i];
    const auto expect = expected_rows(s, n, has_start);
    const auto fp = failure_position(rows, s, n, has_start);
    ++rep.total;
    const int lo = s.length / opts.len_bin_width * opts.len_bin_width;
    LenBin& bin = bins[{lo, lo + opts.len_bin_width - 1}];
    bin.lo = lo;
    bin.hi = lo + opts.len_bin_width - 1;
    ++bin.count;
    if (!fp) {
      ++rep.correct;
      ++bin.correct;
    } else if (opts.collect_errors) {
      ErrorRecord er;
      er.seq_id = static_cast<int>(i);
      er.f_p = *fp;
      const auto depths = operating_depths(s, a);
      er.d_p = depths[static_cast<size_t>(*fp)];
      if (a.is_close(s.tokens[static_cast<size_t>(*fp)]))
        er.d_h = distance_to_head(s.tokens, *fp, a);
      rep.errors.push_back(std::move(er));
    }
    if (opts.by_depth) {
      const auto depths = operating_depths(s, a);
      const int extra = has_start ? 1 : 0;
      for (int p = 0; p < s.length; ++p) {
        DepthAcc& acc = rep.by_depth[depths[static_cast<size_t>(p)]];
        ++acc.total;
        if (rows[static_cast<size_t>(p + extra)] == expect[static_cast<size_t>(p + extra)])
          ++acc.correct;
      }
    }
  }
  for (auto& [k, b] : bins) rep.len_bins.push_back(b);
  return rep;
}

// ---- report artifacts ----

inline void write_band_csv(const std::vector<std::pair<std::string, EvalReport>>& reports,
                           const std::string& path) {
  std::string csv = "split,band_lo,band_hi,count,correct,seq_accuracy\n";
  for (const auto& [name, r] : reports)
    csv += name + "," + std::to_string(r.band_lo) + "," + std::to_string(r.band_hi) + "," +
           std::to_string(r.total) + "," + std::to_string(r.correct) + "," +
           fmt_double(r.seq_accuracy(), 6) + "\n";
  write_file(path, csv);
}

inline void write_depth_csv(const EvalReport& r, const std::string& path) {
  std::string csv = "depth,positions,correct,accuracy\n";
  for (const auto& [d, acc] : r.by_depth)
    csv += std::to_string(d) + "," + std::to_string(acc.total) + "," +
           std::to_string(acc.correct) + "," + fmt_double(acc.accuracy(), 6) + "\n";
  write_file(path, csv);
}

inline void write_scatter_csv(const EvalReport& r, const std::string& path) {
  std::string csv = "seq_id,f_p,d_p,d_h\n";
  for (const auto& e : r.errors)
    csv += std::to_string(e.seq_id) + "," + std::to_string(e.f_p) + "," + std::to_string(e.d_p) +
           "," + (e.d_h ? std::to_string(*e.d_h) : std::string()) + "\n";
  write_file(path, csv);
}

}  // namespace dyck
