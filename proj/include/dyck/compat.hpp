#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dyck/eval.hpp"
#include "dyck/oracle.hpp"
#include "dyck/sa.hpp"
#include "dyck/util.hpp"

namespace dyck {

// Argmax with ties broken toward the lowest key index, so compatibility is
// deterministic.
inline int row_argmax(const Tensor& m, int row) {
  const int k = m.shape[1];
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (m.data[static_cast<size_t>(row) * k + j] > m.data[static_cast<size_t>(row) * k + best])
      best = j;
  return best;
}

// A head is compatible when every constrained position (match != -1) puts
// its attention argmax on the matched open. Opens, T, and clause-final
// closes are unconstrained.
inline bool is_compatible_head(const std::vector<TokenId>& tokens, const Tensor& attn,
                               const Alphabet& a) {
  const int P = static_cast<int>(tokens.size());
  if (attn.rank() != 2 || attn.shape[0] != P || attn.shape[1] != P)
    throw ShapeMismatch("is_compatible_head: attention " + shape_str(attn) + " vs " +
                        std::to_string(P) + " tokens");
  const std::vector<int> match = get_match(tokens, a);
  for (int idx = 0; idx < P; ++idx) {
    if (match[static_cast<size_t>(idx)] == -1) continue;
    if (row_argmax(attn, idx) != match[static_cast<size_t>(idx)]) return false;
  }
  return true;
}

enum class CompatMode { AnyHeadSequence, AnyHeadPosition };

inline std::string to_string(CompatMode m) {
  return m == CompatMode::AnyHeadSequence ? "seq" : "pos";
}
inline CompatMode compat_mode_from_string(const std::string& s) {
  if (s == "seq") return CompatMode::AnyHeadSequence;
  if (s == "pos") return CompatMode::AnyHeadPosition;
  throw Error("unknown compat mode: " + s);
}

// Sequence-level compatibility over the layer-2 maps. AnyHeadSequence: one
// head must satisfy every constraint. AnyHeadPosition: each constraint may
// be satisfied by a different head.
inline bool sequence_compatibility(const std::vector<TokenId>& tokens,
                                   const AttentionTrace& trace, CompatMode mode,
                                   const Alphabet& a, int layer_index = 1) {
  if (layer_index >= static_cast<int>(trace.layers.size()))
    throw MissingTrace("trace has " + std::to_string(trace.layers.size()) +
                       " layers, need layer index " + std::to_string(layer_index));
  const auto& heads = trace.layers[static_cast<size_t>(layer_index)].attention;
  if (heads.empty()) throw MissingTrace("layer has no attention heads");
  if (mode == CompatMode::AnyHeadSequence) {
    for (const auto& h : heads)
      if (is_compatible_head(tokens, h, a)) return true;
    return false;
  }
  const std::vector<int> match = get_match(tokens, a);
  for (size_t idx = 0; idx < match.size(); ++idx) {
    if (match[idx] == -1) continue;
    bool ok = false;
    for (const auto& h : heads)
      ok = ok || row_argmax(h, static_cast<int>(idx)) == match[idx];
    if (!ok) return false;
  }
  return true;
}

struct CompatBin {
  int lo = 0, hi = 0;
  int count = 0;
  int compat_seq = 0;
  int compat_pos = 0;
  double frac_seq() const { return count ? double(compat_seq) / count : 0.0; }
  double frac_pos() const { return count ? double(compat_pos) / count : 0.0; }
};

struct CompatReport {
  std::vector<CompatBin> bins;
  std::vector<uint8_t> seq_bits;  // per sample, AnyHeadSequence verdict
  std::vector<uint8_t> pos_bits;

  double overall_frac(CompatMode mode) const {
    if (seq_bits.empty()) return 0.0;
    const auto& bits = mode == CompatMode::AnyHeadSequence ? seq_bits : pos_bits;
    int64_t c = 0;
    for (uint8_t b : bits) c += b;
    return double(c) / double(bits.size());
  }
};

// Per-sequence traces come from single-sequence forwards; both modes are
// scored in one pass and binned by (T-less) sequence length.
inline CompatReport compatibility_curve(const SAConfig& cfg, const ParamSet& ps,
                                        const std::vector<DyckSample>& samples,
                                        int bin_width = 5, int layer_index = 1) {
  CompatReport rep;
  const Alphabet model_a = cfg.alphabet();
  std::map<std::pair<int, int>, CompatBin> bins;
  for (const auto& s : samples) {
    std::vector<TokenId> toks = s.tokens;
    if (cfg.use_start_symbol) toks.insert(toks.begin(), model_a.start_id());
    const SAResult r = sa_forward(cfg, ps, toks);
    const bool cs =
        sequence_compatibility(toks, r.trace, CompatMode::AnyHeadSequence, model_a, layer_index);
    const bool cp =
        sequence_compatibility(toks, r.trace, CompatMode::AnyHeadPosition, model_a, layer_index);
    rep.seq_bits.push_back(cs ? 1 : 0);
    rep.pos_bits.push_back(cp ? 1 : 0);
    const int lo = s.length / bin_width * bin_width;
    CompatBin& b = bins[{lo, lo + bin_width - 1}];
    b.lo = lo;
    b.hi = lo + bin_width - 1;
    ++b.count;
    b.compat_seq += cs ? 1 : 0;
    b.compat_pos += cp ? 1 : 0;
  }
  for (auto& [k, b] : bins) rep.bins.push_back(b);
  return rep;
}

inline void write_compat_csv(const CompatReport& rep, const std::string& path) {
  std::string csv = "len_bin_lo,len_bin_hi,count,frac_compatible_seqmode,frac_compatible_posmode\n";
  for (const auto& b : rep.bins)
    csv += std::to_string(b.lo) + "," + std::to_string(b.hi) + "," + std::to_string(b.count) +
           "," + fmt_double(b.frac_seq(), 6) + "," + fmt_double(b.frac_pos(), 6) + "\n";
  write_file(path, csv);
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 3)
    throw DegenerateSeries("need >= 3 aligned points, got " + std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateSeries("constant series");
  return sxy / std::sqrt(sxx * syy);
}

// Pearson r between per-bin accuracy and per-bin compatibility over bins
// inside [len_lo, len_hi]; bins must align exactly.
inline double accuracy_compat_correlation(const std::vector<LenBin>& acc,
                                          const std::vector<CompatBin>& compat,
                                          CompatMode mode = CompatMode::AnyHeadSequence,
                                          int len_lo = 50, int len_hi = 100) {
  std::map<std::pair<int, int>, double> acc_by_bin;
  for (const auto& b : acc)
    if (b.lo >= len_lo && b.hi <= len_hi) acc_by_bin[{b.lo, b.hi}] = b.accuracy();
  std::vector<double> xs, ys;
  for (const auto& b : compat) {
    auto it = acc_by_bin.find({b.lo, b.hi});
    if (it == acc_by_bin.end()) continue;
    xs.push_back(it->second);
    ys.push_back(mode == CompatMode::AnyHeadSequence ? b.frac_seq() : b.frac_pos());
  }
  return pearson(xs, ys);
}

}  // namespace dyck
