#pragma once

#include <algorithm>
#include <map>
#include <vector>

#include "dyck/model.hpp"
#include "dyck/oracle.hpp"
#include "dyck/rng.hpp"

namespace dyck {

// Padded token batch with position mask and k-hot targets. For + variants
// position 0 holds T with the empty-stack target (all opens). Pad ids sit
// after the real positions and carry zero mask and zero targets.
struct Batch {
  int B = 0;
  int L = 0;  // padded length
  std::vector<int> ids;       // [B * L]
  std::vector<uint8_t> mask;  // [B * L], 1 on real positions
  Tensor targets;             // [B * L, 2n]
  Tensor row_mask;            // [B * L], float copy of mask for the loss
  std::vector<int> sample_idx;  // original sample index per row
  int pad_id = -1;
};

constexpr int kLengthBucketWidth = 8;

// Shuffles samples, buckets them by padded length (width-8 buckets) to limit
// padding, cuts batches inside each bucket, then shuffles the batch order.
// Fully determined by the rng seed.
inline std::vector<Batch> make_batches(const std::vector<DyckSample>& samples,
                                       const Alphabet& a, int batch_size, bool start_symbol,
                                       Rng rng, bool shuffle = true) {
  if (batch_size < 1) throw Error("make_batches: batch size must be >= 1");
  if (start_symbol && !a.has_start) throw Error("make_batches: alphabet lacks T");
  const int n_out = a.output_vocab();
  const int pad_id = a.input_vocab();
  const int extra = start_symbol ? 1 : 0;

  std::vector<int> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  if (shuffle) rng.shuffle(order);

  std::map<int, std::vector<int>> buckets;  // bucket key -> sample indices
  for (int idx : order) {
    const int len = samples[static_cast<size_t>(idx)].length + extra;
    buckets[(len - 1) / kLengthBucketWidth].push_back(idx);
  }

  std::vector<Batch> out;
  for (auto& [key, members] : buckets) {
    for (size_t at = 0; at < members.size(); at += static_cast<size_t>(batch_size)) {
      const size_t hi = std::min(members.size(), at + static_cast<size_t>(batch_size));
      Batch b;
      b.B = static_cast<int>(hi - at);
      b.pad_id = pad_id;
      int max_len = 1;
      for (size_t i = at; i < hi; ++i)
        max_len = std::max(max_len, samples[static_cast<size_t>(members[i])].length + extra);
      b.L = max_len;
      b.ids.assign(static_cast<size_t>(b.B) * b.L, pad_id);
      b.mask.assign(static_cast<size_t>(b.B) * b.L, 0);
      b.targets = Tensor::zeros({b.B * b.L, n_out});
      b.row_mask = Tensor::zeros({b.B * b.L});
      for (size_t i = at; i < hi; ++i) {
        const int row = static_cast<int>(i - at);
        const DyckSample& s = samples[static_cast<size_t>(members[i])];
        b.sample_idx.push_back(members[i]);
        int pos = 0;
        if (start_symbol) {
          b.ids[static_cast<size_t>(row) * b.L] = a.start_id();
          // target after consuming only T: the empty stack admits all opens
          for (int t = 0; t < a.n; ++t)
            b.targets.data[(static_cast<size_t>(row) * b.L) * n_out + a.open_id(t)] = 1.0f;
          pos = 1;
        }
        for (int t = 0; t < s.length; ++t) {
          const size_t flat = static_cast<size_t>(row) * b.L + pos + t;
          b.ids[flat] = s.tokens[static_cast<size_t>(t)];
          for (int c = 0; c < n_out; ++c)
            b.targets.data[flat * n_out + c] =
                static_cast<float>(s.targets[static_cast<size_t>(t)][static_cast<size_t>(c)]);
        }
        for (int p = 0; p < s.length + extra; ++p) {
          b.mask[static_cast<size_t>(row) * b.L + p] = 1;
          b.row_mask.data[static_cast<size_t>(row) * b.L + p] = 1.0f;
        }
      }
      out.push_back(std::move(b));
    }
  }
  if (shuffle) rng.shuffle(out);
  return out;
}

// Tape forward over one batch for either architecture.
inline Var batch_forward(Tape& tp, const ModelConfig& c, const BoundParams& bp, const Batch& b) {
  if (c.kind == ModelKind::SA) return sa_forward_tape(tp, c.sa, bp, b.ids, b.B, b.L).logits;
  return lstm_forward_tape(tp, c.lstm, bp, b.ids, b.B, b.L).logits;
}

}  // namespace dyck
