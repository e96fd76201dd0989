#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/autodiff.hpp"
#include "dyck/params.hpp"

namespace dyck {

enum class ScheduleMode { noam, fixed };

inline std::string to_string(ScheduleMode m) { return m == ScheduleMode::noam ? "noam" : "fixed"; }
inline ScheduleMode schedule_mode_from_string(const std::string& s) {
  if (s == "noam") return ScheduleMode::noam;
  if (s == "fixed") return ScheduleMode::fixed;
  throw Error("unknown schedule mode: " + s);
}

struct ScheduleConfig {
  ScheduleMode mode = ScheduleMode::noam;
  double const_factor = 0.1;
  int64_t warmup = 10000;

  nlohmann::json to_json() const {
    return {{"mode", to_string(mode)}, {"const", const_factor}, {"warmup", warmup}};
  }
  static ScheduleConfig from_json(const nlohmann::json& js) {
    ScheduleConfig c;
    c.mode = schedule_mode_from_string(js.at("mode").get<std::string>());
    c.const_factor = js.at("const").get<double>();
    c.warmup = js.at("warmup").get<int64_t>();
    if (c.const_factor <= 0) throw Error("schedule: const must be > 0");
    if (c.warmup < 1) throw Error("schedule: warmup must be >= 1");
    return c;
  }
};

// eta = const * min(itr^-0.5, itr * warmup^-1.5); rises linearly to the knee
// at itr = warmup, then decays as inverse square root. Fixed mode returns
// the constant unchanged.
inline double lr_at(const ScheduleConfig& s, int64_t itr) {
  if (itr < 1) throw NonPositiveIteration("itr = " + std::to_string(itr));
  if (s.mode == ScheduleMode::fixed) return s.const_factor;
  const double i = static_cast<double>(itr);
  const double w = static_cast<double>(s.warmup);
  return s.const_factor * std::min(1.0 / std::sqrt(i), i / (w * std::sqrt(w)));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const ParamSet& ps) {
    AdamState st;
    st.m.reserve(ps.size());
    st.v.reserve(ps.size());
    for (const auto& t : ps.tensors) {
      st.m.push_back(Tensor::zeros(t.shape));
      st.v.push_back(Tensor::zeros(t.shape));
    }
    return st;
  }
};

// Bias-corrected Adam update; increments the step once per call.
inline void adam_step(ParamSet& params, const std::vector<Tensor>& grads, AdamState& st,
                      double lr, const AdamConfig& cfg = {}) {
  if (grads.size() != params.size() || st.m.size() != params.size())
    throw ShapeMismatch("adam_step: parameter/gradient/state counts disagree");
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params.tensors[i];
    const Tensor& g = grads[i];
    if (!same_shape(w, g) || !same_shape(w, st.m[i]))
      throw ShapeMismatch("adam_step: shape mismatch at " + params.names[i]);
    float* wp = w.data.data();
    float* mp = st.m[i].data.data();
    float* vp = st.v[i].data.data();
    const float* gp = g.data.data();
    const int64_t n = w.numel();
    for (int64_t j = 0; j < n; ++j) {
      const double gj = gp[j];
      const double mj = cfg.beta1 * mp[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * vp[j] + (1.0 - cfg.beta2) * gj * gj;
      mp[j] = static_cast<float>(mj);
      vp[j] = static_cast<float>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      wp[j] = static_cast<float>(wp[j] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

// Global-norm gradient clipping; a no-op when max_norm <= 0. Returns the
// pre-clip norm.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (float v : g.data) sq += double(v) * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm && norm > 0) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& g : grads)
      for (float& v : g.data) v *= s;
  }
  return norm;
}

// Multi-label binary cross-entropy over logits, averaged over unmasked
// positions. The per-element stable form is
//   max(z,0) - z*t + log1p(exp(-|z|)),
// and the gradient is (sigmoid(z) - t) * mask / count. The sum is carried
// in float64; `value` keeps that precision while `node` seeds the tape.
struct BceResult {
  Var node;
  double value = 0.0;
};

inline BceResult bce_with_logits(Tape& tp, Var logits_v, const Tensor& targets,
                                 const Tensor& row_mask) {
  const Tensor& Z = tp.value(logits_v);
  if (!same_shape(Z, targets))
    throw ShapeMismatch("bce: logits " + shape_str(Z) + " vs targets " + shape_str(targets));
  const int C = Z.cols();
  const int64_t rows = Z.rows();
  if (row_mask.numel() != rows)
    throw ShapeMismatch("bce: mask covers " + std::to_string(row_mask.numel()) + " rows, need " +
                        std::to_string(rows));
  double count = 0.0;
  for (float m : row_mask.data) count += m != 0.0f ? 1.0 : 0.0;
  if (count == 0.0) throw AllMasked("bce: every position is masked");

  double total = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    if (row_mask.data[static_cast<size_t>(r)] == 0.0f) continue;
    for (int c = 0; c < C; ++c) {
      const double z = Z.data[static_cast<size_t>(r * C + c)];
      const double t = targets.data[static_cast<size_t>(r * C + c)];
      total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
  }
  const double loss = total / count;

  const bool ng = tp.needs(logits_v);
  auto out_ptr = std::make_shared<Var>();
  auto aux = std::make_shared<std::pair<Tensor, Tensor>>(targets, row_mask);
  Var node = tp.push(
      Tensor::full({1}, static_cast<float>(loss)), ng,
      ng ? std::function<void(Tape&)>([logits_v, C, rows, count, aux, out_ptr](Tape& tp2) {
        const float gseed = tp2.node(*out_ptr).grad.data[0];
        const Tensor& Z = tp2.value(logits_v);
        Tensor& dZ = tp2.grad_buf(logits_v);
        const Tensor& tg = aux->first;
        const Tensor& mk = aux->second;
        for (int64_t r = 0; r < rows; ++r) {
          if (mk.data[static_cast<size_t>(r)] == 0.0f) continue;
          for (int c = 0; c < C; ++c) {
            const size_t i = static_cast<size_t>(r * C + c);
            const double z = Z.data[i];
            const double sig = 1.0 / (1.0 + std::exp(-z));
            dZ.data[i] += static_cast<float>(gseed * (sig - tg.data[i]) / count);
          }
        }
      })
         : nullptr);
  *out_ptr = node;
  return {node, loss};
}

// Reference evaluation of the loss from raw tensors (no tape); used by
// logging and as the naive-form cross-check target in tests.
inline double bce_value(const Tensor& logits, const Tensor& targets, const Tensor& row_mask) {
  Tape tp;
  Var z = tp.leaf(logits, false);
  return bce_with_logits(tp, z, targets, row_mask).value;
}

}  // namespace dyck
