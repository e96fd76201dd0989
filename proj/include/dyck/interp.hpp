#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dyck/alphabet.hpp"
#include "dyck/sa.hpp"
#include "dyck/util.hpp"

namespace dyck {

struct SimilarityMap {
  int layer = 0;  // 1-based
  Tensor matrix;  // [P, P], symmetric, unit diagonal
  std::vector<std::string> labels;
};

// Pairwise cosine similarity between the representations entering the given
// attention layer (1-based: 1 = embeddings, 2 = output of the first block).
inline SimilarityMap cosine_map(const AttentionTrace& trace, int layer,
                                const std::vector<std::string>& labels = {}) {
  if (layer < 1 || layer > static_cast<int>(trace.layers.size()))
    throw MissingTrace("cosine_map: layer " + std::to_string(layer) + " of " +
                       std::to_string(trace.layers.size()));
  const Tensor& X = trace.layers[static_cast<size_t>(layer - 1)].input;  // [P, d]
  const int P = X.shape[0], d = X.shape[1];
  std::vector<double> norms(static_cast<size_t>(P));
  for (int i = 0; i < P; ++i) {
    double sq = 0;
    for (int j = 0; j < d; ++j) {
      const double v = X.data[static_cast<size_t>(i) * d + j];
      sq += v * v;
    }
    norms[static_cast<size_t>(i)] = std::sqrt(sq);
    if (norms[static_cast<size_t>(i)] < 1e-12)
      throw ZeroVector("position " + std::to_string(i) + " has zero representation");
  }
  SimilarityMap sm;
  sm.layer = layer;
  sm.labels = labels;
  sm.matrix = Tensor::zeros({P, P});
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < P; ++j) {
      double dot = 0;
      for (int k = 0; k < d; ++k)
        dot += double(X.data[static_cast<size_t>(i) * d + k]) *
               X.data[static_cast<size_t>(j) * d + k];
      sm.matrix.data[static_cast<size_t>(i) * P + j] =
          static_cast<float>(dot / (norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)]));
    }
  return sm;
}

inline double round_sig(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return std::strtod(buf, nullptr);
}

// Trace artifact: tokens, per-layer attention maps and input-cosine maps,
// floats rounded to 6 significant digits.
inline nlohmann::json trace_to_json(const std::vector<TokenId>& tokens,
                                    const AttentionTrace& trace, const Alphabet& a) {
  nlohmann::json js;
  js["tokens"] = nlohmann::json::array();
  std::vector<std::string> labels;
  for (TokenId t : tokens) {
    js["tokens"].push_back(a.glyph(t));
    labels.push_back(a.glyph(t));
  }
  js["layers"] = nlohmann::json::array();
  for (size_t l = 0; l < trace.layers.size(); ++l) {
    const auto& layer = trace.layers[l];
    nlohmann::json jl;
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : layer.attention) {
      const int P = h.shape[0];
      nlohmann::json rows = nlohmann::json::array();
      for (int q = 0; q < P; ++q) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < P; ++k)
          row.push_back(round_sig(h.data[static_cast<size_t>(q) * P + k]));
        rows.push_back(std::move(row));
      }
      heads.push_back(std::move(rows));
    }
    jl["attention"] = std::move(heads);
    const SimilarityMap sm = cosine_map(trace, static_cast<int>(l) + 1, labels);
    const int P = sm.matrix.shape[0];
    nlohmann::json cos = nlohmann::json::array();
    for (int q = 0; q < P; ++q) {
      nlohmann::json row = nlohmann::json::array();
      for (int k = 0; k < P; ++k)
        row.push_back(round_sig(sm.matrix.data[static_cast<size_t>(q) * P + k]));
      cos.push_back(std::move(row));
    }
    jl["input_cosine"] = std::move(cos);
    js["layers"].push_back(std::move(jl));
  }
  return js;
}

inline void export_trace(const std::vector<TokenId>& tokens, const AttentionTrace& trace,
                         const Alphabet& a, const std::string& path) {
  write_file(path, trace_to_json(tokens, trace, a).dump() + "\n");
}

inline AttentionTrace trace_from_json(const nlohmann::json& js) {
  AttentionTrace trace;
  for (const auto& jl : js.at("layers")) {
    AttentionTrace::Layer layer;
    for (const auto& jh : jl.at("attention")) {
      const int P = static_cast<int>(jh.size());
      Tensor head(std::vector<int>{P, P});
      for (int q = 0; q < P; ++q)
        for (int k = 0; k < P; ++k)
          head.data[static_cast<size_t>(q) * P + k] = jh.at(q).at(k).get<float>();
      layer.attention.push_back(std::move(head));
    }
    trace.layers.push_back(std::move(layer));
  }
  return trace;
}

// ---- SVG heatmaps ----

struct HeatmapStyle {
  bool diverging = false;  // false: white->black over [0,1]; true: blue-white-red over [-1,1]
  int cell = 24;
  int margin = 34;
};

inline std::string heatmap_color(float v, bool diverging) {
  auto channel = [](double x) {
    const int c = static_cast<int>(std::lround(255.0 * std::clamp(x, 0.0, 1.0)));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02x", c);
    return std::string(buf);
  };
  if (!diverging) {
    const double g = 1.0 - std::clamp(double(v), 0.0, 1.0);
    return "#" + channel(g) + channel(g) + channel(g);
  }
  const double x = std::clamp(double(v), -1.0, 1.0);
  // blue (-1) -> white (0) -> red (+1)
  const double r = x >= 0 ? 1.0 : 1.0 + x;
  const double b = x <= 0 ? 1.0 : 1.0 - x;
  const double g = 1.0 - std::abs(x);
  return "#" + channel(r) + channel(g) + channel(b);
}

// Standalone SVG grid with token tick labels on both axes.
inline void render_heatmap(const Tensor& matrix, const std::vector<std::string>& labels,
                           const std::string& path, const HeatmapStyle& style = {}) {
  if (matrix.rank() != 2 || matrix.shape[0] != matrix.shape[1])
    throw ShapeMismatch("render_heatmap: matrix must be square, got " + shape_str(matrix));
  const int P = matrix.shape[0];
  const int cell = style.cell, margin = style.margin;
  const int size = margin + P * cell + 8;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
         std::to_string(size) + "\" height=\"" + std::to_string(size) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int q = 0; q < P; ++q)
    for (int k = 0; k < P; ++k) {
      const float v = matrix.data[static_cast<size_t>(q) * P + k];
      svg += "<rect x=\"" + std::to_string(margin + k * cell) + "\" y=\"" +
             std::to_string(margin + q * cell) + "\" width=\"" + std::to_string(cell) +
             "\" height=\"" + std::to_string(cell) + "\" fill=\"" +
             heatmap_color(v, style.diverging) + "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    }
  for (int i = 0; i < P; ++i) {
    const std::string label =
        i < static_cast<int>(labels.size()) ? labels[static_cast<size_t>(i)] : std::to_string(i);
    svg += "<text x=\"" + std::to_string(margin + i * cell + cell / 2) + "\" y=\"" +
           std::to_string(margin - 8) +
           "\" font-size=\"12\" font-family=\"monospace\" text-anchor=\"middle\">" + label +
           "</text>\n";
    svg += "<text x=\"" + std::to_string(margin - 8) + "\" y=\"" +
           std::to_string(margin + i * cell + cell / 2 + 4) +
           "\" font-size=\"12\" font-family=\"monospace\" text-anchor=\"end\">" + label +
           "</text>\n";
  }
  svg += "</svg>\n";
  write_file(path, svg);
}

}  // namespace dyck
