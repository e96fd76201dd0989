#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dyck/autodiff.hpp"
#include "dyck/tensor.hpp"

namespace dyck {

// Ordered, named parameter tensors. Order is fixed at construction and
// drives both the init rng stream and checkpoint layout.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::unordered_map<std::string, int> index;

  int add(const std::string& name, Tensor t) {
    if (index.count(name)) throw Error("duplicate parameter " + name);
    index[name] = static_cast<int>(names.size());
    names.push_back(name);
    tensors.push_back(std::move(t));
    return static_cast<int>(names.size()) - 1;
  }

  bool has(const std::string& name) const { return index.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw Error("no parameter named " + name);
    return tensors[static_cast<size_t>(it->second)];
  }
  const Tensor& get(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw Error("no parameter named " + name);
    return tensors[static_cast<size_t>(it->second)];
  }

  size_t size() const { return tensors.size(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += t.numel();
    return n;
  }
};

// Tape handles for every parameter, in ParamSet order.
struct BoundParams {
  std::vector<Var> vars;
  const ParamSet* set = nullptr;

  Var operator[](const std::string& name) const {
    return vars[static_cast<size_t>(set->index.at(name))];
  }
};

inline BoundParams bind_params(Tape& tape, const ParamSet& ps, bool train) {
  BoundParams b;
  b.set = &ps;
  b.vars.reserve(ps.size());
  for (const auto& t : ps.tensors) b.vars.push_back(tape.leaf(t, train));
  return b;
}

// Gradients per parameter after backward; untouched parameters get zeros.
inline std::vector<Tensor> collect_grads(const Tape& tape, const BoundParams& b) {
  std::vector<Tensor> out;
  out.reserve(b.vars.size());
  for (size_t i = 0; i < b.vars.size(); ++i) {
    const Tensor& g = tape.grad(b.vars[i]);
    out.push_back(g.empty() ? Tensor::zeros(b.set->tensors[i].shape) : g);
  }
  return out;
}

}  // namespace dyck
