#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "dyck/tensor.hpp"

namespace dyck {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<RowMat>;
using ConstMatView = Eigen::Map<const RowMat>;

inline ConstMatView mat_of(const Tensor& t, int64_t offset, int64_t r, int64_t c) {
  return ConstMatView(t.data.data() + offset, r, c);
}
inline MatView mat_of(Tensor& t, int64_t offset, int64_t r, int64_t c) {
  return MatView(t.data.data() + offset, r, c);
}

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Ops append nodes in creation order; backward() visits
// them once in reverse. Values are float32; reductions and normalization
// statistics accumulate in float64.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily when the node first receives gradient
    bool needs_grad = false;
    std::function<void(Tape&)> backward;
  };

  Var leaf(Tensor value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  // Extension point: modules outside this header (e.g. the loss) add ops
  // through the same mechanism the built-ins use.
  Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> bwd) {
    nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(bwd)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
  const Node& node(Var v) const { return nodes_[static_cast<size_t>(v.id)]; }
  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  bool needs(Var v) const { return node(v).needs_grad; }
  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  Tensor& grad_buf(Var v) {
    Node& nd = node(v);
    if (nd.grad.empty() && nd.value.numel() > 0) nd.grad = Tensor::zeros(nd.value.shape);
    return nd.grad;
  }

  void backward(Var loss) {
    if (consumed_) throw ConsumedTape("backward already ran on this tape");
    if (!loss.valid() || value(loss).numel() != 1)
      throw NonScalarLoss("loss must be a scalar, got " +
                          (loss.valid() ? shape_str(value(loss)) : std::string("invalid var")));
    consumed_ = true;
    grad_buf(loss).data[0] = 1.0f;
    for (int i = loss.id; i >= 0; --i) {
      Node& nd = nodes_[static_cast<size_t>(i)];
      if (nd.backward && nd.needs_grad && !nd.grad.empty()) nd.backward(*this);
    }
  }

  void reset() {
    nodes_.clear();
    consumed_ = false;
  }

  // ---- primitive ops ----

  // C[..,m,n] = alpha * op(A)[..,m,k] * op(B)[..,k,n]; leading batch dims
  // must match, or either side may be rank-2 and broadcast across the batch.
  Var matmul(Var av, Var bv, bool trans_a = false, bool trans_b = false, float alpha = 1.0f) {
    const Tensor& A = value(av);
    const Tensor& B = value(bv);
    if (A.rank() < 2 || B.rank() < 2) throw ShapeMismatch("matmul: operands must be rank >= 2");
    const int a0 = A.shape[A.rank() - 2], a1 = A.shape[A.rank() - 1];
    const int b0 = B.shape[B.rank() - 2], b1 = B.shape[B.rank() - 1];
    const int m = trans_a ? a1 : a0, ka = trans_a ? a0 : a1;
    const int kb = trans_b ? b1 : b0, n = trans_b ? b0 : b1;
    if (ka != kb)
      throw ShapeMismatch("matmul: inner dims disagree, " + shape_str(A) + " x " + shape_str(B));
    const int64_t batch_a = A.numel() / (int64_t(a0) * a1);
    const int64_t batch_b = B.numel() / (int64_t(b0) * b1);
    std::vector<int> lead;
    if (A.rank() > 2 && B.rank() > 2) {
      if (!std::equal(A.shape.begin(), A.shape.end() - 2, B.shape.begin(), B.shape.end() - 2) ||
          A.rank() != B.rank())
        throw ShapeMismatch("matmul: batch dims disagree, " + shape_str(A) + " x " + shape_str(B));
      lead.assign(A.shape.begin(), A.shape.end() - 2);
    } else if (A.rank() > 2) {
      lead.assign(A.shape.begin(), A.shape.end() - 2);
    } else if (B.rank() > 2) {
      lead.assign(B.shape.begin(), B.shape.end() - 2);
    }
    const int64_t batch = std::max(batch_a, batch_b);

    std::vector<int> out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor C(out_shape);
    for (int64_t s = 0; s < batch; ++s) {
      auto Cs = mat_of(C, s * int64_t(m) * n, m, n);
      auto As = mat_of(A, (batch_a == 1 ? 0 : s) * int64_t(a0) * a1, a0, a1);
      auto Bs = mat_of(B, (batch_b == 1 ? 0 : s) * int64_t(b0) * b1, b0, b1);
      if (!trans_a && !trans_b)
        Cs.noalias() = alpha * (As * Bs);
      else if (!trans_a && trans_b)
        Cs.noalias() = alpha * (As * Bs.transpose());
      else if (trans_a && !trans_b)
        Cs.noalias() = alpha * (As.transpose() * Bs);
      else
        Cs.noalias() = alpha * (As.transpose() * Bs.transpose());
    }

    const bool ng = needs(av) || needs(bv);
    // the closure needs its own node id; patched in after push
    auto out_ptr = std::make_shared<Var>();
    Var out =
        push(std::move(C), ng,
             ng ? std::function<void(Tape&)>([av, bv, trans_a, trans_b, alpha, a0, a1, b0, b1,
                                              m, n, batch, batch_a, batch_b, out_ptr](Tape& tp) {
                 const Tensor& G = tp.node(*out_ptr).grad;
                 const Tensor& A = tp.value(av);
                 const Tensor& B = tp.value(bv);
                 if (tp.needs(av)) {
                   Tensor& dA = tp.grad_buf(av);
                   for (int64_t s = 0; s < batch; ++s) {
                     auto Gs = mat_of(G, s * int64_t(m) * n, m, n);
                     auto Bs = mat_of(B, (batch_b == 1 ? 0 : s) * int64_t(b0) * b1, b0, b1);
                     auto dAs = mat_of(dA, (batch_a == 1 ? 0 : s) * int64_t(a0) * a1, a0, a1);
                     if (!trans_a) {
                       if (trans_b)
                         dAs.noalias() += alpha * (Gs * Bs);
                       else
                         dAs.noalias() += alpha * (Gs * Bs.transpose());
                     } else {
                       if (trans_b)
                         dAs.noalias() += alpha * (Bs.transpose() * Gs.transpose());
                       else
                         dAs.noalias() += alpha * (Bs * Gs.transpose());
                     }
                   }
                 }
                 if (tp.needs(bv)) {
                   Tensor& dB = tp.grad_buf(bv);
                   for (int64_t s = 0; s < batch; ++s) {
                     auto Gs = mat_of(G, s * int64_t(m) * n, m, n);
                     auto As = mat_of(A, (batch_a == 1 ? 0 : s) * int64_t(a0) * a1, a0, a1);
                     auto dBs = mat_of(dB, (batch_b == 1 ? 0 : s) * int64_t(b0) * b1, b0, b1);
                     if (!trans_b) {
                       if (trans_a)
                         dBs.noalias() += alpha * (As * Gs);
                       else
                         dBs.noalias() += alpha * (As.transpose() * Gs);
                     } else {
                       if (trans_a)
                         dBs.noalias() += alpha * (Gs.transpose() * As.transpose());
                       else
                         dBs.noalias() += alpha * (Gs.transpose() * As);
                     }
                   }
                 }
               })
                : nullptr);
    *out_ptr = out;
    return out;
  }

  // y[..,n] = x[..,k] * w[k,n] + b[n], applied over all leading dims of x.
  Var linear(Var xv, Var wv, Var bv) {
    const Tensor& X = value(xv);
    const Tensor& W = value(wv);
    const Tensor& Bt = value(bv);
    if (X.rank() < 2 || W.rank() != 2 || Bt.rank() != 1)
      throw ShapeMismatch("linear: x rank>=2, w rank 2, b rank 1");
    const int k = X.cols(), n = W.shape[1];
    if (W.shape[0] != k || Bt.shape[0] != n)
      throw ShapeMismatch("linear: " + shape_str(X) + " x " + shape_str(W) + " + " + shape_str(Bt));
    const int64_t rows = X.rows();
    std::vector<int> out_shape = X.shape;
    out_shape.back() = n;
    Tensor Y(out_shape);
    {
      auto Xm = mat_of(X, 0, rows, k);
      auto Wm = mat_of(W, 0, k, n);
      auto Ym = mat_of(Y, 0, rows, n);
      Ym.noalias() = Xm * Wm;
      Ym.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(Bt.data.data(), n);
    }
    const bool ng = needs(xv) || needs(wv) || needs(bv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, wv, bv, rows, k, n, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     auto Gm = mat_of(G, 0, rows, n);
                     if (tp.needs(xv)) {
                       auto Wm = mat_of(tp.value(wv), 0, k, n);
                       mat_of(tp.grad_buf(xv), 0, rows, k).noalias() += Gm * Wm.transpose();
                     }
                     if (tp.needs(wv)) {
                       auto Xm = mat_of(tp.value(xv), 0, rows, k);
                       mat_of(tp.grad_buf(wv), 0, k, n).noalias() += Xm.transpose() * Gm;
                     }
                     if (tp.needs(bv)) {
                       Tensor& db = tp.grad_buf(bv);
                       Eigen::Map<Eigen::RowVectorXf>(db.data.data(), n) += Gm.colwise().sum();
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var add(Var av, Var bv) {
    const Tensor& A = value(av);
    const Tensor& B = value(bv);
    if (!same_shape(A, B))
      throw ShapeMismatch("add: " + shape_str(A) + " vs " + shape_str(B));
    Tensor C = A;
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
    const bool ng = needs(av) || needs(bv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(C), ng,
                   ng ? std::function<void(Tape&)>([av, bv, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     if (tp.needs(av)) {
                       Tensor& dA = tp.grad_buf(av);
                       for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i];
                     }
                     if (tp.needs(bv)) {
                       Tensor& dB = tp.grad_buf(bv);
                       for (size_t i = 0; i < G.data.size(); ++i) dB.data[i] += G.data[i];
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var mul(Var av, Var bv) {
    const Tensor& A = value(av);
    const Tensor& B = value(bv);
    if (!same_shape(A, B))
      throw ShapeMismatch("mul: " + shape_str(A) + " vs " + shape_str(B));
    Tensor C = A;
    for (size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
    const bool ng = needs(av) || needs(bv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(C), ng,
                   ng ? std::function<void(Tape&)>([av, bv, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     const Tensor& A = tp.value(av);
                     const Tensor& B = tp.value(bv);
                     if (tp.needs(av)) {
                       Tensor& dA = tp.grad_buf(av);
                       for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i] * B.data[i];
                     }
                     if (tp.needs(bv)) {
                       Tensor& dB = tp.grad_buf(bv);
                       for (size_t i = 0; i < G.data.size(); ++i) dB.data[i] += G.data[i] * A.data[i];
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var scale(Var av, float c) {
    Tensor C = value(av);
    for (auto& v : C.data) v *= c;
    const bool ng = needs(av);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(C), ng,
                   ng ? std::function<void(Tape&)>([av, c, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     Tensor& dA = tp.grad_buf(av);
                     for (size_t i = 0; i < G.data.size(); ++i) dA.data[i] += c * G.data[i];
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var sigmoid(Var xv) {
    Tensor Y = value(xv);
    for (auto& v : Y.data) v = 1.0f / (1.0f + std::exp(-v));
    return unary_from_output(xv, std::move(Y), [](float y) { return y * (1.0f - y); });
  }

  Var tanh_(Var xv) {
    Tensor Y = value(xv);
    for (auto& v : Y.data) v = std::tanh(v);
    return unary_from_output(xv, std::move(Y), [](float y) { return 1.0f - y * y; });
  }

  Var relu(Var xv) {
    Tensor Y = value(xv);
    for (auto& v : Y.data) v = v > 0.0f ? v : 0.0f;
    return unary_from_output(xv, std::move(Y), [](float y) { return y > 0.0f ? 1.0f : 0.0f; });
  }

  // rows of `table` gathered by id; gradient accumulates into the table,
  // so repeated ids sum their contributions.
  Var embedding_gather(Var tablev, std::vector<int> ids, std::vector<int> lead_shape) {
    const Tensor& T = value(tablev);
    if (T.rank() != 2) throw ShapeMismatch("gather: table must be rank 2");
    const int V = T.shape[0], d = T.shape[1];
    if (Tensor::numel_of(lead_shape) != static_cast<int64_t>(ids.size()))
      throw ShapeMismatch("gather: lead shape does not cover ids");
    for (int id : ids)
      if (id < 0 || id >= V) throw Error("gather: id " + std::to_string(id) + " out of range");
    std::vector<int> out_shape = lead_shape;
    out_shape.push_back(d);
    Tensor Y(out_shape);
    for (size_t i = 0; i < ids.size(); ++i)
      std::copy_n(T.data.begin() + int64_t(ids[i]) * d, d, Y.data.begin() + int64_t(i) * d);
    const bool ng = needs(tablev);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>(
                            [tablev, ids = std::move(ids), d, out_ptr](Tape& tp) {
                              const Tensor& G = tp.node(*out_ptr).grad;
                              Tensor& dT = tp.grad_buf(tablev);
                              for (size_t i = 0; i < ids.size(); ++i) {
                                float* dst = dT.data.data() + int64_t(ids[i]) * d;
                                const float* src = G.data.data() + int64_t(i) * d;
                                for (int j = 0; j < d; ++j) dst[j] += src[j];
                              }
                            })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var concat_cols(Var av, Var bv) {
    const Tensor& A = value(av);
    const Tensor& B = value(bv);
    if (A.rank() < 2 || B.rank() < 2 || A.rows() != B.rows() ||
        !std::equal(A.shape.begin(), A.shape.end() - 1, B.shape.begin(), B.shape.end() - 1))
      throw ShapeMismatch("concat_cols: " + shape_str(A) + " vs " + shape_str(B));
    const int64_t rows = A.rows();
    const int ca = A.cols(), cb = B.cols();
    std::vector<int> out_shape = A.shape;
    out_shape.back() = ca + cb;
    Tensor C(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
      std::copy_n(A.data.begin() + r * ca, ca, C.data.begin() + r * (ca + cb));
      std::copy_n(B.data.begin() + r * cb, cb, C.data.begin() + r * (ca + cb) + ca);
    }
    const bool ng = needs(av) || needs(bv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(C), ng,
                   ng ? std::function<void(Tape&)>([av, bv, rows, ca, cb, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     if (tp.needs(av)) {
                       Tensor& dA = tp.grad_buf(av);
                       for (int64_t r = 0; r < rows; ++r)
                         for (int j = 0; j < ca; ++j)
                           dA.data[r * ca + j] += G.data[r * (ca + cb) + j];
                     }
                     if (tp.needs(bv)) {
                       Tensor& dB = tp.grad_buf(bv);
                       for (int64_t r = 0; r < rows; ++r)
                         for (int j = 0; j < cb; ++j)
                           dB.data[r * cb + j] += G.data[r * (ca + cb) + ca + j];
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  // slice of the last dimension, [lo, hi)
  Var slice_cols(Var xv, int lo, int hi) {
    const Tensor& X = value(xv);
    if (X.rank() < 1 || lo < 0 || hi > X.cols() || lo >= hi)
      throw ShapeMismatch("slice_cols: bad range [" + std::to_string(lo) + "," +
                          std::to_string(hi) + ") on " + shape_str(X));
    const int64_t rows = X.rows();
    const int c = X.cols(), w = hi - lo;
    std::vector<int> out_shape = X.shape;
    out_shape.back() = w;
    Tensor Y(out_shape);
    for (int64_t r = 0; r < rows; ++r)
      std::copy_n(X.data.begin() + r * c + lo, w, Y.data.begin() + r * w);
    const bool ng = needs(xv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, rows, c, w, lo, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     Tensor& dX = tp.grad_buf(xv);
                     for (int64_t r = 0; r < rows; ++r)
                       for (int j = 0; j < w; ++j) dX.data[r * c + lo + j] += G.data[r * w + j];
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var reshape(Var xv, std::vector<int> shape) {
    const Tensor& X = value(xv);
    if (Tensor::numel_of(shape) != X.numel())
      throw ShapeMismatch("reshape: " + shape_str(X) + " -> " + shape_str(shape));
    Tensor Y = X;
    Y.shape = std::move(shape);
    const bool ng = needs(xv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     Tensor& dX = tp.grad_buf(xv);
                     for (size_t i = 0; i < G.data.size(); ++i) dX.data[i] += G.data[i];
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  // [a,b,c,d] -> [a,c,b,d]; its own inverse on the middle axes.
  Var swap_mid(Var xv) {
    const Tensor& X = value(xv);
    if (X.rank() != 4) throw ShapeMismatch("swap_mid: expects rank 4, got " + shape_str(X));
    const int A = X.shape[0], B = X.shape[1], C = X.shape[2], D = X.shape[3];
    Tensor Y(std::vector<int>{A, C, B, D});
    swap_mid_copy(X.data.data(), Y.data.data(), A, B, C, D);
    const bool ng = needs(xv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, A, B, C, D, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;  // [A,C,B,D]
                     Tensor& dX = tp.grad_buf(xv);              // [A,B,C,D]
                     swap_mid_accum(G.data.data(), dX.data.data(), A, C, B, D);
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var transpose(Var xv) {
    const Tensor& X = value(xv);
    if (X.rank() != 2) throw ShapeMismatch("transpose: expects rank 2, got " + shape_str(X));
    const int r = X.shape[0], c = X.shape[1];
    Tensor Y(std::vector<int>{c, r});
    mat_of(Y, 0, c, r) = mat_of(X, 0, r, c).transpose();
    const bool ng = needs(xv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, r, c, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     mat_of(tp.grad_buf(xv), 0, r, c) += mat_of(G, 0, c, r).transpose();
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var sum_all(Var xv) { return reduce_all(xv, false); }
  Var mean_all(Var xv) { return reduce_all(xv, true); }

  // Masked softmax over the last dim. Masked entries are exactly zero in the
  // output and receive exactly zero gradient; masking multiplies the
  // exponentiated scores, then renormalizes.
  Var softmax_masked(Var sv, Tensor mask) {
    const Tensor& S = value(sv);
    if (S.rank() < 2 || mask.rank() != 2) throw ShapeMismatch("softmax_masked: scores rank >= 2, mask rank 2");
    const int q = S.shape[S.rank() - 2], k = S.shape[S.rank() - 1];
    if (mask.shape[0] != q || mask.shape[1] != k)
      throw ShapeMismatch("softmax_masked: mask " + shape_str(mask) + " vs scores " + shape_str(S));
    for (int i = 0; i < q; ++i) {
      bool any = false;
      for (int j = 0; j < k; ++j) any = any || mask.data[size_t(i) * k + j] != 0.0f;
      if (!any) throw FullyMaskedRow("query row " + std::to_string(i) + " has no unmasked key");
    }
    const int64_t nrows = S.numel() / k;
    Tensor Y(S.shape);
    for (int64_t r = 0; r < nrows; ++r) {
      const float* mrow = mask.data.data() + (r % q) * k;
      const float* srow = S.data.data() + r * k;
      float* yrow = Y.data.data() + r * k;
      float mx = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < k; ++j)
        if (mrow[j] != 0.0f && srow[j] > mx) mx = srow[j];
      double denom = 0.0;
      for (int j = 0; j < k; ++j) {
        yrow[j] = mrow[j] != 0.0f ? std::exp(srow[j] - mx) : 0.0f;
        denom += yrow[j];
      }
      const float inv = static_cast<float>(1.0 / denom);
      for (int j = 0; j < k; ++j) yrow[j] *= inv;
    }
    const bool ng = needs(sv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([sv, k, nrows, out_ptr](Tape& tp) {
                     const Node& self = tp.node(*out_ptr);
                     const Tensor& G = self.grad;
                     const Tensor& Yv = self.value;
                     Tensor& dS = tp.grad_buf(sv);
                     for (int64_t r = 0; r < nrows; ++r) {
                       const float* g = G.data.data() + r * k;
                       const float* y = Yv.data.data() + r * k;
                       float* ds = dS.data.data() + r * k;
                       double dot = 0.0;
                       for (int j = 0; j < k; ++j) dot += double(g[j]) * y[j];
                       for (int j = 0; j < k; ++j)
                         ds[j] += y[j] * (g[j] - static_cast<float>(dot));
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  // Per-row normalization over the last dim, then affine by gain and bias.
  // Statistics accumulate in float64.
  Var layer_norm(Var xv, Var gv, Var bv, float eps = 1e-5f) {
    const Tensor& X = value(xv);
    const Tensor& Gn = value(gv);
    const Tensor& Bs = value(bv);
    if (X.rank() < 1 || Gn.rank() != 1 || Bs.rank() != 1)
      throw ShapeMismatch("layer_norm: gain/bias must be rank 1");
    const int d = X.cols();
    if (Gn.shape[0] != d || Bs.shape[0] != d)
      throw ShapeMismatch("layer_norm: gain/bias dim " + shape_str(Gn) + " vs x " + shape_str(X));
    const int64_t rows = X.rows();
    struct Aux {
      Tensor xhat;
      std::vector<float> rstd;
    };
    auto aux = std::make_shared<Aux>();
    aux->xhat = Tensor(X.shape);
    aux->rstd.resize(static_cast<size_t>(rows));
    Tensor Y(X.shape);
    for (int64_t r = 0; r < rows; ++r) {
      const float* x = X.data.data() + r * d;
      double mu = 0.0;
      for (int j = 0; j < d; ++j) mu += x[j];
      mu /= d;
      double var = 0.0;
      for (int j = 0; j < d; ++j) {
        const double c = x[j] - mu;
        var += c * c;
      }
      var /= d;
      const float rstd = static_cast<float>(1.0 / std::sqrt(var + eps));
      aux->rstd[static_cast<size_t>(r)] = rstd;
      float* xh = aux->xhat.data.data() + r * d;
      float* y = Y.data.data() + r * d;
      for (int j = 0; j < d; ++j) {
        xh[j] = static_cast<float>((x[j] - mu) * rstd);
        y[j] = xh[j] * Gn.data[static_cast<size_t>(j)] + Bs.data[static_cast<size_t>(j)];
      }
    }
    const bool ng = needs(xv) || needs(gv) || needs(bv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, gv, bv, d, rows, aux, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     const Tensor& gain = tp.value(gv);
                     const bool dx_needed = tp.needs(xv);
                     const bool dg_needed = tp.needs(gv);
                     const bool db_needed = tp.needs(bv);
                     Tensor* dX = dx_needed ? &tp.grad_buf(xv) : nullptr;
                     Tensor* dGn = dg_needed ? &tp.grad_buf(gv) : nullptr;
                     Tensor* dBs = db_needed ? &tp.grad_buf(bv) : nullptr;
                     for (int64_t r = 0; r < rows; ++r) {
                       const float* g = G.data.data() + r * d;
                       const float* xh = aux->xhat.data.data() + r * d;
                       if (dg_needed)
                         for (int j = 0; j < d; ++j) dGn->data[size_t(j)] += g[j] * xh[j];
                       if (db_needed)
                         for (int j = 0; j < d; ++j) dBs->data[size_t(j)] += g[j];
                       if (dx_needed) {
                         double m1 = 0.0, m2 = 0.0;
                         for (int j = 0; j < d; ++j) {
                           const double dxh = double(g[j]) * gain.data[size_t(j)];
                           m1 += dxh;
                           m2 += dxh * xh[j];
                         }
                         m1 /= d;
                         m2 /= d;
                         const float rstd = aux->rstd[static_cast<size_t>(r)];
                         float* dx = dX->data.data() + r * d;
                         for (int j = 0; j < d; ++j) {
                           const double dxh = double(g[j]) * gain.data[size_t(j)];
                           dx[j] += static_cast<float>(rstd * (dxh - m1 - double(xh[j]) * m2));
                         }
                       }
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  // steps (each [B,C]) stacked into [B,L,C] along a new time axis
  Var stack_time(const std::vector<Var>& steps) {
    if (steps.empty()) throw ShapeMismatch("stack_time: no steps");
    const Tensor& S0 = value(steps[0]);
    if (S0.rank() != 2) throw ShapeMismatch("stack_time: steps must be rank 2");
    const int B = S0.shape[0], C = S0.shape[1];
    const int L = static_cast<int>(steps.size());
    bool ng = false;
    for (Var s : steps) {
      if (!same_shape(value(s), S0)) throw ShapeMismatch("stack_time: inconsistent step shapes");
      ng = ng || needs(s);
    }
    Tensor Y(std::vector<int>{B, L, C});
    for (int t = 0; t < L; ++t) {
      const Tensor& St = value(steps[static_cast<size_t>(t)]);
      for (int b = 0; b < B; ++b)
        std::copy_n(St.data.begin() + int64_t(b) * C, C,
                    Y.data.begin() + (int64_t(b) * L + t) * C);
    }
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([steps, B, L, C, out_ptr](Tape& tp) {
                     const Tensor& G = tp.node(*out_ptr).grad;
                     for (int t = 0; t < L; ++t) {
                       const Var sv = steps[static_cast<size_t>(t)];
                       if (!tp.needs(sv)) continue;
                       Tensor& dS = tp.grad_buf(sv);
                       for (int b = 0; b < B; ++b) {
                         const float* src = G.data.data() + (int64_t(b) * L + t) * C;
                         float* dst = dS.data.data() + int64_t(b) * C;
                         for (int j = 0; j < C; ++j) dst[j] += src[j];
                       }
                     }
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

 private:
  static void swap_mid_copy(const float* src, float* dst, int A, int B, int C, int D) {
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
          std::copy_n(src + (((int64_t(a) * B + b) * C + c) * D),
                      D, dst + (((int64_t(a) * C + c) * B + b) * D));
  }
  // src has layout [A,B,C,D]; accumulate into dst laid out [A,C,B,D]
  static void swap_mid_accum(const float* src, float* dst, int A, int B, int C, int D) {
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const float* s = src + (((int64_t(a) * B + b) * C + c) * D);
          float* t = dst + (((int64_t(a) * C + c) * B + b) * D);
          for (int j = 0; j < D; ++j) t[j] += s[j];
        }
  }

  template <class F>
  Var unary_from_output(Var xv, Tensor y, F dydx_of_y) {
    const bool ng = needs(xv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(y), ng,
                   ng ? std::function<void(Tape&)>([xv, dydx_of_y, out_ptr](Tape& tp) {
                     const Node& self = tp.node(*out_ptr);
                     const Tensor& G = self.grad;
                     const Tensor& Y = self.value;
                     Tensor& dX = tp.grad_buf(xv);
                     for (size_t i = 0; i < G.data.size(); ++i)
                       dX.data[i] += G.data[i] * dydx_of_y(Y.data[i]);
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  Var reduce_all(Var xv, bool mean) {
    const Tensor& X = value(xv);
    double sum = 0.0;
    for (float v : X.data) sum += v;
    const double denom = mean ? static_cast<double>(X.numel()) : 1.0;
    Tensor Y(std::vector<int>{1});
    Y.data[0] = static_cast<float>(sum / denom);
    const bool ng = needs(xv);
    auto out_ptr = std::make_shared<Var>();
    Var out = push(std::move(Y), ng,
                   ng ? std::function<void(Tape&)>([xv, denom, out_ptr](Tape& tp) {
                     const float g = tp.node(*out_ptr).grad.data[0] / static_cast<float>(denom);
                     Tensor& dX = tp.grad_buf(xv);
                     for (auto& v : dX.data) v += g;
                   })
                      : nullptr);
    *out_ptr = out;
    return out;
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace dyck
