#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refseg/errors.hpp"
#include "refseg/mat.hpp"

// Reverse-mode autodiff on dense matrices. A Tape owns the nodes of one
// forward computation; free functions build new nodes and record a backward
// closure. Nodes are created in topological order, so backward() is a single
// reverse sweep. Tapes are single-use: build, backward, read grads, discard.

namespace refseg {

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat<S>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename S>
class Tape {
 public:
  struct Node {
    Mat<S> value;
    Mat<S> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    bool has_grad = false;
    std::function<void(Tape&, const Mat<S>&)> backward;
  };

  Var<S> constant(Mat<S> v) { return push(std::move(v), false, nullptr); }

  Var<S> leaf(Mat<S> v) { return push(std::move(v), true, nullptr); }

  Var<S> push(Mat<S> v, bool requires_grad, std::function<void(Tape&, const Mat<S>&)> backward) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat<S>& value(Var<S> v) const { return nodes_[v.id].value; }

  /// Gradient of the last backward() root w.r.t. `v`. Zero matrix if the node
  /// never received a gradient.
  Mat<S> grad(Var<S> v) const {
    const Node& n = nodes_[v.id];
    if (n.has_grad) return n.grad;
    return Mat<S>::Zero(n.value.rows(), n.value.cols());
  }

  void accumulate(int id, const Mat<S>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a 1x1 root node.
  void backward(Var<S> root) {
    if (!root.valid() || root.tape != this) throw ArgumentError("backward: variable is not on this tape");
    const Node& r = nodes_[root.id];
    if (r.value.rows() != 1 || r.value.cols() != 1) throw ArgumentError("backward: root must be a 1x1 scalar node");
    accumulate(root.id, Mat<S>::Ones(1, 1));
    for (int id = root.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.has_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  /// Whether a node participates in gradient propagation.
  bool nodes_requires(int id) const { return nodes_[id].requires_grad; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

template <typename S>
const Mat<S>& Var<S>::value() const {
  return tape->value(*this);
}

namespace detail {

template <typename S>
Tape<S>& same_tape(Var<S> a, Var<S> b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ArgumentError("operands live on different tapes");
  return *a.tape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("add: shape mismatch");
  Mat<S> v = a.value() + b.value();
  const bool rg = t.nodes_requires(a.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("sub: shape mismatch");
  Mat<S> v = a.value() - b.value();
  const bool rg = t.nodes_requires(a.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, Mat<S>(-g));
  });
}

template <typename S>
Var<S> hadamard(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("hadamard: shape mismatch");
  Mat<S> v = a.value().cwiseProduct(b.value());
  const bool rg = t.nodes_requires(a.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, Mat<S>(g.cwiseProduct(b.value())));
    tp.accumulate(b.id, Mat<S>(g.cwiseProduct(a.value())));
  });
}

template <typename S>
Var<S> divide(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("divide: shape mismatch");
  Mat<S> v = a.value().cwiseQuotient(b.value());
  const bool rg = t.nodes_requires(a.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, Mat<S>(g.cwiseQuotient(b.value())));
    Mat<S> db = -g.cwiseProduct(a.value()).cwiseQuotient(b.value().cwiseProduct(b.value()));
    tp.accumulate(b.id, db);
  });
}

// ---------------------------------------------------------------------------
// Scalar-constant ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> scale(Var<S> a, double c) {
  Tape<S>& t = *a.tape;
  Mat<S> v = a.value() * static_cast<S>(c);
  return t.push(std::move(v), t.nodes_requires(a.id), [a, c](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, Mat<S>(g * static_cast<S>(c)));
  });
}

template <typename S>
Var<S> add_const(Var<S> a, double c) {
  Tape<S>& t = *a.tape;
  Mat<S> v = a.value().array() + static_cast<S>(c);
  return t.push(std::move(v), t.nodes_requires(a.id),
                [a](Tape<S>& tp, const Mat<S>& g) { tp.accumulate(a.id, g); });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimension mismatch");
  Mat<S> v = a.value() * b.value();
  const bool rg = t.nodes_requires(a.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, Mat<S>(g * b.value().transpose()));
    tp.accumulate(b.id, Mat<S>(a.value().transpose() * g));
  });
}

/// a * b^T
template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  Tape<S>& t = detail::same_tape(a, b);
  if (a.cols() != b.cols()) throw ArgumentError("matmul_nt: column dimension mismatch");
  Mat<S> v = a.value() * b.value().transpose();
  const bool rg = t.nodes_requires(a.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [a, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(a.id, Mat<S>(g * b.value()));
    tp.accumulate(b.id, Mat<S>(g.transpose() * a.value()));
  });
}

// ---------------------------------------------------------------------------
// Row/column structure
// ---------------------------------------------------------------------------

/// X + replicate(b) where b is 1 x C.
template <typename S>
Var<S> add_rowvec(Var<S> x, Var<S> b) {
  Tape<S>& t = detail::same_tape(x, b);
  if (b.rows() != 1 || b.cols() != x.cols()) throw ArgumentError("add_rowvec: bias must be 1 x cols(x)");
  Mat<S> v = x.value().rowwise() + b.value().row(0);
  const bool rg = t.nodes_requires(x.id) || t.nodes_requires(b.id);
  return t.push(std::move(v), rg, [x, b](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, g);
    tp.accumulate(b.id, Mat<S>(g.colwise().sum()));
  });
}

/// Repeat a 1 x C row n times.
template <typename S>
Var<S> tile_rows(Var<S> x, int n) {
  if (x.rows() != 1) throw ArgumentError("tile_rows: input must have a single row");
  if (n < 1) throw ArgumentError("tile_rows: n must be >= 1");
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value().replicate(n, 1);
  return t.push(std::move(v), t.nodes_requires(x.id), [x](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(g.colwise().sum()));
  });
}

template <typename S>
Var<S> mean_rows(Var<S> x) {
  Tape<S>& t = *x.tape;
  const Eigen::Index n = x.rows();
  if (n < 1) throw ArgumentError("mean_rows: empty input");
  Mat<S> v = x.value().colwise().mean();
  return t.push(std::move(v), t.nodes_requires(x.id), [x, n](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(g.replicate(n, 1) / static_cast<S>(n)));
  });
}

template <typename S>
Var<S> sum_all(Var<S> x) {
  Tape<S>& t = *x.tape;
  Mat<S> v(1, 1);
  v(0, 0) = x.value().sum();
  return t.push(std::move(v), t.nodes_requires(x.id), [x](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(Mat<S>::Constant(x.rows(), x.cols(), g(0, 0))));
  });
}

template <typename S>
Var<S> slice_cols(Var<S> x, Eigen::Index j0, Eigen::Index w) {
  Tape<S>& t = *x.tape;
  if (j0 < 0 || w < 1 || j0 + w > x.cols()) throw ArgumentError("slice_cols: range out of bounds");
  Mat<S> v = x.value().middleCols(j0, w);
  return t.push(std::move(v), t.nodes_requires(x.id), [x, j0, w](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> dx = Mat<S>::Zero(x.rows(), x.cols());
    dx.middleCols(j0, w) = g;
    tp.accumulate(x.id, dx);
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  Tape<S>& t = *parts[0].tape;
  Eigen::Index rows = parts[0].rows(), cols = 0;
  bool rg = false;
  for (Var<S> p : parts) {
    if (p.tape != &t) throw ArgumentError("concat_cols: mixed tapes");
    if (p.rows() != rows) throw ArgumentError("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || t.nodes_requires(p.id);
  }
  Mat<S> v(rows, cols);
  Eigen::Index off = 0;
  for (Var<S> p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  std::vector<Var<S>> ps = parts;
  return t.push(std::move(v), rg, [ps](Tape<S>& tp, const Mat<S>& g) {
    Eigen::Index off = 0;
    for (Var<S> p : ps) {
      tp.accumulate(p.id, Mat<S>(g.middleCols(off, p.cols())));
      off += p.cols();
    }
  });
}

/// Gather rows by index; index -1 yields a zero row. Backward scatter-adds.
template <typename S>
Var<S> gather_rows(Var<S> x, std::vector<int> idx) {
  Tape<S>& t = *x.tape;
  const Eigen::Index c = x.cols();
  Mat<S> v = Mat<S>::Zero(static_cast<Eigen::Index>(idx.size()), c);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= static_cast<int>(x.rows())) throw ArgumentError("gather_rows: index out of range");
    if (idx[r] >= 0) v.row(static_cast<Eigen::Index>(r)) = x.value().row(idx[r]);
  }
  return t.push(std::move(v), t.nodes_requires(x.id), [x, idx = std::move(idx)](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> dx = Mat<S>::Zero(x.rows(), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (idx[r] >= 0) dx.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    tp.accumulate(x.id, dx);
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

template <typename S>
Var<S> sigmoid(Var<S> x) {
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value().unaryExpr([](S e) { return S(1) / (S(1) + std::exp(-e)); });
  return t.push(Mat<S>(v), t.nodes_requires(x.id), [x, v](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(g.cwiseProduct(v.cwiseProduct((Mat<S>::Ones(v.rows(), v.cols()) - v)))));
  });
}

template <typename S>
Var<S> relu(Var<S> x) {
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value().cwiseMax(S(0));
  return t.push(std::move(v), t.nodes_requires(x.id), [x](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> dx = g;
    const Mat<S>& in = x.value();
    for (Eigen::Index i = 0; i < dx.rows(); ++i)
      for (Eigen::Index j = 0; j < dx.cols(); ++j)
        if (in(i, j) <= S(0)) dx(i, j) = S(0);
    tp.accumulate(x.id, dx);
  });
}

template <typename S>
Var<S> exp_elem(Var<S> x) {
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value().array().exp();
  return t.push(Mat<S>(v), t.nodes_requires(x.id), [x, v](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(g.cwiseProduct(v)));
  });
}

template <typename S>
Var<S> log_elem(Var<S> x) {
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value().array().log();
  return t.push(std::move(v), t.nodes_requires(x.id), [x](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(g.cwiseQuotient(x.value())));
  });
}

template <typename S>
Var<S> sqrt_elem(Var<S> x) {
  Tape<S>& t = *x.tape;
  Mat<S> v = x.value().array().sqrt();
  return t.push(Mat<S>(v), t.nodes_requires(x.id), [x, v](Tape<S>& tp, const Mat<S>& g) {
    tp.accumulate(x.id, Mat<S>(g.cwiseQuotient(v) * S(0.5)));
  });
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

using AllowMask = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-wise softmax. When `allowed` is non-null, probability mass is
/// restricted to allowed entries; a row with no allowed entry falls back to
/// the full row (degeneracy guard).
template <typename S>
Var<S> softmax_rows(Var<S> x, const AllowMask* allowed = nullptr) {
  Tape<S>& t = *x.tape;
  if (allowed != nullptr && (allowed->rows() != x.rows() || allowed->cols() != x.cols()))
    throw ArgumentError("softmax_rows: mask shape mismatch");
  const Mat<S>& in = x.value();
  Mat<S> p = Mat<S>::Zero(in.rows(), in.cols());
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    bool any = false;
    if (allowed != nullptr)
      for (Eigen::Index j = 0; j < in.cols(); ++j) any = any || ((*allowed)(r, j) != 0);
    const bool use_mask = allowed != nullptr && any;
    S m = -std::numeric_limits<S>::infinity();
    for (Eigen::Index j = 0; j < in.cols(); ++j)
      if (!use_mask || (*allowed)(r, j)) m = std::max(m, in(r, j));
    S z = S(0);
    for (Eigen::Index j = 0; j < in.cols(); ++j)
      if (!use_mask || (*allowed)(r, j)) {
        p(r, j) = std::exp(in(r, j) - m);
        z += p(r, j);
      }
    p.row(r) /= z;
  }
  return t.push(Mat<S>(p), t.nodes_requires(x.id), [x, p](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> dx(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const S dot = g.row(r).cwiseProduct(p.row(r)).sum();
      dx.row(r) = p.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    tp.accumulate(x.id, dx);
  });
}

// ---------------------------------------------------------------------------
// Convolution support
// ---------------------------------------------------------------------------

/// im2col for a k x k kernel over an (H*W) x C feature map (row-major pixels).
/// Output is (Ho*Wo) x (k*k*C); out-of-bounds taps contribute zeros.
template <typename S>
Var<S> im2col(Var<S> x, int h, int w, int k, int stride, int pad) {
  Tape<S>& t = *x.tape;
  if (x.rows() != static_cast<Eigen::Index>(h) * w) throw ArgumentError("im2col: spatial dims do not match rows");
  const int c = static_cast<int>(x.cols());
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (w + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw ArgumentError("im2col: output would be empty");
  // row index of each tap, -1 for zero padding
  std::vector<int> taps(static_cast<size_t>(ho) * wo * k * k);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox)
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx) {
          const int iy = oy * stride + dy - pad;
          const int ix = ox * stride + dx - pad;
          const size_t ti = ((static_cast<size_t>(oy) * wo + ox) * k + dy) * k + dx;
          taps[ti] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? iy * w + ix : -1;
        }
  Mat<S> v = Mat<S>::Zero(static_cast<Eigen::Index>(ho) * wo, static_cast<Eigen::Index>(k) * k * c);
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (int tap = 0; tap < k * k; ++tap) {
      const int src = taps[static_cast<size_t>(r) * k * k + tap];
      if (src >= 0) v.block(r, static_cast<Eigen::Index>(tap) * c, 1, c) = x.value().row(src);
    }
  const int kk = k * k;
  return t.push(std::move(v), t.nodes_requires(x.id),
                [x, taps = std::move(taps), kk, c](Tape<S>& tp, const Mat<S>& g) {
                  Mat<S> dx = Mat<S>::Zero(x.rows(), x.cols());
                  for (Eigen::Index r = 0; r < g.rows(); ++r)
                    for (int tap = 0; tap < kk; ++tap) {
                      const int src = taps[static_cast<size_t>(r) * kk + tap];
                      if (src >= 0) dx.row(src) += g.block(r, static_cast<Eigen::Index>(tap) * c, 1, c);
                    }
                  tp.accumulate(x.id, dx);
                });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy from logits against a constant target, using the
/// stable max(z,0) - z*t + log1p(exp(-|z|)) form.
template <typename S>
Var<S> bce_with_logits(Var<S> z, const Mat<S>& target) {
  Tape<S>& t = *z.tape;
  if (target.rows() != z.rows() || target.cols() != z.cols()) throw ArgumentError("bce_with_logits: shape mismatch");
  const Mat<S>& zv = z.value();
  S acc = S(0);
  for (Eigen::Index i = 0; i < zv.rows(); ++i)
    for (Eigen::Index j = 0; j < zv.cols(); ++j) {
      const S e = zv(i, j);
      acc += std::max(e, S(0)) - e * target(i, j) + std::log1p(std::exp(-std::abs(e)));
    }
  const S n = static_cast<S>(zv.rows() * zv.cols());
  Mat<S> v(1, 1);
  v(0, 0) = acc / n;
  return t.push(std::move(v), t.nodes_requires(z.id), [z, target, n](Tape<S>& tp, const Mat<S>& g) {
    Mat<S> sig = z.value().unaryExpr([](S e) { return S(1) / (S(1) + std::exp(-e)); });
    tp.accumulate(z.id, Mat<S>((sig - target) * (g(0, 0) / n)));
  });
}

// ---------------------------------------------------------------------------
// Scalar (1x1) helpers
// ---------------------------------------------------------------------------

template <typename S>
Var<S> scalar_const(Tape<S>& t, double v) {
  Mat<S> m(1, 1);
  m(0, 0) = static_cast<S>(v);
  return t.constant(std::move(m));
}

/// Numerically stable log(exp(a) + exp(b)) for 1x1 nodes.
template <typename S>
Var<S> logsumexp2(Var<S> a, Var<S> b) {
  if (a.rows() != 1 || a.cols() != 1 || b.rows() != 1 || b.cols() != 1)
    throw ArgumentError("logsumexp2: expects 1x1 inputs");
  const double m = std::max(static_cast<double>(a.value()(0, 0)), static_cast<double>(b.value()(0, 0)));
  Var<S> ea = exp_elem(add_const(a, -m));
  Var<S> eb = exp_elem(add_const(b, -m));
  return add_const(log_elem(add(ea, eb)), m);
}

/// Cosine similarity of two 1xC rows as a 1x1 node.
template <typename S>
Var<S> cosine(Var<S> a, Var<S> b) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols()) throw ArgumentError("cosine: expects matching 1xC rows");
  const double na = a.value().norm(), nb = b.value().norm();
  if (na < 1e-12 || nb < 1e-12) throw DegeneracyError("cosine: zero-norm input");
  Var<S> dot = sum_all(hadamard(a, b));
  Var<S> denom = sqrt_elem(hadamard(sum_all(hadamard(a, a)), sum_all(hadamard(b, b))));
  return divide(dot, denom);
}

}  // namespace refseg
