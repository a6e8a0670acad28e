#pragma once

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "refseg/autodiff.hpp"

// Parameter registry and the shared learnable blocks (multi-head attention,
// feed-forward, convolution). Modules register named tensors once; each
// forward pass binds them onto a tape through a Ctx.

namespace refseg {

enum class Init { Zero, Scaled, Embedding };

template <typename S>
struct ParamSet {
  struct Entry {
    std::string name;
    Eigen::Index rows, cols;
    Init init;
  };
  std::vector<Entry> entries;  // registration order drives deterministic init
  std::unordered_map<std::string, Mat<S>> tensors;

  Mat<S>& add(const std::string& name, Eigen::Index r, Eigen::Index c, Init init) {
    if (tensors.count(name)) throw InternalError("duplicate parameter name: " + name);
    entries.push_back({name, r, c, init});
    return tensors.emplace(name, Mat<S>::Zero(r, c)).first->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  Mat<S>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw InternalError("unknown parameter: " + name);
    return it->second;
  }
  const Mat<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw InternalError("unknown parameter: " + name);
    return it->second;
  }

  void initialize(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const auto& e : entries) {
      Mat<S>& m = tensors.at(e.name);
      switch (e.init) {
        case Init::Zero:
          m.setZero();
          break;
        case Init::Scaled: {
          const double std = 1.0 / std::sqrt(static_cast<double>(e.rows));
          for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(normal(rng) * std);
          break;
        }
        case Init::Embedding:
          for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(normal(rng) * 0.2);
          break;
      }
    }
  }

  template <typename S2>
  ParamSet<S2> cast() const {
    ParamSet<S2> out;
    for (const auto& e : entries) {
      out.add(e.name, e.rows, e.cols, e.init);
      out.at(e.name) = tensors.at(e.name).template cast<S2>();
    }
    return out;
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += static_cast<std::size_t>(e.rows) * e.cols;
    return n;
  }
};

/// Per-forward binding of parameters onto a tape.
template <typename S>
struct Ctx {
  Tape<S>& tape;
  ParamSet<S>& params;
  std::unordered_map<std::string, Var<S>> bound;

  Ctx(Tape<S>& t, ParamSet<S>& p) : tape(t), params(p) {}

  Var<S> p(const std::string& name) {
    auto it = bound.find(name);
    if (it != bound.end()) return it->second;
    Var<S> v = tape.leaf(params.at(name));
    bound.emplace(name, v);
    return v;
  }
  Var<S> constant(Mat<S> m) { return tape.constant(std::move(m)); }

  /// Accumulate gradients of all bound parameters into `sink`.
  void collect_grads(std::unordered_map<std::string, Mat<S>>& sink) const {
    for (const auto& [name, var] : bound) {
      Mat<S> g = tape.grad(var);
      auto it = sink.find(name);
      if (it == sink.end())
        sink.emplace(name, std::move(g));
      else
        it->second += g;
    }
  }
};

// ---------------------------------------------------------------------------
// Multi-head cross-attention
// ---------------------------------------------------------------------------

template <typename S>
void register_mha(ParamSet<S>& ps, const std::string& prefix, int c) {
  ps.add(prefix + ".wq", c, c, Init::Scaled);
  ps.add(prefix + ".bq", 1, c, Init::Zero);
  ps.add(prefix + ".wk", c, c, Init::Scaled);
  ps.add(prefix + ".bk", 1, c, Init::Zero);
  ps.add(prefix + ".wv", c, c, Init::Scaled);
  ps.add(prefix + ".bv", 1, c, Init::Zero);
  ps.add(prefix + ".wo", c, c, Init::Scaled);
  ps.add(prefix + ".bo", 1, c, Init::Zero);
}

/// Standard multi-head scaled dot-product cross-attention with output
/// projection. `allowed`, when given, restricts each query row to the allowed
/// key positions (shared across heads); `attn_probs` receives the per-head
/// attention weight nodes for inspection.
template <typename S>
Var<S> mha(Ctx<S>& ctx, const std::string& prefix, int heads, Var<S> q, Var<S> k, Var<S> v,
           const AllowMask* allowed = nullptr, std::vector<Var<S>>* attn_probs = nullptr) {
  const Eigen::Index c = q.cols();
  if (k.cols() != c || v.cols() != c) throw ArgumentError("mha: channel width mismatch");
  if (k.rows() != v.rows()) throw ArgumentError("mha: key/value length mismatch");
  if (heads < 1 || c % heads != 0) throw ArgumentError("mha: head count must divide channel width");
  const Eigen::Index d = c / heads;

  Var<S> Q = add_rowvec(matmul(q, ctx.p(prefix + ".wq")), ctx.p(prefix + ".bq"));
  Var<S> K = add_rowvec(matmul(k, ctx.p(prefix + ".wk")), ctx.p(prefix + ".bk"));
  Var<S> V = add_rowvec(matmul(v, ctx.p(prefix + ".wv")), ctx.p(prefix + ".bv"));

  std::vector<Var<S>> head_out;
  head_out.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var<S> Qh = slice_cols(Q, h * d, d);
    Var<S> Kh = slice_cols(K, h * d, d);
    Var<S> Vh = slice_cols(V, h * d, d);
    Var<S> scores = scale(matmul_nt(Qh, Kh), 1.0 / std::sqrt(static_cast<double>(d)));
    Var<S> probs = softmax_rows(scores, allowed);
    if (attn_probs) attn_probs->push_back(probs);
    head_out.push_back(matmul(probs, Vh));
  }
  Var<S> concat = concat_cols(head_out);
  return add_rowvec(matmul(concat, ctx.p(prefix + ".wo")), ctx.p(prefix + ".bo"));
}

// ---------------------------------------------------------------------------
// Feed-forward block
// ---------------------------------------------------------------------------

template <typename S>
void register_ffn(ParamSet<S>& ps, const std::string& prefix, int c, int hidden) {
  ps.add(prefix + ".w1", c, hidden, Init::Scaled);
  ps.add(prefix + ".b1", 1, hidden, Init::Zero);
  ps.add(prefix + ".w2", hidden, c, Init::Scaled);
  ps.add(prefix + ".b2", 1, c, Init::Zero);
}

template <typename S>
Var<S> ffn(Ctx<S>& ctx, const std::string& prefix, Var<S> x) {
  Var<S> h = relu(add_rowvec(matmul(x, ctx.p(prefix + ".w1")), ctx.p(prefix + ".b1")));
  return add_rowvec(matmul(h, ctx.p(prefix + ".w2")), ctx.p(prefix + ".b2"));
}

// ---------------------------------------------------------------------------
// Convolution over flattened (H*W) x C feature maps
// ---------------------------------------------------------------------------

template <typename S>
void register_conv(ParamSet<S>& ps, const std::string& prefix, int in_c, int out_c, int k = 3) {
  ps.add(prefix + ".w", static_cast<Eigen::Index>(k) * k * in_c, out_c, Init::Scaled);
  ps.add(prefix + ".b", 1, out_c, Init::Zero);
}

template <typename S>
Var<S> conv2d(Ctx<S>& ctx, const std::string& prefix, Var<S> x, int h, int w, int k, int stride, int pad) {
  Var<S> cols = im2col(x, h, w, k, stride, pad);
  return add_rowvec(matmul(cols, ctx.p(prefix + ".w")), ctx.p(prefix + ".b"));
}

/// Nearest-neighbour 2x spatial upsampling of an (H*W) x C map.
template <typename S>
Var<S> upsample2x(Var<S> x, int h, int w) {
  if (x.rows() != static_cast<Eigen::Index>(h) * w) throw InternalError("upsample2x: dims do not match rows");
  std::vector<int> idx(static_cast<size_t>(4) * h * w);
  for (int y = 0; y < 2 * h; ++y)
    for (int x2 = 0; x2 < 2 * w; ++x2) idx[static_cast<size_t>(y) * 2 * w + x2] = (y / 2) * w + (x2 / 2);
  return gather_rows(x, std::move(idx));
}

}  // namespace refseg
