#pragma once

#include "refseg/backend.hpp"
#include "refseg/nn.hpp"

namespace refseg {

/// Object-centric similarity between frozen image tokens and a frozen prompt
/// embedding. `similarity` is the L2-normalized per-token cosine vector
/// (length M+1, class slot first); `grid` drops the class slot and reshapes.
struct Heatmap {
  VecD similarity;
  MatD grid;
  int grid_h = 0, grid_w = 0;

  /// Flat index (y * grid_w + x) of the grid argmax.
  int argmax_flat() const {
    int best = 0;
    for (int i = 1; i < grid.rows() * grid.cols(); ++i)
      if (grid(i / grid_w, i % grid_w) > grid(best / grid_w, best % grid_w)) best = i;
    return best;
  }
};

/// Cosine of every token against the prompt, then L2 normalization of the
/// whole similarity vector. Throws DegeneracyError on zero-norm inputs.
inline Heatmap compute_heatmap(const ImageTokenFeatures& img_tokens, const TextEmbedding& txt) {
  if (img_tokens.tokens.cols() != txt.vector.size())
    throw ArgumentError("compute_heatmap: embedding dimension mismatch");
  const double tn = txt.vector.norm();
  if (tn < 1e-12) throw DegeneracyError("compute_heatmap: zero-norm text embedding");
  const Eigen::Index m1 = img_tokens.tokens.rows();
  VecD sims(m1);
  for (Eigen::Index i = 0; i < m1; ++i) {
    const double in = img_tokens.tokens.row(i).norm();
    if (in < 1e-12) throw DegeneracyError("compute_heatmap: zero-norm image token " + std::to_string(i));
    sims[i] = img_tokens.tokens.row(i).dot(txt.vector) / (in * tn);
  }
  const double sn = sims.norm();
  if (sn < 1e-12) throw DegeneracyError("compute_heatmap: text is orthogonal to every image token");
  sims /= sn;

  Heatmap h;
  h.similarity = sims;
  h.grid_h = img_tokens.grid_h;
  h.grid_w = img_tokens.grid_w;
  h.grid = MatD(h.grid_h, h.grid_w);
  for (int y = 0; y < h.grid_h; ++y)
    for (int x = 0; x < h.grid_w; ++x) h.grid(y, x) = sims[1 + y * h.grid_w + x];
  return h;
}

template <typename S>
void register_clip_prior(ParamSet<S>& ps, int m_plus_1, int c) {
  ps.add("prior.w", m_plus_1, c, Init::Scaled);
}

/// Query initialization: the similarity vector is projected through a learned
/// linear map to C, tiled N times and added to the tiled pooled text vector.
/// All N initial queries are identical by construction.
template <typename S>
Var<S> init_queries(Ctx<S>& ctx, const Heatmap& heatmap, Var<S> pooled_text, int n) {
  if (n < 1) throw ArgumentError("init_queries: N must be >= 1");
  if (pooled_text.rows() != 1) throw ArgumentError("init_queries: pooled text must be a single row");
  Var<S> w = ctx.p("prior.w");
  if (w.rows() != heatmap.similarity.size()) throw ArgumentError("init_queries: similarity length mismatch");
  Mat<S> sim(1, heatmap.similarity.size());
  for (Eigen::Index i = 0; i < heatmap.similarity.size(); ++i) sim(0, i) = static_cast<S>(heatmap.similarity[i]);
  Var<S> projected = matmul(ctx.constant(std::move(sim)), w);
  return tile_rows(add(projected, pooled_text), n);
}

/// Ablation variant: queries carry text information only.
template <typename S>
Var<S> init_queries_text_only(Var<S> pooled_text, int n) {
  if (n < 1) throw ArgumentError("init_queries: N must be >= 1");
  return tile_rows(pooled_text, n);
}

}  // namespace refseg
