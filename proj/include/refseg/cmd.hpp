#pragma once

#include <optional>
#include <vector>

#include "refseg/nn.hpp"
#include "refseg/visual.hpp"

// Contextual multimodal decoder: four levels of bidirectional attention
// transfer running coarse to fine. Each level lets text attend to the level's
// visual features (gated into the previous text state) and then lets the
// visual features attend back to the updated text before a 3x3 fusion conv.

namespace refseg {

template <typename S>
struct BatLevelState {
  Var<S> f_w;  // L x C
  Var<S> f_v;  // (H_i*W_i) x C
};

template <typename S>
struct CmdOutput {
  std::array<Var<S>, 4> f_v;    // text-guided visual features per level
  std::array<SpatialDims, 4> dims;
  std::vector<Var<S>> f_w;      // word features at levels 0..4; f_w[0] is the input
};

template <typename S>
void register_cmd(ParamSet<S>& ps, int c) {
  for (int i = 1; i <= 4; ++i) {
    const std::string p = "cmd.l" + std::to_string(i);
    register_mha(ps, p + ".tv", c);  // text queries vision
    register_mha(ps, p + ".vt", c);  // vision queries text
    register_conv(ps, p + ".conv", c, c);
  }
}

/// One bidirectional attention transfer level. Level 1 passes no previous
/// visual state; later levels fuse a 2x-upsampled previous map.
template <typename S>
BatLevelState<S> bat_level(Ctx<S>& ctx, int level, int heads, Var<S> v_i, SpatialDims dims, Var<S> f_w_prev,
                           std::optional<std::pair<Var<S>, SpatialDims>> f_v_prev) {
  const std::string p = "cmd.l" + std::to_string(level);
  Var<S> f_w = hadamard(mha(ctx, p + ".tv", heads, f_w_prev, v_i, v_i), f_w_prev);
  Var<S> v_prime = hadamard(mha(ctx, p + ".vt", heads, v_i, f_w, f_w), v_i);
  Var<S> fused = v_prime;
  if (f_v_prev.has_value()) {
    const SpatialDims pd = f_v_prev->second;
    if (pd.h * 2 != dims.h || pd.w * 2 != dims.w)
      throw InternalError("bat_level: upsampled previous map does not match level size");
    fused = add(v_prime, upsample2x(f_v_prev->first, pd.h, pd.w));
  }
  Var<S> f_v = conv2d(ctx, p + ".conv", fused, dims.h, dims.w, 3, 1, 1);
  return {f_w, f_v};
}

/// Runs the four levels coarse to fine. With `enabled` false this is the
/// identity decoder: visual levels pass through and text stays f_w.
template <typename S>
CmdOutput<S> run_cmd(Ctx<S>& ctx, const MultiScaleVisualFeatures<S>& visual, Var<S> f_w, int heads,
                     bool enabled = true) {
  CmdOutput<S> out;
  out.dims = visual.dims;
  out.f_w.push_back(f_w);
  if (!enabled) {
    for (int i = 0; i < 4; ++i) out.f_v[i] = visual.level[i];
    for (int i = 0; i < 4; ++i) out.f_w.push_back(f_w);
    return out;
  }
  std::optional<std::pair<Var<S>, SpatialDims>> prev;
  Var<S> cur_w = f_w;
  for (int i = 1; i <= 4; ++i) {
    BatLevelState<S> st = bat_level(ctx, i, heads, visual.level[i - 1], visual.dims[i - 1], cur_w, prev);
    out.f_v[i - 1] = st.f_v;
    out.f_w.push_back(st.f_w);
    cur_w = st.f_w;
    prev = std::make_pair(st.f_v, visual.dims[i - 1]);
  }
  return out;
}

/// Text-side chain only (levels of F_w), for expressions that need sentence
/// features but no mask prediction. Matches run_cmd's text outputs exactly.
template <typename S>
std::vector<Var<S>> cmd_text_levels(Ctx<S>& ctx, const MultiScaleVisualFeatures<S>& visual, Var<S> f_w, int heads,
                                    bool enabled = true) {
  std::vector<Var<S>> out{f_w};
  Var<S> cur = f_w;
  for (int i = 1; i <= 4; ++i) {
    if (enabled) {
      const std::string p = "cmd.l" + std::to_string(i);
      cur = hadamard(mha(ctx, p + ".tv", heads, cur, visual.level[i - 1], visual.level[i - 1]), cur);
    }
    out.push_back(cur);
  }
  return out;
}

}  // namespace refseg
