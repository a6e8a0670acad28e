#pragma once

#include <array>

#include "refseg/nn.hpp"

namespace refseg {

struct SpatialDims {
  int h = 0, w = 0;
  int pixels() const { return h * w; }
};

/// Multiscale visual features, all projected to the common width C.
/// level[0] = V_1 (stride 32, coarsest) ... level[3] = V_4 (stride 4).
template <typename S>
struct MultiScaleVisualFeatures {
  std::array<Var<S>, 4> level;
  std::array<SpatialDims, 4> dims;
};

struct VisualEncoderConfig {
  std::array<int, 5> widths = {16, 32, 48, 64, 64};  // conv stage output channels
  int channels = 64;                                 // projection width C
};

template <typename S>
void register_visual_encoder(ParamSet<S>& ps, const VisualEncoderConfig& cfg) {
  int in_c = 3;
  for (int i = 0; i < 5; ++i) {
    register_conv(ps, "visual.conv" + std::to_string(i + 1), in_c, cfg.widths[i]);
    in_c = cfg.widths[i];
  }
  // 1x1 projections: proj4 feeds V_4 (stride 4) ... proj1 feeds V_1 (stride 32)
  for (int lvl = 1; lvl <= 4; ++lvl) {
    const int src_width = cfg.widths[5 - lvl];  // V_1 <- conv5, V_4 <- conv2
    ps.add("visual.proj" + std::to_string(lvl) + ".w", src_width, cfg.channels, Init::Scaled);
    ps.add("visual.proj" + std::to_string(lvl) + ".b", 1, cfg.channels, Init::Zero);
  }
}

/// Toy convolutional pyramid: two stride-2 stages to stride 4, then one per
/// stage to stride 32, each followed by ReLU, with per-level 1x1 projection.
template <typename S>
MultiScaleVisualFeatures<S> encode_image_features(Ctx<S>& ctx, const Mat<S>& image_pixels, int h, int w) {
  if (h % 32 != 0 || w % 32 != 0) throw ArgumentError("encode_image: size must be divisible by 32");
  MultiScaleVisualFeatures<S> out;
  Var<S> x = ctx.constant(image_pixels);
  int ch = h, cw = w;
  std::array<Var<S>, 5> stage_out;
  std::array<SpatialDims, 5> stage_dims;
  for (int i = 0; i < 5; ++i) {
    x = relu(conv2d(ctx, "visual.conv" + std::to_string(i + 1), x, ch, cw, 3, 2, 1));
    ch /= 2;
    cw /= 2;
    stage_out[i] = x;
    stage_dims[i] = {ch, cw};
  }
  for (int lvl = 1; lvl <= 4; ++lvl) {
    const int stage = 5 - lvl;  // conv index producing this level (1-based)
    const std::string p = "visual.proj" + std::to_string(lvl);
    out.level[lvl - 1] = add_rowvec(matmul(stage_out[stage - 1], ctx.p(p + ".w")), ctx.p(p + ".b"));
    out.dims[lvl - 1] = stage_dims[stage - 1];
  }
  return out;
}

}  // namespace refseg
