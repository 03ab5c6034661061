#pragma once

#include <string>
#include <vector>

#include "fgdc/core/parameters.hpp"
#include "fgdc/model/config.hpp"
#include "fgdc/model/warp.hpp"

namespace fgdc {

// Channel-mean inner products <ft(p), fw(p + (dx, dy))> / C over the
// (2r+1)^2 displacement window; channel (dy + r)(2r + 1) + (dx + r). Samples
// outside the image are clamped to the border.
template <typename T>
Var<T> correlation(const Var<T>& ft, const Var<T>& fw, int radius);

// Features of one image, finest level first.
template <typename T>
using Pyramid = std::vector<Var<T>>;

template <typename T>
struct FeatureEncoder {
  struct Level {
    Conv2d<T> down;  // 4x4, stride 2
    Conv2d<T> conv;
  };
  std::vector<Level> levels;

  static FeatureEncoder create(ParameterStore<T>& store, const std::string& name,
                               const std::array<int, 3>& channels, Rng& rng);
  Pyramid<T> operator()(const Var<T>& image) const;
};

template <typename T>
Pyramid<T> extract_pyramid(const FeatureEncoder<T>& encoder, const Var<T>& image);

template <typename T>
struct FenOutput {
  Var<T> flow_t0;
  Var<T> flow_t1;
  Var<T> mask_logit;
  Var<T> mask;  // sigmoid(mask_logit)
};

// One intermediate flow estimation block.
template <typename T>
struct Ifb {
  std::vector<Conv2d<T>> layers;
  Conv2d<T> head;  // 5 channels: d flow_t0, d flow_t1, d mask logit
  double scale = 1.0;

  static Ifb create(ParameterStore<T>& store, const std::string& name, int width,
                    int depth, double scale, Rng& rng);
};

template <typename T>
struct Fen {
  std::vector<Ifb<T>> blocks;

  static Fen create(ParameterStore<T>& store, const std::string& name,
                    const ModelConfig& cfg, Rng& rng);
  FenOutput<T> operator()(const Var<T>& i0, const Var<T>& i1) const;
};

template <typename T>
struct FrbOutput {
  Var<T> flow_t0;
  Var<T> flow_t1;
  Var<T> mask;
  Var<T> ft;
  // Fraction of mask pixels whose pre-clamp value left [0, 1].
  double saturation = 0.0;
};

// Flow refinement block for one pyramid level.
template <typename T>
struct Frb {
  Conv2d<T> occ_conv;
  Conv2d<T> occ_head;
  Conv2d<T> fuse;       // 1x1 over [C, Fw, Ft, v]
  Conv2d<T> branch_gate;
  Conv2d<T> head;       // zero-initialized, 2 channels
  int radius = 3;

  static Frb create(ParameterStore<T>& store, const std::string& name, int channels,
                    int radius, double occlusion_bias, Rng& rng);

  // Inputs are already at this level's extents.
  FrbOutput<T> operator()(const Var<T>& f0, const Var<T>& f1, const Var<T>& flow_t0,
                          const Var<T>& flow_t1, const Var<T>& mask) const;

  Var<T> gated(const Var<T>& corr, const Var<T>& fw, const Var<T>& ft,
               const Var<T>& flow) const;
};

// mask * warp(i0, v_t0) + (1 - mask) * warp(i1, v_t1).
template <typename T>
Var<T> synthesize_anchor(const Var<T>& i0, const Var<T>& i1, const Var<T>& flow_t0,
                         const Var<T>& flow_t1, const Var<T>& mask);

template <typename T>
struct FlowStepOutput {
  FenOutput<T> coarse;
  Pyramid<T> f0, f1;
  // Per level, finest first, at pyramid extents.
  std::vector<Var<T>> flows_t0, flows_t1, masks;
  // Per level; entry 0 at image extents, the rest at pyramid extents.
  std::vector<Var<T>> anchors;
  // Level-1 flows and mask brought to image extents.
  Var<T> flow_t0, flow_t1, mask;
  Var<T> anchor;
  double mask_saturation = 0.0;
};

template <typename T>
struct FlowStep {
  FeatureEncoder<T> encoder;
  Fen<T> fen;
  std::vector<Frb<T>> frbs;  // finest first

  static FlowStep create(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);
  FlowStepOutput<T> operator()(const Var<T>& i0, const Var<T>& i1) const;
};

void check_image_extents(const Shape& s, int alignment);

}  // namespace fgdc
