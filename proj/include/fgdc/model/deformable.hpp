#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fgdc/core/parameters.hpp"
#include "fgdc/model/warp.hpp"

namespace fgdc {

// Modulated deformable convolution. Tap kk of offset group g for output pixel
// p samples x at p + grid(kk) + base_flow(p) + offsets(p), scaled by mods(p).
// Offset channel (g*k*k + kk)*2 holds x, +1 holds y; mods channel g*k*k + kk.
template <typename T>
Var<T> deform_conv(const Var<T>& x, const Var<T>& weight,
                   const std::optional<Var<T>>& bias, const Var<T>& offsets,
                   const Var<T>& mods, const std::optional<Var<T>>& base_flow,
                   const DeformOptions& opt);

// Offsets and modulations of a coarser level, brought to the current one.
template <typename T>
struct CascadeState {
  Var<T> offsets;
  Var<T> mods;
};

// Upsamples a cascade to (h, w); offsets are rescaled with the extent ratio.
template <typename T>
CascadeState<T> upsample_cascade(const CascadeState<T>& coarse, int h, int w);

template <typename T>
struct OffsetPredictor {
  std::vector<Conv2d<T>> stack;
  Conv2d<T> head;
  DeformOptions opt;
  bool takes_cascade = false;

  // `depth` Conv-ReLU layers of width `hidden`, then a zero-initialized head
  // producing 2*k*k*g offsets followed by k*k*g modulation logits.
  static OffsetPredictor create(ParameterStore<T>& store, const std::string& name,
                                int feature_ch, int hidden, int depth,
                                DeformOptions opt, bool takes_cascade, Rng& rng);

  int offset_channels() const { return 2 * opt.kernel * opt.kernel * opt.offset_groups; }
  int mod_channels() const { return opt.kernel * opt.kernel * opt.offset_groups; }

  // Returns (offsets, sigmoid(mod logits)). A missing cascade feeds zeros when
  // the predictor was built to take one.
  std::pair<Var<T>, Var<T>> operator()(const Var<T>& f0w, const Var<T>& f1w,
                                       const CascadeState<T>* cascade) const;
};

struct FgdclFlags {
  bool flow_guidance = true;
  bool skip = true;
};

template <typename T>
struct FgdclResult {
  Var<T> warped;
  CascadeState<T> cascade;
};

template <typename T>
struct Fgdcl {
  OffsetPredictor<T> predictor;
  Parameter<T>* weight = nullptr;  // (C, C, k, k), zero at creation
  Parameter<T>* bias = nullptr;
  DeformOptions opt;

  static Fgdcl create(ParameterStore<T>& store, const std::string& name,
                      int channels, int hidden, int depth, DeformOptions opt,
                      bool takes_cascade, Rng& rng);

  // F_{0->t} = deform_conv(F0, flow + residues) + F0w. Without flow guidance
  // the DConv samples F0w with no base flow.
  FgdclResult<T> apply(const Var<T>& f0, const Var<T>& f0w, const Var<T>& f1w,
                       const Var<T>& flow, const CascadeState<T>* cascade,
                       FgdclFlags flags = {}) const;
};

}  // namespace fgdc
