#pragma once

#include <string>
#include <vector>

#include "fgdc/model/deformable.hpp"
#include "fgdc/model/flow_step.hpp"

namespace fgdc {

template <typename T>
struct Pdcn {
  // [level][direction], finest level first; direction 0 compensates F0.
  std::vector<std::array<Fgdcl<T>, 2>> layers;
  FgdclFlags flags;
  bool cascade = true;

  static Pdcn create(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

  // F_t^l = [F_{0->t}^l, F_{1->t}^l] per level, finest first. Flows are at
  // pyramid extents.
  Pyramid<T> operator()(const Pyramid<T>& f0, const Pyramid<T>& f1,
                        const std::vector<Var<T>>& flows_t0,
                        const std::vector<Var<T>>& flows_t1) const;
};

// Concatenated flow-warped features, the PDCN-free path.
template <typename T>
Pyramid<T> warp_pyramid(const Pyramid<T>& f0, const Pyramid<T>& f1,
                        const std::vector<Var<T>>& flows_t0,
                        const std::vector<Var<T>>& flows_t1);

// Grid synthesis network: rows are pyramid levels, the first half of the
// columns passes information downward with strided convs, the second half
// upward with bilinear upsampling.
template <typename T>
struct Mfsn {
  struct Lateral {
    Conv2d<T> a, b;
  };
  struct Down {
    Conv2d<T> conv;  // 4x4 stride 2
  };
  struct Up {
    Conv2d<T> conv;  // applied at the coarse row, then upsampled
  };
  std::vector<Conv2d<T>> inputs;                // per row
  std::vector<std::vector<Lateral>> laterals;   // [row][column - 1]
  std::vector<std::vector<Down>> downs;         // [row][column], row -> row + 1
  std::vector<std::vector<Up>> ups;             // [row][column], row + 1 -> row
  std::vector<Conv2d<T>> heads;                 // per row, zero-initialized
  int columns = 6;

  static Mfsn create(ParameterStore<T>& store, const ModelConfig& cfg, Rng& rng);

  // Returns per-level residuals dI^l at the anchors' extents.
  std::vector<Var<T>> operator()(const Pyramid<T>& ft,
                                 const std::vector<Var<T>>& anchors) const;

  Var<T> lateral(int row, int column, const Var<T>& x) const;
};

template <typename T>
struct ModelOutput {
  FlowStepOutput<T> flow;
  Pyramid<T> ft;
  std::vector<Var<T>> residuals;  // per level, finest first
  std::vector<Var<T>> frames;     // anchors[l] + residuals[l]
};

template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  // Layers hold pointers into the store; moving a deque keeps them valid,
  // copying would not.
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }

  // Flow step only; parameters outside encoder/fen/frn are untouched.
  FlowStepOutput<T> flow_step(const Var<T>& i0, const Var<T>& i1) const;
  ModelOutput<T> operator()(const Var<T>& i0, const Var<T>& i1) const;

  const FlowStep<T>& flow_net() const { return flow_; }
  const Pdcn<T>& pdcn() const { return pdcn_; }
  const Mfsn<T>& mfsn() const { return mfsn_; }

  // Parameter name prefixes of the flow step.
  static const std::vector<std::string>& flow_step_prefixes();

 private:
  ModelConfig cfg_;
  ParameterStore<T> store_;
  FlowStep<T> flow_;
  Pdcn<T> pdcn_;
  Mfsn<T> mfsn_;
};

template <typename T>
ModelOutput<T> model_forward(const Model<T>& model, const Var<T>& i0, const Var<T>& i1) {
  return model(i0, i1);
}

}  // namespace fgdc
