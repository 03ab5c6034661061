#pragma once

#include <optional>
#include <vector>

#include "fgdc/model/deformation_step.hpp"

namespace fgdc {

struct LossWeights {
  double pf = 0.1;
  double dis = 0.01;
  double sen = 1.0;
};

struct LossOptions {
  LossWeights weights;
  bool single_level_content = false;  // content term on level 1 only
  bool no_freq_loss = false;          // drops the frequency term entirely
};

template <typename T>
struct LossBreakdown {
  Var<T> total;
  double pc = 0, pf = 0, dis = 0, sen = 0, to = 0;
  double total_value = 0;
  bool has_dis = false;
};

// L1 between coarse and reference flows after resizing all four to a quarter
// of their extents, summed over the two directions. Displacements keep their
// full-resolution pixel units.
template <typename T>
Var<T> distillation_loss(const Var<T>& v0, const Var<T>& v1, const Var<T>& ref0,
                         const Var<T>& ref1);

template <typename T>
Var<T> task_oriented_loss(const Var<T>& anchor, const Var<T>& target);

template <typename T>
Var<T> flow_step_loss(const Var<T>& task_oriented, const Var<T>& distillation,
                      double lambda_dis);

// Bilinear downscales of the target to each level's extents.
template <typename T>
std::vector<Var<T>> pyramid_targets(const Var<T>& target, const std::vector<Var<T>>& like);

template <typename T>
Var<T> pyramid_content_loss(const std::vector<Var<T>>& outputs,
                            const std::vector<Var<T>>& targets);

// Per level and channel plane: unnormalized 2-D DFT; mean |amplitude diff| plus
// mean |phase diff| wrapped to (-pi, pi]; averaged over planes and levels.
template <typename T>
Var<T> frequency_loss(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> pyramid_frequency_loss(const std::vector<Var<T>>& outputs,
                              const std::vector<Var<T>>& targets);

// Amplitude and phase parts of frequency_loss, for diagnostics and tests.
struct FrequencyParts {
  double amplitude = 0;
  double phase = 0;
};
template <typename T>
FrequencyParts frequency_parts(const Tensor<T>& a, const Tensor<T>& b);

struct CensusParams {
  int window = 7;
  double alpha = 0.45;
  double eps = 0.01;
};

// Soft census distance on grayscale, generalized Charbonnier
// rho(x) = (x^2 + eps^2)^alpha - eps^(2 alpha), mean over interior pixels.
template <typename T>
Var<T> census_loss(const Var<T>& a, const Var<T>& b, const CensusParams& p = {});

template <typename T>
LossBreakdown<T> total_loss(const ModelOutput<T>& out, const Var<T>& target,
                            const std::optional<Var<T>>& ref_t0,
                            const std::optional<Var<T>>& ref_t1,
                            const LossOptions& opt = {});

// L_to + lambda_dis * L_dis for the flow step alone; `total` holds the Var.
template <typename T>
LossBreakdown<T> flow_step_breakdown(const FlowStepOutput<T>& out, const Var<T>& target,
                                     const std::optional<Var<T>>& ref_t0,
                                     const std::optional<Var<T>>& ref_t1,
                                     double lambda_dis);

}  // namespace fgdc
